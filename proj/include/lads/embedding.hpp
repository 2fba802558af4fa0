#pragma once

#include <string>
#include <vector>

namespace lads {

using QueryEmbedding = std::vector<double>;

struct EmbeddingRecord {
    std::string id;
    QueryEmbedding values;
};

// Reads "id v1 v2 ... vd" records, one per line. Blank lines and lines
// starting with '#' are skipped. All records must share one dim and every
// entry must be finite.
std::vector<EmbeddingRecord> load_embeddings(const std::string& path);

double squared_distance(const QueryEmbedding& a, const QueryEmbedding& b);
double dot(const QueryEmbedding& a, const QueryEmbedding& b);
double norm(const QueryEmbedding& a);

}  // namespace lads
