#include "lads/embedding.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "lads/error.hpp"

namespace lads {

std::vector<EmbeddingRecord> load_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw error(errc::io_error, "cannot open embeddings file: " + path);
    std::vector<EmbeddingRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        EmbeddingRecord rec;
        if (!(ss >> rec.id))
            throw error(errc::io_error, "missing id on embeddings line " + std::to_string(lineno));
        double v;
        while (ss >> v) {
            if (!std::isfinite(v))
                throw error(errc::invalid_argument,
                            "non-finite embedding entry on line " + std::to_string(lineno));
            rec.values.push_back(v);
        }
        if (!ss.eof())
            throw error(errc::io_error, "malformed number on embeddings line " + std::to_string(lineno));
        if (rec.values.empty())
            throw error(errc::invalid_argument,
                        "empty embedding on line " + std::to_string(lineno));
        if (!out.empty() && rec.values.size() != out.front().values.size())
            throw error(errc::dimension_mismatch,
                        "embedding dim changes on line " + std::to_string(lineno));
        out.push_back(std::move(rec));
    }
    return out;
}

double squared_distance(const QueryEmbedding& a, const QueryEmbedding& b) {
    if (a.size() != b.size())
        throw error(errc::dimension_mismatch, "embedding dims differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

double dot(const QueryEmbedding& a, const QueryEmbedding& b) {
    if (a.size() != b.size())
        throw error(errc::dimension_mismatch, "embedding dims differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const QueryEmbedding& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

}  // namespace lads
