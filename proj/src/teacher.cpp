#include "lads/teacher.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "lads/error.hpp"
#include "lads/softmax_model.hpp"

namespace lads {
namespace {

void check_finite(const Matrix& m, const char* what) {
    for (double v : m.data)
        if (!std::isfinite(v))
            throw error(errc::invalid_argument, std::string(what) + " has a non-finite entry");
}

void write_matrix(std::ostream& out, const Matrix& m) {
    out.precision(17);
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c)
            out << (c ? " " : "") << m.at(r, c);
        out << "\n";
    }
}

Matrix read_matrix(std::istream& in, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows * cols; ++i)
        if (!(in >> m.data[i]))
            throw error(errc::io_error, "teacher file: matrix body truncated");
    return m;
}

std::string read_kind_line(std::istream& in) {
    std::string tag, kind;
    if (!(in >> tag >> kind) || tag != "lads-teacher")
        throw error(errc::io_error, "teacher file must start with 'lads-teacher <kind>'");
    return kind;
}

double read_field(std::istream& in, const std::string& name) {
    std::string key;
    double value;
    if (!(in >> key >> value) || key != name)
        throw error(errc::io_error, "teacher file: expected field '" + name + "'");
    return value;
}

}  // namespace

LinearGaussianTeacher::LinearGaussianTeacher(Matrix a, double sigma)
    : a_(std::move(a)), sigma_(sigma) {
    if (a_.rows == 0 || a_.cols == 0)
        throw error(errc::invalid_argument, "teacher matrix must be non-empty");
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw error(errc::invalid_argument, "noise scale must be positive and finite");
    check_finite(a_, "teacher matrix");
    op_norm_ = operator_norm(a_);
}

std::string LinearGaussianTeacher::to_text() const {
    std::ostringstream out;
    out << "lads-teacher linear\n";
    out << "out_dim " << a_.rows << "\n";
    out << "q_dim " << a_.cols << "\n";
    out.precision(17);
    out << "sigma " << sigma_ << "\n";
    write_matrix(out, a_);
    return out.str();
}

LinearGaussianTeacher LinearGaussianTeacher::from_text(const std::string& text) {
    std::istringstream in(text);
    if (read_kind_line(in) != "linear")
        throw error(errc::unknown_mode, "expected a linear teacher file");
    auto out_dim = static_cast<std::size_t>(read_field(in, "out_dim"));
    auto q_dim = static_cast<std::size_t>(read_field(in, "q_dim"));
    double sigma = read_field(in, "sigma");
    return LinearGaussianTeacher(read_matrix(in, out_dim, q_dim), sigma);
}

void LinearGaussianTeacher::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw error(errc::io_error, "cannot write teacher file: " + path);
    out << to_text();
}

LinearGaussianTeacher LinearGaussianTeacher::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw error(errc::io_error, "cannot open teacher file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_text(text);
}

NoiseVector generate_continuous(const LinearGaussianTeacher& teacher, const QueryEmbedding& q,
                                const NoiseVector& eps) {
    if (q.size() != teacher.q_dim())
        throw error(errc::dimension_mismatch, "query dim differs from teacher q_dim");
    if (eps.size() != teacher.out_dim())
        throw error(errc::dimension_mismatch, "noise dim differs from teacher out_dim");
    NoiseVector x = matvec(teacher.weights(), q);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += teacher.sigma() * eps[i];
    return x;
}

SoftmaxTokenTeacher::SoftmaxTokenTeacher(Matrix theta, double frob_bound, double input_bound)
    : theta_(std::move(theta)), frob_bound_(frob_bound), input_bound_(input_bound) {
    if (theta_.rows < 2)
        throw error(errc::invalid_argument, "token teacher needs vocab >= 2");
    if (theta_.cols == 0)
        throw error(errc::invalid_argument, "token teacher needs positive q_dim");
    if (!(frob_bound > 0.0) || !(input_bound > 0.0))
        throw error(errc::invalid_argument, "teacher norm bounds must be positive");
    check_finite(theta_, "teacher matrix");
    if (frobenius_norm(theta_) > frob_bound * (1.0 + 1e-12))
        throw error(errc::invalid_argument, "teacher weights exceed the Frobenius bound");
    op_norm_ = operator_norm(theta_);
}

std::vector<double> SoftmaxTokenTeacher::logits(const QueryEmbedding& q) const {
    if (q.size() != q_dim())
        throw error(errc::dimension_mismatch, "query dim differs from teacher q_dim");
    return matvec(theta_, q);
}

std::vector<double> SoftmaxTokenTeacher::token_probs(const QueryEmbedding& q) const {
    return softmax(logits(q));
}

std::string SoftmaxTokenTeacher::to_text() const {
    std::ostringstream out;
    out << "lads-teacher softmax\n";
    out << "vocab " << theta_.rows << "\n";
    out << "q_dim " << theta_.cols << "\n";
    out.precision(17);
    out << "frob_bound " << frob_bound_ << "\n";
    out << "input_bound " << input_bound_ << "\n";
    write_matrix(out, theta_);
    return out.str();
}

SoftmaxTokenTeacher SoftmaxTokenTeacher::from_text(const std::string& text) {
    std::istringstream in(text);
    if (read_kind_line(in) != "softmax")
        throw error(errc::unknown_mode, "expected a softmax teacher file");
    auto vocab = static_cast<std::size_t>(read_field(in, "vocab"));
    auto q_dim = static_cast<std::size_t>(read_field(in, "q_dim"));
    double w = read_field(in, "frob_bound");
    double r = read_field(in, "input_bound");
    return SoftmaxTokenTeacher(read_matrix(in, vocab, q_dim), w, r);
}

void SoftmaxTokenTeacher::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw error(errc::io_error, "cannot write teacher file: " + path);
    out << to_text();
}

SoftmaxTokenTeacher SoftmaxTokenTeacher::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw error(errc::io_error, "cannot open teacher file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_text(text);
}

std::uint32_t generate_token(const SoftmaxTokenTeacher& teacher, const QueryEmbedding& q,
                             const NoiseVector& eps_gumbel) {
    if (eps_gumbel.size() != teacher.vocab())
        throw error(errc::dimension_mismatch, "gumbel noise dim differs from vocab");
    std::vector<double> z = teacher.logits(q);
    std::size_t best = 0;
    double best_v = z[0] + eps_gumbel[0];
    for (std::size_t i = 1; i < z.size(); ++i) {
        double v = z[i] + eps_gumbel[i];
        if (v > best_v) {
            best_v = v;
            best = i;
        }
    }
    return static_cast<std::uint32_t>(best);
}

LinearGaussianTeacher random_linear_teacher(Seed seed, std::size_t out_dim, std::size_t q_dim,
                                            double sigma, double entry_scale) {
    return LinearGaussianTeacher(random_matrix(seed, out_dim, q_dim, entry_scale), sigma);
}

SoftmaxTokenTeacher random_softmax_teacher(Seed seed, std::size_t vocab, std::size_t q_dim,
                                           double frob_bound, double input_bound,
                                           double entry_scale) {
    Matrix theta = random_matrix(seed, vocab, q_dim, entry_scale);
    project_frobenius(theta, frob_bound);
    return SoftmaxTokenTeacher(std::move(theta), frob_bound, input_bound);
}

}  // namespace lads
