#pragma once

#include <stdexcept>
#include <string>

namespace lads {

enum class errc {
    dimension_mismatch,
    domain_overflow,
    empty_input,
    invalid_argument,
    invalid_account,
    quota_exceeded,
    unknown_mode,
    unknown_permutation,
    corrupt_snapshot,
    version_mismatch,
    model_mismatch,
    config_invalid,
    io_error,
    numeric_failure,
    too_few_samples,
};

// Single exception type; `code()` gives the machine-readable tag used on the
// wire and in CLI exit paths.
class error : public std::runtime_error {
  public:
    error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    errc code() const noexcept { return code_; }

    static const char* code_name(errc c) {
        switch (c) {
        case errc::dimension_mismatch: return "dimension_mismatch";
        case errc::domain_overflow: return "domain_overflow";
        case errc::empty_input: return "empty_input";
        case errc::invalid_argument: return "invalid_argument";
        case errc::invalid_account: return "invalid_account";
        case errc::quota_exceeded: return "quota_exceeded";
        case errc::unknown_mode: return "unknown_mode";
        case errc::unknown_permutation: return "unknown_permutation";
        case errc::corrupt_snapshot: return "corrupt_snapshot";
        case errc::version_mismatch: return "version_mismatch";
        case errc::model_mismatch: return "model_mismatch";
        case errc::config_invalid: return "config_invalid";
        case errc::io_error: return "io_error";
        case errc::numeric_failure: return "numeric_failure";
        case errc::too_few_samples: return "too_few_samples";
        }
        return "unknown";
    }

  private:
    errc code_;
};

}  // namespace lads
