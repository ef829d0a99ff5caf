#pragma once

#include <stdexcept>
#include <string>

namespace kae {

// Failure categories surfaced by the library. Callers that implement a
// fallback (e.g. the trainer's baseline ladder) dispatch on the code;
// everything else treats an Error as fatal for the current operation.
enum class Errc {
    invalid_bandwidth,
    history_corruption,
    degenerate_group,
    degenerate_batch,
    no_data,
    unsupported_normalization,
    undefined_scale,
    malformed_input,
    enumeration_infeasible,
    insufficient_snapshots,
    mismatched_runs,
    numerical_failure,
    config_error,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
  public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const { return code_; }

  private:
    Errc code_;
};

using PromptId = int;

}  // namespace kae
