#include "kae/common.hpp"

namespace kae {

const char* errc_name(Errc code) {
    switch (code) {
        case Errc::invalid_bandwidth: return "invalid-bandwidth";
        case Errc::history_corruption: return "history-corruption";
        case Errc::degenerate_group: return "degenerate-group";
        case Errc::degenerate_batch: return "degenerate-batch";
        case Errc::no_data: return "no-data";
        case Errc::unsupported_normalization: return "unsupported-normalization";
        case Errc::undefined_scale: return "undefined-scale";
        case Errc::malformed_input: return "malformed-input";
        case Errc::enumeration_infeasible: return "enumeration-infeasible";
        case Errc::insufficient_snapshots: return "insufficient-snapshots";
        case Errc::mismatched_runs: return "mismatched-runs";
        case Errc::numerical_failure: return "numerical-failure";
        case Errc::config_error: return "config-error";
    }
    return "unknown-error";
}

}  // namespace kae
