#include "qlight/error.hpp"

namespace qlight {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::unsorted_stream: return "unsorted_stream";
    case ErrorCode::no_dip_found: return "no_dip_found";
    case ErrorCode::non_convergence: return "non_convergence";
    case ErrorCode::rank_deficient: return "rank_deficient";
    case ErrorCode::peak_not_found: return "peak_not_found";
    case ErrorCode::zero_accidentals: return "zero_accidentals";
    case ErrorCode::zero_denominator: return "zero_denominator";
    case ErrorCode::insufficient_coverage: return "insufficient_coverage";
    case ErrorCode::memory_cap: return "memory_cap";
    case ErrorCode::config: return "config";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

}  // namespace qlight
