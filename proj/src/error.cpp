#include "diforge/error.hpp"

namespace diforge {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid argument";
    case Errc::dimension_mismatch: return "dimension mismatch";
    case Errc::io_failure: return "i/o failure";
    case Errc::bad_magic: return "bad magic";
    case Errc::truncated: return "truncated";
    case Errc::dimension_overflow: return "dimension overflow";
    case Errc::version_mismatch: return "version mismatch";
    case Errc::corrupt: return "corrupt";
    case Errc::shape_mismatch: return "shape mismatch";
    case Errc::insufficient_data: return "insufficient data";
    case Errc::non_finite: return "non-finite value";
    case Errc::retries_exhausted: return "retries exhausted";
    case Errc::config: return "config";
    case Errc::missing_artifact: return "missing artifact";
  }
  return "unknown";
}

}  // namespace diforge
