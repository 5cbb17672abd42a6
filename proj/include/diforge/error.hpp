#pragma once

#include <stdexcept>
#include <string>

namespace diforge {

enum class Errc {
  invalid_argument,
  dimension_mismatch,
  io_failure,
  bad_magic,
  truncated,
  dimension_overflow,
  version_mismatch,
  corrupt,
  shape_mismatch,
  insufficient_data,
  non_finite,
  retries_exhausted,
  config,
  missing_artifact,
};

const char* to_string(Errc code) noexcept;

/// Every failure in the library surfaces as this exception; `code()` lets
/// callers and tests tell the failure classes apart.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline void require(bool condition, Errc code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace diforge
