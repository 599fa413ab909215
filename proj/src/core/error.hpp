#pragma once

#include <stdexcept>
#include <string>

namespace augdiff {

// Mirrors the status codes exported by the C API.
enum class ErrorCode {
  InvalidArgument = 1,
  Io = 2,
  BadMagic = 3,
  BadVersion = 4,
  Corrupt = 5,
  ShapeMismatch = 6,
  Runtime = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace augdiff
