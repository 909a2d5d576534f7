#pragma once

#include <stdexcept>
#include <string>

namespace svrgld {

enum class ErrorCode {
  InvalidInput = 1,
  NotPSD,
  NoConvergence,
  Diverged,
  InvalidConfig,
  Io,
};

const char* to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so the
// C layer can translate it into a status value without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace svrgld
