#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tpsf {

/// Failure categories surfaced by the library. The CLI maps these onto exit codes.
enum class ErrorCode {
  InvalidArgument,
  MissingFile,
  BadMagic,
  BadHeader,
  ShapeMismatch,
  LabelMismatch,
  InsufficientData,
  ConfigMismatch,
  Diverged,
  StaleCache,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string &what) { throw Error(code, what); }

// Takes a view so that literal messages cost nothing on the success path.
inline void require(bool cond, std::string_view what) {
  if (!cond)
    fail(ErrorCode::InvalidArgument, std::string(what));
}

} // namespace tpsf
