#include <tpsf/core/error.hpp>

namespace tpsf {

std::string_view to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::InvalidArgument: return "invalid_argument";
  case ErrorCode::MissingFile: return "missing_file";
  case ErrorCode::BadMagic: return "bad_magic";
  case ErrorCode::BadHeader: return "bad_header";
  case ErrorCode::ShapeMismatch: return "shape_mismatch";
  case ErrorCode::LabelMismatch: return "label_mismatch";
  case ErrorCode::InsufficientData: return "insufficient_data";
  case ErrorCode::ConfigMismatch: return "config_mismatch";
  case ErrorCode::Diverged: return "diverged";
  case ErrorCode::StaleCache: return "stale_cache";
  }
  return "unknown";
}

} // namespace tpsf
