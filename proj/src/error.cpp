#include "rmflow/error.hpp"

namespace rmflow {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_depth: return "invalid-depth";
    case ErrorKind::behind_camera: return "behind-camera";
    case ErrorKind::branch: return "branch";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::format: return "format";
    case ErrorKind::parse: return "parse";
    case ErrorKind::integrity: return "integrity";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::under_constrained: return "under-constrained";
    case ErrorKind::empty_fit: return "empty-fit";
    case ErrorKind::spec: return "spec";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

}  // namespace rmflow
