#pragma once

#include <stdexcept>
#include <string>

namespace rmflow {

// Failure classes thrown across the library. The CLI maps these onto exit
// codes; tests match on the kind, not the message text.
enum class ErrorKind {
  invalid_depth,      // zero disparity / non-positive depth where one is required
  behind_camera,      // projection of a point with Z <= 0
  branch,             // log() at or beyond the principal-branch cut
  dimension,          // mismatched field shapes or channel counts
  format,             // container violates its byte-level format
  parse,              // text/JSON input not understood
  integrity,          // container parsed but is internally inconsistent
  parameter,          // invalid scalar argument or configuration value
  under_constrained,  // fewer equations than unknowns in a fit
  empty_fit,          // no usable pixels at all
  spec,               // scene description invalid or degenerate
  usage,              // command-line misuse
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rmflow
