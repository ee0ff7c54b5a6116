#include "mindreg/volume.hpp"

#include <sstream>

namespace mindreg {

std::string describe(const Grid& g) {
  std::ostringstream s;
  s << g.nx() << 'x' << g.ny() << 'x' << g.nz() << " @ " << g.spacing.x() << ',' << g.spacing.y() << ','
    << g.spacing.z();
  return s.str();
}

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::GeometryMismatch: return "geometry_mismatch";
    case ErrorCode::MalformedHeader: return "malformed_header";
    case ErrorCode::ElementCountMismatch: return "element_count_mismatch";
    case ErrorCode::UnsupportedElementType: return "unsupported_element_type";
    case ErrorCode::Io: return "io_error";
    case ErrorCode::NumericFailure: return "numeric_failure";
    case ErrorCode::EmptyMask: return "empty_mask";
  }
  return "unknown";
}

}  // namespace mindreg
