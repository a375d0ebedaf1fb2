#include "hoflow/error.hpp"

namespace hoflow {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
  case ErrorKind::InvalidArgument: return "invalid-argument";
  case ErrorKind::DomainError: return "domain-error";
  case ErrorKind::ProjectionFailed: return "projection-failed";
  case ErrorKind::DegenerateGeometry: return "degenerate-geometry";
  case ErrorKind::ParseError: return "parse-error";
  case ErrorKind::UnassignedNode: return "unassigned-node";
  case ErrorKind::NumericalError: return "numerical-error";
  case ErrorKind::Infeasible: return "infeasible";
  case ErrorKind::Divergence: return "divergence";
  }
  return "unknown";
}

} // namespace hoflow
