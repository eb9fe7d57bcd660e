#include "vac/trace.hpp"

#include <stdexcept>

namespace vac {

double policy_error(const Mat& policy, const Mat& ref) {
  if (policy.rows() != ref.rows() || policy.cols() != ref.cols())
    throw std::invalid_argument("policy_error: shape mismatch");
  return (policy - ref).cwiseAbs().sum();
}

}  // namespace vac
