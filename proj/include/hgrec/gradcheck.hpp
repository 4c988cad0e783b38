#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hgrec/tensor.hpp"

namespace hgrec {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t n_checked = 0;
  bool pass(double tol) const { return max_rel_err < tol; }
};

// Central finite differences against tape gradients. build_loss must
// reconstruct the forward pass from the current parameter values on every
// call (it runs once under a tape for analytic gradients, then twice per
// parameter element without one). Error metric is
// |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckReport gradcheck(
    const std::function<Tensor()>& build_loss,
    const std::vector<std::pair<std::string, Tensor>>& params,
    double eps = 1e-5);

}  // namespace hgrec
