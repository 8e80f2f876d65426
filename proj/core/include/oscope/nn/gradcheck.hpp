#pragma once

#include "oscope/nn/train.hpp"

namespace oscope::nn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t params_checked = 0;
};

// Compares every analytic parameter gradient against central finite
// differences of the training-mode loss (batchnorm on batch statistics),
// relative error |ga - gn| / max(|ga|, |gn|, 1e-8). 64-bit path only.
GradCheckReport gradcheck(Model& model, const Tensor& x, const std::vector<int>& labels,
                          double h = 1e-5);

}  // namespace oscope::nn
