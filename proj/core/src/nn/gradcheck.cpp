#include "oscope/nn/gradcheck.hpp"

#include <cmath>

namespace oscope::nn {

GradCheckReport gradcheck(Model& model, const Tensor& x, const std::vector<int>& labels,
                          double h) {
  model.set_f32(false);  // finite differences need the 64-bit path

  auto loss_at = [&]() {
    Tensor logits = model.forward_logits(x, true);
    return sparse_ce_loss(logits, labels, nullptr);
  };

  // Analytic gradients.
  {
    Tensor logits = model.forward_logits(x, true);
    Tensor dlogits;
    sparse_ce_loss(logits, labels, &dlogits);
    Tensor grad = dlogits;
    for (std::size_t li = model.layers.size(); li-- > 0;)
      grad = model.layers[li]->backward(grad);
  }

  GradCheckReport report;
  for (auto& p : model.params()) {
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      const double saved = p.value->data[i];
      p.value->data[i] = saved + h;
      const double lp = loss_at();
      p.value->data[i] = saved - h;
      const double lm = loss_at();
      p.value->data[i] = saved;

      const double gn = (lp - lm) / (2.0 * h);
      const double ga = p.grad->data[i];
      const double rel =
          std::fabs(ga - gn) / std::max({std::fabs(ga), std::fabs(gn), 1e-8});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p.name;
        report.worst_index = i;
      }
      ++report.params_checked;
    }
  }
  return report;
}

}  // namespace oscope::nn
