#include "hgrec/gradcheck.hpp"

#include <cmath>

namespace hgrec {

GradCheckReport gradcheck(
    const std::function<Tensor()>& build_loss,
    const std::vector<std::pair<std::string, Tensor>>& params, double eps) {
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = build_loss();
    tape.backward(loss);
  }
  analytic.reserve(params.size());
  for (const auto& [name, p] : params)
    analytic.emplace_back(p.grad().begin(), p.grad().end());

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi].second;
    auto data = p.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + eps;
      const double fp = build_loss().value();
      data[i] = orig - eps;
      const double fm = build_loss().value();
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      const double rel = std::abs(a - numeric) / denom;
      ++report.n_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = params[pi].first;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace hgrec
