#include "bleg/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace bleg::numerics {

namespace {

double evaluate(const LossFn& fn) {
  Tape tape;
  return fn(tape).value().item();
}

}  // namespace

GradientCheckReport check_gradient(const LossFn& fn, std::span<Parameter* const> params, double step,
                                   double tolerance, const GradientTamper& tamper) {
  GradientCheckReport report;
  report.tolerance = tolerance;
  report.step = step;

  for (auto* p : params) p->grad.fill(0.0);
  {
    Tape tape;
    Var loss = fn(tape);
    tape.backward(loss);
  }
  if (tamper) tamper(params);

  std::vector<Tensor> numerics;
  double scale_v = 1e-7;
  for (auto* p : params) {
    Tensor numeric(p->grad.shape(), 0.0);
    auto values = p->value.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + step;
      const double plus = evaluate(fn);
      values[i] = original - step;
      const double minus = evaluate(fn);
      values[i] = original;
      numeric[i] = (plus - minus) / (2.0 * step);
      scale_v = std::max({scale_v, std::abs(p->grad[i]), std::abs(numeric[i])});
    }
    numerics.push_back(std::move(numeric));
  }

  for (std::size_t k = 0; k < params.size(); ++k) {
    GradientCheckEntry entry;
    entry.parameter = params[k]->name;
    const Tensor& analytic = params[k]->grad;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double err = std::abs(analytic[i] - numerics[k][i]) / scale_v;
      if (err > entry.max_relative_error) {
        entry.max_relative_error = err;
        entry.worst_index = i;
      }
    }
    entry.passed = entry.max_relative_error < tolerance;
    report.passed = report.passed && entry.passed;
    if (entry.max_relative_error >= report.worst_error) {
      report.worst_error = entry.max_relative_error;
      report.worst_parameter = entry.parameter;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace bleg::numerics
