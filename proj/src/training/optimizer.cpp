#include "bleg/training/optimizer.hpp"

#include <cmath>

#include "bleg/error.hpp"

namespace bleg::training {

AdamW::AdamW(std::vector<numerics::Parameter*> params, AdamConfig cfg) : cfg_(cfg) {
  if (!(cfg.lr >= 0.0) || !(cfg.weight_decay >= 0.0)) throw ConfigurationError("learning rate and decay must be >= 0");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) || !(cfg.eps > 0.0)) {
    throw ConfigurationError("invalid Adam moments");
  }
  for (auto* p : params) {
    if (!p->receives_grad()) continue;
    params_.push_back(p);
    m_.emplace_back(p->value.shape(), 0.0);
    v_.emplace_back(p->value.shape(), 0.0);
  }
}

void AdamW::step() {
  for (const auto* p : params_) {
    if (!p->grad.same_shape(p->value)) throw DimensionError("gradient of '" + p->name + "' has the wrong shape");
    if (!p->grad.all_finite()) throw NumericalError("non-finite gradient for '" + p->name + "'");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      p.value[i] -= cfg_.lr * cfg_.weight_decay * p.value[i] + cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (auto* p : params_) p->grad.fill(0.0);
}

}  // namespace bleg::training
