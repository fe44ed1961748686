#pragma once

#include <vector>

#include "bleg/numerics/tape.hpp"

namespace bleg::training {

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay:
///   theta <- theta - lr*wd*theta - lr * m_hat / (sqrt(v_hat) + eps)
class AdamW {
 public:
  /// Parameters that cannot receive gradients (frozen, buffers) are skipped.
  AdamW(std::vector<numerics::Parameter*> params, AdamConfig cfg);

  /// Applies one update from the accumulated gradients. A non-finite
  /// gradient raises NumericalError before anything is modified.
  void step();
  void zero_grad();

  [[nodiscard]] std::size_t steps() const { return t_; }
  [[nodiscard]] const AdamConfig& config() const { return cfg_; }
  [[nodiscard]] const std::vector<numerics::Parameter*>& params() const { return params_; }

 private:
  std::vector<numerics::Parameter*> params_;
  std::vector<numerics::Tensor> m_, v_;
  AdamConfig cfg_;
  std::size_t t_ = 0;
};

}  // namespace bleg::training
