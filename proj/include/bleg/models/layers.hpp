#pragma once

#include <string>

#include "bleg/numerics/ops.hpp"
#include "bleg/rng.hpp"

namespace bleg::models {

using numerics::Mode;
using numerics::Parameter;
using numerics::ParameterSet;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

inline constexpr double kInitStd = 0.02;

Tensor normal_tensor(Rng& rng, std::size_t rows, std::size_t cols, double stddev = kInitStd);

/// y = x W + b.
struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;  // may be null

  static Linear create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       bool with_bias = true, double stddev = kInitStd);
  [[nodiscard]] Var operator()(Tape& tape, Var x) const;
  [[nodiscard]] std::size_t in() const { return weight->value.rows(); }
  [[nodiscard]] std::size_t out() const { return weight->value.cols(); }
};

/// Per-feature normalization over rows with running statistics for eval.
struct BatchNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  Parameter* running_mean = nullptr;
  Parameter* running_var = nullptr;

  static BatchNorm create(ParameterSet& ps, const std::string& name, std::size_t width);
  [[nodiscard]] Var operator()(Tape& tape, Var x, Mode mode) const;
};

struct LayerNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;

  static LayerNorm create(ParameterSet& ps, const std::string& name, std::size_t width);
  [[nodiscard]] Var operator()(Tape& tape, Var x) const;
};

}  // namespace bleg::models
