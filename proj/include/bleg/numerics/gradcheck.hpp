#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bleg/numerics/tape.hpp"

namespace bleg::numerics {

struct GradientCheckEntry {
  std::string parameter;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = true;
};

struct GradientCheckReport {
  std::vector<GradientCheckEntry> entries;
  double tolerance = 0.0;
  double step = 0.0;
  bool passed = true;
  /// Name of the parameter with the largest error.
  std::string worst_parameter;
  double worst_error = 0.0;
};

/// Builds a fresh tape, evaluates the scalar loss and returns it.
using LossFn = std::function<Var(Tape&)>;
/// Optional hook applied to the analytic gradients before comparison.
using GradientTamper = std::function<void(std::span<Parameter* const>)>;

/// Compares tape gradients against central finite differences.
///
/// The error for a parameter is max_i |analytic_i - numeric_i| divided by the
/// largest gradient magnitude over all checked parameters (floored at 1e-7).
/// A shared scale keeps structurally zero gradients, such as a bias feeding
/// batch norm, from being judged on finite-difference roundoff. `fn` must be
/// deterministic: any dropout generator has to be re-seeded inside it.
GradientCheckReport check_gradient(const LossFn& fn, std::span<Parameter* const> params, double step = 1e-5,
                                   double tolerance = 1e-3, const GradientTamper& tamper = {});

}  // namespace bleg::numerics
