#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "bleg/numerics/gradcheck.hpp"

namespace bleg::training {

struct FidelityEntry {
  std::string component;
  numerics::GradientCheckReport report;
};

struct FidelityReport {
  std::vector<FidelityEntry> entries;
  double step = 1e-5;
  double tolerance = 1e-3;
  bool passed = true;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Finite-difference checks of every trainable component in isolation and
/// of the composed stage-2 and stage-3 objectives on a 4-graph batch, using
/// a small randomized model built from `seed`.
FidelityReport gradient_fidelity(std::uint64_t seed, double step = 1e-5, double tolerance = 1e-3);

}  // namespace bleg::training
