#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace bleg::graphdata {

enum class SplitKind { kfold, ratio, kshot };

std::string to_string(SplitKind kind);
SplitKind split_kind_from_string(const std::string& s);

/// Subset tags used by ratio and kshot plans.
enum class Subset : int { unused = -1, train = 0, val = 1, test = 2 };

struct SplitParams {
  std::size_t folds = 10;
  double train_ratio = 0.7;
  double val_ratio = 0.1;
  std::size_t shots = 1;
  /// Per-class test size for kshot; empty means every remaining sample.
  std::optional<std::size_t> test_per_class;
};

struct SplitPlan {
  SplitKind kind = SplitKind::kfold;
  std::uint64_t seed = 0;
  SplitParams params;
  /// kfold: fold index per sample. ratio / kshot: a Subset tag.
  std::vector<int> assignment;

  [[nodiscard]] std::size_t num_folds() const;
  /// Indices whose assignment equals `value`, ascending.
  [[nodiscard]] std::vector<std::size_t> indices(int value) const;
  [[nodiscard]] std::vector<std::size_t> indices(Subset s) const { return indices(static_cast<int>(s)); }
  /// For kfold: every index not in `fold`.
  [[nodiscard]] std::vector<std::size_t> complement(int fold) const;

  friend bool operator==(const SplitPlan& a, const SplitPlan& b) {
    return a.kind == b.kind && a.seed == b.seed && a.assignment == b.assignment;
  }
};

/// Stratified by label. Raises InsufficientDataError when a required subset
/// cannot receive a sample of each class, ParameterError for bad params.
SplitPlan make_split(const std::vector<int>& labels, SplitKind kind, const SplitParams& params, std::uint64_t seed);

/// Stratified hold-out of round(fraction * |pool|) samples (at least one)
/// from `pool`; returns {remaining, held_out}, each ascending.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    const std::vector<std::size_t>& pool, const std::vector<int>& labels, double fraction, std::uint64_t seed);

nlohmann::json to_json(const SplitPlan& plan);
SplitPlan split_from_json(const nlohmann::json& j);

}  // namespace bleg::graphdata
