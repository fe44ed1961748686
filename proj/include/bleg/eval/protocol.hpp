#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "bleg/eval/metrics.hpp"
#include "bleg/graphdata/splits.hpp"

namespace bleg::eval {

struct Protocol {
  std::string name;
  graphdata::SplitKind kind = graphdata::SplitKind::kfold;
  graphdata::SplitParams params;
  /// One repetition per seed.
  std::vector<std::uint64_t> seeds{0};
  /// kfold only: share of the training folds held out for early stopping.
  double kfold_val_fraction = 0.1;
};

nlohmann::json to_json(const Protocol& p);
Protocol protocol_from_json(const nlohmann::json& j);

/// One train/val/test assignment handed to the model pipeline.
struct FoldView {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::size_t fold = 0;
  std::vector<std::size_t> train, val, test;
};

/// Predictions and positive-class scores aligned with FoldView::test.
struct FoldOutput {
  std::vector<int> predictions;
  std::vector<double> scores;
};

using FoldFn = std::function<FoldOutput(const FoldView&)>;

/// Every fold of every run, in run-major order. Raises InvariantViolation if
/// any two of train/val/test overlap.
std::vector<FoldView> plan_folds(const std::vector<int>& labels, const Protocol& p);

struct EvaluationRecord {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::size_t fold = 0;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  Metrics metrics;
};

struct MetricsReport {
  Protocol protocol;
  std::vector<EvaluationRecord> rows;
  std::map<std::string, MetricSummary> summary;

  [[nodiscard]] nlohmann::json to_json() const;
  /// One row per (run, fold).
  [[nodiscard]] std::string to_csv() const;
};

MetricsReport aggregate(const Protocol& p, std::vector<EvaluationRecord> rows);

/// Runs `fn` on every fold and aggregates. A failing fold aborts the
/// protocol with an error of the same kind naming the run and fold.
MetricsReport run_protocol(const std::vector<int>& labels, const Protocol& p, const FoldFn& fn);

/// Training ratios 0.1 ... 0.7 with a fixed 10% validation set.
std::vector<Protocol> ratio_sweep(const std::vector<std::uint64_t>& seeds);

/// k in {1, 2, 5} crossed with 50, 100 or all remaining test samples per class.
std::vector<Protocol> kshot_grid(const std::vector<std::uint64_t>& seeds);

}  // namespace bleg::eval
