#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace bleg::eval {

/// Class 1 is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  [[nodiscard]] std::size_t total() const { return tp + fp + tn + fn; }
};

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels);

/// A metric whose denominator is zero is left empty.
struct Metrics {
  std::optional<double> acc, sen, spe, f1, auc;
};

inline const std::vector<std::string> kMetricNames{"acc", "sen", "spe", "f1", "auc"};

std::optional<double> metric(const Metrics& m, const std::string& name);

Metrics metrics_from_counts(const ConfusionCounts& c);

/// Mann-Whitney statistic: the fraction of (positive, negative) pairs where
/// the positive scores higher, ties counting one half. Empty without both classes.
std::optional<double> rank_auc(std::span<const double> scores, std::span<const int> labels);

/// `scores` are positive-class probabilities; may be empty to skip AUC.
Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels,
                        std::span<const double> scores);

struct MetricSummary {
  std::optional<double> mean;
  std::optional<double> std;  // population standard deviation
  std::size_t defined = 0;    // values that entered the mean
};

/// Mean and standard deviation over the defined values.
MetricSummary summarize(const std::vector<std::optional<double>>& values);

nlohmann::json to_json(const Metrics& m);

}  // namespace bleg::eval
