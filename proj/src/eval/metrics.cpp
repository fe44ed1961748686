#include "bleg/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bleg/error.hpp"

namespace bleg::eval {

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

void check_labels(std::span<const int> v, const char* what) {
  for (int x : v) {
    if (x != 0 && x != 1) throw ParameterError(std::string(what) + " must be 0 or 1");
  }
}

}  // namespace

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw DimensionError("predictions and labels differ in length");
  check_labels(predictions, "predictions");
  check_labels(labels, "labels");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      (predictions[i] == 1 ? c.tp : c.fn) += 1;
    } else {
      (predictions[i] == 1 ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

Metrics metrics_from_counts(const ConfusionCounts& c) {
  Metrics m;
  m.acc = ratio(c.tp + c.tn, c.total());
  m.sen = ratio(c.tp, c.tp + c.fn);
  m.spe = ratio(c.tn, c.tn + c.fp);
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  return m;
}

std::optional<double> rank_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  check_labels(labels, "labels");
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericalError("non-finite score");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks over tie groups, 1-based.
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        pos_rank_sum += mid;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels,
                        std::span<const double> scores) {
  Metrics m = metrics_from_counts(confusion(predictions, labels));
  if (!scores.empty()) m.auc = rank_auc(scores, labels);
  return m;
}

std::optional<double> metric(const Metrics& m, const std::string& name) {
  if (name == "acc") return m.acc;
  if (name == "sen") return m.sen;
  if (name == "spe") return m.spe;
  if (name == "f1") return m.f1;
  if (name == "auc") return m.auc;
  throw ParameterError("unknown metric '" + name + "'");
}

MetricSummary summarize(const std::vector<std::optional<double>>& values) {
  MetricSummary s;
  double sum = 0.0;
  for (const auto& v : values) {
    if (!v) continue;
    sum += *v;
    ++s.defined;
  }
  if (s.defined == 0) return s;
  const double mean = sum / static_cast<double>(s.defined);
  double ss = 0.0;
  for (const auto& v : values) {
    if (v) ss += (*v - mean) * (*v - mean);
  }
  s.mean = mean;
  s.std = std::sqrt(ss / static_cast<double>(s.defined));
  return s;
}

nlohmann::json to_json(const Metrics& m) {
  nlohmann::json j;
  for (const auto& name : kMetricNames) {
    const auto v = metric(m, name);
    j[name] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  }
  return j;
}

}  // namespace bleg::eval
