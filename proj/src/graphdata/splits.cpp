#include "bleg/graphdata/splits.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "bleg/error.hpp"
#include "bleg/rng.hpp"

namespace bleg::graphdata {

std::string to_string(SplitKind kind) {
  switch (kind) {
    case SplitKind::kfold: return "kfold";
    case SplitKind::ratio: return "ratio";
    case SplitKind::kshot: return "kshot";
  }
  return "unknown";
}

SplitKind split_kind_from_string(const std::string& s) {
  if (s == "kfold") return SplitKind::kfold;
  if (s == "ratio") return SplitKind::ratio;
  if (s == "kshot") return SplitKind::kshot;
  throw ConfigurationError("unknown split kind '" + s + "' (expected kfold, ratio or kshot)");
}

std::size_t SplitPlan::num_folds() const {
  if (kind != SplitKind::kfold) return 0;
  int hi = -1;
  for (int a : assignment) hi = std::max(hi, a);
  return static_cast<std::size_t>(hi + 1);
}

std::vector<std::size_t> SplitPlan::indices(int value) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < assignment.size(); ++k)
    if (assignment[k] == value) out.push_back(k);
  return out;
}

std::vector<std::size_t> SplitPlan::complement(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < assignment.size(); ++k)
    if (assignment[k] != fold) out.push_back(k);
  return out;
}

namespace {

std::size_t round_count(double x) { return static_cast<std::size_t>(std::llround(x)); }

void check_labels(const std::vector<int>& labels) {
  if (labels.empty()) throw InsufficientDataError("cannot split an empty dataset");
  for (int y : labels)
    if (y != 0 && y != 1) throw ConsistencyError("labels must be 0 or 1, got " + std::to_string(y));
}

std::array<std::vector<std::size_t>, 2> shuffled_by_class(const std::vector<std::size_t>& pool,
                                                          const std::vector<int>& labels, Rng& rng) {
  std::array<std::vector<std::size_t>, 2> by_class;
  for (auto k : pool) by_class[static_cast<std::size_t>(labels[k])].push_back(k);
  for (auto& c : by_class) rng.shuffle(c);
  return by_class;
}

// Interleaves the shuffled classes so that every prefix is close to the
// overall class proportion.
std::vector<std::size_t> stratified_order(const std::array<std::vector<std::size_t>, 2>& by_class) {
  struct Keyed {
    double key;
    std::size_t cls;
    std::size_t index;
  };
  std::vector<Keyed> keyed;
  for (std::size_t c = 0; c < 2; ++c) {
    const auto n = static_cast<double>(by_class[c].size());
    for (std::size_t r = 0; r < by_class[c].size(); ++r)
      keyed.push_back({(static_cast<double>(r) + 0.5) / n, c, by_class[c][r]});
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    if (a.key != b.key) return a.key < b.key;
    return a.cls < b.cls;
  });
  std::vector<std::size_t> out;
  out.reserve(keyed.size());
  for (const auto& k : keyed) out.push_back(k.index);
  return out;
}

void require_both_classes(const std::vector<std::size_t>& subset, const std::vector<int>& labels,
                          const std::string& what) {
  std::array<std::size_t, 2> count{0, 0};
  for (auto k : subset) ++count[static_cast<std::size_t>(labels[k])];
  for (std::size_t c = 0; c < 2; ++c) {
    if (count[c] == 0) throw InsufficientDataError(what + " subset has no sample of class " + std::to_string(c));
  }
}

SplitPlan kfold_split(const std::vector<int>& labels, const SplitParams& p, Rng& rng) {
  const std::size_t n = labels.size();
  if (p.folds < 2) throw ParameterError("kfold needs at least 2 folds");
  if (n < p.folds) {
    throw InsufficientDataError(std::to_string(n) + " samples cannot fill " + std::to_string(p.folds) + " folds");
  }
  std::vector<std::size_t> all(n);
  for (std::size_t k = 0; k < n; ++k) all[k] = k;
  const auto by_class = shuffled_by_class(all, labels, rng);
  SplitPlan plan;
  plan.assignment.assign(n, -1);
  // A running counter across both classes deals folds round-robin, which
  // bounds both total and per-class fold sizes to within one.
  std::size_t counter = 0;
  for (const auto& c : by_class)
    for (auto k : c) plan.assignment[k] = static_cast<int>(counter++ % p.folds);
  return plan;
}

SplitPlan ratio_split(const std::vector<int>& labels, const SplitParams& p, Rng& rng) {
  const std::size_t n = labels.size();
  if (!(p.train_ratio > 0.0 && p.val_ratio >= 0.0 && p.train_ratio + p.val_ratio < 1.0)) {
    throw ParameterError("ratio split needs train_ratio > 0, val_ratio >= 0 and train_ratio + val_ratio < 1");
  }
  const std::size_t n_train = round_count(p.train_ratio * static_cast<double>(n));
  const std::size_t n_val = round_count(p.val_ratio * static_cast<double>(n));
  if (n_train + n_val >= n) throw InsufficientDataError("ratio split leaves no test samples");
  std::vector<std::size_t> all(n);
  for (std::size_t k = 0; k < n; ++k) all[k] = k;
  const auto order = stratified_order(shuffled_by_class(all, labels, rng));
  SplitPlan plan;
  plan.assignment.assign(n, static_cast<int>(Subset::test));
  for (std::size_t r = 0; r < n_train; ++r) plan.assignment[order[r]] = static_cast<int>(Subset::train);
  for (std::size_t r = n_train; r < n_train + n_val; ++r) plan.assignment[order[r]] = static_cast<int>(Subset::val);
  require_both_classes(plan.indices(Subset::train), labels, "train");
  require_both_classes(plan.indices(Subset::test), labels, "test");
  return plan;
}

SplitPlan kshot_split(const std::vector<int>& labels, const SplitParams& p, Rng& rng) {
  const std::size_t n = labels.size();
  if (p.shots == 0) throw ParameterError("kshot needs k >= 1");
  std::vector<std::size_t> all(n);
  for (std::size_t k = 0; k < n; ++k) all[k] = k;
  auto by_class = shuffled_by_class(all, labels, rng);
  SplitPlan plan;
  plan.assignment.assign(n, static_cast<int>(Subset::unused));
  std::vector<std::size_t> rest;
  for (std::size_t c = 0; c < 2; ++c) {
    if (by_class[c].size() < p.shots) {
      throw InsufficientDataError("class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                                  " samples, fewer than k = " + std::to_string(p.shots));
    }
    for (std::size_t r = 0; r < p.shots; ++r) plan.assignment[by_class[c][r]] = static_cast<int>(Subset::train);
    rest.insert(rest.end(), by_class[c].begin() + static_cast<std::ptrdiff_t>(p.shots), by_class[c].end());
  }
  const std::size_t n_val = round_count(p.val_ratio * static_cast<double>(n));
  // Validation comes from the stratified interleave of what is left.
  const auto order = stratified_order(shuffled_by_class(rest, labels, rng));
  if (n_val > order.size()) throw InsufficientDataError("kshot split leaves too few samples for validation");
  for (std::size_t r = 0; r < n_val; ++r) plan.assignment[order[r]] = static_cast<int>(Subset::val);
  std::array<std::vector<std::size_t>, 2> remaining;
  for (std::size_t r = n_val; r < order.size(); ++r)
    remaining[static_cast<std::size_t>(labels[order[r]])].push_back(order[r]);
  for (std::size_t c = 0; c < 2; ++c) {
    const std::size_t want = p.test_per_class.value_or(remaining[c].size());
    if (want > remaining[c].size()) {
      throw InsufficientDataError("class " + std::to_string(c) + " has " + std::to_string(remaining[c].size()) +
                                  " samples left for testing, " + std::to_string(want) + " requested");
    }
    for (std::size_t r = 0; r < want; ++r) plan.assignment[remaining[c][r]] = static_cast<int>(Subset::test);
  }
  require_both_classes(plan.indices(Subset::test), labels, "test");
  return plan;
}

}  // namespace

SplitPlan make_split(const std::vector<int>& labels, SplitKind kind, const SplitParams& params, std::uint64_t seed) {
  check_labels(labels);
  Rng rng(derive_seed(seed, 0x5911));
  SplitPlan plan;
  switch (kind) {
    case SplitKind::kfold: plan = kfold_split(labels, params, rng); break;
    case SplitKind::ratio: plan = ratio_split(labels, params, rng); break;
    case SplitKind::kshot: plan = kshot_split(labels, params, rng); break;
  }
  plan.kind = kind;
  plan.seed = seed;
  plan.params = params;
  return plan;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    const std::vector<std::size_t>& pool, const std::vector<int>& labels, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ParameterError("hold-out fraction must lie in (0, 1)");
  if (pool.size() < 2) throw InsufficientDataError("hold-out needs at least 2 samples");
  for (auto k : pool)
    if (k >= labels.size()) throw ConsistencyError("hold-out pool index out of range");
  Rng rng(derive_seed(seed, 0x4D1D));
  const auto order = stratified_order(shuffled_by_class(pool, labels, rng));
  const std::size_t n_out = std::clamp<std::size_t>(round_count(fraction * static_cast<double>(pool.size())), 1,
                                                    pool.size() - 1);
  std::vector<std::size_t> keep(order.begin() + static_cast<std::ptrdiff_t>(n_out), order.end());
  std::vector<std::size_t> held(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_out));
  std::sort(keep.begin(), keep.end());
  std::sort(held.begin(), held.end());
  return {keep, held};
}

nlohmann::json to_json(const SplitPlan& plan) {
  nlohmann::json params = {{"folds", plan.params.folds},
                           {"train_ratio", plan.params.train_ratio},
                           {"val_ratio", plan.params.val_ratio},
                           {"shots", plan.params.shots}};
  params["test_per_class"] = plan.params.test_per_class ? nlohmann::json(*plan.params.test_per_class) : nullptr;
  return {{"kind", to_string(plan.kind)}, {"seed", plan.seed}, {"params", params}, {"assignment", plan.assignment}};
}

SplitPlan split_from_json(const nlohmann::json& j) {
  try {
    SplitPlan plan;
    plan.kind = split_kind_from_string(j.at("kind").get<std::string>());
    plan.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("params")) {
      const auto& p = j.at("params");
      plan.params.folds = p.value("folds", plan.params.folds);
      plan.params.train_ratio = p.value("train_ratio", plan.params.train_ratio);
      plan.params.val_ratio = p.value("val_ratio", plan.params.val_ratio);
      plan.params.shots = p.value("shots", plan.params.shots);
      if (p.contains("test_per_class") && !p.at("test_per_class").is_null()) {
        plan.params.test_per_class = p.at("test_per_class").get<std::size_t>();
      }
    }
    plan.assignment = j.at("assignment").get<std::vector<int>>();
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed split plan: ") + e.what());
  }
}

}  // namespace bleg::graphdata
