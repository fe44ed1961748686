#include "bleg/eval/protocol.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "bleg/error.hpp"

namespace bleg::eval {

using graphdata::SplitKind;
using graphdata::Subset;
using nlohmann::json;

namespace {

void require_disjoint(const FoldView& f) {
  std::vector<int> seen;
  auto mark = [&](const std::vector<std::size_t>& idx, int tag) {
    for (auto k : idx) {
      if (k >= seen.size()) seen.resize(k + 1, -1);
      if (seen[k] != -1) {
        throw InvariantViolation(fmt::format("run {} fold {}: sample {} assigned to two subsets", f.run, f.fold, k));
      }
      seen[k] = tag;
    }
  };
  mark(f.train, 0);
  mark(f.val, 1);
  mark(f.test, 2);
}

std::string opt_csv(const std::optional<double>& v) { return v ? fmt::format("{:.17g}", *v) : std::string{}; }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const Protocol& p) {
  return json{{"name", p.name},
              {"kind", graphdata::to_string(p.kind)},
              {"folds", p.params.folds},
              {"train_ratio", p.params.train_ratio},
              {"val_ratio", p.params.val_ratio},
              {"shots", p.params.shots},
              {"test_per_class", p.params.test_per_class ? json(*p.params.test_per_class) : json(nullptr)},
              {"seeds", p.seeds},
              {"kfold_val_fraction", p.kfold_val_fraction}};
}

Protocol protocol_from_json(const json& j) {
  Protocol p;
  try {
    p.name = j.value("name", p.name);
    p.kind = graphdata::split_kind_from_string(j.value("kind", graphdata::to_string(p.kind)));
    p.params.folds = j.value("folds", p.params.folds);
    p.params.train_ratio = j.value("train_ratio", p.params.train_ratio);
    p.params.val_ratio = j.value("val_ratio", p.params.val_ratio);
    p.params.shots = j.value("shots", p.params.shots);
    if (j.contains("test_per_class") && !j.at("test_per_class").is_null()) {
      p.params.test_per_class = j.at("test_per_class").get<std::size_t>();
    }
    p.seeds = j.value("seeds", p.seeds);
    p.kfold_val_fraction = j.value("kfold_val_fraction", p.kfold_val_fraction);
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("bad protocol: ") + e.what());
  }
  if (p.seeds.empty()) throw ConfigurationError("a protocol needs at least one seed");
  return p;
}

std::vector<FoldView> plan_folds(const std::vector<int>& labels, const Protocol& p) {
  if (p.seeds.empty()) throw ConfigurationError("a protocol needs at least one seed");
  std::vector<FoldView> out;
  for (std::size_t run = 0; run < p.seeds.size(); ++run) {
    const std::uint64_t seed = p.seeds[run];
    const auto plan = graphdata::make_split(labels, p.kind, p.params, seed);
    if (p.kind == SplitKind::kfold) {
      for (std::size_t f = 0; f < plan.num_folds(); ++f) {
        FoldView v{.run = run, .seed = seed, .fold = f, .train = {}, .val = {}, .test = {}};
        v.test = plan.indices(static_cast<int>(f));
        std::tie(v.train, v.val) =
            graphdata::stratified_holdout(plan.complement(static_cast<int>(f)), labels, p.kfold_val_fraction,
                                          seed * 1000 + f);
        require_disjoint(v);
        out.push_back(std::move(v));
      }
    } else {
      FoldView v{.run = run, .seed = seed, .fold = 0, .train = {}, .val = {}, .test = {}};
      v.train = plan.indices(Subset::train);
      v.val = plan.indices(Subset::val);
      v.test = plan.indices(Subset::test);
      require_disjoint(v);
      out.push_back(std::move(v));
    }
  }
  return out;
}

MetricsReport aggregate(const Protocol& p, std::vector<EvaluationRecord> rows) {
  MetricsReport r;
  r.protocol = p;
  r.rows = std::move(rows);
  for (const auto& name : kMetricNames) {
    std::vector<std::optional<double>> values;
    for (const auto& row : r.rows) values.push_back(metric(row.metrics, name));
    r.summary[name] = summarize(values);
  }
  return r;
}

MetricsReport run_protocol(const std::vector<int>& labels, const Protocol& p, const FoldFn& fn) {
  std::vector<EvaluationRecord> rows;
  for (const auto& fold : plan_folds(labels, p)) {
    FoldOutput out;
    try {
      out = fn(fold);
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("run {} (seed {}) fold {} failed: {}", fold.run, fold.seed, fold.fold, e.what()));
    }
    if (out.predictions.size() != fold.test.size()) {
      throw DimensionError(fmt::format("run {} fold {}: {} predictions for {} test samples", fold.run, fold.fold,
                                       out.predictions.size(), fold.test.size()));
    }
    std::vector<int> y;
    for (auto k : fold.test) y.push_back(labels[k]);
    EvaluationRecord rec{.run = fold.run,
                         .seed = fold.seed,
                         .fold = fold.fold,
                         .n_train = fold.train.size(),
                         .n_val = fold.val.size(),
                         .n_test = fold.test.size(),
                         .metrics = compute_metrics(out.predictions, y, out.scores)};
    rows.push_back(rec);
  }
  return aggregate(p, std::move(rows));
}

json MetricsReport::to_json() const {
  json j{{"protocol", eval::to_json(protocol)}, {"evaluations", rows.size()}};
  json s = json::object();
  for (const auto& [name, m] : summary) {
    s[name] = {{"mean", opt_json(m.mean)}, {"std", opt_json(m.std)}, {"defined", m.defined}};
  }
  j["summary"] = s;
  json rs = json::array();
  for (const auto& r : rows) {
    rs.push_back({{"run", r.run},
                  {"seed", r.seed},
                  {"fold", r.fold},
                  {"n_train", r.n_train},
                  {"n_val", r.n_val},
                  {"n_test", r.n_test},
                  {"metrics", eval::to_json(r.metrics)}});
  }
  j["rows"] = rs;
  return j;
}

std::string MetricsReport::to_csv() const {
  std::string out = "run,seed,fold,n_train,n_val,n_test";
  for (const auto& name : kMetricNames) out += "," + name;
  out += "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{}", r.run, r.seed, r.fold, r.n_train, r.n_val, r.n_test);
    for (const auto& name : kMetricNames) out += "," + opt_csv(metric(r.metrics, name));
    out += "\n";
  }
  return out;
}

std::vector<Protocol> ratio_sweep(const std::vector<std::uint64_t>& seeds) {
  std::vector<Protocol> out;
  for (int pct = 10; pct <= 70; pct += 10) {
    Protocol p;
    p.name = fmt::format("ratio-{}", pct);
    p.kind = SplitKind::ratio;
    p.params.train_ratio = pct / 100.0;
    p.params.val_ratio = 0.1;
    p.seeds = seeds;
    out.push_back(p);
  }
  return out;
}

std::vector<Protocol> kshot_grid(const std::vector<std::uint64_t>& seeds) {
  std::vector<Protocol> out;
  for (std::size_t k : {1, 2, 5}) {
    for (std::optional<std::size_t> test : {std::optional<std::size_t>(50), std::optional<std::size_t>(100),
                                            std::optional<std::size_t>()}) {
      Protocol p;
      p.name = test ? fmt::format("kshot-{}-test{}", k, *test) : fmt::format("kshot-{}-rest", k);
      p.kind = SplitKind::kshot;
      p.params.shots = k;
      p.params.val_ratio = 0.1;
      p.params.test_per_class = test;
      p.seeds = seeds;
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace bleg::eval
