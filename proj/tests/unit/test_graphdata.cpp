#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "bleg/error.hpp"
#include "bleg/graphdata/connectivity.hpp"
#include "bleg/graphdata/io.hpp"
#include "bleg/graphdata/splits.hpp"
#include "bleg/graphdata/synthetic.hpp"
#include "test_util.hpp"

using namespace bleg;
using namespace bleg::graphdata;

namespace {

TimeSeriesRecord columns(std::vector<std::vector<double>> cols) {
  const std::size_t t = cols[0].size();
  Tensor s = Tensor::matrix(t, cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (std::size_t r = 0; r < t; ++r) s(r, c) = cols[c][r];
  return {"subject", s};
}

// Textbook Pearson, written independently of the library.
double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    syy += y[k] * y[k];
    sxy += x[k] * y[k];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

std::size_t edge_count(const Tensor& adj) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < adj.rows(); ++i)
    for (std::size_t j = i + 1; j < adj.cols(); ++j) n += adj(i, j) != 0.0;
  return n;
}

SynthConfig small_config(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n_graphs = 20;
  cfg.n_nodes = 20;
  cfg.time_points = 60;
  cfg.planted_edges_per_class = 3;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("pearson examples") {
  const auto a = pearson_from_timeseries(columns({{1, 2, 3}, {2, 4, 6}}));
  CHECK(a(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  const auto b = pearson_from_timeseries(columns({{1, 2, 3}, {3, 2, 1}}));
  CHECK(b(0, 1) == doctest::Approx(-1.0).epsilon(1e-15));
  const auto c = pearson_from_timeseries(columns({{1, 2, 3}, {1, 3, 2}}));
  CHECK(c(0, 1) == doctest::Approx(pearson_oracle({1, 2, 3}, {1, 3, 2})).epsilon(1e-14));
  CHECK(c(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(c(0, 0) == 1.0);
  CHECK(c(1, 0) == c(0, 1));
}

TEST_CASE("pearson matches the textbook formula on random series") {
  Rng rng(11);
  const auto x = testing::random_tensor(rng, 40, 6);
  const auto corr = pearson_from_timeseries({"s", x});
  for (std::size_t a = 0; a < 6; ++a) {
    for (std::size_t b = 0; b < 6; ++b) {
      std::vector<double> xa, xb;
      for (std::size_t t = 0; t < 40; ++t) {
        xa.push_back(x(t, a));
        xb.push_back(x(t, b));
      }
      CHECK(corr(a, b) == doctest::Approx(pearson_oracle(xa, xb)).epsilon(1e-12));
      CHECK(corr(a, b) >= -1.0);
      CHECK(corr(a, b) <= 1.0);
    }
  }
}

TEST_CASE("pearson error contracts") {
  try {
    pearson_from_timeseries(columns({{1, 2, 3}, {5, 5, 5}}), {"Precentral_L", "Precentral_R"});
    FAIL("expected DegenerateSeriesError");
  } catch (const DegenerateSeriesError& e) {
    CHECK(std::string(e.what()).find("Precentral_R") != std::string::npos);
  }
  CHECK_THROWS_AS(pearson_from_timeseries(columns({{1, 2}, {2, 1}})), DegenerateSeriesError);
}

TEST_CASE("pearson is invariant to positive affine column transforms") {
  Rng rng(3);
  auto x = testing::random_tensor(rng, 50, 5);
  const auto before = pearson_from_timeseries({"s", x});
  for (std::size_t c = 0; c < 5; ++c) {
    const double slope = 0.1 + 10.0 * rng.uniform();
    const double shift = 100.0 * rng.normal();
    for (std::size_t t = 0; t < 50; ++t) x(t, c) = slope * x(t, c) + shift;
  }
  const auto after = pearson_from_timeseries({"s", x});
  for (std::size_t k = 0; k < before.size(); ++k) CHECK(after.data()[k] == doctest::Approx(before.data()[k]).epsilon(1e-10));
}

TEST_CASE("threshold examples") {
  CHECK(kept_pair_count(90, 0.2) == (4005 * 2 + 9) / 10);
  CHECK(kept_pair_count(90, 0.2) == 801);

  Rng rng(5);
  const auto corr = pearson_from_timeseries({"s", testing::random_tensor(rng, 120, 90)});
  CHECK(edge_count(threshold_adjacency(corr, 0.2)) == 801);

  const auto full = threshold_adjacency(corr, 1.0);
  for (std::size_t i = 0; i < 90; ++i)
    for (std::size_t j = 0; j < 90; ++j) CHECK(full(i, j) == (i == j ? 0.0 : 1.0));

  const auto three = Tensor::from_rows({{1.0, -0.9, 0.5}, {-0.9, 1.0, 0.1}, {0.5, 0.1, 1.0}});
  const auto one = threshold_adjacency(three, 0.2);
  CHECK(edge_count(one) == 1);
  CHECK(one(0, 1) == 1.0);
  CHECK(one(1, 0) == 1.0);

  CHECK_THROWS_AS(threshold_adjacency(three, 0.0), ParameterError);
  CHECK_THROWS_AS(threshold_adjacency(three, 1.5), ParameterError);
  CHECK_THROWS_AS(threshold_adjacency(three, -0.1), ParameterError);
}

TEST_CASE("threshold keeps the brute-force top pairs with lexicographic ties") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 6;
    Tensor corr = Tensor::identity(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        // Coarse values force ties.
        const double v = std::round(4.0 * (2.0 * rng.uniform() - 1.0)) / 4.0;
        corr(i, j) = corr(j, i) = v;
      }
    const double f = 0.05 + 0.9 * rng.uniform();
    std::vector<std::tuple<double, std::size_t, std::size_t>> ranked;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) ranked.emplace_back(-std::abs(corr(i, j)), i, j);
    std::sort(ranked.begin(), ranked.end());
    const auto kept = static_cast<std::size_t>(std::ceil(f * 15.0 - 1e-9));
    std::set<std::pair<std::size_t, std::size_t>> expected;
    for (std::size_t k = 0; k < kept; ++k)
      if (std::get<0>(ranked[k]) != 0.0) expected.insert({std::get<1>(ranked[k]), std::get<2>(ranked[k])});
    const auto adj = threshold_adjacency(corr, f);
    std::set<std::pair<std::size_t, std::size_t>> got;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (adj(i, j) != 0.0) got.insert({i, j});
    CHECK(got == expected);
  }
}

TEST_CASE("threshold is invariant to positive global scaling") {
  Rng rng(21);
  const auto corr = pearson_from_timeseries({"s", testing::random_tensor(rng, 30, 12)});
  for (double scale : {0.01, 0.5, 3.0, 1e6}) {
    Tensor scaled = corr;
    for (auto& v : scaled.data()) v *= scale;
    CHECK(threshold_adjacency(scaled, 0.3) == threshold_adjacency(corr, 0.3));
  }
}

TEST_CASE("build_graph on identity correlation gives no edges") {
  for (double f : {0.1, 0.5, 1.0}) {
    const auto g = build_graph(Tensor::identity(5), f, region_names(5), 0, {"d", "ASD diagnosis"}, "g");
    CHECK(g.edges().empty());
    CHECK(g.node_features == Tensor::identity(5));
  }
}

TEST_CASE("graph JSON round trip is exact") {
  auto ds = generate_synthetic_dataset(small_config(1));
  for (const auto& g : ds.graphs) {
    const auto text = to_json(g).dump();
    const auto back = graph_from_json(nlohmann::json::parse(text));
    CHECK(back == g);
  }
  CHECK_THROWS_AS(graph_from_json(nlohmann::json::parse(R"({"id": "x"})")), FormatError);
}

TEST_CASE("brain graph validation") {
  auto g = build_graph(Tensor::identity(3), 1.0, region_names(3), 1, {"d", "t"}, "g");
  CHECK_NOTHROW(validate(g));
  auto bad = g;
  bad.adjacency(0, 1) = 1.0;
  bad.adjacency(1, 0) = 0.0;
  CHECK_THROWS_AS(validate(bad), ConsistencyError);
  bad = g;
  bad.regions[1] = bad.regions[0];
  CHECK_THROWS_AS(validate(bad), ConsistencyError);
  bad = g;
  bad.adjacency(2, 2) = 1.0;
  CHECK_THROWS_AS(validate(bad), ConsistencyError);
}

TEST_CASE("region table") {
  const auto& aal = aal90_regions();
  CHECK(aal.size() == 90);
  CHECK(std::set<std::string>(aal.begin(), aal.end()).size() == 90);
  CHECK(read_region_table(BLEG_DATA_DIR "/aal90_regions.txt") == aal);
  CHECK(region_names(92).back() == "ROI_92");
}

TEST_CASE("synthetic dataset shape and balance") {
  SynthConfig cfg;
  cfg.n_graphs = 200;
  cfg.n_nodes = 90;
  const auto ds = generate_synthetic_dataset(cfg);
  CHECK(ds.graphs.size() == 200);
  CHECK(std::count(ds.labels.begin(), ds.labels.end(), 0) == 100);
  CHECK(std::count(ds.labels.begin(), ds.labels.end(), 1) == 100);
  for (const auto& g : ds.graphs) {
    CHECK(g.num_nodes() == 90);
    CHECK(g.edges().size() == 801);
  }
  std::set<Edge> all;
  for (const auto& set : ds.config.planted)
    for (const auto& e : set) CHECK(all.insert(e).second);
}

TEST_CASE("planted edges land among the kept pairs") {
  std::size_t contained = 0;
  std::size_t total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SynthConfig cfg;
    cfg.n_graphs = 2;
    cfg.seed = seed;
    const auto ds = generate_synthetic_dataset(cfg);
    for (const auto& g : ds.graphs) {
      bool all_in = true;
      for (const auto& e : ds.config.planted[static_cast<std::size_t>(g.label)]) all_in &= g.adjacency(e.i, e.j) == 1.0;
      contained += all_in;
      ++total;
    }
  }
  CHECK(static_cast<double>(contained) / static_cast<double>(total) >= 0.95);
}

TEST_CASE("planted-edge oracle separates strong-signal classes") {
  SynthConfig cfg;
  cfg.signal_strength = 0.9;
  cfg.noise_level = 0.1;
  const auto ds = generate_synthetic_dataset(cfg);
  std::size_t correct = 0;
  for (const auto& g : ds.graphs) correct += planted_edge_oracle(g.node_features, ds.config.planted) == g.label;
  CHECK(static_cast<double>(correct) / static_cast<double>(ds.graphs.size()) >= 0.95);
}

TEST_CASE("zero signal leaves the oracle at chance") {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthConfig cfg;
    cfg.signal_strength = 0.0;
    cfg.seed = seed;
    const auto ds = generate_synthetic_dataset(cfg);
    std::size_t correct = 0;
    for (const auto& g : ds.graphs) correct += planted_edge_oracle(g.node_features, ds.config.planted) == g.label;
    total += static_cast<double>(correct) / static_cast<double>(ds.graphs.size());
  }
  CHECK(std::abs(total / 10.0 - 0.5) <= 0.07);
}

TEST_CASE("synthetic config errors") {
  SynthConfig cfg = small_config(0);
  cfg.n_nodes = 4;
  cfg.planted_edges_per_class = 4;  // 8 > 6 pairs
  CHECK_THROWS_AS(generate_synthetic_dataset(cfg), ParameterError);
  cfg = small_config(0);
  cfg.planted = {std::vector<Edge>{{0, 1}}, std::vector<Edge>{{0, 1}}};
  CHECK_THROWS_AS(generate_synthetic_dataset(cfg), ParameterError);
  cfg = small_config(0);
  cfg.signal_strength = 1.0;
  CHECK_THROWS_AS(generate_synthetic_dataset(cfg), ParameterError);
}

TEST_CASE("synthetic generation is byte-reproducible") {
  const auto dump = [](const SyntheticDataset& ds) {
    std::string s;
    for (const auto& g : ds.graphs) s += to_json(g).dump();
    return s;
  };
  const auto a = generate_synthetic_dataset(small_config(42));
  const auto b = generate_synthetic_dataset(small_config(42));
  const auto c = generate_synthetic_dataset(small_config(43));
  CHECK(dump(a) == dump(b));
  CHECK(dump(a) != dump(c));

  const auto da = testing::temp_dir("repro_a");
  const auto db = testing::temp_dir("repro_b");
  save_dataset(da, {"synthetic", "ASD diagnosis", a.graphs});
  save_dataset(db, {"synthetic", "ASD diagnosis", b.graphs});
  CHECK(testing::read_file(da / "manifest.json") == testing::read_file(db / "manifest.json"));
  CHECK(testing::read_file(da / "graphs/sub-0007.json") == testing::read_file(db / "graphs/sub-0007.json"));
}

TEST_CASE("dataset save and load round trip") {
  const auto ds = generate_synthetic_dataset(small_config(9));
  const auto dir = testing::temp_dir("dataset_io");
  const auto manifest = save_dataset(dir, {"synthetic", "ASD diagnosis", ds.graphs});
  const auto back = load_dataset(manifest);
  CHECK(back.graphs == ds.graphs);
  CHECK(back.labels() == ds.labels);
}

TEST_CASE("CSV round trips are exact") {
  Rng rng(2);
  const TimeSeriesRecord ts{"sub-1", testing::random_tensor(rng, 10, 4)};
  const auto dir = testing::temp_dir("csv");
  write_timeseries_csv(dir / "sub-1.csv", ts, region_names(4));
  std::vector<std::string> regions;
  const auto back = read_timeseries_csv(dir / "sub-1.csv", &regions);
  CHECK(back.samples == ts.samples);
  CHECK(back.subject_id == "sub-1");
  CHECK(regions == region_names(4));

  const auto m = testing::random_tensor(rng, 5, 5);
  write_matrix_csv(dir / "m.csv", m);
  CHECK(read_matrix_csv(dir / "m.csv") == m);

  graphdata::write_text_file(dir / "bad.csv", "1,2\n3\n");
  CHECK_THROWS_AS(read_matrix_csv(dir / "bad.csv"), FormatError);
  graphdata::write_text_file(dir / "nan.csv", "1,abc\n");
  CHECK_THROWS_AS(read_matrix_csv(dir / "nan.csv"), FormatError);
}

namespace {

std::vector<int> balanced_labels(std::size_t n0, std::size_t n1, std::uint64_t seed) {
  std::vector<int> y(n0, 0);
  y.insert(y.end(), n1, 1);
  Rng rng(seed);
  rng.shuffle(y);
  return y;
}

}  // namespace

TEST_CASE("kfold split on 618 samples") {
  const auto labels = balanced_labels(300, 318, 1);
  SplitParams p;
  p.folds = 10;
  const auto plan = make_split(labels, SplitKind::kfold, p, 7);
  std::vector<std::size_t> sizes;
  for (int f = 0; f < 10; ++f) sizes.push_back(plan.indices(f).size());
  std::sort(sizes.begin(), sizes.end());
  CHECK(std::count(sizes.begin(), sizes.end(), 62) == 8);
  CHECK(std::count(sizes.begin(), sizes.end(), 61) == 2);
  CHECK(plan.num_folds() == 10);
}

TEST_CASE("kfold invariants on random label sets") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n0 = 5 + rng.below(60);
    const std::size_t n1 = 5 + rng.below(60);
    const auto labels = balanced_labels(n0, n1, rng.next_u64());
    SplitParams p;
    p.folds = 2 + rng.below(9);
    const auto plan = make_split(labels, SplitKind::kfold, p, rng.next_u64());
    std::vector<std::size_t> seen(labels.size(), 0);
    std::size_t lo = ~0u, hi = 0, lo_c[2] = {~0u, ~0u}, hi_c[2] = {0, 0};
    for (int f = 0; f < static_cast<int>(p.folds); ++f) {
      const auto idx = plan.indices(f);
      lo = std::min(lo, idx.size());
      hi = std::max(hi, idx.size());
      std::size_t cnt[2] = {0, 0};
      for (auto k : idx) {
        ++seen[k];
        ++cnt[labels[k]];
      }
      for (int c = 0; c < 2; ++c) {
        lo_c[c] = std::min(lo_c[c], cnt[c]);
        hi_c[c] = std::max(hi_c[c], cnt[c]);
      }
      // Train complement and fold are disjoint and together exhaustive.
      const auto rest = plan.complement(f);
      std::set<std::size_t> u(idx.begin(), idx.end());
      for (auto k : rest) CHECK(u.insert(k).second);
      CHECK(u.size() == labels.size());
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](std::size_t s) { return s == 1; }));
    CHECK(hi - lo <= 1);
    CHECK(hi_c[0] - lo_c[0] <= 1);
    CHECK(hi_c[1] - lo_c[1] <= 1);
  }
}

TEST_CASE("ratio split sizes") {
  const auto labels = balanced_labels(50, 50, 3);
  SplitParams p;
  p.train_ratio = 0.10;
  p.val_ratio = 0.10;
  const auto plan = make_split(labels, SplitKind::ratio, p, 1);
  CHECK(plan.indices(Subset::train).size() == 10);
  CHECK(plan.indices(Subset::val).size() == 10);
  CHECK(plan.indices(Subset::test).size() == 80);
  for (double r : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7}) {
    p.train_ratio = r;
    const auto q = make_split(labels, SplitKind::ratio, p, 2);
    CHECK(q.indices(Subset::train).size() == static_cast<std::size_t>(std::llround(r * 100)));
    CHECK(q.indices(Subset::val).size() == 10);
    CHECK(q.indices(Subset::train).size() + q.indices(Subset::val).size() + q.indices(Subset::test).size() == 100);
  }
}

TEST_CASE("kshot split") {
  const auto labels = balanced_labels(30, 40, 5);
  SplitParams p;
  p.shots = 1;
  auto plan = make_split(labels, SplitKind::kshot, p, 1);
  const auto train = plan.indices(Subset::train);
  CHECK(train.size() == 2);
  CHECK(labels[train[0]] != labels[train[1]]);
  for (std::size_t k : {1u, 2u, 5u}) {
    p.shots = k;
    p.test_per_class = 10;
    plan = make_split(labels, SplitKind::kshot, p, 2);
    std::size_t tr[2] = {0, 0}, te[2] = {0, 0};
    for (auto i : plan.indices(Subset::train)) ++tr[labels[i]];
    for (auto i : plan.indices(Subset::test)) ++te[labels[i]];
    CHECK(tr[0] == k);
    CHECK(tr[1] == k);
    CHECK(te[0] == 10);
    CHECK(te[1] == 10);
    CHECK(plan.indices(Subset::val).size() == 7);
  }
  p.shots = 31;
  p.test_per_class.reset();
  CHECK_THROWS_AS(make_split(labels, SplitKind::kshot, p, 1), InsufficientDataError);
  p.shots = 1;
  p.test_per_class = 100;
  CHECK_THROWS_AS(make_split(labels, SplitKind::kshot, p, 1), InsufficientDataError);
}

TEST_CASE("split determinism and serialization") {
  const auto labels = balanced_labels(40, 44, 9);
  SplitParams p;
  const auto a = make_split(labels, SplitKind::kfold, p, 123);
  const auto b = make_split(labels, SplitKind::kfold, p, 123);
  const auto c = make_split(labels, SplitKind::kfold, p, 124);
  CHECK(a == b);
  CHECK(a.assignment != c.assignment);
  const auto back = split_from_json(nlohmann::json::parse(to_json(a).dump()));
  CHECK(back == a);
  CHECK(back.params.folds == a.params.folds);
  CHECK_THROWS_AS(split_kind_from_string("loo"), ConfigurationError);
}

TEST_CASE("stratified holdout") {
  const auto labels = balanced_labels(30, 30, 4);
  std::vector<std::size_t> pool;
  for (std::size_t k = 0; k < 50; ++k) pool.push_back(k);
  const auto [keep, held] = stratified_holdout(pool, labels, 0.1, 1);
  CHECK(held.size() == 5);
  CHECK(keep.size() == 45);
  std::set<std::size_t> u(keep.begin(), keep.end());
  for (auto k : held) CHECK(u.insert(k).second);
  CHECK(u.size() == 50);
}
