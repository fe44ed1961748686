// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. `--only 3,7` runs a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "bleg/cli/cli.hpp"
#include "bleg/eval/metrics.hpp"
#include "bleg/eval/pipeline.hpp"
#include "bleg/eval/theory.hpp"
#include "bleg/graphdata/splits.hpp"
#include "bleg/graphdata/synthetic.hpp"
#include "bleg/models/gnn.hpp"
#include "bleg/promptgen/curate.hpp"
#include "bleg/promptgen/prompt.hpp"
#include "bleg/training/fidelity.hpp"
#include "bleg/training/losses.hpp"

using namespace bleg;
using numerics::Tape;
using numerics::Tensor;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Tensor t = Tensor::matrix(r, c);
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

graphdata::BrainGraph graph_from(const Tensor& features, const Tensor& adjacency) {
  graphdata::BrainGraph g;
  g.id = "g";
  g.node_features = features;
  g.adjacency = adjacency;
  for (std::size_t i = 0; i < adjacency.rows(); ++i) g.regions.push_back(fmt::format("R{}", i));
  g.meta = {"synthetic", "ASD diagnosis"};
  return g;
}

// 1
Verdict gradient_fidelity() {
  const auto t0 = Clock::now();
  const auto rep = training::gradient_fidelity(0, 1e-5, 1e-3);
  const double secs = seconds_since(t0);
  Verdict v{rep.passed && secs < 60.0, ""};
  double worst = 0.0;
  std::string where;
  for (const auto& e : rep.entries) {
    if (e.report.worst_error >= worst) {
      worst = e.report.worst_error;
      where = e.component + "/" + e.report.worst_parameter;
    }
  }
  v.detail = fmt::format("{} checks, worst relative error {:.2e} ({}), {:.1f} s", rep.entries.size(), worst, where, secs);
  return v;
}

// 2
Verdict gcn_oracle() {
  const Tensor a = Tensor::from_rows({{0, 1, 0}, {1, 0, 1}, {0, 1, 0}});
  const double r6 = 1.0 / std::sqrt(6.0);
  const Tensor expected = Tensor::from_rows({{0.5, r6, 0.0}, {r6, 1.0 / 3.0, r6}, {0.0, r6, 0.5}});
  models::GnnConfig cfg{.in_dim = 3, .hidden = 3, .layers = 1, .dropout = 0.0, .batch_norm = false, .activation = false};
  Rng rng(1);
  models::GnnEncoder enc(cfg, rng);
  enc.params().at("gnn.layer0.weight").value = Tensor::identity(3);
  const auto g = graph_from(Tensor::identity(3), a);
  const std::vector<const graphdata::BrainGraph*> ptrs{&g};
  const auto batch = models::make_graph_batch(ptrs);
  Tape tape;
  const Tensor out = enc.forward(tape, batch, numerics::Mode::eval, nullptr).value();
  double err = 0.0;
  for (std::size_t i = 0; i < 9; ++i) err = std::max(err, std::abs(out[i] - expected[i]));
  return {err < 1e-12, fmt::format("max abs error {:.2e}", err)};
}

double log_softmax_at(const Tensor& z, std::size_t r, std::size_t k) {
  double m = -INFINITY;
  for (std::size_t c = 0; c < z.cols(); ++c) m = std::max(m, z(r, c));
  double s = 0.0;
  for (std::size_t c = 0; c < z.cols(); ++c) s += std::exp(z(r, c) - m);
  return z(r, k) - m - std::log(s);
}

// 3
Verdict answer_masked_loss() {
  Rng rng(31);
  double worst = 0.0;
  double worst_shift = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t vocab = 7 + rng.below(6);
    std::vector<models::SequenceInput> seqs;
    const std::size_t n = 1 + rng.below(3);
    const bool graph = rng.below(2) == 1;
    for (std::size_t k = 0; k < n; ++k) {
      models::SequenceInput s{.has_graph = graph, .question = {}, .answer = {}};
      const std::size_t q = 1 + rng.below(4), len = 1 + rng.below(4);
      for (std::size_t i = 0; i < q; ++i) s.question.push_back(6 + rng.below(vocab - 6));
      for (std::size_t i = 0; i < len; ++i) s.answer.push_back(rng.below(vocab));
      seqs.push_back(s);
    }
    const auto b = models::make_lm_batch(seqs, 16);
    Tensor z = random_tensor(rng, b.batch * b.len, vocab, 3.0);
    // Brute force: per-token cross-entropy over answer positions, averaged
    // within each sequence and then over sequences.
    double brute = 0.0;
    std::set<std::size_t> answer_rows;
    for (std::size_t s = 0; s < b.batch; ++s) {
      double seq = 0.0;
      std::size_t count = 0;
      for (std::size_t t = 1; t < b.len; ++t) {
        if (!b.answer_mask[s * b.len + t]) continue;
        seq -= log_softmax_at(z, s * b.len + t - 1, b.ids[s * b.len + t]);
        answer_rows.insert(s * b.len + t - 1);
        ++count;
      }
      brute += seq / static_cast<double>(count);
    }
    brute /= static_cast<double>(b.batch);
    Tape tape;
    const double loss = training::autoregressive_loss(tape.constant(z), b).value().item();
    worst = std::max(worst, std::abs(loss - brute));
    for (std::size_t r = 0; r < z.rows(); ++r) {
      if (answer_rows.count(r)) continue;
      for (std::size_t c = 0; c < vocab; ++c) z(r, c) += 25.0 * rng.normal();
    }
    const double shifted = training::autoregressive_loss(tape.constant(z), b).value().item();
    worst_shift = std::max(worst_shift, std::abs(shifted - loss));
  }
  return {worst < 1e-9 && worst_shift == 0.0,
          fmt::format("100 batches, max error {:.2e}, change under non-answer perturbation {:.1e}", worst, worst_shift)};
}

// 4
Verdict alignment_loss() {
  Rng rng(41);
  Tape tape;
  auto loss = [&](const Tensor& a, const Tensor& b) {
    return training::alignment_loss(tape.constant(a), tape.constant(b)).value().item();
  };
  const Tensor u = random_tensor(rng, 4, 6);
  const double same = loss(u, u);
  Tensor unit = Tensor::matrix(1, 5);
  unit(0, 1) = 1.0;
  Tensor anti = unit;
  anti(0, 1) = -1.0;
  const double antipodal = loss(unit, anti);
  double scale_err = 0.0, brute_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 1 + rng.below(8), cols = 2 + rng.below(8);
    const Tensor a = random_tensor(rng, rows, cols), b = random_tensor(rng, rows, cols);
    const double l = loss(a, b);
    double brute = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      double na = 0.0, nb = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        na += a(r, c) * a(r, c);
        nb += b(r, c) * b(r, c);
      }
      for (std::size_t c = 0; c < cols; ++c) {
        const double d = a(r, c) / std::sqrt(na) - b(r, c) / std::sqrt(nb);
        brute += d * d;
      }
    }
    brute /= static_cast<double>(rows);
    brute_err = std::max(brute_err, std::abs(l - brute));
    for (double k : {1e-3, 0.25, 3.0, 1e3}) {
      Tensor sa = a, sb = b;
      for (auto& x : sa.data()) x *= k;
      for (auto& x : sb.data()) x *= k;
      scale_err = std::max({scale_err, std::abs(loss(sa, b) - l), std::abs(loss(a, sb) - l)});
    }
  }
  const bool pass = same == 0.0 && antipodal == 4.0 && scale_err < 1e-12 && brute_err < 1e-12;
  return {pass, fmt::format("identical {}, antipodal {}, scale drift {:.1e}, brute-force error {:.1e}", same, antipodal,
                            scale_err, brute_err)};
}

// 5
Verdict splitter_contracts() {
  std::vector<int> labels;
  for (int k = 0; k < 618; ++k) labels.push_back(k < 300 ? 0 : 1);
  Rng shuffle(5);
  for (std::size_t k = labels.size(); k > 1; --k) std::swap(labels[k - 1], labels[shuffle.below(k)]);
  std::vector<std::string> problems;

  graphdata::SplitParams p;
  p.folds = 10;
  const auto kf = graphdata::make_split(labels, graphdata::SplitKind::kfold, p, 3);
  std::multiset<std::size_t> sizes;
  std::vector<int> seen(labels.size(), 0);
  for (int f = 0; f < 10; ++f) {
    const auto idx = kf.indices(f);
    sizes.insert(idx.size());
    for (auto i : idx) ++seen[i];
  }
  if (sizes.count(62) != 8 || sizes.count(61) != 2) problems.push_back("fold sizes");
  if (std::any_of(seen.begin(), seen.end(), [](int s) { return s != 1; })) problems.push_back("folds overlap");

  auto disjoint = [&](const graphdata::SplitPlan& plan) {
    std::set<std::size_t> all;
    std::size_t total = 0;
    for (auto s : {graphdata::Subset::train, graphdata::Subset::val, graphdata::Subset::test}) {
      const auto idx = plan.indices(s);
      total += idx.size();
      all.insert(idx.begin(), idx.end());
    }
    return all.size() == total;
  };
  for (std::size_t k : {1u, 2u, 5u}) {
    p.shots = k;
    const auto plan = graphdata::make_split(labels, graphdata::SplitKind::kshot, p, 10 + k);
    std::size_t per[2] = {0, 0};
    for (auto i : plan.indices(graphdata::Subset::train)) ++per[labels[i]];
    if (per[0] != k || per[1] != k) problems.push_back(fmt::format("{}-shot counts {}/{}", k, per[0], per[1]));
    if (!disjoint(plan)) problems.push_back(fmt::format("{}-shot overlap", k));
  }
  for (double r : {0.1, 0.3, 0.5, 0.7}) {
    p.train_ratio = r;
    p.val_ratio = 0.10;
    const auto plan = graphdata::make_split(labels, graphdata::SplitKind::ratio, p, 20);
    const auto want = static_cast<std::size_t>(std::llround(0.10 * static_cast<double>(labels.size())));
    if (plan.indices(graphdata::Subset::val).size() != want) problems.push_back(fmt::format("ratio {} validation size", r));
    if (!disjoint(plan)) problems.push_back(fmt::format("ratio {} overlap", r));
  }
  std::string detail = "618 samples: 10-fold sizes {62x8, 61x2}, k-shot 1/2/5, ratio validation 62, disjoint";
  if (!problems.empty()) {
    detail = "problems:";
    for (const auto& s : problems) detail += " " + s + ";";
  }
  return {problems.empty(), detail};
}

// 6
Verdict metric_oracle() {
  std::vector<int> pred, truth;
  auto push = [&](int p, int t, int n) {
    for (int k = 0; k < n; ++k) {
      pred.push_back(p);
      truth.push_back(t);
    }
  };
  push(1, 1, 40);
  push(0, 1, 10);
  push(0, 0, 35);
  push(1, 0, 15);
  const auto w = eval::compute_metrics(pred, truth, {});
  bool pass = w.acc == 0.75 && w.sen == 0.80 && w.spe == 0.70 && w.f1 && std::abs(*w.f1 - 0.761905) < 5e-7 &&
              *w.f1 == 80.0 / 105.0;

  Rng rng(61);
  std::size_t mismatches = 0;
  double auc_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<int> p(n), t(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng.below(2));
      p[i] = static_cast<int>(rng.below(2));
      s[i] = static_cast<double>(rng.below(6)) / 5.0;  // ties on purpose
    }
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (t[i] == 1) (p[i] == 1 ? tp : fn) += 1;
      else (p[i] == 1 ? fp : tn) += 1;
    }
    const auto m = eval::compute_metrics(p, t, s);
    auto same = [&](const std::optional<double>& got, std::optional<double> want) {
      if (got.has_value() != want.has_value() || (got && *got != *want)) ++mismatches;
    };
    same(m.acc, (tp + tn) / static_cast<double>(n));
    same(m.sen, tp + fn > 0 ? std::optional<double>(tp / (tp + fn)) : std::nullopt);
    same(m.spe, tn + fp > 0 ? std::optional<double>(tn / (tn + fp)) : std::nullopt);
    same(m.f1, 2 * tp + fp + fn > 0 ? std::optional<double>(2 * tp / (2 * tp + fp + fn)) : std::nullopt);
    // Brute-force AUC over all positive/negative pairs, ties count half.
    double pairs = 0.0, wins = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (t[i] == 1 && t[j] == 0) {
          pairs += 1.0;
          wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    if (pairs == 0.0) {
      if (m.auc) ++mismatches;
    } else if (!m.auc) {
      ++mismatches;
    } else {
      auc_err = std::max(auc_err, std::abs(*m.auc - wins / pairs));
    }
  }
  pass = pass && mismatches == 0 && auc_err < 1e-12;
  return {pass, fmt::format("worked fixture ACC {} SEN {} SPE {} F1 {:.6f}; 1000 fixtures: {} mismatches, AUC error {:.1e}",
                            *w.acc, *w.sen, *w.spe, *w.f1, mismatches, auc_err)};
}

// Offline-oracle descriptions for every graph that passes curation.
struct Texted {
  std::vector<graphdata::BrainGraph> graphs;
  training::InstructionTexts texts;
  models::Vocabulary vocab;
};

Texted describe(const graphdata::SyntheticDataset& ds) {
  promptgen::OfflineOracle oracle(ds.config.planted);
  promptgen::HeuristicJudge judge;
  const auto res = promptgen::generate_text_dataset(ds.graphs, oracle, judge);
  std::map<std::string, const promptgen::TextRecord*> by_id;
  for (const auto& r : res.accepted) by_id[r.graph_id] = &r;
  Texted out;
  std::vector<std::string> corpus{models::kDescriptionQuestion, models::kPredictionQuestion};
  for (const auto& g : ds.graphs) {
    const auto it = by_id.find(g.id);
    if (it == by_id.end()) continue;
    out.graphs.push_back(g);
    out.texts.descriptions.push_back(promptgen::render_response(it->second->parsed));
    out.texts.predictions.push_back(it->second->parsed.prediction);
    corpus.push_back(out.texts.descriptions.back());
  }
  out.vocab = models::Vocabulary::build(corpus);
  return out;
}

struct AblationMeans {
  double full = 0.0, no_align = 0.0;
  std::size_t graphs = 0;
};

AblationMeans ablate(double signal) {
  graphdata::SynthConfig sc;  // 200 graphs, 90 regions
  sc.signal_strength = signal;
  sc.seed = 7;
  const auto ds = graphdata::generate_synthetic_dataset(sc);
  const auto t = describe(ds);

  eval::PipelineConfig cfg;
  cfg.model.gnn.in_dim = sc.n_nodes;
  cfg.tune.stage.epochs = 5;
  cfg.tune.stage.batch_size = 8;
  cfg.tune.stage.lr = 1e-3;
  cfg.sft.loss.alpha = 0.4;
  eval::Protocol p;
  p.name = "ratio";
  p.kind = graphdata::SplitKind::ratio;
  p.seeds = {1, 2, 3, 4, 5};
  const auto table = eval::run_ablations(t.graphs, t.texts, t.vocab, cfg, p,
                                         {.full = true, .no_align = true, .untuned_lm = false, .gnn_only = false},
                                         [](const std::string& line) { std::cerr << "  " << line << '\n'; });
  return {*table.at("full").summary.at("acc").mean, *table.at("no_align").summary.at("acc").mean, t.graphs.size()};
}

// 7
Verdict directional_ablation() {
  const auto t0 = Clock::now();
  const auto strong = ablate(0.9);
  const auto zero = ablate(0.0);
  const double secs = seconds_since(t0);
  const bool pass = strong.full >= strong.no_align && strong.full >= 0.85 && strong.no_align >= 0.85 &&
                    std::abs(zero.full - 0.5) <= 0.07 && secs < 900.0;
  return {pass, fmt::format("strong signal ({} graphs, 5 seeds): full {:.3f}, alpha=0 {:.3f}; zero signal: full {:.3f}, "
                            "alpha=0 {:.3f}; {:.0f} s",
                            strong.graphs, strong.full, strong.no_align, zero.full, zero.no_align, secs)};
}

// 8
Verdict theorem_checker() {
  Rng rng(81);
  double gap = 0.0;
  for (int k = 0; k < 1000; ++k) {
    gap = std::max(gap, eval::theorem_check(eval::DiscreteJoint::random({2, 2, 2}, rng), {}).chain_rule_gap);
  }
  const auto x = eval::theorem_check(eval::xor_joint(), {});
  std::size_t dpi_violations = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto j = eval::DiscreteJoint::random({2, 2, 2}, rng);
    std::vector<std::vector<double>> channel(2, std::vector<double>(3));
    for (auto& row : channel) {
      double total = 0.0;
      for (auto& v : row) total += (v = rng.uniform() + 1e-3);
      for (auto& v : row) v /= total;
    }
    const auto ext = j.append_channel(0, channel);
    if (eval::mutual_information(ext, {3}, {2}) > eval::mutual_information(ext, {0}, {2}) + 1e-12) ++dpi_violations;
  }
  const bool pass = gap <= 1e-12 && std::abs(x.i_g_y) <= 1e-9 && std::abs(x.i_gt_y - std::log(2.0)) <= 1e-9 &&
                    dpi_violations == 0;
  return {pass, fmt::format("chain-rule gap {:.1e} over 1000 joints; XOR I(G;Y) {:.1e}, I(G,T;Y) {:.9f}; {} DPI violations",
                            gap, x.i_g_y, x.i_gt_y, dpi_violations)};
}

struct Cli {
  fs::path root;
  int step = 0;

  fs::path operator()(const std::string& cmd, std::vector<std::string> args) {
    const fs::path dir = root / fmt::format("{}-{}", ++step, cmd);
    args.insert(args.begin(), cmd);
    args.insert(args.end(), {"--seed", "11", "--run-dir", dir.string()});
    std::ostringstream out, err;
    if (cli::run(args, out, err) != 0) throw std::runtime_error(cmd + " failed: " + err.str());
    return dir;
  }
};

void pipeline(const fs::path& root) {
  Cli run{root};
  const auto synth = run("synth", {});
  const auto manifest = (synth / "dataset" / "manifest.json").string();
  const auto text = run("gen-text", {"--dataset", manifest});
  const auto tune = run("tune", {"--dataset", manifest, "--texts", (text / "text.jsonl").string(), "--epochs", "1"});
  const auto backbone = (tune / "backbone").string();
  run("sft", {"--dataset", manifest, "--backbone", backbone, "--epochs", "5"});
  run("eval", {"--dataset", manifest, "--backbone", backbone, "--epochs", "5", "--folds", "2"});
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 9
Verdict pipeline_determinism() {
  const fs::path base = fs::temp_directory_path() / "bleg_acceptance_determinism";
  fs::remove_all(base);
  const auto t0 = Clock::now();
  pipeline(base / "a");
  pipeline(base / "b");
  const double secs = seconds_since(t0);
  std::size_t compared = 0, differ = 0;
  std::string first_diff;
  for (const auto& e : fs::recursive_directory_iterator(base / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), base / "a");
    // config.json records the run directory itself, which differs by design.
    if (rel.filename() == "config.json") continue;
    ++compared;
    if (read_bytes(e.path()) != read_bytes(base / "b" / rel)) {
      if (differ++ == 0) first_diff = rel.string();
    }
  }
  fs::remove_all(base);
  return {differ == 0 && compared > 0,
          fmt::format("{} artifacts compared across two synth/gen-text/tune/sft/eval runs, {} differ{}; {:.0f} s",
                      compared, differ, differ ? " (first: " + first_diff + ")" : "", secs)};
}

// 10
Verdict serializer_round_trip() {
  Rng rng(101);
  std::size_t failures = 0, edges_total = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    const double density = rng.uniform();
    Tensor a = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.uniform() < density) a(i, j) = a(j, i) = 1.0;
    Tensor f = random_tensor(rng, n, n, 0.5);
    const auto g = graph_from(f, a);
    const auto parsed = promptgen::parse_graph_text(promptgen::serialize_graph(g));
    std::vector<graphdata::Edge> got;
    for (const auto& e : parsed.edges) got.push_back(e.edge);
    std::sort(got.begin(), got.end());
    const auto want = g.edges();
    edges_total += want.size();
    if (got != want) ++failures;
  }
  return {failures == 0, fmt::format("1000 random graphs, {} edges, {} mismatched edge sets", edges_total, failures)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int k = 1; k < argc; ++k) {
    if (std::string(argv[k]) == "--only" && k + 1 < argc) {
      std::stringstream ss(argv[++k]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    }
  }
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"GCN oracle", gcn_oracle},
      {"answer-masked loss oracle", answer_masked_loss},
      {"alignment loss", alignment_loss},
      {"splitter contracts", splitter_contracts},
      {"metric oracle", metric_oracle},
      {"directional ablation", directional_ablation},
      {"theorem checker", theorem_checker},
      {"pipeline determinism", pipeline_determinism},
      {"serializer round trip", serializer_round_trip},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!only.empty() && !only.count(id)) continue;
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("raised: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::cout << fmt::format("CRITERION {} {}: {}: {}", id, v.pass ? "PASS" : "FAIL", criteria[k].first, v.detail)
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
