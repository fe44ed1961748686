#include "bleg/cli/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>

#include "bleg/error.hpp"
#include "bleg/eval/biomarkers.hpp"
#include "bleg/eval/pipeline.hpp"
#include "bleg/eval/theory.hpp"
#include "bleg/graphdata/io.hpp"
#include "bleg/graphdata/synthetic.hpp"
#include "bleg/promptgen/curate.hpp"
#include "bleg/training/fidelity.hpp"

namespace bleg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

json default_config() {
  graphdata::SynthConfig sc;
  eval::PipelineConfig pc;
  eval::Protocol proto;
  proto.seeds.clear();
  eval::Protocol split;
  split.name = "split";
  split.kind = graphdata::SplitKind::ratio;
  json split_j = eval::to_json(split);
  split_j.erase("seeds");
  split_j.erase("name");
  split_j.erase("kfold_val_fraction");
  return {
      {"seed", 0},
      {"out", "runs"},
      {"paths", {{"dataset", ""}, {"texts", ""}, {"backbone", ""}, {"head", ""}, {"split", ""}, {"planted", ""}}},
      {"synth",
       {{"n_graphs", sc.n_graphs},
        {"n_nodes", sc.n_nodes},
        {"time_points", sc.time_points},
        {"planted_edges_per_class", sc.planted_edges_per_class},
        {"signal_strength", sc.signal_strength},
        {"noise_level", sc.noise_level},
        {"keep_fraction", sc.keep_fraction},
        {"dataset", sc.dataset},
        {"task", sc.task}}},
      {"backend",
       {{"kind", "offline"},
        {"endpoint", ""},
        {"model", "deepseek-chat"},
        {"temperature", 0.7},
        {"max_tokens", 1024},
        {"max_retries", 3},
        {"backoff_ms", 500},
        {"timeout_s", 120},
        {"judge", "heuristic"},
        {"threshold", promptgen::kDefaultQualityThreshold},
        {"concurrency", 4}}},
      {"pipeline", eval::to_json(pc)},
      {"split", split_j},
      {"protocol", eval::to_json(proto)},
      {"eval", {{"sweep", "none"}, {"alphas", json::array({pc.sft.loss.alpha})}}},
      {"ablate", {{"full", true}, {"no_align", true}, {"untuned_lm", true}, {"gnn_only", true}}},
      {"biomarkers", {{"k", 10}, {"saliency", "l2_norm"}}},
      {"theory", {{"random_joints", 1000}, {"corruption", eval::default_corruption_sweep()}}},
      {"gradcheck", {{"step", 1e-5}, {"tolerance", 1e-3}}},
  };
}

namespace {

bool same_kind(const json& a, const json& b) {
  if (a.is_number() || b.is_number()) return a.is_number() && b.is_number();
  return a.type() == b.type();
}

}  // namespace

json merge_config(json base, const json& overrides, const std::string& where) {
  if (!overrides.is_object()) throw ConfigurationError(fmt::format("config{} must be an object", where));
  for (const auto& [key, value] : overrides.items()) {
    const std::string path = where + "." + key;
    if (!base.contains(key)) throw ConfigurationError(fmt::format("unknown config key '{}'", path.substr(1)));
    auto& slot = base[key];
    if (slot.is_object() && value.is_object()) {
      slot = merge_config(slot, value, path);
    } else if (slot.is_object() || (!slot.is_null() && !value.is_null() && !same_kind(slot, value))) {
      throw ConfigurationError(fmt::format("config key '{}' has the wrong type", path.substr(1)));
    } else {
      slot = value;
    }
  }
  return base;
}

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string run_dir;

  std::optional<std::string> dataset, texts, backbone, head, split, planted;
  std::optional<std::size_t> epochs, batch_size, folds, k, n_graphs, n_nodes;
  std::optional<double> lr, alpha, signal;
  std::optional<std::string> protocol, backend, sweep, saliency;
  std::vector<std::uint64_t> seeds;
  std::vector<double> alphas;
};

struct Outcome {
  std::vector<std::string> outputs;  // relative to the run directory
  json summary = json::object();
};

std::string timestamp() {
  return fmt::format("{:%Y%m%d-%H%M%S}", fmt::localtime(std::time(nullptr)));
}

fs::path make_run_dir(const std::string& exact, const std::string& out, const std::string& cmd, std::uint64_t seed) {
  fs::path dir;
  if (!exact.empty()) {
    dir = exact;
  } else {
    const fs::path base = fs::path(out) / fmt::format("{}-{}-seed{}", cmd, timestamp(), seed);
    dir = base;
    for (int k = 2; fs::exists(dir); ++k) dir = fs::path(base.string() + fmt::format("-{}", k));
  }
  if (fs::exists(dir) && !fs::is_empty(dir)) throw StateError(fmt::format("run directory {} is not empty", dir.string()));
  fs::create_directories(dir);
  return dir;
}

fs::path required_path(const json& cfg, const std::string& key, const std::string& flag) {
  const std::string p = cfg.at("paths").at(key).get<std::string>();
  if (p.empty()) throw ConfigurationError(fmt::format("{} is required (--{} or paths.{})", key, flag, key));
  return p;
}

std::optional<fs::path> optional_path(const json& cfg, const std::string& key) {
  const std::string p = cfg.at("paths").at(key).get<std::string>();
  if (p.empty()) return std::nullopt;
  return fs::path(p);
}

graphdata::SynthConfig synth_config(const json& j, std::uint64_t seed) {
  graphdata::SynthConfig sc;
  sc.n_graphs = j.at("n_graphs").get<std::size_t>();
  sc.n_nodes = j.at("n_nodes").get<std::size_t>();
  sc.time_points = j.at("time_points").get<std::size_t>();
  sc.planted_edges_per_class = j.at("planted_edges_per_class").get<std::size_t>();
  sc.signal_strength = j.at("signal_strength").get<double>();
  sc.noise_level = j.at("noise_level").get<double>();
  sc.keep_fraction = j.at("keep_fraction").get<double>();
  sc.dataset = j.at("dataset").get<std::string>();
  sc.task = j.at("task").get<std::string>();
  sc.seed = seed;
  return sc;
}

json edges_json(const std::vector<graphdata::Edge>& edges) {
  json out = json::array();
  for (const auto& e : edges) out.push_back({e.i, e.j});
  return out;
}

promptgen::PlantedSets read_planted(const fs::path& path) {
  const json j = graphdata::read_json_file(path);
  promptgen::PlantedSets sets;
  for (std::size_t c = 0; c < 2; ++c) {
    for (const auto& e : j.at(fmt::format("class{}", c))) {
      sets[c].push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()});
    }
  }
  return sets;
}

eval::PipelineConfig pipeline_config(const json& cfg, std::size_t in_dim) {
  auto pc = eval::pipeline_config_from_json(cfg.at("pipeline"));
  pc.model.gnn.in_dim = in_dim;
  return pc;
}

std::size_t feature_dim(const graphdata::Dataset& ds) {
  if (ds.graphs.empty()) throw InsufficientDataError("the dataset has no graphs");
  return ds.graphs.front().node_features.cols();
}

// Graphs that have an accepted text record, in dataset order, with their
// stage-2 answers.
struct TextedGraphs {
  std::vector<std::size_t> index;  // into the dataset
  std::vector<graphdata::BrainGraph> graphs;
  training::InstructionTexts texts;
};

TextedGraphs attach_texts(const graphdata::Dataset& ds, const std::vector<promptgen::TextRecord>& records) {
  std::map<std::string, const promptgen::TextRecord*> by_id;
  for (const auto& r : records) by_id[r.graph_id] = &r;
  TextedGraphs out;
  for (std::size_t k = 0; k < ds.graphs.size(); ++k) {
    const auto it = by_id.find(ds.graphs[k].id);
    if (it == by_id.end()) continue;
    out.index.push_back(k);
    out.graphs.push_back(ds.graphs[k]);
    out.texts.descriptions.push_back(promptgen::render_response(it->second->parsed));
    out.texts.predictions.push_back(it->second->parsed.prediction);
  }
  if (out.graphs.empty()) throw InsufficientDataError("no graph in the dataset has an accepted text record");
  return out;
}

models::Vocabulary build_vocab(const std::vector<promptgen::TextRecord>& records) {
  std::vector<std::string> corpus{models::kDescriptionQuestion, models::kPredictionQuestion};
  for (const auto& r : records) {
    corpus.push_back(promptgen::render_response(r.parsed));
    corpus.push_back(r.parsed.prediction);
  }
  return models::Vocabulary::build(corpus);
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json with_seed(json j, std::uint64_t seed) {
  j["seed"] = seed;
  return j;
}

Outcome cmd_synth(const json& cfg, const fs::path& run, std::uint64_t seed) {
  const auto sc = synth_config(cfg.at("synth"), seed);
  const auto syn = graphdata::generate_synthetic_dataset(sc);
  graphdata::Dataset ds{sc.dataset, sc.task, syn.graphs};
  graphdata::save_dataset(run / "dataset", ds);
  graphdata::write_json_file(run / "planted.json", {{"seed", seed},
                                                    {"class0", edges_json(syn.config.planted[0])},
                                                    {"class1", edges_json(syn.config.planted[1])}});
  return {{"dataset/manifest.json", "planted.json"}, {{"graphs", ds.size()}, {"manifest", "dataset/manifest.json"}}};
}

Outcome cmd_gen_text(const json& cfg, const fs::path& run, std::uint64_t seed) {
  const fs::path manifest = required_path(cfg, "dataset", "dataset");
  const auto ds = graphdata::load_dataset(manifest);
  const json& b = cfg.at("backend");
  const std::string kind = b.at("kind").get<std::string>();

  std::unique_ptr<promptgen::TextBackend> backend;
  if (kind == "offline") {
    std::optional<promptgen::PlantedSets> planted;
    if (auto p = optional_path(cfg, "planted")) {
      planted = read_planted(*p);
    } else if (const auto sibling = manifest.parent_path().parent_path() / "planted.json"; fs::exists(sibling)) {
      planted = read_planted(sibling);
    }
    backend = std::make_unique<promptgen::OfflineOracle>(planted);
  } else if (kind == "remote") {
    promptgen::RemoteConfig rc;
    rc.endpoint = b.at("endpoint").get<std::string>();
    rc.model = b.at("model").get<std::string>();
    rc.temperature = b.at("temperature").get<double>();
    rc.max_tokens = b.at("max_tokens").get<int>();
    rc.max_retries = b.at("max_retries").get<int>();
    rc.backoff_ms = b.at("backoff_ms").get<int>();
    rc.timeout_s = b.at("timeout_s").get<int>();
    rc = promptgen::remote_config_from_env(rc);
    if (rc.endpoint.empty()) throw ConfigurationError("the remote backend needs BLEG_API_URL or backend.endpoint");
    backend = std::make_unique<promptgen::RemoteBackend>(rc);
  } else {
    throw ConfigurationError(fmt::format("unknown backend '{}' (offline or remote)", kind));
  }

  const std::string judge_kind = b.at("judge").get<std::string>();
  std::unique_ptr<promptgen::QualityJudge> judge;
  if (judge_kind == "heuristic") {
    judge = std::make_unique<promptgen::HeuristicJudge>();
  } else if (judge_kind == "llm") {
    judge = std::make_unique<promptgen::LlmJudge>(*backend);
  } else {
    throw ConfigurationError(fmt::format("unknown judge '{}' (heuristic or llm)", judge_kind));
  }

  promptgen::GenTextConfig gc{b.at("threshold").get<double>(), b.at("concurrency").get<std::size_t>()};
  const auto res = promptgen::generate_text_dataset(ds.graphs, *backend, *judge, gc);
  promptgen::write_text_dataset(run / "text.jsonl", res.accepted);
  promptgen::write_quarantine(run / "quarantine.jsonl", res.quarantined);
  const json summary{{"backend", backend->name()},
                     {"accepted", res.accepted.size()},
                     {"quarantined", res.quarantined.size()},
                     {"refinement_requests", res.refinement_requests}};
  graphdata::write_json_file(run / "gen_text.json", with_seed(summary, seed));
  return {{"text.jsonl", "quarantine.jsonl", "gen_text.json"}, summary};
}

Outcome cmd_tune(const json& cfg, const fs::path& run, std::uint64_t seed) {
  const auto ds = graphdata::load_dataset(required_path(cfg, "dataset", "dataset"));
  const auto records = promptgen::read_text_dataset(required_path(cfg, "texts", "texts"));
  auto texted = attach_texts(ds, records);
  if (auto sp = optional_path(cfg, "split")) {
    // Only training graphs take part in stage 2.
    const auto plan = graphdata::split_from_json(graphdata::read_json_file(*sp));
    if (plan.assignment.size() != ds.size()) throw ConsistencyError("the split does not match the dataset size");
    TextedGraphs kept;
    for (std::size_t k = 0; k < texted.index.size(); ++k) {
      if (plan.assignment[texted.index[k]] != static_cast<int>(graphdata::Subset::train)) continue;
      kept.index.push_back(texted.index[k]);
      kept.graphs.push_back(texted.graphs[k]);
      kept.texts.descriptions.push_back(texted.texts.descriptions[k]);
      kept.texts.predictions.push_back(texted.texts.predictions[k]);
    }
    texted = std::move(kept);
  }
  auto pc = pipeline_config(cfg, feature_dim(ds));
  pc.tune.stage.seed = seed;
  models::Backbone bb(pc.model, build_vocab(records), seed);
  auto rep = training::instruction_tune(bb, texted.graphs, texted.texts, pc.tune);
  bb.save(run / "backbone");
  rep.checkpoint = "backbone";
  graphdata::write_json_file(run / "tune_report.json", rep.to_json());
  graphdata::write_text_file(run / "tune_report.csv", rep.to_csv());
  const json summary{{"graphs", texted.graphs.size()},
                     {"epochs", rep.epochs.size()},
                     {"final_ar", rep.epochs.empty() ? json(nullptr) : json(rep.epochs.back().ar)}};
  return {{"backbone/backbone.ckpt", "backbone/model.json", "backbone/vocab.json", "tune_report.json",
           "tune_report.csv"},
          summary};
}

graphdata::SplitPlan resolve_split(const json& cfg, const std::vector<int>& labels, std::uint64_t seed) {
  if (auto sp = optional_path(cfg, "split")) {
    auto plan = graphdata::split_from_json(graphdata::read_json_file(*sp));
    if (plan.assignment.size() != labels.size()) throw ConsistencyError("the split does not match the dataset size");
    return plan;
  }
  json sj = cfg.at("split");
  sj["seeds"] = json::array({seed});
  const auto p = eval::protocol_from_json(sj);
  if (p.kind == graphdata::SplitKind::kfold) throw ConfigurationError("sft needs a ratio or kshot split");
  return graphdata::make_split(labels, p.kind, p.params, seed);
}

Outcome cmd_sft(const json& cfg, const fs::path& run, std::uint64_t seed) {
  const auto ds = graphdata::load_dataset(required_path(cfg, "dataset", "dataset"));
  const auto bb = models::Backbone::load(required_path(cfg, "backbone", "backbone"));
  const auto labels = ds.labels();
  const auto plan = resolve_split(cfg, labels, seed);
  graphdata::write_json_file(run / "split.json", graphdata::to_json(plan));

  auto pc = pipeline_config(cfg, feature_dim(ds));
  pc.sft.stage.seed = seed;
  const auto data = training::make_sft_data(*bb, ds.graphs);
  const auto train = plan.indices(graphdata::Subset::train);
  const auto val = plan.indices(graphdata::Subset::val);
  const auto test = plan.indices(graphdata::Subset::test);
  models::TaskHead head(bb->config(), seed);
  auto rep = training::sft(head, data, train, val, pc.sft, bb.get());
  head.save(run / "head.ckpt");
  rep.checkpoint = "head.ckpt";
  graphdata::write_json_file(run / "sft_report.json", rep.to_json());
  graphdata::write_text_file(run / "sft_report.csv", rep.to_csv());

  json summary{{"best_epoch", rep.best_epoch}, {"alpha", pc.sft.loss.alpha}};
  std::vector<std::string> outputs{"split.json", "head.ckpt", "sft_report.json", "sft_report.csv"};
  if (!test.empty()) {
    const auto fo = eval::predict(head, data, test);
    std::vector<int> truth;
    for (auto i : test) truth.push_back(labels[i]);
    const auto m = eval::compute_metrics(fo.predictions, truth, fo.scores);
    summary["test"] = eval::to_json(m);
    graphdata::write_json_file(run / "metrics.json",
                               {{"seed", seed}, {"alpha", pc.sft.loss.alpha}, {"n_test", test.size()}, {"test", summary["test"]}});
    outputs.push_back("metrics.json");
  }
  return {outputs, summary};
}

eval::Protocol resolve_protocol(const json& cfg, std::uint64_t seed) {
  json pj = cfg.at("protocol");
  // No seeds means a single run on the global seed.
  if (pj.at("seeds").empty()) pj["seeds"] = json::array({seed});
  auto p = eval::protocol_from_json(pj);
  if (p.name.empty()) p.name = graphdata::to_string(p.kind);
  return p;
}

std::string prefixed_csv(const std::string& csv, const std::string& header_prefix, const std::string& row_prefix,
                         bool with_header) {
  std::istringstream in(csv);
  std::string line, out;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      if (with_header) out += header_prefix + line + "\n";
      continue;
    }
    if (!line.empty()) out += row_prefix + line + "\n";
  }
  return out;
}

Outcome cmd_eval(const json& cfg, const fs::path& run, std::uint64_t seed) {
  const auto ds = graphdata::load_dataset(required_path(cfg, "dataset", "dataset"));
  const auto bb = models::Backbone::load(required_path(cfg, "backbone", "backbone"));
  const auto labels = ds.labels();
  const auto base = resolve_protocol(cfg, seed);
  const std::string sweep = cfg.at("eval").at("sweep").get<std::string>();
  std::vector<eval::Protocol> protocols;
  if (sweep == "none") {
    protocols = {base};
  } else if (sweep == "ratio") {
    protocols = eval::ratio_sweep(base.seeds);
  } else if (sweep == "kshot") {
    protocols = eval::kshot_grid(base.seeds);
  } else {
    throw ConfigurationError(fmt::format("unknown sweep '{}' (none, ratio or kshot)", sweep));
  }
  const auto alphas = cfg.at("eval").at("alphas").get<std::vector<double>>();
  if (alphas.empty()) throw ConfigurationError("eval.alphas is empty");

  auto pc = pipeline_config(cfg, feature_dim(ds));
  const auto data = training::make_sft_data(*bb, ds.graphs);
  json results = json::array();
  std::string csv;
  json summary = json::array();
  for (double a : alphas) {
    auto sc = pc.sft;
    sc.loss.alpha = a;
    for (const auto& p : protocols) {
      const auto rep = eval::run_protocol(labels, p, eval::sft_fold_fn(bb->config(), data, sc));
      results.push_back({{"alpha", a}, {"protocol", p.name}, {"report", rep.to_json()}});
      const std::string tag = fmt::format("{},{},", a, p.name);
      csv += prefixed_csv(rep.to_csv(), "alpha,protocol,", tag, csv.empty());
      const auto& acc = rep.summary.at("acc");
      summary.push_back(json{{"alpha", a}, {"protocol", p.name}, {"acc_mean", opt(acc.mean)}, {"acc_std", opt(acc.std)}});
    }
  }
  graphdata::write_json_file(run / "metrics.json", {{"seed", seed}, {"results", results}});
  graphdata::write_text_file(run / "metrics.csv", csv);
  return {{"metrics.json", "metrics.csv"}, {{"results", summary}}};
}

Outcome cmd_ablate(const json& cfg, const fs::path& run, std::uint64_t seed) {
  const auto ds = graphdata::load_dataset(required_path(cfg, "dataset", "dataset"));
  const auto records = promptgen::read_text_dataset(required_path(cfg, "texts", "texts"));
  const auto texted = attach_texts(ds, records);
  const auto pc = pipeline_config(cfg, feature_dim(ds));
  const auto protocol = resolve_protocol(cfg, seed);
  const json& r = cfg.at("ablate");
  eval::AblationRows rows{r.at("full").get<bool>(), r.at("no_align").get<bool>(), r.at("untuned_lm").get<bool>(),
                          r.at("gnn_only").get<bool>()};
  std::string log;
  const auto table = eval::run_ablations(texted.graphs, texted.texts, build_vocab(records), pc, protocol, rows,
                                         [&](const std::string& line) { log += line + "\n"; });
  graphdata::write_json_file(run / "ablation.json", with_seed(table.to_json(), seed));
  graphdata::write_text_file(run / "ablation.csv", table.to_csv());
  graphdata::write_text_file(run / "ablate.log", log);
  json summary = json::object();
  for (std::size_t k = 0; k < table.names.size(); ++k) {
    summary[table.names[k]] = opt(table.reports[k].summary.at("acc").mean);
  }
  return {{"ablation.json", "ablation.csv", "ablate.log"}, {{"graphs", texted.graphs.size()}, {"acc_mean", summary}}};
}

Outcome cmd_biomarkers(const json& cfg, const fs::path& run, std::uint64_t seed) {
  const auto ds = graphdata::load_dataset(required_path(cfg, "dataset", "dataset"));
  if (ds.graphs.empty()) throw InsufficientDataError("the dataset has no graphs");
  const auto bb = models::Backbone::load(required_path(cfg, "backbone", "backbone"));
  auto nodes = bb->encode(ds.graphs).node_embeddings;
  if (auto hp = optional_path(cfg, "head")) {
    // Post-adapter node embeddings of the fine-tuned head.
    models::TaskHead head(bb->config(), 0);
    head.load(*hp);
    for (auto& n : nodes) {
      numerics::Tape tape;
      n = head.adapter().forward(tape, tape.constant(n), models::Mode::eval, nullptr).value();
    }
  }
  const json& b = cfg.at("biomarkers");
  const auto kind = eval::saliency_from_string(b.at("saliency").get<std::string>());
  const auto rows = eval::biomarker_rank(nodes, ds.graphs.front().regions, b.at("k").get<std::size_t>(), kind);
  graphdata::write_text_file(run / "biomarkers.csv", eval::biomarker_csv(rows));
  json top = json::array();
  for (const auto& row : rows) top.push_back({{"rank", row.rank}, {"region", row.region}, {"name", row.name}, {"score", row.score}});
  graphdata::write_json_file(run / "biomarkers.json",
                             {{"seed", seed}, {"saliency", eval::to_string(kind)}, {"head", optional_path(cfg, "head").has_value()}, {"rows", top}});
  return {{"biomarkers.csv", "biomarkers.json"}, {{"top", rows.empty() ? json(nullptr) : json(rows.front().name)}}};
}

Outcome cmd_theory(const json& cfg, const fs::path& run, std::uint64_t seed) {
  const json& t = cfg.at("theory");
  const auto n = t.at("random_joints").get<std::size_t>();
  const auto sweep = t.at("corruption").get<std::vector<double>>();
  const auto xor_report = eval::theorem_check(eval::xor_joint(), sweep);

  Rng rng(seed);
  double max_gap = 0.0;
  std::size_t dpi_violations = 0;
  double worst_dpi = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto j = eval::DiscreteJoint::random({2, 2, 2}, rng);
    const auto r = eval::theorem_check(j, {});
    max_gap = std::max(max_gap, r.chain_rule_gap);
    // Y <- X^G -> X^G' : processing X^G cannot add information about Y.
    std::vector<std::vector<double>> channel(2, std::vector<double>(3));
    for (auto& row : channel) {
      double total = 0.0;
      for (auto& v : row) total += (v = rng.uniform() + 1e-3);
      for (auto& v : row) v /= total;
    }
    const auto ext = j.append_channel(0, channel);
    const double excess = eval::mutual_information(ext, {3}, {2}) - eval::mutual_information(ext, {0}, {2});
    worst_dpi = std::max(worst_dpi, excess);
    if (excess > 1e-12) ++dpi_violations;
  }
  const bool chain_ok = max_gap <= 1e-12;
  const bool dpi_ok = dpi_violations == 0;
  const json report{{"seed", seed},
                    {"xor", xor_report.to_json()},
                    {"chain_rule", {{"random_joints", n}, {"max_gap", max_gap}, {"holds", chain_ok}}},
                    {"data_processing", {{"random_joints", n}, {"violations", dpi_violations}, {"max_excess", worst_dpi}, {"holds", dpi_ok}}}};
  graphdata::write_json_file(run / "theory.json", report);
  if (!chain_ok) throw InvariantViolation(fmt::format("chain rule gap {:.3g} exceeds 1e-12", max_gap));
  if (!dpi_ok) throw InvariantViolation(fmt::format("{} data-processing violations", dpi_violations));
  return {{"theory.json"},
          {{"chain_rule_holds", chain_ok},
           {"max_gap", max_gap},
           {"xor_i_g_y", xor_report.i_g_y},
           {"xor_i_gt_y", xor_report.i_gt_y},
           {"holds_up_to", xor_report.holds_up_to ? json(*xor_report.holds_up_to) : json(nullptr)}}};
}

Outcome cmd_gradcheck(const json& cfg, const fs::path& run, std::uint64_t seed) {
  const json& g = cfg.at("gradcheck");
  const auto rep = training::gradient_fidelity(seed, g.at("step").get<double>(), g.at("tolerance").get<double>());
  graphdata::write_json_file(run / "gradcheck.json", with_seed(rep.to_json(), seed));
  json worst = json::object();
  for (const auto& e : rep.entries) worst[e.component] = e.report.worst_error;
  if (!rep.passed) throw InvariantViolation("analytic and numerical gradients disagree; see gradcheck.json");
  return {{"gradcheck.json"}, {{"passed", rep.passed}, {"worst_error", worst}}};
}

void validate_outputs(const fs::path& run, const std::vector<std::string>& outputs) {
  for (const auto& rel : outputs) {
    const fs::path p = run / rel;
    if (!fs::is_regular_file(p)) throw StateError(fmt::format("declared output {} was not written", rel));
    if (p.extension() == ".json") {
      (void)graphdata::read_json_file(p);
    } else if (p.extension() == ".jsonl") {
      std::istringstream in(graphdata::read_text_file(p));
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty() && !json::accept(line)) throw StateError(fmt::format("{} holds a malformed line", rel));
      }
    } else if (fs::file_size(p) == 0 && p.extension() != ".log") {
      throw StateError(fmt::format("declared output {} is empty", rel));
    }
  }
}

// Flags become config overrides; paths are checked here so that a missing
// input fails before any work starts.
json apply_options(json cfg, const std::string& cmd, const Options& o) {
  if (o.seed) cfg["seed"] = *o.seed;
  if (o.out) cfg["out"] = *o.out;
  auto set_path = [&](const char* key, const std::optional<std::string>& v) {
    if (v) cfg["paths"][key] = *v;
  };
  set_path("dataset", o.dataset);
  set_path("texts", o.texts);
  set_path("backbone", o.backbone);
  set_path("head", o.head);
  set_path("split", o.split);
  set_path("planted", o.planted);
  for (const auto& [key, value] : cfg.at("paths").items()) {
    const auto p = value.get<std::string>();
    if (!p.empty() && !fs::exists(p)) throw ConfigurationError(fmt::format("paths.{} '{}' does not exist", key, p));
  }

  if (o.n_graphs) cfg["synth"]["n_graphs"] = *o.n_graphs;
  if (o.n_nodes) cfg["synth"]["n_nodes"] = *o.n_nodes;
  if (o.signal) cfg["synth"]["signal_strength"] = *o.signal;
  if (o.backend) cfg["backend"]["kind"] = *o.backend;

  json& stage = cfg["pipeline"][cmd == "tune" ? "tune" : "sft"];
  if (o.epochs) stage["epochs"] = *o.epochs;
  if (o.lr) stage["lr"] = *o.lr;
  if (o.batch_size) stage["batch_size"] = *o.batch_size;
  if (o.alpha) cfg["pipeline"]["sft"]["alpha"] = *o.alpha;

  if (o.protocol) cfg["protocol"]["kind"] = *o.protocol;
  if (o.folds) cfg["protocol"]["folds"] = *o.folds;
  if (!o.seeds.empty()) cfg["protocol"]["seeds"] = o.seeds;
  if (o.sweep) cfg["eval"]["sweep"] = *o.sweep;
  if (!o.alphas.empty()) cfg["eval"]["alphas"] = o.alphas;
  if (o.k) cfg["biomarkers"]["k"] = *o.k;
  if (o.saliency) cfg["biomarkers"]["saliency"] = *o.saliency;
  return cfg;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config_path, "JSON config merged over the defaults")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "Global seed");
  sub->add_option("--out", o.out, "Parent directory for run directories");
  sub->add_option("--run-dir", o.run_dir, "Exact run directory (must be empty or absent)");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Brain graph classification with language-model-aided training"};
  app.name("bleg");
  app.require_subcommand(1);
  Options o;

  struct Command {
    const char* name;
    const char* help;
    Outcome (*fn)(const json&, const fs::path&, std::uint64_t);
    std::vector<const char*> needs;  // paths that must be set
  };
  const std::vector<Command> commands{
      {"synth", "Generate a synthetic brain-graph dataset", cmd_synth, {}},
      {"gen-text", "Generate and curate graph descriptions", cmd_gen_text, {"dataset"}},
      {"tune", "Graph-text instruction tuning", cmd_tune, {"dataset", "texts"}},
      {"sft", "Fine-tune the task head on a split", cmd_sft, {"dataset", "backbone"}},
      {"eval", "Run an evaluation protocol", cmd_eval, {"dataset", "backbone"}},
      {"ablate", "Run the ablation rows", cmd_ablate, {"dataset", "texts"}},
      {"biomarkers", "Rank regions by embedding saliency", cmd_biomarkers, {"dataset", "backbone"}},
      {"theory-check", "Check the information-theoretic identities", cmd_theory, {}},
      {"gradcheck", "Finite-difference gradient checks", cmd_gradcheck, {}},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, o);
    subs[c.name] = sub;
  }
  auto path_opt = [&](const char* cmd, const char* flag, std::optional<std::string>& slot, const char* help) {
    subs.at(cmd)->add_option(flag, slot, help);
  };
  for (const char* c : {"gen-text", "tune", "sft", "eval", "ablate", "biomarkers"}) {
    path_opt(c, "--dataset", o.dataset, "Dataset manifest");
  }
  for (const char* c : {"tune", "ablate"}) path_opt(c, "--texts", o.texts, "Curated text records (JSONL)");
  for (const char* c : {"sft", "eval", "biomarkers"}) path_opt(c, "--backbone", o.backbone, "Stage-2 checkpoint directory");
  for (const char* c : {"tune", "sft"}) path_opt(c, "--split", o.split, "Split file");
  path_opt("biomarkers", "--head", o.head, "Stage-3 head checkpoint");
  path_opt("gen-text", "--planted", o.planted, "Planted edge sets for the offline oracle");

  subs["synth"]->add_option("--n-graphs", o.n_graphs, "Number of graphs");
  subs["synth"]->add_option("--n-nodes", o.n_nodes, "Regions per graph");
  subs["synth"]->add_option("--signal", o.signal, "Planted signal strength in [0, 1)");
  subs["gen-text"]->add_option("--backend", o.backend, "offline or remote")->check(CLI::IsMember({"offline", "remote"}));
  for (const char* c : {"tune", "sft", "eval"}) {
    subs[c]->add_option("--epochs", o.epochs, "Training epochs");
    subs[c]->add_option("--lr", o.lr, "Learning rate");
    subs[c]->add_option("--batch-size", o.batch_size, "Batch size");
  }
  for (const char* c : {"sft", "eval", "ablate"}) subs[c]->add_option("--alpha", o.alpha, "Alignment weight");
  for (const char* c : {"eval", "ablate"}) {
    subs[c]->add_option("--protocol", o.protocol, "kfold, ratio or kshot")->check(CLI::IsMember({"kfold", "ratio", "kshot"}));
    subs[c]->add_option("--folds", o.folds, "Number of folds");
    subs[c]->add_option("--seeds", o.seeds, "One run per seed");
  }
  subs["eval"]->add_option("--sweep", o.sweep, "none, ratio or kshot")->check(CLI::IsMember({"none", "ratio", "kshot"}));
  subs["eval"]->add_option("--alphas", o.alphas, "Alignment weights to evaluate");
  subs["biomarkers"]->add_option("--k", o.k, "Rows to report");
  subs["biomarkers"]->add_option("--saliency", o.saliency, "l2_norm or mean_abs")->check(CLI::IsMember({"l2_norm", "mean_abs"}));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  std::string cmd;
  const Command* chosen = nullptr;
  for (const auto& c : commands) {
    if (subs.at(c.name)->parsed()) {
      cmd = c.name;
      chosen = &c;
    }
  }

  try {
    json cfg = default_config();
    if (!o.config_path.empty()) cfg = merge_config(cfg, graphdata::read_json_file(o.config_path));
    cfg = apply_options(cfg, cmd, o);
    // Parse the pipeline section up front so bad values fail before any output.
    (void)eval::pipeline_config_from_json(cfg.at("pipeline"));
    for (const char* key : chosen->needs) (void)required_path(cfg, key, key);
    const auto seed = cfg.at("seed").get<std::uint64_t>();
    const fs::path run_dir = make_run_dir(o.run_dir, cfg.at("out").get<std::string>(), cmd, seed);
    const json resolved{{"command", cmd}, {"run_dir", run_dir.string()}, {"config", cfg}};
    graphdata::write_json_file(run_dir / "config.json", resolved);
    out << resolved.dump() << '\n' << std::flush;

    const Outcome res = chosen->fn(cfg, run_dir, seed);
    std::vector<std::string> outputs = res.outputs;
    outputs.insert(outputs.begin(), "config.json");
    validate_outputs(run_dir, outputs);
    out << json{{"status", "ok"}, {"command", cmd}, {"run_dir", run_dir.string()}, {"outputs", outputs}, {"summary", res.summary}}.dump()
        << '\n';
    return 0;
  } catch (const Error& e) {
    err << json{{"error", {{"command", cmd}, {"kind", e.kind()}, {"message", e.what()}}}}.dump() << '\n';
  } catch (const json::exception& e) {
    err << json{{"error", {{"command", cmd}, {"kind", "configuration"}, {"message", e.what()}}}}.dump() << '\n';
  } catch (const fs::filesystem_error& e) {
    err << json{{"error", {{"command", cmd}, {"kind", "io"}, {"message", e.what()}}}}.dump() << '\n';
  } catch (const std::exception& e) {
    err << json{{"error", {{"command", cmd}, {"kind", "internal"}, {"message", e.what()}}}}.dump() << '\n';
  }
  return 1;
}

}  // namespace bleg::cli
