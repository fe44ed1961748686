#include "bleg/eval/pipeline.hpp"

#include <fmt/format.h>

#include "bleg/error.hpp"

namespace bleg::eval {

using nlohmann::json;
using numerics::Tensor;
using training::SftData;

json to_json(const PipelineConfig& c) {
  json tune = training::to_json(c.tune.stage);
  tune["align_weight"] = c.tune.align_weight;
  tune["max_steps"] = c.tune.max_steps;
  tune["lora"] = c.tune.lora;
  json sft = training::to_json(c.sft.stage);
  sft["alpha"] = c.sft.loss.alpha;
  return json{{"model", models::to_json(c.model)},
              {"tune", tune},
              {"sft", sft},
              {"baseline", training::to_json(c.baseline)}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig c;
  try {
    if (j.contains("model")) c.model = models::model_config_from_json(j.at("model"));
    if (j.contains("tune")) {
      const auto& t = j.at("tune");
      c.tune.stage = training::stage_config_from_json(t, c.tune.stage);
      c.tune.align_weight = t.value("align_weight", c.tune.align_weight);
      c.tune.max_steps = t.value("max_steps", c.tune.max_steps);
      c.tune.lora = t.value("lora", c.tune.lora);
    }
    if (j.contains("sft")) {
      c.sft.stage = training::stage_config_from_json(j.at("sft"), c.sft.stage);
      c.sft.loss.alpha = j.at("sft").value("alpha", c.sft.loss.alpha);
    }
    if (j.contains("baseline")) c.baseline = training::stage_config_from_json(j.at("baseline"), c.baseline);
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("bad pipeline configuration: ") + e.what());
  }
  training::validate(c.sft.loss);
  return c;
}

FoldOutput predict(const models::TaskHead& head, const SftData& data, std::span<const std::size_t> test) {
  const auto ev = training::evaluate_head(head, data, test);
  return FoldOutput{models::predict_classes(ev.class_logits), models::positive_scores(ev.class_logits)};
}

namespace {

std::uint64_t head_seed(const FoldView& f) { return derive_seed(f.seed, 0x4EAD + f.fold); }

FoldOutput run_sft(const models::ModelConfig& model, const SftData& data, training::SftConfig cfg,
                   const FoldView& f) {
  cfg.stage.seed = head_seed(f);
  models::TaskHead head(model, head_seed(f));
  (void)training::sft(head, data, f.train, f.val, cfg);
  return predict(head, data, f.test);
}

}  // namespace

FoldFn sft_fold_fn(const models::ModelConfig& model, const SftData& data, const training::SftConfig& cfg) {
  return [&model, &data, cfg](const FoldView& f) { return run_sft(model, data, cfg, f); };
}

std::unique_ptr<models::Backbone> with_untrained_lm(const models::Backbone& tuned, std::uint64_t seed) {
  auto fresh = std::make_unique<models::Backbone>(tuned.config(), tuned.vocab(), seed);
  fresh->gnn().params().copy_values_from(tuned.gnn().params());
  fresh->graph_proj().params().copy_values_from(tuned.graph_proj().params());
  fresh->text_proj().params().copy_values_from(tuned.text_proj().params());
  return fresh;
}

json AblationTable::to_json() const {
  json rows = json::array();
  for (std::size_t k = 0; k < names.size(); ++k) {
    json r = reports[k].to_json();
    r["row"] = names[k];
    rows.push_back(r);
  }
  return json{{"rows", rows}};
}

std::string AblationTable::to_csv() const {
  std::string out = "row,evaluations";
  for (const auto& m : kMetricNames) out += fmt::format(",{}_mean,{}_std", m, m);
  out += "\n";
  for (std::size_t k = 0; k < names.size(); ++k) {
    out += fmt::format("{},{}", names[k], reports[k].rows.size());
    for (const auto& m : kMetricNames) {
      const auto& s = reports[k].summary.at(m);
      out += "," + (s.mean ? fmt::format("{:.17g}", *s.mean) : std::string{});
      out += "," + (s.std ? fmt::format("{:.17g}", *s.std) : std::string{});
    }
    out += "\n";
  }
  return out;
}

const MetricsReport& AblationTable::at(const std::string& name) const {
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (names[k] == name) return reports[k];
  }
  throw ParameterError("no ablation row named '" + name + "'");
}

AblationTable run_ablations(const std::vector<graphdata::BrainGraph>& graphs, const training::InstructionTexts& texts,
                            const models::Vocabulary& vocab, const PipelineConfig& cfg, const Protocol& protocol,
                            const AblationRows& rows, const Logger& log) {
  if (texts.descriptions.size() != graphs.size()) throw DimensionError("one description answer per graph is required");
  if (!texts.predictions.empty() && texts.predictions.size() != graphs.size()) {
    throw DimensionError("one prediction answer per graph is required");
  }
  std::vector<int> labels;
  for (const auto& g : graphs) labels.push_back(g.label);

  std::vector<std::string> names;
  if (rows.full) names.emplace_back("full");
  if (rows.no_align) names.emplace_back("no_align");
  if (rows.untuned_lm) names.emplace_back("untuned_lm");
  if (rows.gnn_only) names.emplace_back("gnn_only");
  if (names.empty()) throw ConfigurationError("no ablation rows selected");
  std::vector<std::vector<EvaluationRecord>> records(names.size());
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };

  for (const auto& fold : plan_folds(labels, protocol)) {
    auto record = [&](std::size_t row, const FoldOutput& out) {
      std::vector<int> y;
      for (auto k : fold.test) y.push_back(labels[k]);
      records[row].push_back(EvaluationRecord{.run = fold.run,
                                              .seed = fold.seed,
                                              .fold = fold.fold,
                                              .n_train = fold.train.size(),
                                              .n_val = fold.val.size(),
                                              .n_test = fold.test.size(),
                                              .metrics = compute_metrics(out.predictions, y, out.scores)});
      say(fmt::format("seed {} fold {} {}: acc {:.4f}", fold.seed, fold.fold, names[row],
                      *records[row].back().metrics.acc));
    };
    try {
      std::size_t row = 0;
      std::unique_ptr<models::Backbone> bb;
      std::optional<SftData> data;
      if (rows.full || rows.no_align || rows.untuned_lm) {
        std::vector<graphdata::BrainGraph> tg;
        training::InstructionTexts tt;
        for (auto k : fold.train) {
          tg.push_back(graphs[k]);
          tt.descriptions.push_back(texts.descriptions[k]);
          if (!texts.predictions.empty()) tt.predictions.push_back(texts.predictions[k]);
        }
        bb = std::make_unique<models::Backbone>(cfg.model, vocab, derive_seed(fold.seed, 0xB0B0 + fold.fold));
        training::InstructConfig tc = cfg.tune;
        tc.stage.seed = derive_seed(fold.seed, 0x7E4E + fold.fold);
        const auto rep = training::instruction_tune(*bb, tg, tt, tc);
        say(fmt::format("seed {} fold {} tuned: final loss {:.4f}", fold.seed, fold.fold, rep.epochs.back().loss));
        data = training::make_sft_data(*bb, graphs);
      }
      if (rows.full) record(row++, run_sft(bb->config(), *data, cfg.sft, fold));
      if (rows.no_align) {
        training::SftConfig c = cfg.sft;
        c.loss.alpha = 0.0;
        record(row++, run_sft(bb->config(), *data, c, fold));
      }
      if (rows.untuned_lm) {
        const auto plain = with_untrained_lm(*bb, derive_seed(fold.seed, 0x1A1A + fold.fold));
        const SftData pd = training::make_sft_data(*plain, graphs);
        record(row++, run_sft(plain->config(), pd, cfg.sft, fold));
      }
      if (rows.gnn_only) {
        training::GnnBaseline base(cfg.model.gnn, head_seed(fold));
        training::StageConfig sc = cfg.baseline;
        sc.seed = head_seed(fold);
        (void)training::train_gnn_baseline(base, graphs, fold.train, fold.val, sc);
        const Tensor logits = base.logits(graphs, fold.test);
        record(row++, FoldOutput{models::predict_classes(logits), models::positive_scores(logits)});
      }
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("ablation run {} (seed {}) fold {} failed: {}", fold.run, fold.seed,
                                        fold.fold, e.what()));
    }
  }

  AblationTable table;
  table.names = names;
  for (auto& r : records) table.reports.push_back(aggregate(protocol, std::move(r)));
  return table;
}

}  // namespace bleg::eval
