#include "bleg/training/fidelity.hpp"

#include "bleg/graphdata/synthetic.hpp"
#include "bleg/training/trainer.hpp"

namespace bleg::training {

using namespace numerics;
using models::Mode;

namespace {

void randomize(const std::vector<ParameterSet*>& sets, Rng& rng, double stddev) {
  for (auto* s : sets)
    for (auto* p : s->all())
      if (p->kind == Parameter::Kind::trainable)
        for (auto& v : p->value.data()) v = stddev * rng.normal();
}

std::vector<Parameter*> params_of(const std::vector<ParameterSet*>& sets) {
  std::vector<Parameter*> out;
  for (auto* s : sets)
    for (auto* p : s->all()) out.push_back(p);
  return out;
}

}  // namespace

nlohmann::json FidelityReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : e.report.entries) {
      params.push_back({{"parameter", p.parameter}, {"max_relative_error", p.max_relative_error}, {"passed", p.passed}});
    }
    rows.push_back({{"component", e.component},
                    {"passed", e.report.passed},
                    {"worst_parameter", e.report.worst_parameter},
                    {"worst_error", e.report.worst_error},
                    {"parameters", params}});
  }
  return {{"step", step}, {"tolerance", tolerance}, {"passed", passed}, {"components", rows}};
}

FidelityReport gradient_fidelity(std::uint64_t seed, double step, double tolerance) {
  graphdata::SynthConfig sc;
  sc.n_graphs = 4;
  sc.n_nodes = 6;
  sc.time_points = 40;
  sc.planted_edges_per_class = 1;
  sc.seed = seed;
  const auto ds = graphdata::generate_synthetic_dataset(sc);
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  const models::GraphBatch batch = models::make_graph_batch(ds.graphs, idx);

  const auto vocab = models::Vocabulary::build(
      {models::kDescriptionQuestion, models::kPredictionQuestion, "the left amygdala shows reduced coupling", "HC ASD"});
  models::ModelConfig cfg;
  cfg.gnn.in_dim = sc.n_nodes;
  cfg.gnn.hidden = 5;
  cfg.gnn.layers = 2;
  cfg.adapter.width = 5;
  cfg.lm.width = 8;
  cfg.lm.heads = 2;
  cfg.lm.blocks = 1;
  cfg.lm.ff_mult = 2;
  cfg.lm.max_len = 32;
  models::Backbone bb(cfg, vocab, derive_seed(seed, 1));
  models::TaskHead head(bb.config(), derive_seed(seed, 2));
  Rng rng(derive_seed(seed, 3));
  randomize(bb.sets(), rng, 0.3);
  randomize(head.sets(), rng, 0.3);

  std::vector<models::SequenceInput> seqs;
  auto predict = bb.prediction_question();
  predict.push_back(models::kCls);
  for (std::size_t k = 0; k < 4; ++k) {
    models::SequenceInput s{.has_graph = true, .question = predict, .answer = vocab.tokenize(k % 2 ? "ASD" : "HC")};
    if (k >= 2) {
      s.question = vocab.tokenize(models::kDescriptionQuestion);
      s.answer = vocab.tokenize("the left amygdala shows reduced coupling");
    }
    s.answer.push_back(models::kEos);
    seqs.push_back(s);
  }
  const models::LmBatch text = models::make_lm_batch(seqs, cfg.lm.max_len);
  std::vector<std::size_t> targets;
  for (auto k : idx) targets.push_back(static_cast<std::size_t>(ds.graphs[k].label));

  const Tensor nodes = [&] {
    Tape tape;
    Rng drop(4);
    return bb.gnn().forward(tape, batch, Mode::eval, nullptr).value();
  }();
  const Tensor pooled = [&] {
    Tape tape;
    return bb.graph_proj().forward(tape, tape.constant(nodes), batch.offsets).value();
  }();
  Tensor zt = Tensor::matrix(4, cfg.gnn.hidden);
  for (auto& v : zt.data()) v = rng.normal();

  FidelityReport out;
  out.step = step;
  out.tolerance = tolerance;
  auto check = [&](const std::string& name, const LossFn& fn, const std::vector<Parameter*>& params) {
    FidelityEntry e{name, check_gradient(fn, params, step, tolerance)};
    out.passed = out.passed && e.report.passed;
    out.entries.push_back(std::move(e));
  };

  check(
      "gnn",
      [&](Tape& tape) {
        Rng drop(5);
        return sum_squares(bb.gnn().forward(tape, batch, Mode::train, &drop));
      },
      bb.gnn().params().all());
  check(
      "graph_proj",
      [&](Tape& tape) { return sum_squares(bb.graph_proj().forward(tape, tape.constant(nodes), batch.offsets)); },
      bb.graph_proj().params().all());
  check(
      "lm",
      [&](Tape& tape) {
        const AnswerTargets at = answer_targets(text);
        const auto h = bb.lm().forward(tape, text, tape.constant(pooled), false);
        return autoregressive_loss_rows(bb.lm().output_logits(tape, gather_rows(h.hidden, at.rows)), at);
      },
      bb.lm().params().all());
  check(
      "text_proj",
      [&](Tape& tape) { return sum_squares(bb.text_logits(tape, tape.constant(nodes), batch.offsets)); },
      bb.text_proj().params().all());
  check(
      "task_head",
      [&](Tape& tape) {
        Rng drop(6);
        return stage3_loss(tape, head, nodes, batch.offsets, zt, targets, 0.0, &drop).total;
      },
      params_of(head.sets()));
  check(
      "stage2_objective",
      [&](Tape& tape) {
        Rng drop(7);
        return stage2_loss(tape, bb, batch, text, 0.0, &drop).total;
      },
      params_of(bb.sets()));
  // The alignment target is the detached pooled GNN embedding, so the GNN
  // weights move it without receiving its gradient.
  std::vector<Parameter*> not_gnn;
  for (auto* s : bb.sets())
    if (s != &bb.gnn().params())
      for (auto* p : s->all()) not_gnn.push_back(p);
  check(
      "stage2_with_alignment",
      [&](Tape& tape) {
        Rng drop(7);
        return stage2_loss(tape, bb, batch, text, 1.0, &drop).total;
      },
      not_gnn);
  check(
      "stage3_objective",
      [&](Tape& tape) {
        Rng drop(8);
        return stage3_loss(tape, head, nodes, batch.offsets, zt, targets, 0.4, &drop).total;
      },
      params_of(head.sets()));
  return out;
}

}  // namespace bleg::training
