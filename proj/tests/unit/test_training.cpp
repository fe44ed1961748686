#include <doctest.h>

#include <cmath>
#include <numeric>

#include "bleg/error.hpp"
#include "bleg/graphdata/splits.hpp"
#include "bleg/graphdata/synthetic.hpp"
#include "bleg/numerics/checkpoint.hpp"
#include "bleg/promptgen/backend.hpp"
#include "bleg/promptgen/prompt.hpp"
#include "bleg/promptgen/record.hpp"
#include "bleg/training/trainer.hpp"
#include "test_util.hpp"

using namespace bleg;
using namespace bleg::training;
using models::LmBatch;
using models::SequenceInput;
using numerics::Mode;
using numerics::Parameter;
using numerics::ParameterSet;
using numerics::Tape;
using numerics::Var;

namespace {

double log_softmax_at(const Tensor& z, std::size_t r, std::size_t k) {
  double m = -INFINITY;
  for (std::size_t c = 0; c < z.cols(); ++c) m = std::max(m, z(r, c));
  double s = 0.0;
  for (std::size_t c = 0; c < z.cols(); ++c) s += std::exp(z(r, c) - m);
  return z(r, k) - m - std::log(s);
}

// Per-sequence mean over answer tokens, then mean over sequences.
double brute_ar(const Tensor& logits, const LmBatch& b) {
  double total = 0.0;
  for (std::size_t s = 0; s < b.batch; ++s) {
    double seq = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 1; t < b.len; ++t)
      if (b.answer_mask[s * b.len + t]) {
        seq -= log_softmax_at(logits, s * b.len + t - 1, b.ids[s * b.len + t]);
        ++n;
      }
    total += seq / static_cast<double>(n);
  }
  return total / static_cast<double>(b.batch);
}

double brute_align(const Tensor& a, const Tensor& b) {
  double total = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double na = 0.0, nb = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      na += a(r, c) * a(r, c);
      nb += b(r, c) * b(r, c);
    }
    for (std::size_t c = 0; c < a.cols(); ++c) {
      const double d = a(r, c) / std::sqrt(na) - b(r, c) / std::sqrt(nb);
      total += d * d;
    }
  }
  return total / static_cast<double>(a.rows());
}

struct Fixture {
  graphdata::SyntheticDataset ds;
  training::InstructionTexts texts;
  models::Vocabulary vocab;
  models::ModelConfig cfg;
};

Fixture make_fixture(std::size_t n_graphs, double signal = 0.9, std::uint64_t seed = 3) {
  graphdata::SynthConfig sc;
  sc.n_graphs = n_graphs;
  sc.n_nodes = 16;
  sc.time_points = 80;
  sc.planted_edges_per_class = 2;
  sc.signal_strength = signal;
  sc.seed = seed;
  Fixture f{graphdata::generate_synthetic_dataset(sc), {}, {}, {}};
  promptgen::OfflineOracle oracle(f.ds.config.planted);
  const auto task = graphdata::task_info(sc.task);
  std::vector<std::string> corpus{models::kDescriptionQuestion, models::kPredictionQuestion};
  for (const auto& g : f.ds.graphs) {
    const auto raw = oracle.complete(promptgen::build_prompt(g).assembled);
    const auto parsed = promptgen::parse_response(raw, task);
    f.texts.descriptions.push_back(promptgen::render_response(parsed));
    f.texts.predictions.push_back(parsed.prediction);
    corpus.push_back(f.texts.descriptions.back());
  }
  f.vocab = models::Vocabulary::build(corpus);
  f.cfg.gnn.in_dim = 16;
  f.cfg.gnn.hidden = 16;
  f.cfg.gnn.layers = 2;
  f.cfg.lm.width = 16;
  f.cfg.lm.heads = 2;
  f.cfg.lm.blocks = 1;
  f.cfg.lm.ff_mult = 2;
  f.cfg.lm.max_len = 256;
  f.cfg.adapter.width = 16;
  return f;
}

std::vector<numerics::NamedTensor> snapshot(const models::Backbone& bb) {
  const auto s = bb.sets();
  return numerics::collect_parameters(s);
}

}  // namespace

TEST_CASE("autoregressive loss examples") {
  SequenceInput s{.has_graph = false, .question = {0}, .answer = {1}};
  const std::vector<SequenceInput> one{s};
  const LmBatch b = models::make_lm_batch(one, 8);
  Tape tape;
  Var z = tape.constant(Tensor::matrix(2, 2));
  CHECK(autoregressive_loss(z, b).value().item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(std::abs(autoregressive_loss(z, b).value().item() - 0.693147) < 1e-6);

  SequenceInput empty{.has_graph = true, .question = {6, 7}, .answer = {}};
  const std::vector<SequenceInput> e{empty};
  CHECK_THROWS_AS((void)autoregressive_loss(tape.constant(Tensor::matrix(3, 9)), models::make_lm_batch(e, 8)),
                  ContractError);
  SequenceInput at_zero{.has_graph = false, .question = {}, .answer = {7}};
  const std::vector<SequenceInput> z0{at_zero};
  CHECK_THROWS_AS(answer_targets(models::make_lm_batch(z0, 8)), ContractError);
}

TEST_CASE("autoregressive loss matches brute force and ignores non-answer logits") {
  Rng rng(21);
  // Six tokens, three of them answers.
  {
    SequenceInput s{.has_graph = true, .question = {6, 9}, .answer = {7, 8, models::kEos}};
    const std::vector<SequenceInput> one{s};
    const LmBatch b = models::make_lm_batch(one, 8);
    REQUIRE(b.len == 6);
    const Tensor z = testing::random_tensor(rng, 6, 10, 2.0);
    Tape tape;
    double direct = 0.0;
    for (std::size_t t = 3; t < 6; ++t) direct -= log_softmax_at(z, t - 1, b.ids[t]);
    CHECK(std::abs(autoregressive_loss(tape.constant(z), b).value().item() - direct / 3.0) < 1e-9);
  }
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t vocab = 7 + rng.below(5);
    std::vector<SequenceInput> seqs;
    const std::size_t n = 1 + rng.below(3);
    const bool graph = rng.below(2) == 1;
    for (std::size_t k = 0; k < n; ++k) {
      SequenceInput s{.has_graph = graph, .question = {}, .answer = {}};
      const std::size_t q = 1 + rng.below(3), a = 1 + rng.below(3);
      for (std::size_t i = 0; i < q; ++i) s.question.push_back(6 + rng.below(vocab - 6));
      for (std::size_t i = 0; i < a; ++i) s.answer.push_back(rng.below(vocab));
      seqs.push_back(s);
    }
    const LmBatch b = models::make_lm_batch(seqs, 16);
    Tensor z = testing::random_tensor(rng, b.batch * b.len, vocab, 3.0);
    Tape tape;
    const double loss = autoregressive_loss(tape.constant(z), b).value().item();
    CHECK(std::abs(loss - brute_ar(z, b)) < 1e-9);

    const AnswerTargets at = answer_targets(b);
    for (std::size_t r = 0; r < z.rows(); ++r) {
      if (std::find(at.rows.begin(), at.rows.end(), r) != at.rows.end()) continue;
      for (std::size_t c = 0; c < vocab; ++c) z(r, c) += 50.0 * rng.normal();
    }
    CHECK(autoregressive_loss(tape.constant(z), b).value().item() == loss);
  }
}

TEST_CASE("alignment loss examples and properties") {
  Rng rng(22);
  Tape tape;
  const Tensor u = testing::random_tensor(rng, 3, 6);
  CHECK(alignment_loss(tape.constant(u), tape.constant(u)).value().item() == 0.0);

  Tensor unit = Tensor::matrix(1, 4);
  unit(0, 2) = 1.0;
  Tensor neg = unit;
  neg(0, 2) = -1.0;
  CHECK(alignment_loss(tape.constant(unit), tape.constant(neg)).value().item() == 4.0);

  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = testing::random_tensor(rng, 8, 5);
    const Tensor b = testing::random_tensor(rng, 8, 5);
    const double l = alignment_loss(tape.constant(a), tape.constant(b)).value().item();
    CHECK(std::abs(l - brute_align(a, b)) < 1e-12);
    CHECK(l >= 0.0);
    CHECK(l <= 4.0);
    for (double k : {1e-3, 0.5, 7.0, 1e4}) {
      Tensor sa = a;
      for (auto& v : sa.data()) v *= k;
      CHECK(std::abs(alignment_loss(tape.constant(sa), tape.constant(b)).value().item() - l) < 1e-12);
      CHECK(std::abs(alignment_loss(tape.constant(a), tape.constant(sa)).value().item() -
                     alignment_loss(tape.constant(a), tape.constant(a)).value().item()) < 1e-12);
    }
  }

  Tensor z = testing::random_tensor(rng, 2, 3);
  z(1, 0) = z(1, 1) = z(1, 2) = 0.0;
  CHECK_THROWS_AS((void)alignment_loss(tape.constant(z), tape.constant(testing::random_tensor(rng, 2, 3))),
                  DegenerateInputError);
  CHECK_THROWS_AS((void)alignment_loss(tape.constant(u), tape.constant(Tensor::matrix(2, 6, 1.0))), DimensionError);

  CHECK_NOTHROW(validate(LossConfig{.alpha = 0.0}));
  CHECK_THROWS_AS(validate(LossConfig{.alpha = 1.0}), ConfigurationError);
  CHECK_THROWS_AS(validate(LossConfig{.alpha = -0.1}), ConfigurationError);
}

TEST_CASE("AdamW recurrences") {
  ParameterSet ps;
  auto& p = ps.add("p", Tensor::from_rows({{1.5, -2.0}}));
  auto& q = ps.add("q", Tensor::from_rows({{0.25}}));

  {
    AdamW opt(ps.all(), AdamConfig{.lr = 0.1});
    opt.step();
    CHECK(p.value == Tensor::from_rows({{1.5, -2.0}}));
  }
  {
    AdamW opt({&q}, AdamConfig{.lr = 0.1});
    q.grad(0, 0) = 1.0;
    opt.step();
    // m_hat = 1, v_hat = 1 after bias correction.
    CHECK(q.value(0, 0) == doctest::Approx(0.25 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(std::abs((0.25 - q.value(0, 0)) - 0.1) < 1e-8);
  }
  {
    q.value(0, 0) = 2.0;
    q.grad.fill(0.0);
    AdamW opt({&q}, AdamConfig{.lr = 0.1, .weight_decay = 0.01});
    opt.step();
    CHECK(q.value(0, 0) == doctest::Approx(2.0 - 0.1 * 0.01 * 2.0).epsilon(1e-15));
  }
  {
    q.grad(0, 0) = std::nan("");
    const double before = q.value(0, 0);
    AdamW opt({&q}, AdamConfig{});
    CHECK_THROWS_AS(opt.step(), NumericalError);
    CHECK(q.value(0, 0) == before);
  }
  {
    p.frozen = true;
    AdamW opt(ps.all(), AdamConfig{});
    CHECK(opt.params().size() == 1);
  }
}

TEST_CASE("frozen gradient detection") {
  ParameterSet ps;
  auto& p = ps.add("gnn.w", Tensor::matrix(2, 2));
  p.frozen = true;
  std::vector<ParameterSet*> sets{&ps};
  CHECK_NOTHROW(check_frozen_untouched(sets));
  p.grad(1, 1) = 1e-30;
  CHECK_THROWS_AS(check_frozen_untouched(sets), InvariantViolation);
}

TEST_CASE("instruction tuning reduces the loss and is deterministic") {
  Fixture f = make_fixture(32);
  InstructConfig ic;
  ic.stage.epochs = 100;
  ic.stage.batch_size = 8;
  ic.stage.lr = 3e-3;
  ic.stage.seed = 5;
  ic.max_steps = 200;

  models::Backbone a(f.cfg, f.vocab, 9);
  const auto rep = instruction_tune(a, f.ds.graphs, f.texts, ic);
  REQUIRE(rep.step_losses.size() == 200);
  const double tail = std::accumulate(rep.step_losses.end() - 8, rep.step_losses.end(), 0.0) / 8.0;
  CHECK(tail < rep.step_losses.front());
  CHECK(rep.epochs.back().ar < rep.epochs.front().ar);
  for (const auto& e : rep.epochs) CHECK(std::isfinite(e.loss));

  ic.max_steps = 12;
  models::Backbone b1(f.cfg, f.vocab, 9), b2(f.cfg, f.vocab, 9);
  const auto r1 = instruction_tune(b1, f.ds.graphs, f.texts, ic);
  const auto r2 = instruction_tune(b2, f.ds.graphs, f.texts, ic);
  CHECK(r1.step_losses == r2.step_losses);
  const auto dir = testing::temp_dir("tune_det");
  b1.save(dir / "a");
  b2.save(dir / "b");
  CHECK(testing::read_file(dir / "a" / "backbone.ckpt") == testing::read_file(dir / "b" / "backbone.ckpt"));
  CHECK(testing::read_file(dir / "a" / "model.json") == testing::read_file(dir / "b" / "model.json"));

  models::Backbone z(f.cfg, f.vocab, 9);
  const auto before = snapshot(z);
  ic.stage.lr = 0.0;
  (void)instruction_tune(z, f.ds.graphs, f.texts, ic);
  const auto after = snapshot(z);
  REQUIRE(before.size() == after.size());
  for (std::size_t k = 0; k < before.size(); ++k) {
    if (before[k].name.find("running_") != std::string::npos) continue;  // statistics, not weights
    CHECK_MESSAGE(before[k].value == after[k].value, before[k].name);
  }
}

TEST_CASE("instruction tuning memorizes a single sample") {
  Fixture f = make_fixture(2);
  f.cfg.gnn.dropout = 0.0;  // a noise-free objective
  const std::vector<graphdata::BrainGraph> one{f.ds.graphs[0]};
  const InstructionTexts text{{f.texts.descriptions[0]}, {}};
  models::Backbone bb(f.cfg, f.vocab, 4);
  InstructConfig ic;
  ic.stage.epochs = 10;
  ic.stage.batch_size = 1;
  ic.stage.lr = 1e-3;
  ic.stage.seed = 2;
  const auto rep = instruction_tune(bb, one, text, ic);
  REQUIRE(rep.step_losses.size() == 10);
  for (std::size_t k = 1; k < 10; ++k) CHECK(rep.step_losses[k] < rep.step_losses[k - 1]);
}

TEST_CASE("instruction tuning contracts") {
  Fixture f = make_fixture(4);
  models::Backbone bb(f.cfg, f.vocab, 1);
  InstructConfig ic;
  CHECK_THROWS_AS(instruction_tune(bb, {}, {}, ic), InsufficientDataError);
  InstructionTexts two = f.texts;
  two.descriptions.resize(2);
  CHECK_THROWS_AS(instruction_tune(bb, f.ds.graphs, two, ic), DimensionError);
  two = f.texts;
  two.predictions.pop_back();
  CHECK_THROWS_AS(instruction_tune(bb, f.ds.graphs, two, ic), DimensionError);
  models::ModelConfig tiny = f.cfg;
  tiny.lm.max_len = 16;
  models::Backbone short_lm(tiny, f.vocab, 1);
  CHECK_THROWS_AS(instruction_tune(short_lm, f.ds.graphs, f.texts, ic), TruncationError);
  ic.lora = true;
  CHECK_THROWS_AS(instruction_tune(bb, f.ds.graphs, f.texts, ic), ConfigurationError);

  models::ModelConfig lora_cfg = f.cfg;
  lora_cfg.lm.lora_rank = 2;
  models::Backbone lb(lora_cfg, f.vocab, 1);
  const auto before = snapshot(lb);
  ic.max_steps = 2;
  (void)instruction_tune(lb, f.ds.graphs, f.texts, ic);
  const auto after = snapshot(lb);
  for (std::size_t k = 0; k < before.size(); ++k) {
    const auto& n = before[k].name;
    if (n.rfind("lm.", 0) != 0) continue;
    if (n.find(".lora_") == std::string::npos) CHECK_MESSAGE(before[k].value == after[k].value, n);
  }
}

TEST_CASE("stage-3 gradient decomposes into CE and alignment parts") {
  Fixture f = make_fixture(6);
  models::Backbone bb(f.cfg, f.vocab, 2);
  const SftData data = make_sft_data(bb, f.ds.graphs);
  models::TaskHead head(bb.config(), 3);
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  std::vector<Tensor> blocks;
  std::vector<std::size_t> offsets{0};
  std::vector<double> flat;
  Tensor zt = Tensor::matrix(4, 16);
  std::vector<std::size_t> targets;
  for (auto k : idx) {
    flat.insert(flat.end(), data.node_embeddings[k].data().begin(), data.node_embeddings[k].data().end());
    offsets.push_back(offsets.back() + data.node_embeddings[k].rows());
    for (std::size_t c = 0; c < 16; ++c) zt(targets.size(), c) = data.text_logits(k, c);
    targets.push_back(static_cast<std::size_t>(data.labels[k]));
  }
  const Tensor nodes({offsets.back(), 16}, flat);
  const std::vector<double> w(4, 0.25);

  auto grads = [&](double ce_w, double al_w) {
    for (auto* s : head.sets()) s->zero_grad();
    Tape tape;
    Rng drop(77);  // same dropout masks in every call
    const auto out = head.forward(tape, tape.constant(nodes), offsets, Mode::train, &drop);
    Var loss = numerics::scale(numerics::softmax_cross_entropy(out.class_logits, targets, w), ce_w);
    if (al_w != 0.0) loss = numerics::add(loss, numerics::scale(alignment_loss(out.graph_logits, tape.constant(zt)), al_w));
    tape.backward(loss);
    std::vector<Tensor> g;
    for (auto* s : head.sets())
      for (auto* p : s->all()) g.push_back(p->grad);
    return g;
  };
  const double alpha = 0.4;
  const auto total = grads(1.0, alpha);
  const auto ce = grads(1.0, 0.0);
  const auto al = grads(0.0, 1.0);
  const auto alpha0 = grads(1.0, 0.0);
  for (std::size_t k = 0; k < total.size(); ++k) {
    for (std::size_t i = 0; i < total[k].size(); ++i) {
      // Summing the two terms reassociates the backward accumulation. Weights
      // ahead of batch norm have gradients that cancel to rounding noise, so
      // the floor is looser than for the alpha = 0 identity below.
      const double scale = 1.0 + std::abs(ce[k][i]) + alpha * std::abs(al[k][i]);
      CHECK(std::abs(total[k][i] - (ce[k][i] + alpha * al[k][i])) < 1e-10 * scale);
      CHECK(std::abs(alpha0[k][i] - ce[k][i]) < 1e-12);
    }
  }
}

TEST_CASE("fine-tuning keeps the backbone frozen and early-stops on the best epoch") {
  Fixture f = make_fixture(60);
  models::Backbone bb(f.cfg, f.vocab, 6);
  InstructConfig ic;
  ic.stage.epochs = 1;
  ic.stage.batch_size = 16;
  ic.stage.lr = 1e-3;
  (void)instruction_tune(bb, f.ds.graphs, f.texts, ic);
  const SftData data = make_sft_data(bb, f.ds.graphs);
  const auto split = graphdata::make_split(data.labels, graphdata::SplitKind::ratio,
                                           {.train_ratio = 0.6, .val_ratio = 0.2}, 4);
  const auto tr = split.indices(graphdata::Subset::train);
  const auto va = split.indices(graphdata::Subset::val);

  const auto before = snapshot(bb);
  models::TaskHead head(bb.config(), 8);
  SftConfig cfg;
  cfg.stage.epochs = 60;
  cfg.stage.patience = 20;
  cfg.stage.batch_size = 8;
  cfg.stage.lr = 3e-3;
  cfg.stage.seed = 1;
  const auto rep = sft(head, data, tr, va, cfg, &bb);
  const auto after = snapshot(bb);
  for (std::size_t k = 0; k < before.size(); ++k) CHECK(before[k].value == after[k].value);

  double best = 0.0;
  for (const auto& e : rep.epochs) best = std::max(best, *e.val_accuracy);
  CHECK(*rep.best_val_accuracy == best);
  REQUIRE(rep.best_epoch >= 1);
  CHECK(rep.best_epoch <= rep.epochs.size());
  CHECK(*rep.epochs[rep.best_epoch - 1].val_accuracy == best);
  CHECK(rep.epochs.size() <= rep.best_epoch + cfg.stage.patience);

  // The restored weights reproduce the best epoch's validation accuracy.
  const auto ev = evaluate_head(head, data, va);
  const auto pred = models::predict_classes(ev.class_logits);
  double acc = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) acc += pred[i] == data.labels[va[i]] ? 1.0 : 0.0;
  CHECK(acc / static_cast<double>(va.size()) == doctest::Approx(best).epsilon(1e-12));
  CHECK(best >= 0.85);

  // Same seeds, same weights.
  models::TaskHead again(bb.config(), 8);
  const auto rep2 = sft(again, data, tr, va, cfg, &bb);
  CHECK(rep2.step_losses == rep.step_losses);

  CHECK(rep.to_csv().rfind("epoch,steps,loss,ce,align,ar,val_accuracy,val_loss,delta1_sq,delta2_sq\n", 0) == 0);
  CHECK(rep.to_json().at("best_epoch") == rep.best_epoch);
  const std::vector<std::size_t> none;
  CHECK_THROWS_AS(sft(head, data, tr, none, cfg, &bb), InsufficientDataError);
}

// Expected to fail: the adapter starts near the identity, so mean
// ||Z^G - Z^G'||^2 begins close to zero and can only grow while the adapter
// moves. Kept so the measured trend stays visible in every run.
TEST_CASE("distance diagnostics do not grow from epoch 1 to the best epoch" * doctest::may_fail()) {
  Fixture f = make_fixture(60);
  models::Backbone bb(f.cfg, f.vocab, 6);
  InstructConfig ic;
  ic.stage.epochs = 3;
  ic.stage.batch_size = 8;
  ic.stage.lr = 1e-3;
  (void)instruction_tune(bb, f.ds.graphs, f.texts, ic);
  const SftData data = make_sft_data(bb, f.ds.graphs);
  const auto split = graphdata::make_split(data.labels, graphdata::SplitKind::ratio,
                                           {.train_ratio = 0.6, .val_ratio = 0.2}, 4);
  models::TaskHead head(bb.config(), 8);
  SftConfig cfg;
  cfg.loss.alpha = 0.4;
  cfg.stage.epochs = 60;
  cfg.stage.patience = 20;
  cfg.stage.batch_size = 8;
  cfg.stage.lr = 3e-3;
  cfg.stage.seed = 1;
  const auto rep = sft(head, data, split.indices(graphdata::Subset::train), split.indices(graphdata::Subset::val), cfg);
  REQUIRE(rep.best_epoch >= 1);
  const auto& first = rep.epochs.front();
  const auto& best = rep.epochs[rep.best_epoch - 1];
  REQUIRE(first.delta1_sq.has_value());
  REQUIRE(first.delta2_sq.has_value());
  CHECK_MESSAGE(*best.delta1_sq <= 1.05 * *first.delta1_sq, *first.delta1_sq, " -> ", *best.delta1_sq);
  CHECK_MESSAGE(*best.delta2_sq <= 1.05 * *first.delta2_sq, *first.delta2_sq, " -> ", *best.delta2_sq);
}
