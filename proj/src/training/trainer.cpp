#include "bleg/training/trainer.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "bleg/error.hpp"
#include "bleg/numerics/checkpoint.hpp"

namespace bleg::training {

using namespace numerics;
using models::Backbone;
using models::TaskHead;
using nlohmann::json;

namespace {

std::vector<double> uniform_weights(std::size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

std::vector<std::size_t> to_targets(const std::vector<int>& labels, std::span<const std::size_t> idx) {
  std::vector<std::size_t> out;
  for (auto k : idx) out.push_back(static_cast<std::size_t>(labels.at(k)));
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, std::size_t batch_size,
                                                   Rng& rng) {
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < order.size(); s += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + batch_size)));
  }
  return out;
}

void validate(const StageConfig& c) {
  if (c.epochs == 0) throw ConfigurationError("epochs must be positive");
  if (c.batch_size == 0) throw ConfigurationError("batch size must be positive");
  if (!(c.lr >= 0.0) || !std::isfinite(c.lr)) throw ConfigurationError("learning rate must be finite and >= 0");
  if (!(c.weight_decay >= 0.0)) throw ConfigurationError("weight decay must be >= 0");
}

std::vector<Parameter*> trainable_of(std::span<ParameterSet* const> sets) {
  std::vector<Parameter*> out;
  for (auto* s : sets)
    for (auto* p : s->all())
      if (p->receives_grad()) out.push_back(p);
  return out;
}

void zero_all(std::span<ParameterSet* const> sets) {
  for (auto* s : sets) s->zero_grad();
}

void require_finite(double v, const std::string& stage, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(v)) {
    throw NumericalError(fmt::format("{}: loss diverged ({}) at epoch {} step {}", stage, v, epoch, step));
  }
}

struct Stacked {
  Tensor nodes;
  std::vector<std::size_t> offsets{0};
  Tensor text;
};

Stacked stack(const SftData& d, std::span<const std::size_t> idx) {
  Stacked s;
  const std::size_t h = d.text_logits.cols();
  std::vector<double> data;
  for (auto k : idx) {
    const Tensor& x = d.node_embeddings.at(k);
    if (x.cols() != h) throw DimensionError("node embedding width differs from the text logit width");
    data.insert(data.end(), x.data().begin(), x.data().end());
    s.offsets.push_back(s.offsets.back() + x.rows());
  }
  s.nodes = Tensor({s.offsets.back(), h}, std::move(data));
  s.text = Tensor::matrix(idx.size(), h);
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < h; ++c) s.text(r, c) = d.text_logits(idx[r], c);
  return s;
}

double mean_sq_unit_distance(const Tensor& a, const Tensor& b) {
  double total = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double na = 0.0, nb = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      na += a(r, c) * a(r, c);
      nb += b(r, c) * b(r, c);
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na == 0.0 || nb == 0.0) return std::nan("");
    for (std::size_t c = 0; c < a.cols(); ++c) {
      const double d = a(r, c) / na - b(r, c) / nb;
      total += d * d;
    }
  }
  return total / static_cast<double>(a.rows());
}

struct ValStats {
  double accuracy = 0.0;
  double loss = 0.0;
};

ValStats score(const Tensor& logits, const std::vector<std::size_t>& targets) {
  ValStats s;
  const auto pred = models::predict_classes(logits);
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (static_cast<std::size_t>(pred[r]) == targets[r]) s.accuracy += 1.0;
    const double m = std::max(logits(r, 0), logits(r, 1));
    const double lse = m + std::log(std::exp(logits(r, 0) - m) + std::exp(logits(r, 1) - m));
    s.loss += lse - logits(r, targets[r]);
  }
  s.accuracy /= static_cast<double>(targets.size());
  s.loss /= static_cast<double>(targets.size());
  return s;
}

// Tracks the best validation epoch and its weights.
class BestKeeper {
 public:
  explicit BestKeeper(std::vector<ParameterSet*> sets) : sets_(std::move(sets)) {}

  bool offer(std::size_t epoch, const ValStats& v) {
    const bool better = epoch_ == 0 || v.accuracy > best_.accuracy ||
                        (v.accuracy == best_.accuracy && v.loss < best_.loss);
    if (!better) return false;
    epoch_ = epoch;
    best_ = v;
    std::vector<const ParameterSet*> cs(sets_.begin(), sets_.end());
    snapshot_ = collect_parameters(cs);
    return true;
  }
  void restore() {
    if (epoch_ != 0) restore_parameters(sets_, snapshot_);
  }
  [[nodiscard]] std::size_t epoch() const { return epoch_; }
  [[nodiscard]] const ValStats& best() const { return best_; }

 private:
  std::vector<ParameterSet*> sets_;
  std::vector<NamedTensor> snapshot_;
  std::size_t epoch_ = 0;
  ValStats best_;
};

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string opt_csv(const std::optional<double>& v) { return v ? fmt::format("{:.17g}", *v) : std::string{}; }

}  // namespace

json to_json(const StageConfig& c) {
  return json{{"epochs", c.epochs},   {"batch_size", c.batch_size}, {"lr", c.lr},
              {"weight_decay", c.weight_decay}, {"patience", c.patience}, {"seed", c.seed}};
}

StageConfig stage_config_from_json(const json& j, StageConfig d) {
  try {
    d.epochs = j.value("epochs", d.epochs);
    d.batch_size = j.value("batch_size", d.batch_size);
    d.lr = j.value("lr", d.lr);
    d.weight_decay = j.value("weight_decay", d.weight_decay);
    d.patience = j.value("patience", d.patience);
    d.seed = j.value("seed", d.seed);
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("bad stage configuration: ") + e.what());
  }
  return d;
}

json TrainReport::to_json() const {
  json rows = json::array();
  for (const auto& e : epochs) {
    rows.push_back({{"epoch", e.epoch},
                    {"steps", e.steps},
                    {"loss", e.loss},
                    {"ce", e.ce},
                    {"align", e.align},
                    {"ar", e.ar},
                    {"val_accuracy", opt_json(e.val_accuracy)},
                    {"val_loss", opt_json(e.val_loss)},
                    {"delta1_sq", opt_json(e.delta1_sq)},
                    {"delta2_sq", opt_json(e.delta2_sq)}});
  }
  return json{{"stage", stage},
              {"seed", seed},
              {"epochs", rows},
              {"best_epoch", best_epoch},
              {"best_val_accuracy", opt_json(best_val_accuracy)},
              {"checkpoint", checkpoint},
              {"steps", step_losses.size()}};
}

std::string TrainReport::to_csv() const {
  std::string out = "epoch,steps,loss,ce,align,ar,val_accuracy,val_loss,delta1_sq,delta2_sq\n";
  for (const auto& e : epochs) {
    out += fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{},{},{},{}\n", e.epoch, e.steps, e.loss, e.ce, e.align,
                       e.ar, opt_csv(e.val_accuracy), opt_csv(e.val_loss), opt_csv(e.delta1_sq), opt_csv(e.delta2_sq));
  }
  return out;
}

void check_frozen_untouched(std::span<ParameterSet* const> sets) {
  for (auto* s : sets)
    for (auto* p : s->all()) {
      if (p->receives_grad()) continue;
      for (double g : p->grad.data()) {
        if (g != 0.0) throw InvariantViolation("frozen parameter '" + p->name + "' received a gradient");
      }
    }
}

LossParts stage2_loss(Tape& tape, const Backbone& model, const models::GraphBatch& graphs,
                      const models::LmBatch& text, double align_weight, Rng* dropout_rng) {
  const AnswerTargets at = answer_targets(text);
  Var x = model.gnn().forward(tape, graphs, Mode::train, dropout_rng);
  Var g = model.graph_proj().forward(tape, x, graphs.offsets);
  const models::LmOutput out = model.lm().forward(tape, text, g, false);
  Var logits = model.lm().output_logits(tape, gather_rows(out.hidden, at.rows));
  Var ar = autoregressive_loss_rows(logits, at);
  LossParts parts{ar, ar.value().item(), 0.0, 0.0};
  if (align_weight > 0.0) {
    // The CLS projection learns to point where the pooled graph embedding
    // points; the target is held fixed for this term.
    Var zt = model.text_logits(tape, x, graphs.offsets);
    Var target = tape.constant(segment_mean_rows(x, graphs.offsets).value());
    Var al = alignment_loss(target, zt);
    parts.align = al.value().item();
    parts.total = add(ar, scale(al, align_weight));
  }
  return parts;
}

LossParts stage3_loss(Tape& tape, const TaskHead& head, const Tensor& nodes, std::span<const std::size_t> offsets,
                      const Tensor& text_logits, const std::vector<std::size_t>& targets, double alpha,
                      Rng* dropout_rng) {
  const auto out = head.forward(tape, tape.constant(nodes), offsets, Mode::train, dropout_rng);
  Var ce = softmax_cross_entropy(out.class_logits, targets, uniform_weights(targets.size()));
  LossParts parts{ce, 0.0, ce.value().item(), 0.0};
  if (alpha > 0.0) {
    Var al = alignment_loss(out.graph_logits, tape.constant(text_logits));
    parts.align = al.value().item();
    parts.total = add(ce, scale(al, alpha));
  }
  return parts;
}

TrainReport instruction_tune(Backbone& model, const std::vector<BrainGraph>& graphs, const InstructionTexts& texts,
                             const InstructConfig& cfg) {
  validate(cfg.stage);
  if (graphs.empty()) throw InsufficientDataError("instruction tuning needs a nonempty text dataset");
  if (texts.descriptions.size() != graphs.size()) throw DimensionError("one description answer per graph is required");
  if (!texts.predictions.empty() && texts.predictions.size() != graphs.size()) {
    throw DimensionError("one prediction answer per graph is required");
  }
  if (!(cfg.align_weight >= 0.0)) throw ConfigurationError("alignment weight must be >= 0");

  auto sets = model.sets();
  model.set_frozen(false);
  if (cfg.lora) model.lm().freeze_base_for_lora();
  AdamW opt(trainable_of(sets), AdamConfig{.lr = cfg.stage.lr, .weight_decay = cfg.stage.weight_decay});
  zero_all(sets);

  const auto& vocab = model.vocab();
  std::vector<std::size_t> sample_graph;
  std::vector<models::SequenceInput> seqs;
  auto add_sample = [&](std::size_t g, const std::vector<std::size_t>& question, const std::string& answer) {
    models::SequenceInput s{.has_graph = true, .question = question, .answer = vocab.tokenize(answer)};
    s.answer.push_back(models::kEos);
    if (s.length() > model.config().lm.max_len) {
      throw TruncationError(fmt::format("instruction sequence of {} tokens exceeds the LM maximum length {}",
                                        s.length(), model.config().lm.max_len));
    }
    sample_graph.push_back(g);
    seqs.push_back(std::move(s));
  };
  const auto describe = vocab.tokenize(models::kDescriptionQuestion);
  auto predict = model.prediction_question();
  predict.push_back(models::kCls);
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    add_sample(g, describe, texts.descriptions[g]);
    if (!texts.predictions.empty()) add_sample(g, predict, texts.predictions[g]);
  }

  TrainReport report;
  report.stage = "instruction_tune";
  report.seed = cfg.stage.seed;
  Rng order_rng(derive_seed(cfg.stage.seed, 0x0D3E));
  Rng drop_rng(derive_seed(cfg.stage.seed, 0xD809));
  std::vector<std::size_t> all(seqs.size());
  std::iota(all.begin(), all.end(), 0);
  std::size_t step = 0;
  bool done = false;
  for (std::size_t epoch = 1; epoch <= cfg.stage.epochs && !done; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    for (const auto& idx : make_batches(all, cfg.stage.batch_size, order_rng)) {
      std::vector<std::size_t> gidx;
      std::vector<models::SequenceInput> bs;
      for (auto k : idx) {
        gidx.push_back(sample_graph[k]);
        bs.push_back(seqs[k]);
      }
      const models::GraphBatch gb = models::make_graph_batch(graphs, gidx);
      const models::LmBatch lb = models::make_lm_batch(bs, model.config().lm.max_len);

      Tape tape;
      const LossParts parts = stage2_loss(tape, model, gb, lb, cfg.align_weight, &drop_rng);
      Var loss = parts.total;
      const double lv = loss.value().item();
      require_finite(lv, report.stage, epoch, step);
      tape.backward(loss);
      check_frozen_untouched(sets);
      opt.step();
      zero_all(sets);
      ++step;
      report.step_losses.push_back(lv);
      rec.loss += lv;
      rec.ar += parts.ar;
      rec.align += parts.align;
      ++rec.steps;
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        done = true;
        break;
      }
    }
    const double n = static_cast<double>(std::max<std::size_t>(rec.steps, 1));
    rec.loss /= n;
    rec.ar /= n;
    rec.align /= n;
    report.epochs.push_back(rec);
  }
  model.set_frozen(false);
  report.best_epoch = report.epochs.size();
  return report;
}

SftData make_sft_data(const Backbone& model, const std::vector<BrainGraph>& graphs) {
  if (graphs.empty()) throw InsufficientDataError("no graphs to encode");
  auto enc = model.encode(graphs);
  SftData d;
  d.node_embeddings = std::move(enc.node_embeddings);
  d.text_logits = std::move(enc.text_logits);
  for (const auto& g : graphs) d.labels.push_back(g.label);
  return d;
}

HeadEval evaluate_head(const TaskHead& head, const SftData& data, std::span<const std::size_t> indices) {
  const Stacked s = stack(data, indices);
  Tape tape;
  Var x = tape.constant(s.nodes);
  const auto out = head.forward(tape, x, s.offsets, Mode::eval, nullptr);
  HeadEval e;
  e.class_logits = out.class_logits.value();
  e.graph_logits = out.graph_logits.value();
  e.pooled = segment_mean_rows(x, s.offsets).value();
  return e;
}

TrainReport sft(TaskHead& head, const SftData& data, std::span<const std::size_t> train,
                std::span<const std::size_t> val, const SftConfig& cfg, Backbone* backbone) {
  validate(cfg.stage);
  validate(cfg.loss);
  if (train.empty()) throw InsufficientDataError("fine-tuning needs training samples");
  if (val.empty()) throw InsufficientDataError("fine-tuning needs validation samples");
  if (data.labels.size() != data.node_embeddings.size() || data.text_logits.rows() != data.labels.size()) {
    throw DimensionError("fine-tuning data arrays differ in length");
  }

  std::vector<ParameterSet*> frozen_sets;
  std::vector<NamedTensor> frozen_before;
  if (backbone) {
    backbone->set_frozen(true);
    frozen_sets = backbone->sets();
    zero_all(frozen_sets);
    std::vector<const ParameterSet*> cs(frozen_sets.begin(), frozen_sets.end());
    frozen_before = collect_parameters(cs);
  }
  auto sets = head.sets();
  AdamW opt(trainable_of(sets), AdamConfig{.lr = cfg.stage.lr, .weight_decay = cfg.stage.weight_decay});
  zero_all(sets);

  TrainReport report;
  report.stage = "sft";
  report.seed = cfg.stage.seed;
  Rng order_rng(derive_seed(cfg.stage.seed, 0x0D3E));
  Rng drop_rng(derive_seed(cfg.stage.seed, 0xD809));
  BestKeeper keeper(sets);
  const auto val_targets = to_targets(data.labels, val);
  const std::vector<std::size_t> order(train.begin(), train.end());
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.stage.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    for (const auto& idx : make_batches(order, cfg.stage.batch_size, order_rng)) {
      const Stacked s = stack(data, idx);
      const auto targets = to_targets(data.labels, idx);
      Tape tape;
      const LossParts parts = stage3_loss(tape, head, s.nodes, s.offsets, s.text, targets, cfg.loss.alpha, &drop_rng);
      Var loss = parts.total;
      const double lv = loss.value().item();
      require_finite(lv, report.stage, epoch, step);
      tape.backward(loss);
      check_frozen_untouched(sets);
      if (backbone) check_frozen_untouched(frozen_sets);
      opt.step();
      zero_all(sets);
      ++step;
      report.step_losses.push_back(lv);
      rec.loss += lv;
      rec.ce += parts.ce;
      rec.align += parts.align;
      ++rec.steps;
    }
    const double n = static_cast<double>(std::max<std::size_t>(rec.steps, 1));
    rec.loss /= n;
    rec.ce /= n;
    rec.align /= n;

    const HeadEval ev = evaluate_head(head, data, val);
    const ValStats vs = score(ev.class_logits, val_targets);
    rec.val_accuracy = vs.accuracy;
    rec.val_loss = vs.loss;
    Tensor zt = Tensor::matrix(val.size(), data.text_logits.cols());
    for (std::size_t r = 0; r < val.size(); ++r)
      for (std::size_t c = 0; c < zt.cols(); ++c) zt(r, c) = data.text_logits(val[r], c);
    const double d1 = mean_sq_unit_distance(ev.graph_logits, zt);
    const double d2 = mean_sq_unit_distance(ev.pooled, ev.graph_logits);
    if (std::isfinite(d1)) rec.delta1_sq = d1;
    if (std::isfinite(d2)) rec.delta2_sq = d2;
    report.epochs.push_back(rec);
    keeper.offer(epoch, vs);
    if (cfg.stage.patience > 0 && epoch - keeper.epoch() >= cfg.stage.patience) break;
  }
  keeper.restore();
  report.best_epoch = keeper.epoch();
  report.best_val_accuracy = keeper.best().accuracy;

  if (backbone) {
    std::vector<const ParameterSet*> cs(frozen_sets.begin(), frozen_sets.end());
    const auto after = collect_parameters(cs);
    for (std::size_t k = 0; k < after.size(); ++k) {
      if (!(after[k].value == frozen_before[k].value)) {
        throw InvariantViolation("frozen parameter '" + after[k].name + "' changed during fine-tuning");
      }
    }
  }
  return report;
}

GnnBaseline::GnnBaseline(const models::GnnConfig& cfg, std::uint64_t seed)
    : init_rng(seed), gnn(cfg, init_rng, "baseline.gnn"), head(cfg.hidden, init_rng, "baseline.head") {}

Tensor GnnBaseline::logits(const std::vector<BrainGraph>& graphs, std::span<const std::size_t> indices) const {
  const models::GraphBatch gb = models::make_graph_batch(graphs, indices);
  Tape tape;
  Var x = gnn.forward(tape, gb, Mode::eval, nullptr);
  return head.forward(tape, segment_mean_rows(x, gb.offsets)).value();
}

TrainReport train_gnn_baseline(GnnBaseline& model, const std::vector<BrainGraph>& graphs,
                               std::span<const std::size_t> train, std::span<const std::size_t> val,
                               const StageConfig& cfg) {
  validate(cfg);
  if (train.empty() || val.empty()) throw InsufficientDataError("baseline needs training and validation samples");
  std::vector<int> labels;
  for (const auto& g : graphs) labels.push_back(g.label);
  auto sets = model.sets();
  AdamW opt(trainable_of(sets), AdamConfig{.lr = cfg.lr, .weight_decay = cfg.weight_decay});
  zero_all(sets);

  TrainReport report;
  report.stage = "gnn_baseline";
  report.seed = cfg.seed;
  Rng order_rng(derive_seed(cfg.seed, 0x0D3E));
  Rng drop_rng(derive_seed(cfg.seed, 0xD809));
  BestKeeper keeper(sets);
  const auto val_targets = to_targets(labels, val);
  const std::vector<std::size_t> order(train.begin(), train.end());
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    for (const auto& idx : make_batches(order, cfg.batch_size, order_rng)) {
      const models::GraphBatch gb = models::make_graph_batch(graphs, idx);
      const auto targets = to_targets(labels, idx);
      Tape tape;
      Var x = model.gnn.forward(tape, gb, Mode::train, &drop_rng);
      Var ce = softmax_cross_entropy(model.head.forward(tape, segment_mean_rows(x, gb.offsets)), targets,
                                     uniform_weights(idx.size()));
      const double lv = ce.value().item();
      require_finite(lv, report.stage, epoch, step);
      tape.backward(ce);
      opt.step();
      zero_all(sets);
      ++step;
      report.step_losses.push_back(lv);
      rec.loss += lv;
      rec.ce += lv;
      ++rec.steps;
    }
    rec.loss /= static_cast<double>(rec.steps);
    rec.ce /= static_cast<double>(rec.steps);
    const ValStats vs = score(model.logits(graphs, val), val_targets);
    rec.val_accuracy = vs.accuracy;
    rec.val_loss = vs.loss;
    report.epochs.push_back(rec);
    keeper.offer(epoch, vs);
    if (cfg.patience > 0 && epoch - keeper.epoch() >= cfg.patience) break;
  }
  keeper.restore();
  report.best_epoch = keeper.epoch();
  report.best_val_accuracy = keeper.best().accuracy;
  return report;
}

}  // namespace bleg::training
