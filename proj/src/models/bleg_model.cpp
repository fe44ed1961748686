#include "bleg/models/bleg_model.hpp"

#include <fmt/format.h>

#include "bleg/error.hpp"
#include "bleg/graphdata/io.hpp"
#include "bleg/numerics/checkpoint.hpp"

namespace bleg::models {

using namespace numerics;
using nlohmann::json;

namespace {

constexpr int kModelFormatVersion = 1;

const AdapterConfig& checked_adapter(const ModelConfig& cfg) {
  if (cfg.adapter.width != cfg.gnn.hidden) {
    throw ConfigurationError(fmt::format("adapter width {} must equal the GNN width {}", cfg.adapter.width,
                                         cfg.gnn.hidden));
  }
  return cfg.adapter;
}

ModelConfig with_vocab(ModelConfig cfg, const Vocabulary& vocab) {
  checked_adapter(cfg);
  cfg.lm.vocab_size = vocab.size();
  return cfg;
}

}  // namespace

json to_json(const ModelConfig& c) {
  return json{{"gnn",
               {{"in_dim", c.gnn.in_dim},
                {"hidden", c.gnn.hidden},
                {"layers", c.gnn.layers},
                {"dropout", c.gnn.dropout},
                {"batch_norm", c.gnn.batch_norm},
                {"activation", c.gnn.activation}}},
              {"lm",
               {{"vocab_size", c.lm.vocab_size},
                {"width", c.lm.width},
                {"heads", c.lm.heads},
                {"blocks", c.lm.blocks},
                {"ff_mult", c.lm.ff_mult},
                {"max_len", c.lm.max_len},
                {"lora_rank", c.lm.lora_rank},
                {"lora_alpha", c.lm.lora_alpha}}},
              {"adapter", {{"width", c.adapter.width}, {"dropout", c.adapter.dropout}}},
              {"readout_norm", c.readout_norm}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    if (j.contains("gnn")) {
      const auto& g = j.at("gnn");
      c.gnn.in_dim = g.value("in_dim", c.gnn.in_dim);
      c.gnn.hidden = g.value("hidden", c.gnn.hidden);
      c.gnn.layers = g.value("layers", c.gnn.layers);
      c.gnn.dropout = g.value("dropout", c.gnn.dropout);
      c.gnn.batch_norm = g.value("batch_norm", c.gnn.batch_norm);
      c.gnn.activation = g.value("activation", c.gnn.activation);
    }
    if (j.contains("lm")) {
      const auto& l = j.at("lm");
      c.lm.vocab_size = l.value("vocab_size", c.lm.vocab_size);
      c.lm.width = l.value("width", c.lm.width);
      c.lm.heads = l.value("heads", c.lm.heads);
      c.lm.blocks = l.value("blocks", c.lm.blocks);
      c.lm.ff_mult = l.value("ff_mult", c.lm.ff_mult);
      c.lm.max_len = l.value("max_len", c.lm.max_len);
      c.lm.lora_rank = l.value("lora_rank", c.lm.lora_rank);
      c.lm.lora_alpha = l.value("lora_alpha", c.lm.lora_alpha);
    }
    if (j.contains("adapter")) {
      c.adapter.width = j.at("adapter").value("width", c.adapter.width);
      c.adapter.dropout = j.at("adapter").value("dropout", c.adapter.dropout);
    } else {
      c.adapter.width = c.gnn.hidden;
    }
    c.readout_norm = j.value("readout_norm", c.readout_norm);
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("bad model configuration: ") + e.what());
  }
  return c;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Projection::Projection(std::size_t in, std::size_t out, Rng& rng, const std::string& name)
    : linear_(Linear::create(params_, name, in, out, rng)) {}

Backbone::Backbone(const ModelConfig& cfg, Vocabulary vocab, std::uint64_t seed)
    : cfg_(with_vocab(cfg, vocab)),
      vocab_(std::move(vocab)),
      init_rng_(seed),
      gnn_(cfg_.gnn, init_rng_),
      graph_proj_(cfg_.gnn.hidden, cfg_.lm.width, init_rng_),
      lm_(cfg_.lm, init_rng_),
      text_proj_(cfg_.lm.width, cfg_.gnn.hidden, init_rng_, "text_proj") {}

std::vector<ParameterSet*> Backbone::sets() {
  return {&gnn_.params(), &graph_proj_.params(), &lm_.params(), &text_proj_.params()};
}

std::vector<const ParameterSet*> Backbone::sets() const {
  return {&gnn_.params(), &graph_proj_.params(), &lm_.params(), &text_proj_.params()};
}

void Backbone::set_frozen(bool frozen) {
  for (auto* s : sets()) s->set_frozen(frozen);
}

std::vector<std::size_t> Backbone::prediction_question() const { return vocab_.tokenize(kPredictionQuestion); }

Var Backbone::text_logits(Tape& tape, Var node_embeddings, std::span<const std::size_t> offsets) const {
  Var g = graph_proj_.forward(tape, node_embeddings, offsets);
  const std::size_t n = offsets.size() - 1;
  SequenceInput seq;
  seq.question = prediction_question();
  seq.question.push_back(kCls);
  const std::vector<SequenceInput> seqs(n, seq);
  const LmBatch batch = make_lm_batch(seqs, cfg_.lm.max_len);
  const LmOutput out = lm_.forward(tape, batch, g, false);
  std::vector<std::size_t> cls_rows;
  for (std::size_t b = 0; b < n; ++b) cls_rows.push_back(b * batch.len + batch.lengths[b] - 1);
  return text_proj_.forward(tape, gather_rows(out.hidden, cls_rows));
}

Backbone::Encoded Backbone::encode(const std::vector<BrainGraph>& graphs, std::size_t chunk) const {
  if (chunk == 0) throw ParameterError("chunk size must be positive");
  Encoded enc;
  enc.text_logits = Tensor::matrix(graphs.size(), cfg_.gnn.hidden);
  for (std::size_t start = 0; start < graphs.size(); start += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t k = start; k < std::min(graphs.size(), start + chunk); ++k) idx.push_back(k);
    const GraphBatch batch = make_graph_batch(graphs, idx);
    Tape tape;
    Var x = gnn_.forward(tape, batch, Mode::eval, nullptr);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t n = batch.offsets[k + 1] - batch.offsets[k];
      enc.node_embeddings.push_back(slice_rows(x, batch.offsets[k], n).value());
    }
    const Tensor& zt = text_logits(tape, x, batch.offsets).value();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      for (std::size_t c = 0; c < zt.cols(); ++c) enc.text_logits(start + k, c) = zt(k, c);
    }
  }
  return enc;
}

void Backbone::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const auto cs = sets();
  save_checkpoint(dir / "backbone.ckpt", collect_parameters(cs));
  vocab_.save(dir / "vocab.json");
  const json cfg = to_json(cfg_);
  json manifest{{"format_version", kModelFormatVersion},
                {"checkpoint_version", kCheckpointVersion},
                {"components", {"gnn", "graph_proj", "lm", "text_proj"}},
                {"config", cfg},
                {"config_hash", fmt::format("{:016x}", fnv1a(cfg.dump()))}};
  graphdata::write_json_file(dir / "model.json", manifest);
}

std::unique_ptr<Backbone> Backbone::load(const std::filesystem::path& dir) {
  const auto ckpt = dir / "backbone.ckpt";
  if (!std::filesystem::exists(ckpt) || !std::filesystem::exists(dir / "model.json")) {
    throw StateError("no stage-2 checkpoint found in " + dir.string() + "; run `bleg tune` first");
  }
  const json manifest = graphdata::read_json_file(dir / "model.json");
  if (manifest.value("format_version", 0) != kModelFormatVersion) {
    throw FormatError("unsupported model format in " + dir.string());
  }
  const ModelConfig cfg = model_config_from_json(manifest.at("config"));
  const std::string expected = fmt::format("{:016x}", fnv1a(to_json(cfg).dump()));
  if (manifest.value("config_hash", std::string{}) != expected) {
    throw ConsistencyError("model configuration hash mismatch in " + dir.string());
  }
  auto vocab = Vocabulary::load(dir / "vocab.json");
  if (vocab.size() != cfg.lm.vocab_size) throw ConsistencyError("vocabulary size does not match the model");
  auto model = std::make_unique<Backbone>(cfg, std::move(vocab), 0);
  auto s = model->sets();
  restore_parameters(s, load_checkpoint(ckpt));
  return model;
}

TaskHead::TaskHead(const ModelConfig& cfg, std::uint64_t seed)
    : init_rng_(seed),
      adapter_(checked_adapter(cfg), init_rng_),
      readout_(cfg.gnn.hidden, cfg.readout_norm),
      head_(cfg.gnn.hidden, init_rng_) {}

std::vector<ParameterSet*> TaskHead::sets() { return {&adapter_.params(), &readout_.params(), &head_.params()}; }

std::vector<const ParameterSet*> TaskHead::sets() const {
  return {&adapter_.params(), &readout_.params(), &head_.params()};
}

TaskHead::Output TaskHead::forward(Tape& tape, Var node_embeddings, std::span<const std::size_t> offsets, Mode mode,
                                   Rng* dropout_rng) const {
  Output out;
  Var adapted = adapter_.forward(tape, node_embeddings, mode, dropout_rng);
  out.graph_logits = readout_.forward(tape, adapted, node_embeddings, offsets, mode);
  out.class_logits = head_.forward(tape, out.graph_logits);
  return out;
}

void TaskHead::save(const std::filesystem::path& path) const {
  const auto cs = sets();
  save_checkpoint(path, collect_parameters(cs));
}

void TaskHead::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw StateError("no task-head checkpoint at " + path.string());
  auto s = sets();
  restore_parameters(s, load_checkpoint(path));
}

}  // namespace bleg::models
