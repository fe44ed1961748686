#include "bleg/models/lm.hpp"

#include <cmath>

#include "bleg/error.hpp"

namespace bleg::models {

using namespace numerics;

std::vector<std::size_t> SequenceInput::ids() const {
  std::vector<std::size_t> out;
  if (has_graph) out.push_back(kGraph);
  out.insert(out.end(), question.begin(), question.end());
  out.insert(out.end(), answer.begin(), answer.end());
  return out;
}

std::vector<std::uint8_t> SequenceInput::answer_mask() const {
  std::vector<std::uint8_t> m(length(), 0);
  std::fill(m.end() - static_cast<std::ptrdiff_t>(answer.size()), m.end(), std::uint8_t{1});
  return m;
}

LmBatch make_lm_batch(std::span<const SequenceInput> seqs, std::size_t max_len) {
  if (seqs.empty()) throw DimensionError("LM batch needs at least one sequence");
  LmBatch b;
  b.batch = seqs.size();
  b.has_graph = seqs[0].has_graph;
  for (const auto& s : seqs) {
    if (s.has_graph != b.has_graph) throw ContractError("sequences in a batch must agree on the GRAPH slot");
    if (s.length() == 0) throw DimensionError("empty sequence");
    if (s.length() > max_len) {
      throw TruncationError("sequence of length " + std::to_string(s.length()) + " exceeds the maximum length " +
                            std::to_string(max_len));
    }
    b.len = std::max(b.len, s.length());
  }
  b.ids.assign(b.batch * b.len, kPad);
  b.answer_mask.assign(b.batch * b.len, 0);
  for (std::size_t r = 0; r < b.batch; ++r) {
    const auto ids = seqs[r].ids();
    const auto mask = seqs[r].answer_mask();
    std::copy(ids.begin(), ids.end(), b.ids.begin() + static_cast<std::ptrdiff_t>(r * b.len));
    std::copy(mask.begin(), mask.end(), b.answer_mask.begin() + static_cast<std::ptrdiff_t>(r * b.len));
    b.lengths.push_back(ids.size());
  }
  return b;
}

ToyLm::ToyLm(const LmConfig& cfg, Rng& rng, const std::string& prefix) : cfg_(cfg) {
  if (cfg.vocab_size <= kNumSpecialTokens) throw ConfigurationError("LM vocabulary is empty");
  if (cfg.width == 0 || cfg.heads == 0 || cfg.width % cfg.heads != 0) {
    throw ConfigurationError("LM width must be a positive multiple of the head count");
  }
  tok_emb_ = &params_.add(prefix + ".tok_emb", normal_tensor(rng, cfg.vocab_size, cfg.width));
  pos_emb_ = &params_.add(prefix + ".pos_emb", normal_tensor(rng, cfg.max_len, cfg.width));
  for (std::size_t k = 0; k < cfg.blocks; ++k) {
    const std::string p = prefix + ".block" + std::to_string(k);
    Block b;
    b.ln1 = LayerNorm::create(params_, p + ".ln1", cfg.width);
    b.wq = Linear::create(params_, p + ".attn.q", cfg.width, cfg.width, rng);
    b.wk = Linear::create(params_, p + ".attn.k", cfg.width, cfg.width, rng);
    b.wv = Linear::create(params_, p + ".attn.v", cfg.width, cfg.width, rng);
    b.wo = Linear::create(params_, p + ".attn.o", cfg.width, cfg.width, rng);
    if (cfg.lora_rank > 0) {
      b.lora_q = {&params_.add(p + ".attn.q.lora_a", normal_tensor(rng, cfg.width, cfg.lora_rank)),
                  &params_.add(p + ".attn.q.lora_b", Tensor::matrix(cfg.lora_rank, cfg.width))};
      b.lora_v = {&params_.add(p + ".attn.v.lora_a", normal_tensor(rng, cfg.width, cfg.lora_rank)),
                  &params_.add(p + ".attn.v.lora_b", Tensor::matrix(cfg.lora_rank, cfg.width))};
    }
    b.ln2 = LayerNorm::create(params_, p + ".ln2", cfg.width);
    b.ff1 = Linear::create(params_, p + ".ff1", cfg.width, cfg.ff_mult * cfg.width, rng);
    b.ff2 = Linear::create(params_, p + ".ff2", cfg.ff_mult * cfg.width, cfg.width, rng);
    blocks_.push_back(b);
  }
  ln_f_ = LayerNorm::create(params_, prefix + ".ln_f", cfg.width);
}

void ToyLm::freeze_base_for_lora() {
  if (cfg_.lora_rank == 0) throw ConfigurationError("LM has no low-rank factors to train");
  for (auto* p : params_.all()) p->frozen = p->name.find(".lora_") == std::string::npos;
}

Var ToyLm::project(Tape& tape, Var x, const Linear& base, const LowRank& lr) const {
  Var y = base(tape, x);
  if (!lr.a) return y;
  const double s = cfg_.lora_alpha / static_cast<double>(cfg_.lora_rank);
  return add(y, scale(matmul(matmul(x, tape.param(*lr.a)), tape.param(*lr.b)), s));
}

LmOutput ToyLm::forward(Tape& tape, const LmBatch& batch, Var graph_embeddings, bool want_logits) const {
  const std::size_t B = batch.batch;
  const std::size_t L = batch.len;
  const std::size_t H = cfg_.width;
  if (L > cfg_.max_len) throw TruncationError("batch length exceeds the LM maximum length");
  for (auto id : batch.ids)
    if (id >= cfg_.vocab_size) throw DimensionError("token id " + std::to_string(id) + " outside the vocabulary");

  Var tok = tape.param(*tok_emb_);
  Var x;
  if (batch.has_graph) {
    if (!graph_embeddings.valid() || graph_embeddings.rows() != B || graph_embeddings.cols() != H) {
      throw DimensionError("GRAPH slot needs a batch x width embedding matrix");
    }
    // Stack [graph rows | token rows] and interleave them into sequence order.
    std::vector<std::size_t> token_ids;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 1; t < L; ++t) token_ids.push_back(batch.ids[b * L + t]);
    std::vector<Var> parts{graph_embeddings};
    if (!token_ids.empty()) parts.push_back(gather_rows(tok, token_ids));
    Var stacked = concat_rows(parts);
    std::vector<std::size_t> order;
    for (std::size_t b = 0; b < B; ++b) {
      order.push_back(b);
      for (std::size_t t = 1; t < L; ++t) order.push_back(B + b * (L - 1) + (t - 1));
    }
    x = gather_rows(stacked, order);
  } else {
    x = gather_rows(tok, batch.ids);
  }
  std::vector<std::size_t> positions;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < L; ++t) positions.push_back(t);
  x = add(x, gather_rows(tape.param(*pos_emb_), positions));

  // Causal mask that also hides padded keys.
  std::vector<std::shared_ptr<const std::vector<std::uint8_t>>> masks;
  for (std::size_t b = 0; b < B; ++b) {
    auto m = std::make_shared<std::vector<std::uint8_t>>(L * L, 0);
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j <= i; ++j) (*m)[i * L + j] = j < batch.lengths[b] ? 1 : 0;
    masks.push_back(std::move(m));
  }

  const std::size_t dh = H / cfg_.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const auto& blk : blocks_) {
    Var h = blk.ln1(tape, x);
    Var q = project(tape, h, blk.wq, blk.lora_q);
    Var k = blk.wk(tape, h);
    Var v = project(tape, h, blk.wv, blk.lora_v);
    std::vector<Var> rows;
    for (std::size_t b = 0; b < B; ++b) {
      Var qb = slice_rows(q, b * L, L);
      Var kb = slice_rows(k, b * L, L);
      Var vb = slice_rows(v, b * L, L);
      std::vector<Var> heads;
      for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
        Var qh = slice_cols(qb, hd * dh, dh);
        Var kh = slice_cols(kb, hd * dh, dh);
        Var vh = slice_cols(vb, hd * dh, dh);
        Var att = masked_softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt), masks[b]);
        heads.push_back(matmul(att, vh));
      }
      rows.push_back(heads.size() == 1 ? heads[0] : concat_cols(heads));
    }
    Var attn = rows.size() == 1 ? rows[0] : concat_rows(rows);
    x = add(x, blk.wo(tape, attn));
    x = add(x, blk.ff2(tape, gelu(blk.ff1(tape, blk.ln2(tape, x)))));
  }
  LmOutput out;
  out.hidden = ln_f_(tape, x);
  if (want_logits) out.logits = matmul(out.hidden, transpose(tok));
  return out;
}

Var ToyLm::output_logits(Tape& tape, Var hidden_rows) const {
  return matmul(hidden_rows, transpose(tape.param(*tok_emb_)));
}

std::vector<std::size_t> greedy_decode(const ToyLm& lm, const Tensor* graph_embedding,
                                       std::vector<std::size_t> prefix, std::size_t max_new) {
  std::vector<std::size_t> out;
  for (std::size_t step = 0; step < max_new; ++step) {
    SequenceInput seq;
    seq.has_graph = graph_embedding != nullptr;
    seq.question = prefix;
    const std::vector<SequenceInput> seqs{seq};
    const LmBatch batch = make_lm_batch(seqs, lm.config().max_len);
    Tape tape;
    Var g = graph_embedding ? tape.constant(*graph_embedding) : Var{};
    const Tensor& logits = lm.forward(tape, batch, g).logits.value();
    const std::size_t last = batch.lengths[0] - 1;
    std::size_t best = 0;
    for (std::size_t v = 1; v < logits.cols(); ++v)
      if (logits(last, v) > logits(last, best)) best = v;
    out.push_back(best);
    if (best == kEos) break;
    prefix.push_back(best);
  }
  return out;
}

}  // namespace bleg::models
