#include "bleg/eval/theory.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "bleg/error.hpp"

namespace bleg::eval {

namespace {

std::size_t product(const std::vector<std::size_t>& sizes) {
  return std::accumulate(sizes.begin(), sizes.end(), std::size_t{1}, std::multiplies<>());
}

std::vector<std::size_t> decode(std::size_t flat, const std::vector<std::size_t>& sizes) {
  std::vector<std::size_t> v(sizes.size());
  for (std::size_t k = sizes.size(); k-- > 0;) {
    v[k] = flat % sizes[k];
    flat /= sizes[k];
  }
  return v;
}

std::size_t encode(const std::vector<std::size_t>& values, const std::vector<std::size_t>& sizes) {
  std::size_t flat = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) flat = flat * sizes[k] + values[k];
  return flat;
}

// Flat marginal table over `vars` plus its alphabet size.
std::pair<std::vector<double>, std::size_t> table(const DiscreteJoint& j, const VarSet& vars) {
  const auto m = j.marginal(vars);
  return {m.probs(), m.probs().size()};
}

double plogp_ratio(double p, double ratio) { return p > 0.0 ? p * std::log(ratio) : 0.0; }

}  // namespace

DiscreteJoint::DiscreteJoint(std::vector<std::size_t> sizes, std::vector<double> probs)
    : sizes_(std::move(sizes)), p_(std::move(probs)) {
  for (auto s : sizes_) {
    if (s == 0) throw ParameterError("alphabet sizes must be positive");
  }
  if (p_.size() != product(sizes_)) {
    throw ParameterError(fmt::format("table has {} cells, alphabets need {}", p_.size(), product(sizes_)));
  }
  double total = 0.0;
  for (double p : p_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ParameterError("probabilities must be finite and nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ParameterError(fmt::format("probabilities sum to {:.17g}", total));
}

DiscreteJoint DiscreteJoint::random(const std::vector<std::size_t>& sizes, Rng& rng) {
  std::vector<double> p(product(sizes));
  double total = 0.0;
  for (auto& v : p) {
    v = -std::log(1.0 - rng.uniform());
    total += v;
  }
  for (auto& v : p) v /= total;
  return DiscreteJoint(sizes, std::move(p));
}

double DiscreteJoint::at(const std::vector<std::size_t>& values) const {
  if (values.size() != sizes_.size()) throw DimensionError("one value per variable is required");
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (values[k] >= sizes_[k]) throw ParameterError("value outside the alphabet");
  }
  return p_[encode(values, sizes_)];
}

DiscreteJoint DiscreteJoint::marginal(const VarSet& vars) const {
  std::vector<std::size_t> sizes;
  for (auto v : vars) {
    if (v >= sizes_.size()) throw ParameterError(fmt::format("no variable {}", v));
    sizes.push_back(sizes_[v]);
  }
  std::vector<double> out(product(sizes), 0.0);
  std::vector<std::size_t> sub(vars.size());
  for (std::size_t i = 0; i < p_.size(); ++i) {
    const auto values = decode(i, sizes_);
    for (std::size_t k = 0; k < vars.size(); ++k) sub[k] = values[vars[k]];
    out[encode(sub, sizes)] += p_[i];
  }
  return DiscreteJoint(std::move(sizes), std::move(out));
}

DiscreteJoint DiscreteJoint::map(std::size_t var, const std::function<std::size_t(std::size_t)>& f,
                                 std::size_t new_size) const {
  if (var >= sizes_.size()) throw ParameterError(fmt::format("no variable {}", var));
  auto sizes = sizes_;
  sizes[var] = new_size;
  std::vector<double> out(product(sizes), 0.0);
  for (std::size_t i = 0; i < p_.size(); ++i) {
    auto values = decode(i, sizes_);
    values[var] = f(values[var]);
    if (values[var] >= new_size) throw ParameterError("mapped value outside the new alphabet");
    out[encode(values, sizes)] += p_[i];
  }
  return DiscreteJoint(std::move(sizes), std::move(out));
}

DiscreteJoint DiscreteJoint::append_channel(std::size_t var, const std::vector<std::vector<double>>& channel) const {
  if (var >= sizes_.size()) throw ParameterError(fmt::format("no variable {}", var));
  if (channel.size() != sizes_[var] || channel.empty()) throw DimensionError("one channel row per input value");
  const std::size_t out_size = channel.front().size();
  for (const auto& row : channel) {
    if (row.size() != out_size) throw DimensionError("channel rows differ in length");
  }
  auto sizes = sizes_;
  sizes.push_back(out_size);
  std::vector<double> out;
  out.reserve(p_.size() * out_size);
  for (std::size_t i = 0; i < p_.size(); ++i) {
    const auto values = decode(i, sizes_);
    for (std::size_t o = 0; o < out_size; ++o) out.push_back(p_[i] * channel[values[var]][o]);
  }
  return DiscreteJoint(std::move(sizes), std::move(out));
}

double entropy(const DiscreteJoint& j, const VarSet& a) {
  double h = 0.0;
  for (double p : table(j, a).first) h -= plogp_ratio(p, p);
  return h;
}

double mutual_information(const DiscreteJoint& j, const VarSet& a, const VarSet& b) {
  VarSet ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  const auto [pab, nab] = table(j, ab);
  const auto [pa, na] = table(j, a);
  const auto [pb, nb] = table(j, b);
  double mi = 0.0;
  for (std::size_t ia = 0; ia < na; ++ia)
    for (std::size_t ib = 0; ib < nb; ++ib) {
      const double p = pab[ia * nb + ib];
      if (p > 0.0) mi += plogp_ratio(p, p / (pa[ia] * pb[ib]));
    }
  return mi;
}

double conditional_mi(const DiscreteJoint& j, const VarSet& a, const VarSet& b, const VarSet& c) {
  VarSet cab = c, ca = c, cb = c;
  cab.insert(cab.end(), a.begin(), a.end());
  cab.insert(cab.end(), b.begin(), b.end());
  ca.insert(ca.end(), a.begin(), a.end());
  cb.insert(cb.end(), b.begin(), b.end());
  const auto [pcab, ncab] = table(j, cab);
  const auto [pca, nca] = table(j, ca);
  const auto [pcb, ncb] = table(j, cb);
  const auto [pc, nc] = table(j, c);
  const std::size_t na = nca / nc, nb = ncb / nc;
  double mi = 0.0;
  for (std::size_t ic = 0; ic < nc; ++ic)
    for (std::size_t ia = 0; ia < na; ++ia)
      for (std::size_t ib = 0; ib < nb; ++ib) {
        const double p = pcab[(ic * na + ia) * nb + ib];
        if (p > 0.0) mi += plogp_ratio(p, p * pc[ic] / (pca[ic * na + ia] * pcb[ic * nb + ib]));
      }
  (void)ncab;
  return mi;
}

DiscreteJoint xor_joint() {
  std::vector<double> p(8, 0.0);
  for (std::size_t g = 0; g < 2; ++g)
    for (std::size_t t = 0; t < 2; ++t) p[(g * 2 + t) * 2 + (g ^ t)] = 0.25;
  return DiscreteJoint({2, 2, 2}, std::move(p));
}

std::vector<double> default_corruption_sweep() {
  std::vector<double> out;
  for (int k = 0; k <= 10; ++k) out.push_back(0.05 * k);
  return out;
}

TheoremReport theorem_check(const DiscreteJoint& joint, const std::vector<double>& corruption) {
  if (joint.num_vars() != 3) throw DimensionError("theorem check expects variables (X^G, X^T, Y)");
  TheoremReport r;
  const VarSet g{0}, t{1}, y{2}, gt{0, 1};
  r.i_g_y = mutual_information(joint, g, y);
  r.i_t_y = mutual_information(joint, t, y);
  r.i_t_y_given_g = conditional_mi(joint, t, y, g);
  r.i_gt_y = mutual_information(joint, gt, y);
  r.chain_rule_gap = std::abs(r.i_gt_y - r.i_g_y - r.i_t_y_given_g);
  constexpr double kTol = 1e-12;
  r.assumption_holds = r.i_t_y_given_g > kTol;
  r.strict_gain = r.i_gt_y > r.i_g_y + kTol;

  bool prefix = true;
  for (double p : corruption) {
    if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("corruption probability must lie in [0, 1]");
    auto channel = [p](std::size_t k) {
      std::vector<std::vector<double>> c(k, std::vector<double>(k, k > 1 ? p / static_cast<double>(k - 1) : 0.0));
      for (std::size_t i = 0; i < k; ++i) c[i][i] = k > 1 ? 1.0 - p : 1.0;
      return c;
    };
    const auto ext = joint.append_channel(0, channel(joint.sizes()[0])).append_channel(1, channel(joint.sizes()[1]));
    CorruptionPoint pt;
    pt.p = p;
    pt.i_gprime_y = mutual_information(ext, {3, 4}, y);
    pt.exceeds_graph_only = pt.i_gprime_y > r.i_g_y + kTol;
    prefix = prefix && pt.exceeds_graph_only;
    if (prefix) r.holds_up_to = p;
    r.sweep.push_back(pt);
  }
  return r;
}

nlohmann::json TheoremReport::to_json() const {
  nlohmann::json sweep_j = nlohmann::json::array();
  for (const auto& s : sweep) {
    sweep_j.push_back({{"p", s.p}, {"i_gprime_y", s.i_gprime_y}, {"exceeds_graph_only", s.exceeds_graph_only}});
  }
  return {{"i_g_y", i_g_y},
          {"i_t_y", i_t_y},
          {"i_t_y_given_g", i_t_y_given_g},
          {"i_gt_y", i_gt_y},
          {"chain_rule_gap", chain_rule_gap},
          {"assumption_holds", assumption_holds},
          {"strict_gain", strict_gain},
          {"sweep", sweep_j},
          {"holds_up_to", holds_up_to ? nlohmann::json(*holds_up_to) : nlohmann::json(nullptr)}};
}

}  // namespace bleg::eval
