#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "bleg/rng.hpp"

namespace bleg::eval {

using VarSet = std::vector<std::size_t>;

/// Probability table over finitely many discrete variables, row-major with
/// the last variable fastest.
class DiscreteJoint {
 public:
  /// Raises ParameterError unless the table matches the alphabet sizes, is
  /// nonnegative and sums to 1 within 1e-12.
  DiscreteJoint(std::vector<std::size_t> sizes, std::vector<double> probs);

  /// Dirichlet(1)-like random table (normalized exponentials).
  static DiscreteJoint random(const std::vector<std::size_t>& sizes, Rng& rng);

  [[nodiscard]] const std::vector<std::size_t>& sizes() const { return sizes_; }
  [[nodiscard]] const std::vector<double>& probs() const { return p_; }
  [[nodiscard]] std::size_t num_vars() const { return sizes_.size(); }
  [[nodiscard]] double at(const std::vector<std::size_t>& values) const;

  /// Joint of `vars`, in the given order.
  [[nodiscard]] DiscreteJoint marginal(const VarSet& vars) const;

  /// Replaces variable `var` by f(value) with alphabet size `new_size`.
  [[nodiscard]] DiscreteJoint map(std::size_t var, const std::function<std::size_t(std::size_t)>& f,
                                  std::size_t new_size) const;

  /// Appends a variable drawn from channel(value of `var`) (rows sum to 1).
  [[nodiscard]] DiscreteJoint append_channel(std::size_t var, const std::vector<std::vector<double>>& channel) const;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<double> p_;
};

/// Plug-in values in nats with 0 log 0 = 0.
double entropy(const DiscreteJoint& j, const VarSet& a);
double mutual_information(const DiscreteJoint& j, const VarSet& a, const VarSet& b);
double conditional_mi(const DiscreteJoint& j, const VarSet& a, const VarSet& b, const VarSet& c);

/// Variables (X^G, X^T, Y), Y = X^G xor X^T with independent uniform bits.
DiscreteJoint xor_joint();

struct CorruptionPoint {
  double p = 0.0;
  double i_gprime_y = 0.0;
  bool exceeds_graph_only = false;  // I(X^G';Y) > I(X^G;Y)
};

struct TheoremReport {
  double i_g_y = 0.0;
  double i_t_y = 0.0;
  double i_t_y_given_g = 0.0;
  double i_gt_y = 0.0;
  /// |I(G,T;Y) - I(G;Y) - I(T;Y|G)|
  double chain_rule_gap = 0.0;
  bool assumption_holds = false;  // I(T;Y|G) > 0
  bool strict_gain = false;       // I(G,T;Y) > I(G;Y)
  std::vector<CorruptionPoint> sweep;
  /// Largest swept p such that the inequality holds at every swept p up to it.
  std::optional<double> holds_up_to;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// `joint` has variables (X^G, X^T, Y). X^G' copies both of X^G and X^T,
/// each through a symmetric channel that keeps the value with probability
/// 1 - p and otherwise picks one of the other values uniformly.
TheoremReport theorem_check(const DiscreteJoint& joint, const std::vector<double>& corruption);

/// 0, 0.05, ..., 0.5
std::vector<double> default_corruption_sweep();

}  // namespace bleg::eval
