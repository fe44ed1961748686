#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bleg/numerics/tensor.hpp"

namespace bleg::numerics {

/// A named tensor owned by a model component. Buffers (batch-norm running
/// statistics) live alongside trainable weights so a checkpoint captures
/// both, but they never receive gradients.
struct Parameter {
  enum class Kind { trainable, buffer };

  std::string name;
  Tensor value;
  Tensor grad;
  Kind kind = Kind::trainable;
  bool frozen = false;

  [[nodiscard]] bool receives_grad() const noexcept { return kind == Kind::trainable && !frozen; }
};

/// Ordered parameter registry with stable addresses; iteration order is the
/// registration order, which the optimizer relies on for reproducibility.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter& add(std::string name, Tensor init, Parameter::Kind kind = Parameter::Kind::trainable);
  [[nodiscard]] Parameter& at(std::string_view name);
  [[nodiscard]] const Parameter& at(std::string_view name) const;
  [[nodiscard]] Parameter* find(std::string_view name);

  [[nodiscard]] std::vector<Parameter*> all();
  [[nodiscard]] std::vector<const Parameter*> all() const;
  [[nodiscard]] std::vector<Parameter*> trainable();
  [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }

  void zero_grad();
  void set_frozen(bool frozen);
  /// Copies values (not gradients) from another set with identical names and shapes.
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Tape;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] std::size_t id() const noexcept { return id_; }
  [[nodiscard]] Tape& tape() const noexcept { return *tape_; }
  [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }
  [[nodiscard]] std::size_t rows() const { return value().rows(); }
  [[nodiscard]] std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recording of every op applied during one forward pass.
/// Gradients are propagated in reverse recording order and accumulated into
/// Parameter::grad for each trainable, unfrozen leaf.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf for a parameter. Frozen parameters and buffers are recorded as
  /// constants so no gradient can reach them.
  Var param(Parameter& p);

  /// Records the result of an op. `backward` receives the gradient of the
  /// output and must accumulate into the parents through `grad_of`.
  Var record(std::string_view op, Tensor value, std::vector<Var> parents, BackwardFn backward);

  [[nodiscard]] const Tensor& value(const Var& v) const { return nodes_[v.id()].value; }
  [[nodiscard]] bool needs_grad(const Var& v) const { return nodes_[v.id()].needs_grad; }
  /// Gradient buffer of a parent, zero-initialized on first access.
  Tensor& grad_of(const Var& v);

  /// Propagates d(loss)/d(.) back to the parameter leaves.
  void backward(const Var& loss);

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool needs_grad = false;
    Parameter* param = nullptr;
    std::string_view op;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

}  // namespace bleg::numerics
