#include "bleg/numerics/tape.hpp"

#include <algorithm>

#include "bleg/error.hpp"

namespace bleg::numerics {

Parameter& ParameterSet::add(std::string name, Tensor init, Parameter::Kind kind) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->grad = Tensor(init.shape(), 0.0);
  p->value = std::move(init);
  p->kind = kind;
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterSet::find(std::string_view name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

Parameter& ParameterSet::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw ContractError("unknown parameter '" + std::string(name) + "'");
}

const Parameter& ParameterSet::at(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParameterSet::trainable() {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p->kind == Parameter::Kind::trainable) out.push_back(p.get());
  }
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0);
}

void ParameterSet::set_frozen(bool frozen) {
  for (auto& p : params_) p->frozen = frozen;
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  if (other.size() != size()) throw ContractError("parameter sets differ in size");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = *other.params_[i];
    auto& dst = *params_[i];
    if (src.name != dst.name || !src.value.same_shape(dst.value)) {
      throw ContractError("parameter mismatch copying '" + src.name + "' into '" + dst.name + "'");
    }
    dst.value = src.value;
  }
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.op = "constant";
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node node;
  node.value = p.value;
  node.op = "parameter";
  if (p.receives_grad()) {
    node.param = &p;
    node.needs_grad = true;
  }
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> parents, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.op = op;
  for (const auto& parent : parents) {
    if (&parent.tape() != this) throw ContractError("op '" + std::string(op) + "' mixes tapes");
    node.parents.push_back(parent.id());
    node.needs_grad = node.needs_grad || nodes_[parent.id()].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(backward);
  if (!node.value.all_finite()) {
    throw NumericalError("op '" + std::string(op) + "' produced a non-finite value");
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_of(const Var& v) {
  Node& node = nodes_[v.id()];
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape(), 0.0);
    node.has_grad = true;
  }
  return node.grad;
}

void Tape::backward(const Var& loss) {
  if (backward_done_) throw ContractError("backward() called twice on the same tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + loss.value().shape_string());
  }
  backward_done_ = true;
  grad_of(loss).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.needs_grad) continue;
    if (node.backward) {
      node.backward(*this, node.grad);
      for (auto parent : node.parents) {
        const Node& p = nodes_[parent];
        if (p.has_grad && !p.grad.all_finite()) {
          throw NumericalError("non-finite gradient produced by op '" + std::string(node.op) + "'");
        }
      }
      // Interior gradients are no longer needed once propagated.
      node.grad = Tensor();
      node.has_grad = false;
    } else if (node.param != nullptr) {
      node.param->grad += node.grad;
    }
  }
}

}  // namespace bleg::numerics
