// SPDX-License-Identifier: Apache-2.0
#include "nmt/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace nmt {

Parameter& ParameterSet::add(std::string name, Tensor value, bool trainable) {
  if (by_name_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = std::move(value);
  p->trainable = trainable;
  p->index = params_.size();
  by_name_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterSet::find(std::string_view name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParameterSet::find(std::string_view name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParameterSet::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named " + std::string(name));
}

const Parameter& ParameterSet::at(std::string_view name) const {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named " + std::string(name));
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  if (other.size() != size()) throw ShapeError("parameter sets differ in size");
  for (std::size_t i = 0; i < size(); ++i) {
    const Parameter& src = other.at((*this)[i].name);
    require_same_shape(src.value, (*this)[i].value, "copy_values_from");
    (*this)[i].value = src.value;
  }
}

Gradients::Gradients(const ParameterSet& params) {
  grads_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) grads_.emplace_back(params[i].value.shape());
}

void Gradients::zero() {
  for (auto& g : grads_) g.fill(0.0f);
}

void Gradients::add(const Gradients& other) {
  if (other.size() != size()) throw ShapeError("gradient sets differ in size");
  for (std::size_t i = 0; i < size(); ++i) axpy(1.0f, other.grads_[i], grads_[i]);
}

void Gradients::scale(float factor) {
  for (auto& g : grads_)
    for (auto& v : g) v *= factor;
}

double Gradients::global_norm() const {
  double s = 0.0;
  for (const auto& g : grads_) s += squared_norm(g);
  return std::sqrt(s);
}

Tape& Expr::tape() const {
  if (!tape_) throw StateError("use of an empty expression");
  return *tape_;
}

const Tensor& Expr::value() const { return tape().value(id_); }
const Tensor& Expr::grad() const { return tape().grad(id_); }

Expr Tape::input(std::string name) {
  Node node;
  node.kind = Kind::kInput;
  node.op = "input";
  node.name = std::move(name);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Expr Tape::input(std::string name, const Shape& shape) {
  Expr e = input(std::move(name));
  nodes_.back().value = Tensor(shape);
  nodes_.back().evaluated = true;
  return e;
}

Expr Tape::input(std::string name, Tensor value) {
  Expr e = input(std::move(name));
  nodes_.back().value = std::move(value);
  nodes_.back().evaluated = true;
  nodes_.back().bound = true;
  return e;
}

Expr Tape::constant(Tensor value) {
  Node node;
  node.kind = Kind::kConstant;
  node.op = "constant";
  node.value = std::move(value);
  node.evaluated = true;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Expr Tape::parameter(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
  Node node;
  node.kind = Kind::kParameter;
  node.op = "parameter";
  node.param = &p;
  node.name = p.name;
  node.value = p.value;
  node.evaluated = true;
  node.requires_grad = p.trainable;
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Expr Tape::record(std::string_view op, std::vector<Expr> inputs, ForwardFn forward,
                  BackwardFn backward) {
  Node node;
  node.kind = Kind::kOp;
  node.op = op;
  node.forward = std::move(forward);
  node.backward = std::move(backward);
  node.inputs.reserve(inputs.size());
  bool ready = true;
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw StateError("expression belongs to a different tape");
    node.inputs.push_back(in.id());
    const Node& parent = nodes_.at(in.id());
    node.requires_grad = node.requires_grad || parent.requires_grad;
    ready = ready && parent.evaluated;
  }
  if (!node.backward) node.requires_grad = false;
  nodes_.push_back(std::move(node));
  if (ready) evaluate(nodes_.back());
  backward_done_ = false;
  return {this, nodes_.size() - 1};
}

void Tape::evaluate(Node& node) {
  std::vector<const Tensor*> in;
  in.reserve(node.inputs.size());
  for (auto id : node.inputs) in.push_back(&nodes_[id].value);
  node.value = node.forward(in);
  node.evaluated = true;
}

void Tape::forward(const Bindings& bindings) {
  for (auto& node : nodes_) {
    if (node.kind != Kind::kInput) continue;
    if (auto it = bindings.find(node.name); it != bindings.end()) {
      if (node.evaluated && !node.bound) require_same_shape(node.value, it->second, "binding");
      node.value = it->second;
      node.evaluated = true;
      node.bound = true;
    } else if (!node.bound) {
      throw MissingBindingError("no value bound for input '" + node.name + "'");
    }
  }
  for (auto& node : nodes_) {
    if (node.kind == Kind::kParameter) node.value = node.param->value;
    if (node.kind == Kind::kOp) evaluate(node);
    node.has_grad = false;
  }
  backward_done_ = false;
}

void Tape::backward(Expr loss) {
  if (&loss.tape() != this) throw StateError("loss belongs to a different tape");
  for (const auto& node : nodes_) {
    if (!node.evaluated || (node.kind == Kind::kInput && !node.bound)) {
      throw StateError("backward() called before forward(): unevaluated node '" + std::string(node.op) + "'");
    }
  }
  Node& root = nodes_.at(loss.id());
  if (root.value.size() != 1) {
    throw ShapeError("backward() needs a one-element loss, got " + to_string(root.value.shape()));
  }
  for (auto& node : nodes_) node.has_grad = false;

  root.grad = Tensor(root.value.shape(), 1.0f);
  root.has_grad = true;

  std::vector<const Tensor*> in;
  std::vector<Tensor*> in_grads;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.has_grad || node.kind != Kind::kOp || !node.requires_grad) continue;
    in.clear();
    in_grads.clear();
    for (auto pid : node.inputs) {
      Node& parent = nodes_[pid];
      in.push_back(&parent.value);
      if (parent.requires_grad) {
        if (!parent.has_grad) {
          parent.grad = Tensor(parent.value.shape(), 0.0f);
          parent.has_grad = true;
        }
        in_grads.push_back(&parent.grad);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    node.backward(BackwardArgs{in, node.value, node.grad, in_grads});
  }
  // Nodes the loss does not depend on get explicit zero gradients.
  for (auto& node : nodes_) {
    if (!node.has_grad) {
      node.grad = Tensor(node.value.shape(), 0.0f);
      node.has_grad = true;
    }
  }
  backward_done_ = true;
}

void Tape::accumulate(Gradients& into) const {
  if (!backward_done_) throw StateError("accumulate() before backward()");
  for (const auto& [param, id] : param_nodes_) {
    if (!param->trainable) continue;
    axpy(1.0f, nodes_[id].grad, into[*param]);
  }
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& node = nodes_.at(id);
  if (!node.evaluated) throw StateError("value of unevaluated node '" + std::string(node.op) + "'");
  return node.value;
}

const Tensor& Tape::grad(std::size_t id) const {
  const Node& node = nodes_.at(id);
  if (!backward_done_ || !node.has_grad) throw StateError("gradient requested before backward()");
  return node.grad;
}

}  // namespace nmt
