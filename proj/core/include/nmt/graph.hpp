// SPDX-License-Identifier: Apache-2.0
//
// Dynamic computation graph with reverse-mode differentiation.
//
// A Tape records nodes in creation order, which is also a topological order.
// Nodes evaluate eagerly as soon as all their inputs have values; graphs
// built over unbound input placeholders are evaluated by forward(). Model
// parameters live outside the tape in a ParameterSet and enter the graph as
// leaf nodes; backward() leaves their gradients on the tape, and
// accumulate() adds them into a Gradients buffer owned by the caller.
#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nmt/tensor.hpp"

namespace nmt {

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
  /// Position inside the owning ParameterSet.
  std::size_t index = 0;
};

/// Ordered, name-unique collection of parameters with stable addresses.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  /// Throws std::invalid_argument when the name is already taken.
  Parameter& add(std::string name, Tensor value, bool trainable = true);

  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t element_count() const;

  /// Copies values (not identity) from a set with identical names and shapes.
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t, std::less<>> by_name_;
};

/// Gradient buffers aligned with a ParameterSet.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet& params);

  Tensor& operator[](const Parameter& p) { return grads_.at(p.index); }
  const Tensor& operator[](const Parameter& p) const { return grads_.at(p.index); }
  Tensor& operator[](std::size_t i) { return grads_.at(i); }
  const Tensor& operator[](std::size_t i) const { return grads_.at(i); }
  std::size_t size() const { return grads_.size(); }

  void zero();
  void add(const Gradients& other);
  void scale(float factor);
  double global_norm() const;

 private:
  std::vector<Tensor> grads_;
};

class Tape;

/// Handle to a node recorded on a Tape.
class Expr {
 public:
  Expr() = default;
  Expr(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const { return id_; }

  /// Reference into the tape; recording further nodes may invalidate it.
  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using Bindings = std::map<std::string, Tensor, std::less<>>;

class Tape {
 public:
  using Inputs = std::span<const Tensor* const>;
  using ForwardFn = std::function<Tensor(Inputs)>;

  struct BackwardArgs {
    Inputs inputs;
    const Tensor& value;
    const Tensor& grad;
    /// One slot per input; nullptr when that input needs no gradient.
    std::span<Tensor* const> input_grads;
  };
  using BackwardFn = std::function<void(const BackwardArgs&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Named placeholder to be bound by forward().
  Expr input(std::string name);
  /// Placeholder with a declared shape. Operations recorded on it evaluate
  /// provisionally on zeros, so shape checks happen at construction time;
  /// forward() must bind it before backward() is allowed.
  Expr input(std::string name, const Shape& shape);
  /// Placeholder bound immediately.
  Expr input(std::string name, Tensor value);
  Expr constant(Tensor value);
  /// Leaf node for a model parameter; one node per parameter per tape.
  Expr parameter(const Parameter& p);

  /// Records an operation node. Evaluates it immediately if all inputs have
  /// values. The backward function receives the node's output gradient and
  /// must add (not assign) into the input gradient slots it is given.
  Expr record(std::string_view op, std::vector<Expr> inputs, ForwardFn forward, BackwardFn backward);

  /// Binds placeholders and evaluates every node in creation order.
  void forward(const Bindings& bindings = {});

  /// Reverse pass from a one-element loss node. Each node is visited once.
  void backward(Expr loss);

  /// Adds parameter-leaf gradients into `into`, indexed by Parameter::index.
  void accumulate(Gradients& into) const;

  const Tensor& value(std::size_t id) const;
  const Tensor& grad(std::size_t id) const;
  bool has_value(std::size_t id) const { return nodes_.at(id).evaluated; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::string_view op(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  enum class Kind { kInput, kConstant, kParameter, kOp };

  struct Node {
    Kind kind = Kind::kOp;
    std::string_view op;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    bool evaluated = false;
    /// Inputs only: holds a caller-supplied value.
    bool bound = false;
    bool requires_grad = false;
    bool has_grad = false;
    ForwardFn forward;
    BackwardFn backward;
    const Parameter* param = nullptr;
    std::string name;
  };

  void evaluate(Node& node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

}  // namespace nmt
