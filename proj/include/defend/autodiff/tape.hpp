#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <vector>

#include "defend/autodiff/tensor.hpp"

namespace defend::ad {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return shape().rows; }
  std::size_t cols() const { return shape().cols; }
  bool requires_grad() const;
  double item() const { return value().item(); }

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Dynamic reverse-mode tape, rebuilt for every forward pass.
//
// Nodes are appended in execution order, so the node vector is already a
// topological order and backward() is a single reverse sweep. Leaves created
// with leaf() are bound to an external Tensor; after backward() every bound
// tensor holds its total derivative (zero when frozen or off-path).
class Tape {
 public:
  // Propagates grad_out (the gradient w.r.t. the node's value) into the
  // gradients of the node's parents through Tape::accumulate / grad().
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // The tensor must outlive the tape. Gradient flows only if
  // param.requires_grad() is set when the leaf is recorded.
  Var leaf(Tensor& param);
  // Records an op output. Without a parent that requires grad the node is a
  // constant and fn is dropped.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);

  // Fills gradients for every node reachable from a scalar loss and writes
  // them to bound leaf tensors.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Gradient buffer of a node during backward, zero-initialised on first use.
  Tensor& grad(std::size_t id);
  void accumulate(std::size_t id, const Tensor& g);

  // Gradient of a node after backward(); nullptr when never reached.
  const Tensor* grad_of(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    BackwardFn backward;
    Tensor* bound = nullptr;
  };

  void check_owned(Var v) const;

  // deque: references to recorded values stay valid as the tape grows.
  std::deque<Node> nodes_;
  std::vector<Tensor> grads_;
};

}  // namespace defend::ad
