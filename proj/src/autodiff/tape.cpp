#include "defend/autodiff/tape.hpp"

#include "defend/errors.hpp"

namespace defend::ad {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

void Tape::check_owned(Var v) const {
  if (!v.valid() || &v.tape() != this || v.id() >= nodes_.size()) {
    throw PreconditionError("tape: variable does not belong to this tape");
  }
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), false, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor& param) {
  Tensor copy(param.shape(), param.storage());
  nodes_.push_back(Node{std::move(copy), param.requires_grad(), {}, &param});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  bool needs = false;
  for (const Var& p : parents) {
    check_owned(p);
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), needs, needs ? std::move(fn) : BackwardFn{}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Tensor& g = grads_[id];
  if (g.empty() && !nodes_[id].value.empty()) g = Tensor(nodes_[id].value.shape(), 0.0);
  return g;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  Tensor& dst = grad(id);
  if (dst.shape() != g.shape()) {
    throw DimensionError("tape: gradient shape " + g.shape().str() + " for node of shape " +
                         dst.shape().str());
  }
  auto d = dst.data();
  auto s = g.data();
  for (std::size_t k = 0; k < d.size(); ++k) d[k] += s[k];
}

const Tensor* Tape::grad_of(Var v) const {
  check_owned(v);
  if (grads_.size() != nodes_.size() || grads_[v.id()].empty()) return nullptr;
  return &grads_[v.id()];
}

void Tape::backward(Var loss) {
  check_owned(loss);
  if (loss.value().size() != 1) {
    throw PreconditionError("backward: loss must be a scalar, got shape " + loss.shape().str());
  }
  grads_.assign(nodes_.size(), Tensor{});
  if (nodes_[loss.id()].requires_grad) grads_[loss.id()] = Tensor({1, 1}, 1.0);

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || !node.backward || grads_[id].empty()) continue;
    // grads_ is never resized during the sweep, so the reference stays valid.
    node.backward(*this, grads_[id]);
  }

  for (Node& node : nodes_) {
    if (node.bound != nullptr) node.bound->zero_grad();
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    Node& node = nodes_[id];
    if (node.bound == nullptr || !node.requires_grad || grads_[id].empty()) continue;
    auto dst = node.bound->grad();
    auto src = grads_[id].data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

}  // namespace defend::ad
