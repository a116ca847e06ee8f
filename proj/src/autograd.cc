#include "sca_aec/autograd.h"

#include <algorithm>

#include "sca_aec/error.h"

namespace sca_aec {

Var Graph::Constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::Param(Parameter& p) {
  // A cached leaf is reused only while it still matches the parameter, so a
  // mutated or re-created parameter at the same address gets a fresh leaf.
  auto it = param_vars_.find(&p);
  if (it != param_vars_.end()) {
    const Node& cached = nodes_[it->second.id()];
    if (cached.param == &p && cached.value.shape() == p.value.shape() &&
        std::equal(cached.value.storage().begin(), cached.value.storage().end(),
                   p.value.storage().begin())) {
      return it->second;
    }
    param_vars_.erase(it);
  }
  Node n;
  n.value = p.value;
  n.requires_grad = record_ && p.trainable;
  n.param = &p;
  nodes_.push_back(std::move(n));
  Var v(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  param_vars_.emplace(&p, v);
  return v;
}

template <typename Range>
Var Graph::EmitImpl(Tensor value, const Range& inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const Var& in : inputs) {
      if (nodes_[in.id()].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::Emit(Tensor value, std::initializer_list<Var> inputs,
                BackwardFn backward) {
  return EmitImpl(std::move(value), inputs, std::move(backward));
}

Var Graph::Emit(Tensor value, const std::vector<Var>& inputs,
                BackwardFn backward) {
  return EmitImpl(std::move(value), inputs, std::move(backward));
}

Tensor* Graph::GradSink(Var v) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return &n.grad;
}

void Graph::Sweep(Var loss) {
  if (!record_) FailUsage("backward on a non-recording graph");
  if (consumed_) FailUsage("graph already consumed by a backward pass");
  if (value(loss).size() != 1) {
    FailUsage("backward requires a scalar loss, got shape " +
              ShapeString(value(loss).shape()));
  }
  consumed_ = true;
  Tensor* seed = GradSink(loss);
  if (seed == nullptr) return;
  (*seed)[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) {
      n.backward(*this, n.grad);
      n.backward = nullptr;
    }
  }
}

void Graph::Backward(Var loss) {
  Sweep(loss);
  for (Node& n : nodes_) {
    if (n.param == nullptr || !n.has_grad) continue;
    Parameter& p = *n.param;
    if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
    for (std::size_t k = 0; k < n.grad.size(); ++k) p.grad[k] += n.grad[k];
  }
}

void Graph::Backward(Var loss, GradientMap& out) {
  Sweep(loss);
  for (Node& n : nodes_) {
    if (n.param == nullptr || !n.has_grad) continue;
    auto [it, inserted] = out.try_emplace(n.param, n.grad);
    if (!inserted) {
      for (std::size_t k = 0; k < n.grad.size(); ++k) it->second[k] += n.grad[k];
    }
  }
}

}  // namespace sca_aec
