#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "duocast/error.hpp"
#include "duocast/tensor.hpp"

namespace duocast {

template <class Real>
class Tape;

// Learnable tensor with a gradient accumulator of identical shape.
template <class Real>
class ParamTensor {
 public:
  ParamTensor(std::string id, Tensor<Real> value)
      : id_(std::move(id)), value_(std::move(value)), grad_(value_.shape()) {}

  const std::string& id() const { return id_; }
  Tensor<Real>& value() { return value_; }
  const Tensor<Real>& value() const { return value_; }
  Tensor<Real>& grad() { return grad_; }
  const Tensor<Real>& grad() const { return grad_; }
  std::size_t size() const { return value_.size(); }

  void zero_grad() { grad_.fill(Real(0)); }

  // Frozen parameters enter a tape as constants and never accumulate gradient.
  bool frozen = false;

 private:
  std::string id_;
  Tensor<Real> value_;
  Tensor<Real> grad_;
};

// Named parameters in a stable (lexicographic) order; flat-indexable.
template <class Real>
class ParamSet {
 public:
  using Map = std::map<std::string, ParamTensor<Real>>;

  ParamTensor<Real>& add(const std::string& id, Tensor<Real> init) {
    require(!params_.contains(id), "duplicate parameter id '" + id + "'");
    return params_.emplace(id, ParamTensor<Real>(id, std::move(init))).first->second;
  }
  bool contains(const std::string& id) const { return params_.contains(id); }
  ParamTensor<Real>& operator[](const std::string& id) {
    auto it = params_.find(id);
    require(it != params_.end(), "unknown parameter id '" + id + "'");
    return it->second;
  }
  const ParamTensor<Real>& operator[](const std::string& id) const {
    auto it = params_.find(id);
    require(it != params_.end(), "unknown parameter id '" + id + "'");
    return it->second;
  }

  typename Map::iterator begin() { return params_.begin(); }
  typename Map::iterator end() { return params_.end(); }
  typename Map::const_iterator begin() const { return params_.begin(); }
  typename Map::const_iterator end() const { return params_.end(); }
  std::size_t count() const { return params_.size(); }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
  }

  // Freezes or unfreezes every parameter whose id starts with prefix.
  void set_frozen(const std::string& prefix, bool frozen) {
    for (auto& [id, p] : params_)
      if (id.starts_with(prefix)) p.frozen = frozen;
  }

  template <class To>
  ParamSet<To> cast() const {
    ParamSet<To> out;
    for (const auto& [id, p] : params_) {
      auto& q = out.add(id, p.value().template cast<To>());
      q.frozen = p.frozen;
    }
    return out;
  }

 private:
  Map params_;
};

// Handle to a node on a tape.
template <class Real>
class Var {
 public:
  Var() = default;
  Var(Tape<Real>* tape, int id) : tape_(tape), id_(id) {}

  Tape<Real>& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor<Real>& value() const;
  const Shape& shape() const { return value().shape(); }
  int dim(int axis) const { return value().dim(axis); }

 private:
  Tape<Real>* tape_ = nullptr;
  int id_ = -1;
};

// Per-evaluation record of executed primitives. Never shared across threads.
template <class Real>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  // A tape built with grad_enabled = false treats every parameter as a
  // constant, so nothing is kept for a backward pass.
  explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Real> constant(Tensor<Real> value) {
    nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
    return Var<Real>(this, static_cast<int>(nodes_.size()) - 1);
  }

  Var<Real> param(ParamTensor<Real>& p) {
    const bool trainable = grad_enabled_ && !p.frozen;
    nodes_.push_back(Node{p.value(), {}, trainable, trainable ? &p : nullptr, {}});
    return Var<Real>(this, static_cast<int>(nodes_.size()) - 1);
  }

  // Records an op output; it requires grad iff any input does.
  Var<Real> record(Tensor<Real> value, std::initializer_list<int> inputs, BackwardFn fn) {
    return record(std::move(value), std::vector<int>(inputs), std::move(fn));
  }
  Var<Real> record(Tensor<Real> value, const std::vector<int>& inputs, BackwardFn fn) {
    bool rg = false;
    for (int i : inputs) rg = rg || nodes_[static_cast<std::size_t>(i)].requires_grad;
    nodes_.push_back(Node{std::move(value), {}, rg, nullptr, rg ? std::move(fn) : BackwardFn{}});
    if (rg) ++op_count_;
    return Var<Real>(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Tensor<Real>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  // Gradient buffer of a node, allocated as zeros on first touch.
  Tensor<Real>& grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor<Real>(n.value.shape());
    return n.grad;
  }
  bool has_grad(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.empty(); }

  // Seeds d(loss)/d(loss) = 1, replays adjoints newest-first, then adds leaf
  // gradients into their ParamTensor accumulators.
  void backward(Var<Real> loss) {
    require(&loss.tape() == this, "loss belongs to a different tape");
    require(value(loss.id()).size() == 1, "backward requires a scalar loss, got shape " +
                                              shape_str(value(loss.id()).shape()));
    if (!requires_grad(loss.id())) return;
    grad(loss.id())[0] = Real(1);
    for (int i = loss.id(); i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) {
        n.backward(*this, i);
        ++backward_visits_;
      } else if (n.param != nullptr) {
        auto& acc = n.param->grad();
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += n.grad[k];
      }
    }
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t op_count() const { return op_count_; }
  std::size_t backward_visits() const { return backward_visits_; }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    bool requires_grad = false;
    ParamTensor<Real>* param = nullptr;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::size_t op_count_ = 0;
  std::size_t backward_visits_ = 0;
  bool grad_enabled_ = true;
};

template <class Real>
const Tensor<Real>& Var<Real>::value() const {
  return tape_->value(id_);
}

}  // namespace duocast
