#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace metascript {

using Index = Eigen::Index;

// Dense tensor shape, at most 4 axes. Layout is row-major in the axis
// order given, i.e. (N, C, H, W) has W contiguous.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<Index> dims) : dims_(dims) { check(); }
  explicit Shape(std::vector<Index> dims) : dims_(std::move(dims)) { check(); }

  int ndim() const { return static_cast<int>(dims_.size()); }
  Index operator[](int i) const { return dims_[static_cast<size_t>(i)]; }

  Index numel() const {
    Index n = 1;
    for (Index d : dims_) n *= d;
    return n;
  }

  bool operator==(const Shape& o) const { return dims_ == o.dims_; }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
    os << ")";
    return os.str();
  }

 private:
  void check() const {
    if (dims_.size() > 4) throw std::invalid_argument("Shape: more than 4 axes");
    for (Index d : dims_)
      if (d <= 0) throw std::invalid_argument("Shape: nonpositive dim " + str());
  }
  std::vector<Index> dims_;
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

// Thread-local switch that disables graph construction (inference mode).
struct GradMode {
  static bool& enabled() {
    thread_local bool on = true;
    return on;
  }
};

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(GradMode::enabled()) { GradMode::enabled() = false; }
  ~NoGradGuard() { GradMode::enabled() = prev; }
};

// Reverse-mode autodiff tensor over a flat Eigen array. Ops are free
// functions that record a backprop closure on the result node; calling
// backward() on a scalar result accumulates into .grad() of every
// reachable leaf with requires_grad set.
template <typename S>
class Tensor {
 public:
  using Storage = Eigen::Array<S, Eigen::Dynamic, 1>;

  struct Node {
    Shape shape;
    Storage value;
    Storage grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    Storage& ensure_grad() {
      if (grad.size() != value.size()) grad = Storage::Zero(value.size());
      return grad;
    }
  };

  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = shape;
    t.node_->value = Storage::Zero(shape.numel());
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor full(const Shape& shape, S v, bool requires_grad = false) {
    Tensor t = zeros(shape, requires_grad);
    t.node_->value.setConstant(v);
    return t;
  }

  static Tensor from(const Shape& shape, const std::vector<S>& data,
                     bool requires_grad = false) {
    require(static_cast<Index>(data.size()) == shape.numel(),
            "Tensor::from: data size does not match shape " + shape.str());
    Tensor t = zeros(shape, requires_grad);
    for (Index i = 0; i < t.node_->value.size(); ++i)
      t.node_->value[i] = data[static_cast<size_t>(i)];
    return t;
  }

  // A Tensor is a shared handle: const propagates to the handle, not to
  // the node, so backprop closures can accumulate through const captures.
  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) const { node_->requires_grad = b; }

  Storage& value() const { return node_->value; }
  Storage& grad() const { return node_->ensure_grad(); }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  S item() const {
    require(numel() == 1, "item(): tensor is not scalar, shape " + shape().str());
    return node_->value[0];
  }

  S operator()(Index i) const { return node_->value[i]; }

  void zero_grad() const {
    if (node_->grad.size()) node_->grad.setZero();
  }

  // Same values, no history.
  Tensor detach() const {
    Tensor t = zeros(shape(), false);
    t.node_->value = node_->value;
    return t;
  }

  void backward() const {
    require(numel() == 1, "backward(): root must be scalar");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // iterative post-order; graphs get deep through cascaded blocks
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next].get();
        ++next;
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad().setConstant(S(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backprop && n->grad.size()) n->backprop(*n);
    }
  }

  std::shared_ptr<Node> node() const { return node_; }

  // Result node wiring used by every op. Parents without grad history
  // are not retained when grad mode is off.
  static Tensor make_op(const Shape& shape, std::vector<Tensor> parents,
                        std::function<void(Node&)> backprop) {
    Tensor t = zeros(shape, false);
    bool track = GradMode::enabled();
    bool any = false;
    if (track)
      for (const auto& p : parents) any = any || p.node_->requires_grad;
    if (track && any) {
      t.node_->requires_grad = true;
      for (auto& p : parents) t.node_->parents.push_back(p.node_);
      t.node_->backprop = std::move(backprop);
    }
    return t;
  }

 private:
  std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace metascript
