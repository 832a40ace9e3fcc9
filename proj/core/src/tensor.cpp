#include "sbd/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "sbd/error.hpp"

namespace sbd {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool t_grad_enabled = true;

}  // namespace

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::span<float> detail::TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
  return grad;
}

Tensor::Tensor(Shape shape, float fill, bool requires_grad) {
  for (auto e : shape) {
    if (e <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->data.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
  for (auto e : shape) {
    if (e <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw UsageError("use of undefined tensor");
  return impl_->shape;
}

std::int64_t Tensor::dim(int axis) const {
  const auto& s = shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return shape_numel(shape()); }

std::span<float> Tensor::data() {
  if (!impl_) throw UsageError("use of undefined tensor");
  return impl_->data;
}

std::span<const float> Tensor::data() const {
  if (!impl_) throw UsageError("use of undefined tensor");
  return impl_->data;
}

float Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!impl_) throw UsageError("use of undefined tensor");
  impl_->requires_grad = on;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<float> Tensor::grad() {
  if (!impl_) throw UsageError("use of undefined tensor");
  return impl_->ensure_grad();
}

std::span<const float> Tensor::grad() const {
  if (!impl_) throw UsageError("use of undefined tensor");
  return impl_->ensure_grad();
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

bool Tensor::is_leaf() const { return !impl_ || impl_->node == nullptr; }

Tensor Tensor::clone() const {
  return from_data(shape(), impl_->data, impl_->requires_grad);
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = shape();
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<float> data,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(std::span<const float>)> backward_fn) {
#ifndef NDEBUG
  check_finite(data, "forward op output");
#endif
  Tensor out = Tensor::from_data(std::move(shape), std::move(data));
  if (!t_grad_enabled) return out;
  bool needs = false;
  for (const Tensor* in : inputs) needs = needs || (in && in->requires_grad());
  if (!needs) return out;

  auto node = std::make_shared<detail::Node>();
  node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  for (const Tensor* in : inputs) {
    if (in && in->requires_grad()) node->parents.push_back(in->impl());
  }
  node->backward = std::move(backward_fn);
  out.impl_->node = std::move(node);
  out.impl_->requires_grad = true;
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss");
  }
  if (!loss.requires_grad()) {
    throw UsageError("backward() on a loss that does not depend on any parameter");
  }

  // Collect every recorded node reachable from the loss.
  std::vector<detail::TensorImpl*> interior;
  std::unordered_set<detail::TensorImpl*> seen;
  std::vector<detail::TensorImpl*> stack{loss.impl().get()};
  while (!stack.empty()) {
    auto* t = stack.back();
    stack.pop_back();
    if (!seen.insert(t).second) continue;
    if (!t->node) continue;
    interior.push_back(t);
    for (const auto& p : t->node->parents) stack.push_back(p.get());
  }
  std::sort(interior.begin(), interior.end(),
            [](const auto* a, const auto* b) { return a->node->seq > b->node->seq; });

  // Intermediate grads are per-call; only leaves accumulate across calls.
  for (auto* t : interior) {
    t->grad.assign(t->data.size(), 0.0f);
  }
  auto* root = loss.impl().get();
  if (!root->node) {
    root->ensure_grad()[0] += 1.0f;
    return;
  }
  root->grad[0] = 1.0f;
  for (auto* t : interior) {
    t->node->backward(t->grad);
  }
}

void check_finite(std::span<const float> values, const char* where) {
  for (float v : values) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value in ") + where);
  }
}

}  // namespace sbd
