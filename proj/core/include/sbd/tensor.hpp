#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sbd {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl;

// One recorded operation. `seq` is the global recording counter, so a node's
// parents always carry smaller values than the node itself.
struct Node {
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  // Receives d(loss)/d(output) and accumulates into the parents' grads.
  std::function<void(std::span<const float>)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first accumulated into
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves

  std::span<float> ensure_grad();
};

}  // namespace detail

/// Dense float32 tensor in row-major order with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage, as they must
/// for parameters referenced both by a model and by its optimizer. Use
/// clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f, bool requires_grad = false);

  static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim(int axis) const;
  int rank() const { return static_cast<int>(shape().size()); }
  std::int64_t numel() const;

  std::span<float> data();
  std::span<const float> data() const;
  float item() const;
  float at(std::int64_t flat_index) const { return data()[static_cast<std::size_t>(flat_index)]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  /// Gradient buffer; allocates zeros on first access.
  std::span<float> grad();
  std::span<const float> grad() const;
  void zero_grad();

  /// False when this tensor was produced by a recorded operation.
  bool is_leaf() const;

  Tensor clone() const;
  /// Same storage, detached from the graph.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_result(Shape, std::vector<float>,
                            std::initializer_list<const Tensor*>,
                            std::function<void(std::span<const float>)>);

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Whether operations currently record a graph on this thread.
bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. When recording is on and any input needs a gradient,
/// a node is attached whose callback receives d(loss)/d(result).
Tensor make_result(Shape shape, std::vector<float> data,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(std::span<const float>)> backward);

/// Accumulates d(loss)/d(param) into every reachable tensor that requires a
/// gradient. Nodes run exactly once, in reverse recording order.
void backward(const Tensor& loss);

/// Throws NumericalError when any value is NaN or infinite.
void check_finite(std::span<const float> values, const char* where);

}  // namespace sbd
