#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sbd/tensor.hpp"

namespace sbd {

/// A trainable tensor with the name it is checkpointed under.
struct Parameter {
  std::string name;
  Tensor value;
  bool is_bias = false;
  /// Overrides the default init standard deviation for this weight.
  std::optional<double> init_std;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Zero-mean Gaussian weights (per-parameter init_std, else `std`) drawn from
/// a generator keyed by `seed`; biases set to exactly 0.
void init_gaussian(std::vector<Parameter>& params, double std, std::uint64_t seed);

/// Clears every gradient, allocating zero buffers where none exist yet.
void zero_grad(std::vector<Parameter>& params);

struct SgdOptions {
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0005;
};

/// Momentum SGD with L2 weight decay folded into the gradient:
///   v <- momentum * v + (g + weight_decay * p);  p <- p - lr * v.
/// Weight decay applies to weights and biases alike.
class Sgd {
 public:
  Sgd(std::vector<Parameter> params, SgdOptions options);

  /// Throws UsageError if a parameter has no gradient buffer.
  void step();

  const SgdOptions& options() const { return options_; }
  std::vector<NamedTensor> state() const;
  /// Restores buffers written by state(); shapes must match.
  void load_state(const std::vector<NamedTensor>& state);

 private:
  std::vector<Parameter> params_;
  SgdOptions options_;
  std::vector<std::vector<float>> velocity_;
};

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam.
class Adam {
 public:
  Adam(std::vector<Parameter> params, AdamOptions options);

  void step();

  std::int64_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }
  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& state);

 private:
  std::vector<Parameter> params_;
  AdamOptions options_;
  std::int64_t step_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

}  // namespace sbd
