#include "sbd/layers.hpp"

namespace sbd {

ConvLayer ConvLayer::make(const std::string& name, Shape weight_shape, std::int64_t bias_size) {
  ConvLayer l;
  l.weight = {name + ".weight", Tensor(std::move(weight_shape), 0.0f, true), false, std::nullopt};
  l.bias = {name + ".bias", Tensor({bias_size}, 0.0f, true), true, std::nullopt};
  return l;
}

std::int64_t ConvLayer::fan_in() const { return weight.value.numel() / weight.value.dim(0); }

}  // namespace sbd
