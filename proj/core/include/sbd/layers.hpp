#pragma once

#include <string>
#include <vector>

#include "sbd/optim.hpp"
#include "sbd/tensor.hpp"

namespace sbd {

/// Weight + bias pair of a convolution layer. Weight layout [F, C, k...]
/// (for up-convolutions [Cin, Cout, 2, 2, 2]).
struct ConvLayer {
  Parameter weight;
  Parameter bias;

  static ConvLayer make(const std::string& name, Shape weight_shape, std::int64_t bias_size);
  void append_to(std::vector<Parameter>& out) const {
    out.push_back(weight);
    out.push_back(bias);
  }
  std::int64_t fan_in() const;
};

}  // namespace sbd
