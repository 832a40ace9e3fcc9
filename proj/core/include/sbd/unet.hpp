#pragma once

#include <cstdint>
#include <vector>

#include "sbd/layers.hpp"
#include "sbd/volume.hpp"

namespace sbd {

struct UNetConfig {
  int depth = 3;          ///< pooling stages
  int base_channels = 8;  ///< doubled at every stage
  int in_channels = 2;    ///< image + attention, or 1 for the plain baseline
  int num_labels = 2;
  double init_std = 0.01;

  void validate() const;
};

/// 3D U-Net: per level two padded 3x3x3 conv + ReLU, 2x2x2 max pooling down,
/// 2x2x2 stride-2 up-convolution and skip concatenation up, 1x1x1 conv head.
class UNet3D {
 public:
  UNet3D(const UNetConfig& config, std::uint64_t seed);

  /// input [1, C, D, H, W] -> logits [1, L, D, H, W]. Spatial extents must be
  /// divisible by 2^depth.
  Tensor forward(const Tensor& input) const;

  /// Voxel-wise arg-max of forward(input) without recording a graph.
  Volume predict(const Tensor& input) const;

  const UNetConfig& config() const { return config_; }
  std::vector<Parameter> parameters() const;

 private:
  struct Level {
    ConvLayer conv1, conv2;
  };

  UNetConfig config_;
  std::vector<Level> encoder_;  // depth levels
  Level bottom_;
  std::vector<ConvLayer> up_;       // index = level
  std::vector<Level> decoder_;      // index = level
  ConvLayer head_;
};

/// Mean voxel-wise softmax cross entropy against binary labels.
Tensor seg_loss(const Tensor& logits, const Volume& labels);

/// Arg-max over axis 1 of [1, L, D, H, W] logits; ties go to the lower label.
Volume argmax_labels(const Tensor& logits);

}  // namespace sbd
