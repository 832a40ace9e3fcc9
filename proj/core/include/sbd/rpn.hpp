#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sbd/geometry.hpp"
#include "sbd/layers.hpp"
#include "sbd/volume.hpp"

namespace sbd {

enum class BackboneInit {
  kHe,        ///< sqrt(2 / fan_in); stands in for pretrained backbone weights
  kGaussian,  ///< the same fixed std as the heads
};

struct RpnConfig {
  std::vector<int> backbone_channels{8, 16, 32};  ///< one conv block + 2x2 pool each
  int head_channels = 64;
  std::vector<double> anchor_scales{8.0, 16.0, 32.0};
  std::vector<double> anchor_ratios{0.5, 1.0, 2.0};
  double pos_iou = 0.7;
  double neg_iou = 0.3;
  int batch = 256;
  double pos_fraction = 0.5;
  /// Minibatches made of positive anchors only.
  bool positives_only = false;
  double score_thresh = 0.5;
  double nms_thresh = 0.5;
  int max_proposals_per_slice = 3;
  double init_std = 0.01;
  /// Slices are multiplied by this before the backbone (8-bit gray levels).
  double input_scale = 255.0;
  BackboneInit backbone_init = BackboneInit::kHe;

  int downsample_factor() const { return 1 << backbone_channels.size(); }
  int anchors_per_cell() const { return static_cast<int>(anchor_scales.size() * anchor_ratios.size()); }
  /// Throws InputError on inconsistent settings.
  void validate() const;
};

/// Raw head outputs for one slice.
///   cls [1, 2A, h, w]: channel k * A + a is the class-k score (0 background,
///                      1 object) of anchor a.
///   reg [1, 4A, h, w]: channel j * A + a is offset j (tx, ty, tw, th) of anchor a.
struct RpnOutput {
  Tensor cls;
  Tensor reg;
};

class RpnModel {
 public:
  RpnModel(const RpnConfig& config, std::uint64_t seed);

  /// slice [1, 1, H, W] with H and W divisible by downsample_factor().
  RpnOutput forward(const Tensor& slice) const;

  /// Clipped anchors of an H x W slice in the order the heads emit them.
  AnchorGrid anchors(int height, int width) const;

  const RpnConfig& config() const { return config_; }
  std::vector<Parameter> parameters() const;

 private:
  RpnConfig config_;
  std::vector<ConvLayer> backbone_;  // two per block
  ConvLayer head_, cls_, reg_;
};

/// Mean log loss over the sampled anchors plus smooth-L1 over the offsets of
/// the sampled positives, the latter also divided by the sample size.
Tensor rpn_loss(const RpnOutput& out, const AnchorLabels& labels, std::span<const std::int64_t> sample);

/// Up to batch * pos_fraction positives (all of the batch in positives-only
/// mode), the rest negatives; uniform without replacement, returned sorted.
std::vector<std::int64_t> sample_minibatch(const AnchorLabels& labels, int batch, double pos_fraction,
                                           bool positives_only, std::mt19937_64& rng);

struct Proposal {
  Box box;
  double score = 0;
};

/// Per slice, kept proposals sorted by descending score.
using ProposalSet = std::vector<std::vector<Proposal>>;

/// Objectness (softmax) per anchor, in anchor order.
std::vector<double> objectness(const RpnOutput& out, int anchors_per_cell);

std::vector<Proposal> propose_slice(const RpnModel& model, const Tensor& slice);
/// Runs the detector over every depth slice of the volume.
ProposalSet extract_proposals(const RpnModel& model, const Volume& volume);

}  // namespace sbd
