#include "sbd/rpn.hpp"

#include <algorithm>
#include <cmath>

#include "sbd/error.hpp"
#include "sbd/ops.hpp"
#include "sbd/rng.hpp"

namespace sbd {

void RpnConfig::validate() const {
  if (backbone_channels.empty()) throw InputError("rpn.backbone_channels must be nonempty");
  for (int c : backbone_channels)
    if (c <= 0) throw InputError("rpn.backbone_channels entries must be positive");
  if (head_channels <= 0) throw InputError("rpn.head_channels must be positive");
  if (anchor_scales.empty() || anchor_ratios.empty()) throw InputError("anchor scales/ratios must be nonempty");
  if (!(neg_iou <= pos_iou)) throw InputError("rpn.neg_iou must not exceed rpn.pos_iou");
  if (batch <= 0) throw InputError("rpn.batch must be positive");
  if (!(pos_fraction > 0 && pos_fraction <= 1)) throw InputError("rpn.pos_fraction must lie in (0, 1]");
  if (max_proposals_per_slice <= 0) throw InputError("rpn.max_proposals must be positive");
  if (!(init_std > 0)) throw InputError("init std must be positive");
  if (!(input_scale > 0)) throw InputError("rpn.input_scale must be positive");
}

RpnModel::RpnModel(const RpnConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::int64_t in = 1;
  for (std::size_t b = 0; b < config_.backbone_channels.size(); ++b) {
    const std::int64_t out = config_.backbone_channels[b];
    const std::string name = "backbone." + std::to_string(b);
    backbone_.push_back(ConvLayer::make(name + ".conv1", {out, in, 3, 3}, out));
    backbone_.push_back(ConvLayer::make(name + ".conv2", {out, out, 3, 3}, out));
    in = out;
  }
  const std::int64_t A = config_.anchors_per_cell();
  head_ = ConvLayer::make("head.conv", {config_.head_channels, in, 3, 3}, config_.head_channels);
  cls_ = ConvLayer::make("head.cls", {2 * A, config_.head_channels, 1, 1}, 2 * A);
  reg_ = ConvLayer::make("head.reg", {4 * A, config_.head_channels, 1, 1}, 4 * A);

  if (config_.backbone_init == BackboneInit::kHe) {
    for (auto& l : backbone_) l.weight.init_std = std::sqrt(2.0 / static_cast<double>(l.fan_in()));
  }
  auto params = parameters();
  init_gaussian(params, config_.init_std, seed);
}

std::vector<Parameter> RpnModel::parameters() const {
  std::vector<Parameter> out;
  for (const auto& l : backbone_) l.append_to(out);
  head_.append_to(out);
  cls_.append_to(out);
  reg_.append_to(out);
  return out;
}

RpnOutput RpnModel::forward(const Tensor& slice) const {
  if (slice.rank() != 4 || slice.dim(0) != 1 || slice.dim(1) != 1) {
    throw DimensionError("rpn_forward: expected a [1,1,H,W] slice, got " + shape_str(slice.shape()));
  }
  const int ds = config_.downsample_factor();
  if (slice.dim(2) % ds != 0 || slice.dim(3) % ds != 0) {
    throw DimensionError("rpn_forward: slice " + shape_str(slice.shape()) + " is not divisible by the downsample factor " +
                         std::to_string(ds));
  }
  Tensor x = ops::scale(slice, static_cast<float>(config_.input_scale));
  for (std::size_t i = 0; i < backbone_.size(); i += 2) {
    x = ops::relu(ops::conv2d(x, backbone_[i].weight.value, backbone_[i].bias.value, 1, 1));
    x = ops::relu(ops::conv2d(x, backbone_[i + 1].weight.value, backbone_[i + 1].bias.value, 1, 1));
    x = ops::max_pool2d(x, 2);
  }
  x = ops::relu(ops::conv2d(x, head_.weight.value, head_.bias.value, 1, 1));
  return {ops::conv2d(x, cls_.weight.value, cls_.bias.value), ops::conv2d(x, reg_.weight.value, reg_.bias.value)};
}

AnchorGrid RpnModel::anchors(int height, int width) const {
  const int ds = config_.downsample_factor();
  AnchorGridSpec spec{height / ds, width / ds, static_cast<double>(ds), config_.anchor_scales,
                      config_.anchor_ratios};
  AnchorGrid grid = generate_anchors(spec);
  // Cross-boundary anchors stay in the grid, clipped to the slice.
  for (auto& b : grid.boxes) b = clip_box(b, height, width);
  return grid;
}

Tensor rpn_loss(const RpnOutput& out, const AnchorLabels& labels, std::span<const std::int64_t> sample) {
  if (sample.empty()) throw UsageError("rpn_loss: empty anchor sample");
  const std::int64_t A = out.cls.dim(1) / 2;
  const std::int64_t cells = out.cls.dim(2) * out.cls.dim(3);
  if (static_cast<std::int64_t>(labels.labels.size()) != cells * A || out.reg.dim(1) != 4 * A) {
    throw DimensionError("rpn_loss: head outputs do not match " + std::to_string(labels.labels.size()) + " anchors");
  }

  std::vector<std::int64_t> cls_idx;
  std::vector<std::int32_t> cls_target;
  std::vector<std::int64_t> reg_idx;
  std::vector<float> reg_target;
  for (auto i : sample) {
    const auto label = labels.labels[static_cast<std::size_t>(i)];
    if (label == AnchorLabel::kIgnore) throw UsageError("rpn_loss: sampled an ignored anchor");
    const std::int64_t cell = i / A, a = i % A;
    cls_idx.push_back(a * cells + cell);
    cls_idx.push_back((A + a) * cells + cell);
    cls_target.push_back(label == AnchorLabel::kPositive ? 1 : 0);
    if (label == AnchorLabel::kPositive) {
      const auto& t = labels.targets[static_cast<std::size_t>(i)];
      const double tv[4] = {t.tx, t.ty, t.tw, t.th};
      for (std::int64_t j = 0; j < 4; ++j) {
        reg_idx.push_back((j * A + a) * cells + cell);
        reg_target.push_back(static_cast<float>(tv[j]));
      }
    }
  }
  const auto n = static_cast<std::int64_t>(sample.size());
  Tensor logits = ops::reshape(ops::gather(out.cls, cls_idx), {n, 2});
  Tensor loss = ops::softmax_cross_entropy(logits, cls_target);
  if (!reg_idx.empty()) {
    const auto m = static_cast<std::int64_t>(reg_idx.size());
    Tensor target = Tensor::from_data({m}, std::move(reg_target));
    Tensor reg = ops::smooth_l1(ops::gather(out.reg, reg_idx), target);
    loss = ops::add(loss, ops::scale(reg, 1.0f / static_cast<float>(n)));
  }
  return loss;
}

namespace {

// First k entries of a uniform random permutation (partial Fisher-Yates).
std::vector<std::int64_t> choose(std::vector<std::int64_t> pool, std::size_t k, std::mt19937_64& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

std::vector<std::int64_t> sample_minibatch(const AnchorLabels& labels, int batch, double pos_fraction,
                                           bool positives_only, std::mt19937_64& rng) {
  if (batch <= 0) throw UsageError("sample_minibatch: batch must be positive");
  std::vector<std::int64_t> pos, neg;
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    if (labels.labels[i] == AnchorLabel::kPositive) pos.push_back(static_cast<std::int64_t>(i));
    if (labels.labels[i] == AnchorLabel::kNegative) neg.push_back(static_cast<std::int64_t>(i));
  }
  const auto pos_cap = positives_only ? static_cast<std::size_t>(batch)
                                      : static_cast<std::size_t>(std::floor(batch * pos_fraction));
  auto sample = choose(std::move(pos), pos_cap, rng);
  if (!positives_only) {
    auto negs = choose(std::move(neg), static_cast<std::size_t>(batch) - sample.size(), rng);
    sample.insert(sample.end(), negs.begin(), negs.end());
  }
  if (sample.empty()) throw UsageError("sample_minibatch: no candidate anchors to sample");
  std::sort(sample.begin(), sample.end());
  return sample;
}

std::vector<double> objectness(const RpnOutput& out, int anchors_per_cell) {
  const std::int64_t A = anchors_per_cell;
  const std::int64_t cells = out.cls.dim(2) * out.cls.dim(3);
  auto z = out.cls.data();
  std::vector<double> p(static_cast<std::size_t>(cells * A));
  for (std::int64_t cell = 0; cell < cells; ++cell)
    for (std::int64_t a = 0; a < A; ++a) {
      const double bg = z[a * cells + cell], fg = z[(A + a) * cells + cell];
      p[cell * A + a] = 1.0 / (1.0 + std::exp(bg - fg));
    }
  return p;
}

std::vector<Proposal> propose_slice(const RpnModel& model, const Tensor& slice) {
  const auto& cfg = model.config();
  NoGradGuard no_grad;
  const RpnOutput out = model.forward(slice);
  const int H = static_cast<int>(slice.dim(2)), W = static_cast<int>(slice.dim(3));
  const AnchorGrid grid = model.anchors(H, W);
  const std::int64_t A = cfg.anchors_per_cell();
  const std::int64_t cells = out.cls.dim(2) * out.cls.dim(3);
  const auto scores = objectness(out, cfg.anchors_per_cell());
  auto reg = out.reg.data();

  std::vector<Box> boxes;
  std::vector<double> kept_scores;
  for (std::int64_t i = 0; i < grid.size(); ++i) {
    if (scores[static_cast<std::size_t>(i)] < cfg.score_thresh) continue;
    const std::int64_t cell = i / A, a = i % A;
    const RegressionTarget t{reg[(0 * A + a) * cells + cell], reg[(1 * A + a) * cells + cell],
                             reg[(2 * A + a) * cells + cell], reg[(3 * A + a) * cells + cell]};
    const Box b = clip_box(decode(grid.boxes[static_cast<std::size_t>(i)], t), H, W);
    if (!(b.area() > 0)) continue;
    boxes.push_back(b);
    kept_scores.push_back(scores[static_cast<std::size_t>(i)]);
  }
  std::vector<Proposal> result;
  for (int k : nms(boxes, kept_scores, cfg.nms_thresh)) {
    if (static_cast<int>(result.size()) == cfg.max_proposals_per_slice) break;
    result.push_back({boxes[static_cast<std::size_t>(k)], kept_scores[static_cast<std::size_t>(k)]});
  }
  return result;
}

ProposalSet extract_proposals(const RpnModel& model, const Volume& volume) {
  ProposalSet set;
  set.reserve(static_cast<std::size_t>(volume.dims.d));
  for (int z = 0; z < volume.dims.d; ++z) set.push_back(propose_slice(model, slice_tensor(volume, z)));
  return set;
}

}  // namespace sbd
