#pragma once

#include <cstdint>
#include <span>
#include <vector>

// Anchor-box geometry beneath the region proposal network.
//
// Boxes use continuous pixel coordinates with half-open extents: a box
// covers [x1, x2) x [y1, y2) and its area is (x2 - x1) * (y2 - y1). The x
// axis runs along the slice width, y along its height.
namespace sbd {

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return x1 + 0.5 * width(); }
  double center_y() const { return y1 + 0.5 * height(); }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Box offsets relative to an anchor: center shift in units of the anchor's
/// size, and log-scale size change.
struct RegressionTarget {
  double tx = 0, ty = 0, tw = 0, th = 0;
};

struct AnchorGridSpec {
  int feature_h = 0;
  int feature_w = 0;
  double stride = 8.0;
  std::vector<double> scales{8.0, 16.0, 32.0};
  std::vector<double> ratios{0.5, 1.0, 2.0};
};

/// Anchors for every feature cell, indexed ((y * feature_w) + x) * per_cell + a
/// where a = ratio_index * |scales| + scale_index.
struct AnchorGrid {
  AnchorGridSpec spec;
  std::vector<Box> boxes;

  int per_cell() const { return static_cast<int>(spec.scales.size() * spec.ratios.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(boxes.size()); }
};

enum class AnchorLabel : std::int8_t { kNegative = 0, kPositive = 1, kIgnore = -1 };

struct AnchorLabels {
  std::vector<AnchorLabel> labels;
  /// Best-IoU ground-truth index for positives, -1 elsewhere.
  std::vector<int> matched_gt;
  /// Regression target for positives (zero elsewhere).
  std::vector<RegressionTarget> targets;

  std::int64_t count(AnchorLabel which) const;
};

double iou(const Box& a, const Box& b);

/// Anchors of area scale^2 and aspect w/h = ratio, centered at
/// (stride * (x + 0.5), stride * (y + 0.5)). Throws InputError on empty or
/// non-positive scales/ratios.
AnchorGrid generate_anchors(const AnchorGridSpec& spec);

/// Throws InputError for a degenerate anchor or ground-truth box.
RegressionTarget encode(const Box& anchor, const Box& gt);

/// Inverse of encode. Log-size shifts beyond +-4 are clamped; `clamped` (if
/// given) reports whether that happened.
Box decode(const Box& anchor, const RegressionTarget& t, bool* clamped = nullptr);

Box clip_box(const Box& b, double height, double width);

/// Positive if IoU > pos_iou with some ground truth or the anchor is the
/// first arg-max anchor of some ground truth; negative if its best IoU is
/// below neg_iou; ignored otherwise.
AnchorLabels assign_labels(std::span<const Box> anchors, std::span<const Box> gts,
                           double pos_iou = 0.7, double neg_iou = 0.3);

/// Greedy suppression in descending score order (ties: lower index first).
/// Returns kept indices in that order.
std::vector<int> nms(std::span<const Box> boxes, std::span<const double> scores, double iou_thresh);

}  // namespace sbd
