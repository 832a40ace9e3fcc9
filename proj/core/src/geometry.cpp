#include "sbd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sbd/error.hpp"

namespace sbd {

namespace {

constexpr double kMaxLogShift = 4.0;

}  // namespace

std::int64_t AnchorLabels::count(AnchorLabel which) const {
  return std::count(labels.begin(), labels.end(), which);
}

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = (iw > 0 && ih > 0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

AnchorGrid generate_anchors(const AnchorGridSpec& spec) {
  if (spec.scales.empty() || spec.ratios.empty()) throw InputError("anchor scales and ratios must be nonempty");
  for (double s : spec.scales)
    if (!(s > 0)) throw InputError("anchor scales must be positive");
  for (double r : spec.ratios)
    if (!(r > 0)) throw InputError("anchor ratios must be positive");
  if (spec.feature_h <= 0 || spec.feature_w <= 0 || !(spec.stride > 0)) {
    throw InputError("anchor grid needs positive extents and stride");
  }
  AnchorGrid grid{spec, {}};
  grid.boxes.reserve(static_cast<std::size_t>(spec.feature_h) * spec.feature_w * grid.per_cell());
  for (int y = 0; y < spec.feature_h; ++y)
    for (int x = 0; x < spec.feature_w; ++x) {
      const double cx = spec.stride * (x + 0.5);
      const double cy = spec.stride * (y + 0.5);
      for (double r : spec.ratios)
        for (double s : spec.scales) {
          const double w = s * std::sqrt(r);
          const double h = s / std::sqrt(r);
          grid.boxes.push_back({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
        }
    }
  return grid;
}

RegressionTarget encode(const Box& anchor, const Box& gt) {
  if (!(anchor.width() > 0 && anchor.height() > 0)) throw InputError("encode: degenerate anchor");
  if (!(gt.width() > 0 && gt.height() > 0)) throw InputError("encode: degenerate ground-truth box");
  return {(gt.center_x() - anchor.center_x()) / anchor.width(),
          (gt.center_y() - anchor.center_y()) / anchor.height(),
          std::log(gt.width() / anchor.width()), std::log(gt.height() / anchor.height())};
}

Box decode(const Box& anchor, const RegressionTarget& t, bool* clamped) {
  const double tw = std::clamp(t.tw, -kMaxLogShift, kMaxLogShift);
  const double th = std::clamp(t.th, -kMaxLogShift, kMaxLogShift);
  if (clamped) *clamped = tw != t.tw || th != t.th;
  const double cx = anchor.center_x() + t.tx * anchor.width();
  const double cy = anchor.center_y() + t.ty * anchor.height();
  const double w = anchor.width() * std::exp(tw);
  const double h = anchor.height() * std::exp(th);
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

Box clip_box(const Box& b, double height, double width) {
  auto cx = [&](double v) { return std::clamp(v, 0.0, width); };
  auto cy = [&](double v) { return std::clamp(v, 0.0, height); };
  return {cx(b.x1), cy(b.y1), cx(b.x2), cy(b.y2)};
}

AnchorLabels assign_labels(std::span<const Box> anchors, std::span<const Box> gts, double pos_iou,
                           double neg_iou) {
  const std::size_t n = anchors.size();
  AnchorLabels out;
  out.labels.assign(n, AnchorLabel::kNegative);
  out.matched_gt.assign(n, -1);
  out.targets.assign(n, RegressionTarget{});
  if (gts.empty()) return out;

  std::vector<double> best_iou(n, -1.0);
  std::vector<int> best_gt(n, -1);
  std::vector<std::size_t> gt_argmax(gts.size(), 0);
  std::vector<double> gt_best(gts.size(), -1.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(anchors[a], gts[g]);
      if (v > best_iou[a]) {
        best_iou[a] = v;
        best_gt[a] = static_cast<int>(g);
      }
      if (v > gt_best[g]) {
        gt_best[g] = v;
        gt_argmax[g] = a;
      }
    }
  }
  std::vector<bool> forced(n, false);
  for (std::size_t g = 0; g < gts.size(); ++g) forced[gt_argmax[g]] = true;

  for (std::size_t a = 0; a < n; ++a) {
    if (best_iou[a] > pos_iou || forced[a]) {
      out.labels[a] = AnchorLabel::kPositive;
      out.matched_gt[a] = best_gt[a];
      out.targets[a] = encode(anchors[a], gts[static_cast<std::size_t>(best_gt[a])]);
    } else if (best_iou[a] < neg_iou) {
      out.labels[a] = AnchorLabel::kNegative;
    } else {
      out.labels[a] = AnchorLabel::kIgnore;
    }
  }
  return out;
}

std::vector<int> nms(std::span<const Box> boxes, std::span<const double> scores, double iou_thresh) {
  if (boxes.size() != scores.size()) throw InputError("nms: boxes and scores differ in length");
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> kept;
  std::vector<bool> suppressed(boxes.size(), false);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int cur = order[i];
    if (suppressed[cur]) continue;
    kept.push_back(cur);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const int other = order[j];
      if (!suppressed[other] && iou(boxes[cur], boxes[other]) > iou_thresh) suppressed[other] = true;
    }
  }
  return kept;
}

}  // namespace sbd
