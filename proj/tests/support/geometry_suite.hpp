#pragma once

#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sbd/geometry.hpp"

namespace sbd::testing {

/// Integer-aligned box inside [0, extent)^2 with positive size.
inline Box random_int_box(std::mt19937_64& rng, int extent) {
  std::uniform_int_distribution<int> pos(0, extent - 2);
  const int x1 = pos(rng), y1 = pos(rng);
  std::uniform_int_distribution<int> wx(1, extent - x1), wy(1, extent - y1);
  return {double(x1), double(y1), double(x1 + wx(rng)), double(y1 + wy(rng))};
}

inline Box random_real_box(std::mt19937_64& rng, double extent) {
  std::uniform_real_distribution<double> pos(0, extent), size(1.0, extent / 2);
  const double x = pos(rng), y = pos(rng);
  return {x, y, x + size(rng), y + size(rng)};
}

struct SuiteResult {
  int cases = 0;
  int failures = 0;
  double worst = 0;  ///< roundtrip only: largest coordinate error
};

inline SuiteResult iou_suite(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  for (int i = 0; i < n; ++i, ++r.cases) {
    const Box a = random_int_box(rng, 24), b = random_int_box(rng, 24);
    const double got = iou(a, b);
    const double want = pixel_iou(a, b);
    r.worst = std::max(r.worst, std::abs(got - want));
    if (std::abs(got - want) > 1e-12 || std::abs(got - iou(b, a)) > 0) ++r.failures;
  }
  return r;
}

inline SuiteResult roundtrip_suite(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  for (int i = 0; i < n; ++i, ++r.cases) {
    const Box anchor = random_real_box(rng, 64), gt = random_real_box(rng, 64);
    const Box back = decode(anchor, encode(anchor, gt));
    const double err = std::max({std::abs(back.x1 - gt.x1), std::abs(back.y1 - gt.y1), std::abs(back.x2 - gt.x2),
                                 std::abs(back.y2 - gt.y2)});
    r.worst = std::max(r.worst, err);
    if (err >= 1e-4) ++r.failures;
  }
  return r;
}

inline SuiteResult labels_suite(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  for (int i = 0; i < n; ++i, ++r.cases) {
    std::vector<Box> anchors(50), gts(static_cast<std::size_t>(rng() % 4));
    for (auto& a : anchors) a = random_real_box(rng, 32);
    // Some anchors duplicate a ground truth, exercising IoU 1 and ties.
    for (auto& g : gts) {
      g = random_real_box(rng, 32);
      if (rng() % 3 == 0) anchors[rng() % anchors.size()] = g;
    }
    const auto got = assign_labels(anchors, gts, 0.7, 0.3);
    const auto want = brute_force_labels(anchors, gts, 0.7, 0.3);
    bool ok = got.labels == want;
    for (std::size_t a = 0; a < anchors.size() && ok; ++a) {
      if (got.labels[a] != AnchorLabel::kPositive) continue;
      const auto& g = gts[static_cast<std::size_t>(got.matched_gt[a])];
      for (const auto& other : gts) ok = ok && iou(anchors[a], g) >= iou(anchors[a], other);
    }
    if (!ok) ++r.failures;
  }
  return r;
}

inline SuiteResult nms_suite(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  for (int i = 0; i < n; ++i, ++r.cases) {
    std::vector<Box> boxes(30);
    std::vector<double> scores(30);
    for (auto& b : boxes) b = random_real_box(rng, 40);
    // Coarse scores make ties common.
    for (auto& s : scores) s = static_cast<double>(rng() % 10) / 10.0;
    const double thresh = 0.1 + 0.8 * static_cast<double>(rng() % 100) / 100.0;
    if (nms(boxes, scores, thresh) != brute_force_nms(boxes, scores, thresh)) ++r.failures;
  }
  return r;
}

}  // namespace sbd::testing
