#include "sbd/attention.hpp"

#include <algorithm>
#include <cmath>

#include "sbd/error.hpp"

namespace sbd {

namespace {

void rasterize(Volume& v, int z, const Box& b) {
  // Pixel x is inside iff x1 <= x + 0.5 < x2.
  const int x0 = std::max(0, static_cast<int>(std::ceil(b.x1 - 0.5)));
  const int x1 = std::min(v.dims.w, static_cast<int>(std::ceil(b.x2 - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(b.y1 - 0.5)));
  const int y1 = std::min(v.dims.h, static_cast<int>(std::ceil(b.y2 - 0.5)));
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) v.at(z, y, x) = 1.0f;
}

}  // namespace

Volume build_attention(const ProposalSet& proposals, Dims dims) {
  if (static_cast<int>(proposals.size()) != dims.d) {
    throw InputError("build_attention: " + std::to_string(proposals.size()) + " proposal slices for depth " +
                     std::to_string(dims.d));
  }
  Volume v(dims);
  for (int z = 0; z < dims.d; ++z)
    for (const auto& p : proposals[static_cast<std::size_t>(z)]) rasterize(v, z, p.box);
  return v;
}

Volume attention_from_gt_boxes(const SliceBoxes& boxes, Dims dims) {
  if (static_cast<int>(boxes.size()) != dims.d) {
    throw InputError("attention_from_gt_boxes: " + std::to_string(boxes.size()) + " slices for depth " +
                     std::to_string(dims.d));
  }
  Volume v(dims);
  for (int z = 0; z < dims.d; ++z)
    if (boxes[static_cast<std::size_t>(z)]) rasterize(v, z, *boxes[static_cast<std::size_t>(z)]);
  return v;
}

Volume build_3d_mask(const Volume& labels) {
  const Dims d = labels.dims;
  int lo[3] = {d.d, d.h, d.w}, hi[3] = {-1, -1, -1};
  for (int z = 0; z < d.d; ++z)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x) {
        if (labels.at(z, y, x) == 0.0f) continue;
        const int c[3] = {z, y, x};
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::min(lo[a], c[a]);
          hi[a] = std::max(hi[a], c[a]);
        }
      }
  Volume mask(d);
  if (hi[0] < 0) return mask;
  for (int z = lo[0]; z <= hi[0]; ++z)
    for (int y = lo[1]; y <= hi[1]; ++y)
      for (int x = lo[2]; x <= hi[2]; ++x) mask.at(z, y, x) = 1.0f;
  return mask;
}

}  // namespace sbd
