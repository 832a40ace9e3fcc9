#pragma once

#include <cstdint>
#include <vector>

#include "sbd/tensor.hpp"

namespace sbd {

/// Extents of a (depth, height, width) volume. Slices run along depth.
struct Dims {
  int d = 0, h = 0, w = 0;

  std::int64_t size() const { return static_cast<std::int64_t>(d) * h * w; }
  std::int64_t slice_size() const { return static_cast<std::int64_t>(h) * w; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Dense float volume in (d, y, x) row-major order. Label and mask volumes
/// store 0.0 / 1.0.
struct Volume {
  Dims dims;
  std::vector<float> data;

  Volume() = default;
  explicit Volume(Dims d, float fill = 0.0f)
      : dims(d), data(static_cast<std::size_t>(d.size()), fill) {}

  std::int64_t index(int z, int y, int x) const {
    return (static_cast<std::int64_t>(z) * dims.h + y) * dims.w + x;
  }
  float& at(int z, int y, int x) { return data[static_cast<std::size_t>(index(z, y, x))]; }
  float at(int z, int y, int x) const { return data[static_cast<std::size_t>(index(z, y, x))]; }
  std::int64_t count_nonzero() const;
};

/// [1, 1, D, H, W] view of the volume (copied).
Tensor to_tensor(const Volume& v);
/// Slice z as a [1, 1, H, W] tensor.
Tensor slice_tensor(const Volume& v, int z);
/// Binary labels as class indices.
std::vector<std::int32_t> to_class_labels(const Volume& labels);

}  // namespace sbd
