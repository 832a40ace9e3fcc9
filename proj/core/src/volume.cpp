#include "sbd/volume.hpp"

#include <algorithm>

namespace sbd {

std::int64_t Volume::count_nonzero() const {
  return std::count_if(data.begin(), data.end(), [](float v) { return v != 0.0f; });
}

Tensor to_tensor(const Volume& v) {
  return Tensor::from_data({1, 1, v.dims.d, v.dims.h, v.dims.w}, v.data);
}

Tensor slice_tensor(const Volume& v, int z) {
  const auto n = v.dims.slice_size();
  const auto begin = v.data.begin() + z * n;
  return Tensor::from_data({1, 1, v.dims.h, v.dims.w}, std::vector<float>(begin, begin + n));
}

std::vector<std::int32_t> to_class_labels(const Volume& labels) {
  std::vector<std::int32_t> out(labels.data.size());
  std::transform(labels.data.begin(), labels.data.end(), out.begin(),
                 [](float v) { return v > 0.5f ? 1 : 0; });
  return out;
}

}  // namespace sbd
