#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "sbd/config.hpp"

namespace sbd::testing {

/// A pipeline small enough to train end to end in a second or two.
inline PipelineConfig tiny_config() {
  return parse_config(
      "data.depth = 16\n"
      "data.height = 16\n"
      "data.width = 16\n"
      "data.n_train = 2\n"
      "data.n_test = 2\n"
      "data.radius_min = 2.5\n"
      "data.radius_max = 4\n"
      "rpn.backbone_channels = 4, 8\n"
      "rpn.head_channels = 8\n"
      "rpn.anchor_scales = 4, 8\n"
      "rpn.batch = 32\n"
      "rpn.iters = 20\n"
      "rpn.log_every = 5\n"
      "rpn.checkpoint_every = 10\n"
      "unet.depth = 2\n"
      "unet.base_channels = 2\n"
      "seg.iters = 6\n"
      "seg.checkpoint_every = 3\n"
      "seg.val_phantoms = 1\n");
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("sbd_test_" + name + "_" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace sbd::testing
