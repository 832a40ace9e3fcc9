#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sbd/optim.hpp"
#include "sbd/phantom.hpp"
#include "sbd/rpn.hpp"
#include "sbd/unet.hpp"
#include "sbd/volume.hpp"

// Pipeline settings. The text form is one `key = value` per line, `#` starts
// a comment, keys are dotted (`rpn.score_thresh`). List values are comma
// separated.
namespace sbd {

struct DataConfig {
  Dims dims{32, 48, 32};
  int n_train = 10;
  int n_test = 9;
  PhantomParams phantom;
};

struct RpnTrainConfig {
  std::int64_t iters = 2000;
  SgdOptions sgd;
  std::int64_t log_every = 10;
  std::int64_t checkpoint_every = 500;
  /// Random flips and shifts of the training slices.
  bool augment = true;
  /// Largest shift as a fraction of the slice extent.
  double max_shift = 0.25;
};

struct SegTrainConfig {
  std::int64_t iters = 3000;
  AdamOptions adam;
  std::int64_t log_every = 1;
  std::int64_t checkpoint_every = 500;
  int val_phantoms = 2;
  /// Train attention mode on ground-truth box attention instead of proposals.
  bool gt_attention = false;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  DataConfig data;
  RpnConfig rpn;
  RpnTrainConfig rpn_train;
  UNetConfig unet;  ///< in_channels is set per mode
  SegTrainConfig seg;

  /// Throws UsageError naming the first inconsistent field.
  void validate() const;
};

/// Sets one field from its text form. Throws UsageError on an unknown key or
/// an unparsable value.
void set_config_value(PipelineConfig& cfg, std::string_view key, std::string_view value);

/// Parses config text on top of the defaults and validates the result.
PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);

/// Every key with its current value, in a stable order. parse_config of the
/// output reproduces `cfg`.
std::string format_config(const PipelineConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace sbd
