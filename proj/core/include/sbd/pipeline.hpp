#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sbd/checkpoint.hpp"
#include "sbd/config.hpp"
#include "sbd/metrics.hpp"
#include "sbd/optim.hpp"
#include "sbd/phantom.hpp"
#include "sbd/rpn.hpp"
#include "sbd/unet.hpp"

namespace sbd {

using Logger = std::function<void(const std::string&)>;

// ---------------------------------------------------------------- data

/// One manifest line: `<split>\t<volume-path>\t<label-path>`. Relative paths
/// are resolved against the manifest's directory when read.
struct ManifestEntry {
  std::string split;
  std::filesystem::path volume;
  std::filesystem::path labels;
};

std::string format_manifest(std::span<const ManifestEntry> entries);
/// Throws FormatError on a malformed line, IoError if the file is missing.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Writes every phantom of the configured dataset as SVOL image/label pairs
/// plus `manifest.tsv`; returns the manifest path.
std::filesystem::path gen_data(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

/// A volume with its labels and the per-slice boxes derived from them.
struct Sample {
  std::string id;
  Volume image;
  Volume labels;
  SliceBoxes boxes;
};

Sample make_sample(std::string id, Volume image, Volume labels);
Sample load_sample(const ManifestEntry& entry);
std::vector<Sample> load_split(std::span<const ManifestEntry> entries, std::string_view split);

/// Held-out phantoms for checkpoint selection, from seeds disjoint from the
/// dataset's.
std::vector<Sample> validation_samples(const PipelineConfig& cfg);

// ---------------------------------------------------------------- detector

struct RpnExample {
  Tensor slice;  ///< [1, 1, H, W]
  AnchorLabels labels;
  std::optional<Box> gt;
};

RpnExample make_rpn_example(const RpnModel& model, const Volume& image, int z, const std::optional<Box>& gt);
/// Every slice of every sample, in order.
std::vector<RpnExample> make_rpn_examples(const RpnModel& model, std::span<const Sample> samples);

/// Random x and y flips and an integer shift of up to max_shift of each
/// extent that keeps the ground-truth box inside the slice. Uncovered pixels
/// take the slice mean; anchor labels are recomputed for the moved box.
RpnExample augment_example(const RpnModel& model, const RpnExample& ex, double max_shift, std::mt19937_64& rng);

/// Single-slice SGD training. Iteration k draws its slice and anchor sample
/// from a generator keyed by (seed, k), so resuming from a checkpoint
/// reproduces the uninterrupted run.
class RpnTrainer {
 public:
  RpnTrainer(const RpnConfig& rpn, const RpnTrainConfig& train, std::uint64_t seed);

  RpnModel& model() { return model_; }
  const RpnModel& model() const { return model_; }
  std::int64_t iteration() const { return iteration_; }

  /// One SGD step on one randomly drawn example. Throws NumericalError on a
  /// non-finite loss.
  double step(std::span<const RpnExample> examples);

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  RpnTrainConfig train_;
  std::uint64_t seed_;
  RpnModel model_;
  Sgd sgd_;
  std::int64_t iteration_ = 0;
};

/// Running mean of losses over `every` iterations, emitted at multiples of it.
class LossLogger {
 public:
  explicit LossLogger(std::int64_t every) : every_(every) {}
  /// Returns true when a point was emitted.
  bool add(std::int64_t iteration, double loss);
  const std::vector<LossPoint>& points() const { return points_; }
  void set_points(std::vector<LossPoint> points) { points_ = std::move(points); }

 private:
  std::int64_t every_;
  double sum_ = 0;
  std::int64_t count_ = 0;
  std::vector<LossPoint> points_;
};

struct RpnRunOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  Logger log;
};

/// Trains on every slice of the manifest's training volumes and writes
/// rpn_iterNNNNNN.sgck every checkpoint_every iterations, rpn_final.sgck and
/// rpn_loss.tsv. Returns the final checkpoint path.
std::filesystem::path train_rpn(const PipelineConfig& cfg, std::span<const Sample> train, const RpnRunOptions& opts);

RpnModel load_rpn(const PipelineConfig& cfg, const std::filesystem::path& ckpt_path);

// ---------------------------------------------------------------- segmenter

std::string seg_kind(Method method);
/// Inverse of seg_kind; throws UsageError for other kinds.
Method method_from_kind(std::string_view kind);
UNetConfig unet_config_for(const PipelineConfig& cfg, Method method);

/// The extra input channel of a method: proposal (or ground-truth box)
/// attention, the 3D box mask of the labels, or nothing for plain.
/// Attention from proposals needs `rpn`.
std::optional<Volume> guidance_volume(Method method, const Sample& sample, const RpnModel* rpn, bool gt_attention);
/// [1, C, D, H, W] network input: the image, then the guidance channel if any.
Tensor seg_input(const Volume& image, const std::optional<Volume>& guidance);

struct SegExample {
  Tensor input;
  Volume labels;
};

/// Adam with batch size 1; iteration k trains on the example drawn from the
/// generator keyed by (seed, k).
class SegTrainer {
 public:
  SegTrainer(const UNetConfig& unet, const AdamOptions& adam, std::uint64_t seed);

  UNet3D& model() { return model_; }
  const UNet3D& model() const { return model_; }
  std::int64_t iteration() const { return iteration_; }

  double step(std::span<const SegExample> examples);

  Checkpoint checkpoint(Method method) const;
  void restore(const Checkpoint& ckpt);

 private:
  std::uint64_t seed_;
  UNet3D model_;
  Adam adam_;
  std::int64_t iteration_ = 0;
};

/// Mean IoU of the model's predictions over already-built examples.
double mean_iou(const UNet3D& model, std::span<const SegExample> examples);

struct SegRunOptions {
  std::filesystem::path out_dir;
  const RpnModel* rpn = nullptr;  ///< required in attention mode unless gt_attention
  Logger log;
};

struct SegRunResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
  std::int64_t best_iteration = 0;
  double best_val_iou = 0;
  std::vector<LossPoint> losses;
};

/// Writes seg_<mode>_iterNNNNNN.sgck every checkpoint_every iterations
/// (validated on held-out phantoms), seg_<mode>_best.sgck for the best of
/// them, seg_<mode>_final.sgck, seg_<mode>_loss.tsv and seg_<mode>_val.tsv.
SegRunResult train_seg(const PipelineConfig& cfg, Method method, std::span<const Sample> train,
                       const SegRunOptions& opts);

UNet3D load_unet(const PipelineConfig& cfg, const Checkpoint& ckpt);

// ---------------------------------------------------------------- inference

struct Prediction {
  std::optional<Volume> guidance;
  Volume labels;
};

Prediction infer(const UNet3D& model, Method method, const Sample& sample, const RpnModel* rpn);

/// Per-volume IoU over the samples; writes `<id>_pred.svol` into pred_dir
/// when given.
EvalReport evaluate(const UNet3D& model, Method method, std::span<const Sample> test, const RpnModel* rpn,
                    const std::optional<std::filesystem::path>& pred_dir = std::nullopt);

/// Area under the first `points` logged losses (trapezoid rule on the
/// iteration axis).
double loss_auc(std::span<const LossPoint> log, std::size_t points);

struct CompareOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> manifest;  ///< generated under out_dir/data when absent
  std::vector<Method> methods{Method::kPlain, Method::kMask3d, Method::kAttention};
  Logger log;
};

struct CompareResult {
  std::vector<EvalReport> reports;
  std::vector<std::vector<LossPoint>> losses;  ///< parallel to reports
};

/// Trains the detector once and each method's segmenter from the same seed,
/// evaluates the selected checkpoints on the test split and writes
/// report.txt, report.tsv and convergence.tsv.
CompareResult compare(const PipelineConfig& cfg, const CompareOptions& opts);

}  // namespace sbd
