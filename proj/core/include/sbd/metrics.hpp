#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sbd/volume.hpp"

namespace sbd {

/// The three compared segmentation systems.
enum class Method { kPlain, kMask3d, kAttention };

std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);

/// TP / (TP + FP + FN) over binary volumes. 1 when both are empty. Throws
/// InputError on a dims mismatch.
double iou_metric(const Volume& pred, const Volume& gt);

/// Best / worst / mean IoU over a test set.
struct EvalReport {
  Method method = Method::kAttention;
  std::vector<std::string> volume_ids;
  std::vector<double> ious;
  double best = 0, worst = 0, mean = 0;
};

/// Aggregates per-volume IoUs. The mean is summed in sorted order so it does
/// not depend on the order of the volumes.
EvalReport make_report(Method method, std::vector<std::string> volume_ids, std::vector<double> ious);

/// Aligned columns: method, best, worst, mean; rows in plain, mask3d,
/// attention order.
std::string format_report_table(std::span<const EvalReport> reports);
/// `key\tvalue` lines, e.g. `attention.mean\t0.71`, plus one per volume.
std::string format_report_tsv(std::span<const EvalReport> reports);

struct LossPoint {
  std::int64_t iteration = 0;
  double loss = 0;
};

/// `iter\tloss` rows, losses at 9 significant digits.
std::string format_loss_curve(std::span<const LossPoint> log);
std::vector<LossPoint> parse_loss_curve(std::string_view text);

}  // namespace sbd
