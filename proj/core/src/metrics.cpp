#include "sbd/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "sbd/error.hpp"

namespace sbd {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kPlain:
      return "plain";
    case Method::kMask3d:
      return "mask3d";
    case Method::kAttention:
      return "attention";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
  for (Method m : {Method::kPlain, Method::kMask3d, Method::kAttention})
    if (method_name(m) == name) return m;
  return std::nullopt;
}

double iou_metric(const Volume& pred, const Volume& gt) {
  if (!(pred.dims == gt.dims) || pred.data.size() != gt.data.size()) {
    throw InputError("iou_metric: prediction and ground truth differ in dims");
  }
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i] != 0.0f, g = gt.data[i] != 0.0f;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  const auto denom = tp + fp + fn;
  return denom == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(denom);
}

EvalReport make_report(Method method, std::vector<std::string> volume_ids, std::vector<double> ious) {
  if (ious.empty()) throw InputError("make_report: no volumes evaluated");
  if (volume_ids.size() != ious.size()) throw InputError("make_report: ids and IoUs differ in length");
  EvalReport r{method, std::move(volume_ids), std::move(ious)};
  std::vector<double> sorted = r.ious;
  std::sort(sorted.begin(), sorted.end());
  double total = 0;
  for (double v : sorted) total += v;
  r.worst = sorted.front();
  r.best = sorted.back();
  r.mean = total / static_cast<double>(sorted.size());
  return r;
}

namespace {

std::vector<const EvalReport*> canonical_order(std::span<const EvalReport> reports) {
  std::vector<const EvalReport*> rows;
  for (Method m : {Method::kPlain, Method::kMask3d, Method::kAttention})
    for (const auto& r : reports)
      if (r.method == m) rows.push_back(&r);
  return rows;
}

}  // namespace

std::string format_report_table(std::span<const EvalReport> reports) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-10s %9s %9s %9s\n", "method", "best_iou", "worst_iou", "mean_iou");
  os << line;
  for (const auto* r : canonical_order(reports)) {
    std::snprintf(line, sizeof line, "%-10s %9.4f %9.4f %9.4f\n", std::string(method_name(r->method)).c_str(), r->best,
                  r->worst, r->mean);
    os << line;
  }
  return os.str();
}

std::string format_report_tsv(std::span<const EvalReport> reports) {
  std::ostringstream os;
  char value[64];
  auto put = [&](const std::string& key, double v) {
    std::snprintf(value, sizeof value, "%.9g", v);
    os << key << '\t' << value << '\n';
  };
  for (const auto* r : canonical_order(reports)) {
    const std::string m(method_name(r->method));
    put(m + ".best", r->best);
    put(m + ".worst", r->worst);
    put(m + ".mean", r->mean);
    os << m << ".count\t" << r->ious.size() << '\n';
    for (std::size_t i = 0; i < r->ious.size(); ++i) put(m + ".iou." + r->volume_ids[i], r->ious[i]);
  }
  return os.str();
}

std::string format_loss_curve(std::span<const LossPoint> log) {
  std::ostringstream os;
  char value[64];
  for (const auto& p : log) {
    std::snprintf(value, sizeof value, "%.9g", p.loss);
    os << p.iteration << '\t' << value << '\n';
  }
  return os.str();
}

std::vector<LossPoint> parse_loss_curve(std::string_view text) {
  std::vector<LossPoint> out;
  std::istringstream is{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    LossPoint p;
    std::istringstream ls(line);
    if (!(ls >> p.iteration >> p.loss)) throw InputError("loss curve line " + std::to_string(lineno) + " is malformed");
    out.push_back(p);
  }
  return out;
}

}  // namespace sbd
