#include "sbd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sbd/attention.hpp"
#include "sbd/binary_io.hpp"
#include "sbd/error.hpp"
#include "sbd/rng.hpp"
#include "sbd/svol.hpp"

namespace sbd {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kRpnInitIndex = 0;
constexpr std::uint64_t kUNetInitIndex = 1;

std::string padded(std::int64_t v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*lld", width, static_cast<long long>(v));
  return buf;
}

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

std::vector<LossPoint> read_loss_prefix(const fs::path& path, std::int64_t up_to) {
  if (!fs::exists(path)) return {};
  const auto bytes = io::read_file(path);
  auto points = parse_loss_curve(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  std::erase_if(points, [&](const LossPoint& p) { return p.iteration > up_to; });
  return points;
}

void require_kind(const Checkpoint& ckpt, std::string_view expected) {
  if (ckpt.kind != expected) {
    throw UsageError("checkpoint holds a '" + ckpt.kind + "' model, expected '" + std::string(expected) + "'");
  }
}

}  // namespace

// ---------------------------------------------------------------- data

std::string format_manifest(std::span<const ManifestEntry> entries) {
  std::string out;
  for (const auto& e : entries) out += e.split + '\t' + e.volume.generic_string() + '\t' + e.labels.generic_string() + '\n';
  return out;
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  const auto bytes = io::read_file(path);
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      const auto t1 = line.find('\t');
      const auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
      if (t2 == std::string_view::npos || line.find('\t', t2 + 1) != std::string_view::npos) {
        throw FormatError(path.string() + ": manifest line needs exactly three tab-separated fields", pos);
      }
      ManifestEntry e{std::string(line.substr(0, t1)), fs::path(std::string(line.substr(t1 + 1, t2 - t1 - 1))),
                      fs::path(std::string(line.substr(t2 + 1)))};
      if (e.split != "train" && e.split != "test") {
        throw FormatError(path.string() + ": unknown split '" + e.split + "'", pos);
      }
      if (e.volume.empty() || e.labels.empty()) throw FormatError(path.string() + ": empty path", pos);
      if (e.volume.is_relative()) e.volume = base / e.volume;
      if (e.labels.is_relative()) e.labels = base / e.labels;
      out.push_back(std::move(e));
    }
    pos = end + 1;
  }
  return out;
}

fs::path gen_data(const PipelineConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  const auto dataset = make_dataset(cfg.seed, cfg.data.dims, cfg.data.phantom, cfg.data.n_train, cfg.data.n_test);
  std::vector<ManifestEntry> entries;
  int train_idx = 0, test_idx = 0;
  for (const auto& e : dataset) {
    const std::string id = e.split + "_" + padded(e.split == "train" ? train_idx++ : test_idx++, 2);
    ManifestEntry m{e.split, id + "_image.svol", id + "_labels.svol"};
    write_svol(out_dir / m.volume, e.phantom.image);
    write_svol(out_dir / m.labels, e.phantom.labels);
    entries.push_back(std::move(m));
  }
  const fs::path manifest = out_dir / "manifest.tsv";
  io::write_text(manifest, format_manifest(entries));
  return manifest;
}

Sample make_sample(std::string id, Volume image, Volume labels) {
  if (!(image.dims == labels.dims)) throw DimensionError(id + ": image and label volumes differ in size");
  for (float v : labels.data)
    if (v != 0.0f && v != 1.0f) throw InputError(id + ": label volume is not binary");
  Sample s{std::move(id), std::move(image), std::move(labels), {}};
  s.boxes = derive_gt_boxes(s.labels);
  return s;
}

Sample load_sample(const ManifestEntry& entry) {
  return make_sample(entry.volume.stem().string(), read_svol(entry.volume), read_svol(entry.labels));
}

std::vector<Sample> load_split(std::span<const ManifestEntry> entries, std::string_view split) {
  std::vector<Sample> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(load_sample(e));
  if (out.empty()) throw InputError("manifest has no '" + std::string(split) + "' volumes");
  return out;
}

std::vector<Sample> validation_samples(const PipelineConfig& cfg) {
  std::vector<Sample> out;
  for (int i = 0; i < cfg.seg.val_phantoms; ++i) {
    const auto seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(Stream::kValidation), static_cast<std::uint64_t>(i));
    Phantom p = gen_phantom(seed, cfg.data.dims, cfg.data.phantom);
    out.push_back(make_sample("val_" + padded(i, 2), std::move(p.image), std::move(p.labels)));
  }
  return out;
}

// ---------------------------------------------------------------- detector

RpnExample make_rpn_example(const RpnModel& model, const Volume& image, int z, const std::optional<Box>& gt) {
  const AnchorGrid grid = model.anchors(image.dims.h, image.dims.w);
  std::vector<Box> gts;
  if (gt) gts.push_back(*gt);
  const auto& cfg = model.config();
  return {slice_tensor(image, z), assign_labels(grid.boxes, gts, cfg.pos_iou, cfg.neg_iou), gt};
}

std::vector<RpnExample> make_rpn_examples(const RpnModel& model, std::span<const Sample> samples) {
  std::vector<RpnExample> out;
  for (const auto& s : samples)
    for (int z = 0; z < s.image.dims.d; ++z)
      out.push_back(make_rpn_example(model, s.image, z, s.boxes[static_cast<std::size_t>(z)]));
  return out;
}

RpnExample augment_example(const RpnModel& model, const RpnExample& ex, double max_shift, std::mt19937_64& rng) {
  const int H = static_cast<int>(ex.slice.dim(2)), W = static_cast<int>(ex.slice.dim(3));
  const bool flip_x = uniform01(rng) < 0.5;
  const bool flip_y = uniform01(rng) < 0.5;
  std::optional<Box> gt = ex.gt;
  if (gt) {
    if (flip_x) gt = Box{W - gt->x2, gt->y1, W - gt->x1, gt->y2};
    if (flip_y) gt = Box{gt->x1, H - gt->y2, gt->x2, H - gt->y1};
  }
  auto draw_shift = [&](int extent, double lo, double hi) {
    const int limit = static_cast<int>(max_shift * extent);
    const int a = std::max(-limit, static_cast<int>(std::ceil(lo)));
    const int b = std::min(limit, static_cast<int>(std::floor(hi)));
    return a + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(b - a + 1)));
  };
  const int dx = gt ? draw_shift(W, -gt->x1, W - gt->x2) : draw_shift(W, -W, W);
  const int dy = gt ? draw_shift(H, -gt->y1, H - gt->y2) : draw_shift(H, -H, H);
  if (gt) gt = Box{gt->x1 + dx, gt->y1 + dy, gt->x2 + dx, gt->y2 + dy};

  auto src = ex.slice.data();
  double mean = 0;
  for (float v : src) mean += v;
  mean /= static_cast<double>(src.size());
  std::vector<float> out(src.size(), static_cast<float>(mean));
  for (int y = 0; y < H; ++y) {
    const int sy = y - dy;
    if (sy < 0 || sy >= H) continue;
    const int ry = flip_y ? H - 1 - sy : sy;
    for (int x = 0; x < W; ++x) {
      const int sx = x - dx;
      if (sx < 0 || sx >= W) continue;
      const int rx = flip_x ? W - 1 - sx : sx;
      out[static_cast<std::size_t>(y) * W + x] = src[static_cast<std::size_t>(ry) * W + rx];
    }
  }
  const AnchorGrid grid = model.anchors(H, W);
  std::vector<Box> gts;
  if (gt) gts.push_back(*gt);
  const auto& cfg = model.config();
  return {Tensor::from_data({1, 1, H, W}, std::move(out)), assign_labels(grid.boxes, gts, cfg.pos_iou, cfg.neg_iou),
          gt};
}

RpnTrainer::RpnTrainer(const RpnConfig& rpn, const RpnTrainConfig& train, std::uint64_t seed)
    : train_(train),
      seed_(seed),
      model_(rpn, mix_seed(seed, static_cast<std::uint64_t>(Stream::kInit), kRpnInitIndex)),
      sgd_(model_.parameters(), train.sgd) {}

double RpnTrainer::step(std::span<const RpnExample> examples) {
  const auto& cfg = model_.config();
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!cfg.positives_only || examples[i].labels.count(AnchorLabel::kPositive) > 0) candidates.push_back(i);
  }
  if (candidates.empty()) throw UsageError("detector training has no usable slices");

  auto rng = make_rng(seed_, Stream::kRpnIteration, static_cast<std::uint64_t>(iteration_));
  const RpnExample& drawn = examples[candidates[uniform_index(rng, candidates.size())]];
  std::optional<RpnExample> moved;
  if (train_.augment) moved = augment_example(model_, drawn, train_.max_shift, rng);
  const RpnExample& ex = moved ? *moved : drawn;
  const auto sample = sample_minibatch(ex.labels, cfg.batch, cfg.pos_fraction, cfg.positives_only, rng);

  auto params = model_.parameters();
  zero_grad(params);
  Tensor loss = rpn_loss(model_.forward(ex.slice), ex.labels, sample);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw NumericalError("detector loss became non-finite at iteration " + std::to_string(iteration_ + 1) +
                         " (lr " + fmt9(train_.sgd.lr) + ")");
  }
  backward(loss);
  sgd_.step();
  ++iteration_;
  return value;
}

Checkpoint RpnTrainer::checkpoint() const {
  return {"rpn", static_cast<std::uint64_t>(iteration_), snapshot(model_.parameters()), sgd_.state()};
}

void RpnTrainer::restore(const Checkpoint& ckpt) {
  require_kind(ckpt, "rpn");
  restore_parameters(model_.parameters(), ckpt.params);
  sgd_.load_state(ckpt.optimizer);
  iteration_ = static_cast<std::int64_t>(ckpt.iteration);
}

bool LossLogger::add(std::int64_t iteration, double loss) {
  sum_ += loss;
  ++count_;
  if (iteration % every_ != 0) return false;
  points_.push_back({iteration, sum_ / static_cast<double>(count_)});
  sum_ = 0;
  count_ = 0;
  return true;
}

fs::path train_rpn(const PipelineConfig& cfg, std::span<const Sample> train, const RpnRunOptions& opts) {
  cfg.validate();
  fs::create_directories(opts.out_dir);
  RpnTrainer trainer(cfg.rpn, cfg.rpn_train, cfg.seed);
  LossLogger logger(cfg.rpn_train.log_every);
  const fs::path loss_path = opts.out_dir / "rpn_loss.tsv";
  if (opts.resume) {
    trainer.restore(load_checkpoint(*opts.resume));
    logger.set_points(read_loss_prefix(loss_path, trainer.iteration()));
    say(opts.log, "resuming detector training at iteration " + std::to_string(trainer.iteration()));
  }
  const auto examples = make_rpn_examples(trainer.model(), train);
  while (trainer.iteration() < cfg.rpn_train.iters) {
    const double loss = trainer.step(examples);
    const auto it = trainer.iteration();
    if (logger.add(it, loss)) say(opts.log, "rpn iter " + std::to_string(it) + " loss " + fmt9(logger.points().back().loss));
    if (it % cfg.rpn_train.checkpoint_every == 0) {
      save_checkpoint(opts.out_dir / ("rpn_iter" + padded(it, 6) + ".sgck"), trainer.checkpoint());
      io::write_text(loss_path, format_loss_curve(logger.points()));
    }
  }
  const fs::path final_path = opts.out_dir / "rpn_final.sgck";
  save_checkpoint(final_path, trainer.checkpoint());
  io::write_text(loss_path, format_loss_curve(logger.points()));
  return final_path;
}

RpnModel load_rpn(const PipelineConfig& cfg, const fs::path& ckpt_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  require_kind(ckpt, "rpn");
  RpnModel model(cfg.rpn, 0);
  restore_parameters(model.parameters(), ckpt.params);
  return model;
}

// ---------------------------------------------------------------- segmenter

std::string seg_kind(Method method) { return "unet3d/" + std::string(method_name(method)); }

Method method_from_kind(std::string_view kind) {
  constexpr std::string_view prefix = "unet3d/";
  if (kind.starts_with(prefix)) {
    if (auto m = parse_method(kind.substr(prefix.size()))) return *m;
  }
  throw UsageError("checkpoint holds a '" + std::string(kind) + "' model, expected a segmenter");
}

UNetConfig unet_config_for(const PipelineConfig& cfg, Method method) {
  UNetConfig u = cfg.unet;
  u.in_channels = method == Method::kPlain ? 1 : 2;
  return u;
}

std::optional<Volume> guidance_volume(Method method, const Sample& sample, const RpnModel* rpn, bool gt_attention) {
  switch (method) {
    case Method::kPlain:
      return std::nullopt;
    case Method::kMask3d:
      return build_3d_mask(sample.labels);
    case Method::kAttention:
      if (gt_attention) return attention_from_gt_boxes(sample.boxes, sample.image.dims);
      if (!rpn) throw UsageError("attention mode needs a detector checkpoint");
      return build_attention(extract_proposals(*rpn, sample.image), sample.image.dims);
  }
  throw UsageError("unknown method");
}

Tensor seg_input(const Volume& image, const std::optional<Volume>& guidance) {
  const auto& d = image.dims;
  if (!guidance) return to_tensor(image);
  if (!(guidance->dims == d)) throw DimensionError("guidance volume differs in size from the image");
  std::vector<float> data;
  data.reserve(2 * image.data.size());
  data.insert(data.end(), image.data.begin(), image.data.end());
  data.insert(data.end(), guidance->data.begin(), guidance->data.end());
  return Tensor::from_data({1, 2, d.d, d.h, d.w}, std::move(data));
}

SegTrainer::SegTrainer(const UNetConfig& unet, const AdamOptions& adam, std::uint64_t seed)
    : seed_(seed),
      model_(unet, mix_seed(seed, static_cast<std::uint64_t>(Stream::kInit), kUNetInitIndex)),
      adam_(model_.parameters(), adam) {}

double SegTrainer::step(std::span<const SegExample> examples) {
  if (examples.empty()) throw UsageError("segmenter training has no volumes");
  auto rng = make_rng(seed_, Stream::kSegIteration, static_cast<std::uint64_t>(iteration_));
  const auto& ex = examples[uniform_index(rng, examples.size())];
  auto params = model_.parameters();
  zero_grad(params);
  Tensor loss = seg_loss(model_.forward(ex.input), ex.labels);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw NumericalError("segmenter loss became non-finite at iteration " + std::to_string(iteration_ + 1) +
                         " (lr " + fmt9(adam_.options().lr) + ")");
  }
  backward(loss);
  adam_.step();
  ++iteration_;
  return value;
}

Checkpoint SegTrainer::checkpoint(Method method) const {
  return {seg_kind(method), static_cast<std::uint64_t>(iteration_), snapshot(model_.parameters()), adam_.state()};
}

void SegTrainer::restore(const Checkpoint& ckpt) {
  method_from_kind(ckpt.kind);
  restore_parameters(model_.parameters(), ckpt.params);
  adam_.load_state(ckpt.optimizer);
  iteration_ = static_cast<std::int64_t>(ckpt.iteration);
}

double mean_iou(const UNet3D& model, std::span<const SegExample> examples) {
  if (examples.empty()) return 0.0;
  std::vector<double> ious;
  for (const auto& ex : examples) ious.push_back(iou_metric(model.predict(ex.input), ex.labels));
  std::sort(ious.begin(), ious.end());
  double sum = 0;
  for (double v : ious) sum += v;
  return sum / static_cast<double>(ious.size());
}

SegRunResult train_seg(const PipelineConfig& cfg, Method method, std::span<const Sample> train,
                       const SegRunOptions& opts) {
  cfg.validate();
  const bool gt_attention = cfg.seg.gt_attention;
  if (method == Method::kAttention && !opts.rpn && !gt_attention) {
    throw UsageError("attention mode needs a detector checkpoint (or seg.gt_attention = true)");
  }
  fs::create_directories(opts.out_dir);
  const std::string mode(method_name(method));

  std::vector<SegExample> examples;
  for (const auto& s : train) examples.push_back({seg_input(s.image, guidance_volume(method, s, opts.rpn, gt_attention)), s.labels});
  std::vector<SegExample> val;
  for (const auto& s : validation_samples(cfg)) {
    val.push_back({seg_input(s.image, guidance_volume(method, s, opts.rpn, opts.rpn == nullptr)), s.labels});
  }

  SegTrainer trainer(unet_config_for(cfg, method), cfg.seg.adam, cfg.seed);
  LossLogger logger(cfg.seg.log_every);
  SegRunResult result;
  result.best_checkpoint = opts.out_dir / ("seg_" + mode + "_best.sgck");
  result.final_checkpoint = opts.out_dir / ("seg_" + mode + "_final.sgck");
  const fs::path loss_path = opts.out_dir / ("seg_" + mode + "_loss.tsv");
  std::string val_log;
  bool have_best = false;

  auto validate_now = [&] {
    const auto it = trainer.iteration();
    const double v = mean_iou(trainer.model(), val);
    val_log += std::to_string(it) + '\t' + fmt9(v) + '\n';
    say(opts.log, mode + " iter " + std::to_string(it) + " validation IoU " + fmt9(v));
    const Checkpoint ckpt = trainer.checkpoint(method);
    if (it > 0 && it % cfg.seg.checkpoint_every == 0) {
      save_checkpoint(opts.out_dir / ("seg_" + mode + "_iter" + padded(it, 6) + ".sgck"), ckpt);
    }
    if (!have_best || v > result.best_val_iou) {
      have_best = true;
      result.best_val_iou = v;
      result.best_iteration = it;
      save_checkpoint(result.best_checkpoint, ckpt);
    }
  };

  while (trainer.iteration() < cfg.seg.iters) {
    const double loss = trainer.step(examples);
    const auto it = trainer.iteration();
    if (logger.add(it, loss) && (it % std::max<std::int64_t>(cfg.seg.log_every, 50) == 0)) {
      say(opts.log, mode + " iter " + std::to_string(it) + " loss " + fmt9(logger.points().back().loss));
    }
    if (it % cfg.seg.checkpoint_every == 0) {
      validate_now();
      io::write_text(loss_path, format_loss_curve(logger.points()));
    }
  }
  if (!have_best || trainer.iteration() % cfg.seg.checkpoint_every != 0) validate_now();
  save_checkpoint(result.final_checkpoint, trainer.checkpoint(method));
  io::write_text(loss_path, format_loss_curve(logger.points()));
  io::write_text(opts.out_dir / ("seg_" + mode + "_val.tsv"), val_log);
  io::write_text(opts.out_dir / ("seg_" + mode + "_best.txt"), "iteration\t" + std::to_string(result.best_iteration) +
                                                                    "\nval_iou\t" + fmt9(result.best_val_iou) + '\n');
  result.losses = logger.points();
  return result;
}

UNet3D load_unet(const PipelineConfig& cfg, const Checkpoint& ckpt) {
  const Method method = method_from_kind(ckpt.kind);
  UNet3D model(unet_config_for(cfg, method), 0);
  restore_parameters(model.parameters(), ckpt.params);
  return model;
}

// ---------------------------------------------------------------- inference

Prediction infer(const UNet3D& model, Method method, const Sample& sample, const RpnModel* rpn) {
  Prediction p;
  p.guidance = guidance_volume(method, sample, rpn, false);
  p.labels = model.predict(seg_input(sample.image, p.guidance));
  return p;
}

EvalReport evaluate(const UNet3D& model, Method method, std::span<const Sample> test, const RpnModel* rpn,
                    const std::optional<fs::path>& pred_dir) {
  if (pred_dir) fs::create_directories(*pred_dir);
  std::vector<std::string> ids;
  std::vector<double> ious;
  for (const auto& s : test) {
    const Prediction p = infer(model, method, s, rpn);
    ids.push_back(s.id);
    ious.push_back(iou_metric(p.labels, s.labels));
    if (pred_dir) write_svol(*pred_dir / (s.id + "_pred.svol"), p.labels);
  }
  return make_report(method, std::move(ids), std::move(ious));
}

double loss_auc(std::span<const LossPoint> log, std::size_t points) {
  const std::size_t n = std::min(points, log.size());
  double area = 0;
  for (std::size_t i = 1; i < n; ++i) {
    area += 0.5 * (log[i].loss + log[i - 1].loss) * static_cast<double>(log[i].iteration - log[i - 1].iteration);
  }
  return area;
}

CompareResult compare(const PipelineConfig& cfg, const CompareOptions& opts) {
  cfg.validate();
  fs::create_directories(opts.out_dir);
  const fs::path manifest = opts.manifest ? *opts.manifest : gen_data(cfg, opts.out_dir / "data");
  const auto entries = read_manifest(manifest);
  const auto train = load_split(entries, "train");
  const auto test = load_split(entries, "test");

  std::optional<RpnModel> rpn;
  if (std::find(opts.methods.begin(), opts.methods.end(), Method::kAttention) != opts.methods.end()) {
    say(opts.log, "training detector");
    rpn.emplace(load_rpn(cfg, train_rpn(cfg, train, {opts.out_dir, std::nullopt, opts.log})));
  }

  CompareResult result;
  std::string auc;
  for (Method m : opts.methods) {
    say(opts.log, "training segmenter (" + std::string(method_name(m)) + ")");
    const auto run = train_seg(cfg, m, train, {opts.out_dir, rpn ? &*rpn : nullptr, opts.log});
    const UNet3D model = load_unet(cfg, load_checkpoint(run.best_checkpoint));
    result.reports.push_back(evaluate(model, m, test, rpn ? &*rpn : nullptr));
    result.losses.push_back(run.losses);
    auc += std::string(method_name(m)) + ".loss_auc500\t" + fmt9(loss_auc(run.losses, 500)) + '\n';
  }
  io::write_text(opts.out_dir / "report.txt", format_report_table(result.reports));
  io::write_text(opts.out_dir / "report.tsv", format_report_tsv(result.reports));
  io::write_text(opts.out_dir / "convergence.tsv", auc);
  return result;
}

}  // namespace sbd
