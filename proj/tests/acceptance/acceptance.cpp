// Acceptance suite. `sbd_acceptance A3` runs one criterion, no argument runs
// all of them; each prints one `A<n> PASS|FAIL <details>` line.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "geometry_suite.hpp"
#include "gradient_suite.hpp"
#include "sbd/attention.hpp"
#include "sbd/binary_io.hpp"
#include "sbd/pipeline.hpp"
#include "sbd/rng.hpp"

namespace fs = std::filesystem;
using namespace sbd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path work_root() {
  const fs::path root = fs::path(SBD_ACCEPTANCE_WORK_DIR);
  fs::create_directories(root);
  return root;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = work_root() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

PipelineConfig compare_config() { return load_config(fs::path(SBD_SOURCE_DIR) / "configs" / "compare.conf"); }

Logger progress(const std::string& tag) {
  return [tag](const std::string& line) { std::fprintf(stderr, "[%s] %s\n", tag.c_str(), line.c_str()); };
}

Outcome a1_gradients() {
  Stopwatch clock;
  double worst_all = 0;
  std::string worst_name;
  int checks = 0;
  for (const auto& c : testing::gradient_cases()) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed, ++checks) {
      const double e = c.run(seed);
      if (!(e <= worst_all)) {
        worst_all = e;
        worst_name = c.name;
      }
    }
  }
  const double t = clock.seconds();
  return {worst_all < 1e-3 && t < 60,
          fmt("%d checks, worst relative error %.2e (%s), %.1f s", checks, worst_all, worst_name.c_str(), t)};
}

Outcome a2_geometry() {
  Stopwatch clock;
  const auto i = testing::iou_suite(500, 11);
  const auto l = testing::labels_suite(300, 12);
  const auto n = testing::nms_suite(300, 13);
  const auto r = testing::roundtrip_suite(1000, 14);
  const double t = clock.seconds();
  const bool pass = i.failures == 0 && l.failures == 0 && n.failures == 0 && r.failures == 0 && r.worst < 1e-4 && t < 60;
  return {pass, fmt("iou %d/%d, labels %d/%d, nms %d/%d, roundtrip %d/%d (max err %.1e), %.1f s",
                    i.cases - i.failures, i.cases, l.cases - l.failures, l.cases, n.cases - n.failures, n.cases,
                    r.cases - r.failures, r.cases, r.worst, t)};
}

Outcome a3_rpn_overfit() {
  Stopwatch clock;
  PipelineConfig cfg;
  cfg.rpn_train.augment = false;
  const auto seeds = dataset_seeds(cfg.seed, 2);
  RpnTrainer trainer(cfg.rpn, cfg.rpn_train, cfg.seed);
  std::vector<RpnExample> examples;
  for (auto s : seeds) {
    const Phantom p = gen_phantom(s, cfg.data.dims, cfg.data.phantom);
    std::vector<int> object;
    for (int z = 0; z < cfg.data.dims.d; ++z)
      if (p.gt_boxes[static_cast<std::size_t>(z)]) object.push_back(z);
    const int start = std::max(0, object[object.size() / 2] - 5);
    for (int z = start; z < start + 10; ++z)
      examples.push_back(make_rpn_example(trainer.model(), p.image, z, p.gt_boxes[static_cast<std::size_t>(z)]));
  }
  double window = 0;
  const std::int64_t iters = 2000, tail = 100;
  for (std::int64_t it = 1; it <= iters; ++it) {
    const double loss = trainer.step(examples);
    if (it > iters - tail) window += loss;
  }
  const double final_loss = window / tail;
  int hits = 0, object_slices = 0;
  for (const auto& ex : examples) {
    if (!ex.gt) continue;
    ++object_slices;
    const auto props = propose_slice(trainer.model(), ex.slice);
    hits += !props.empty() && iou(props.front().box, *ex.gt) >= 0.7;
  }
  const double rate = static_cast<double>(hits) / object_slices;
  const double t = clock.seconds();
  return {final_loss < 0.2 && rate >= 0.9 && t < 600,
          fmt("%zu slices, loss %.4f after %lld iterations, top-1 IoU>=0.7 on %d/%d object slices, %.0f s",
              examples.size(), final_loss, static_cast<long long>(iters), hits, object_slices, t)};
}

Outcome a4_seg_overfit() {
  Stopwatch clock;
  PipelineConfig cfg;
  const Phantom p = gen_phantom(dataset_seeds(cfg.seed, 1)[0], cfg.data.dims, cfg.data.phantom);
  const Sample s = make_sample("overfit", p.image, p.labels);
  const std::vector<SegExample> ex{{seg_input(s.image, guidance_volume(Method::kAttention, s, nullptr, true)), s.labels}};
  SegTrainer trainer(unet_config_for(cfg, Method::kAttention), cfg.seg.adam, cfg.seed);
  double best = 0;
  std::int64_t reached = -1;
  for (std::int64_t it = 1; it <= 1000; ++it) {
    trainer.step(ex);
    if (it % 50 == 0) {
      best = std::max(best, mean_iou(trainer.model(), ex));
      if (best >= 0.9) {
        reached = it;
        break;
      }
    }
  }
  const double t = clock.seconds();
  return {best >= 0.9 && t < 600,
          reached > 0 ? fmt("train IoU %.4f at iteration %lld, %.0f s", best, static_cast<long long>(reached), t)
                      : fmt("best train IoU %.4f within 1000 iterations, %.0f s", best, t)};
}

double report_mean(const CompareResult& r, Method m) {
  for (const auto& rep : r.reports)
    if (rep.method == m) return rep.mean;
  return NAN;
}

Outcome a5_trend() {
  Stopwatch clock;
  const PipelineConfig cfg = compare_config();
  CompareOptions opts;
  opts.out_dir = fresh_dir("a5_compare");
  opts.log = progress("A5");
  const auto result = compare(cfg, opts);
  const double plain = report_mean(result, Method::kPlain), mask = report_mean(result, Method::kMask3d),
               att = report_mean(result, Method::kAttention);
  const double t = clock.seconds();
  const bool pass = att >= plain - 0.02 && att >= mask - 0.02 && t < 1800;
  return {pass, fmt("mean IoU plain %.4f, mask3d %.4f, attention %.4f (attention %s plain), %.0f s", plain, mask, att,
                    att > plain ? ">" : "<=", t)};
}

Outcome a6_convergence() {
  Stopwatch clock;
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    PipelineConfig cfg = compare_config();
    cfg.seed = seed;
    cfg.seg.iters = 500;
    cfg.seg.log_every = 1;
    cfg.seg.checkpoint_every = 500;
    CompareOptions opts;
    opts.out_dir = fresh_dir("a6_seed" + std::to_string(seed));
    opts.methods = {Method::kPlain, Method::kAttention};
    opts.log = progress("A6 seed " + std::to_string(seed));
    const auto result = compare(cfg, opts);
    const double plain = loss_auc(result.losses[0], 500), att = loss_auc(result.losses[1], 500);
    wins += att < plain;
    detail += fmt("seed %llu: attention %.2f vs plain %.2f; ", static_cast<unsigned long long>(seed), att, plain);
  }
  return {wins >= 2, detail + fmt("attention lower on %d/3 seeds, %.0f s", wins, clock.seconds())};
}

// Every regular file below `dir`, keyed by relative path.
std::map<std::string, std::vector<std::uint8_t>> tree(const fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
  return files;
}

Outcome a7_determinism() {
  Stopwatch clock;
  PipelineConfig cfg = compare_config();
  cfg.rpn_train.iters = 300;
  cfg.rpn_train.checkpoint_every = 100;
  cfg.seg.iters = 20;
  cfg.seg.checkpoint_every = 10;
  std::vector<std::map<std::string, std::vector<std::uint8_t>>> runs;
  for (const char* name : {"a7_run1", "a7_run2"}) {
    CompareOptions opts;
    opts.out_dir = fresh_dir(name);
    compare(cfg, opts);
    runs.push_back(tree(opts.out_dir));
  }
  const bool identical = runs[0] == runs[1];
  int checkpoints = 0, roundtrips = 0;
  for (const auto& [name, bytes] : runs[0]) {
    if (!name.ends_with(".sgck")) continue;
    ++checkpoints;
    roundtrips += encode_checkpoint(decode_checkpoint(bytes)) == bytes;
  }

  const fs::path run1 = work_root() / "a7_run1";
  const auto train = load_split(read_manifest(run1 / "data" / "manifest.tsv"), "train");
  const fs::path resumed = fresh_dir("a7_resume");
  PipelineConfig half = cfg;
  half.rpn_train.iters = 100;
  train_rpn(half, train, {resumed, std::nullopt, nullptr});
  const fs::path final_ckpt = train_rpn(cfg, train, {resumed, resumed / "rpn_iter000100.sgck", nullptr});
  const bool resume_ok = io::read_file(final_ckpt) == runs[0].at("rpn_final.sgck") &&
                         io::read_file(resumed / "rpn_loss.tsv") == runs[0].at("rpn_loss.tsv");

  const bool pass = identical && checkpoints > 0 && roundtrips == checkpoints && resume_ok;
  return {pass, fmt("%zu files %s across two runs, %d/%d checkpoints re-encode bit-exactly, resume at 100 of 300 %s, "
                    "%.0f s",
                    runs[0].size(), identical ? "identical" : "DIFFER", roundtrips, checkpoints,
                    resume_ok ? "matches" : "DIFFERS", clock.seconds())};
}

Outcome a8_containment() {
  Stopwatch clock;
  const PipelineConfig cfg;
  int holds = 0, strict = 0;
  const auto seeds = dataset_seeds(cfg.seed + 1000, 50);
  for (auto seed : seeds) {
    const Phantom p = gen_phantom(seed, cfg.data.dims, cfg.data.phantom);
    const Volume att = attention_from_gt_boxes(p.gt_boxes, p.labels.dims);
    const Volume mask = build_3d_mask(p.labels);
    ProposalSet perfect(p.gt_boxes.size());
    for (std::size_t z = 0; z < perfect.size(); ++z)
      if (p.gt_boxes[z]) perfect[z].push_back({*p.gt_boxes[z], 1.0});
    const Volume from_proposals = build_attention(perfect, p.labels.dims);
    bool ok = from_proposals.data == att.data;
    for (std::size_t i = 0; i < att.data.size(); ++i) ok = ok && mask.data[i] >= att.data[i] && att.data[i] >= p.labels.data[i];
    holds += ok;
    strict += mask.count_nonzero() > att.count_nonzero() && att.count_nonzero() > p.labels.count_nonzero();
  }
  return {holds == 50, fmt("chain holds on %d/50 phantoms (strict on %d), %.1f s", holds, strict, clock.seconds())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"A1", a1_gradients}, {"A2", a2_geometry},    {"A3", a3_rpn_overfit}, {"A4", a4_seg_overfit},
      {"A5", a5_trend},     {"A6", a6_convergence}, {"A7", a7_determinism}, {"A8", a8_containment},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  bool all_pass = true;
  for (const auto& [id, run] : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), id) == wanted.end()) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("%s %s %s\n", id.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
