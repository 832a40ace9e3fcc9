#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <optional>

#include "sbd/binary_io.hpp"
#include "sbd/error.hpp"
#include "sbd/pipeline.hpp"
#include "sbd/svol.hpp"

namespace sbd::cli {

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> set;
  std::string out;
};

PipelineConfig resolve_config(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  for (const auto& kv : c.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

Method require_method(const std::string& name) {
  auto m = parse_method(name);
  if (!m) throw UsageError("unknown mode '" + name + "' (expected attention, mask3d or plain)");
  return *m;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Segmentation by detection: per-slice region proposals guide a 3D U-Net", "sbd"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", common.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "global seed (overrides the config)");
    sub->add_option("--set", common.set, "config override key=value (repeatable)");
    auto* o = sub->add_option("--out", common.out, "output directory");
    if (needs_out) o->required();
  };
  auto logger = [&](const std::string& line) { err << line << '\n'; };

  auto* gen = app.add_subcommand("gen-data", "write the phantom dataset and its manifest");
  add_common(gen, true);

  std::string manifest, resume, rpn_ckpt, volume, labels, mode = "attention";
  std::vector<std::string> seg_ckpts;

  auto* train_rpn_cmd = app.add_subcommand("train-rpn", "train the slice detector");
  add_common(train_rpn_cmd, true);
  train_rpn_cmd->add_option("--manifest", manifest, "dataset manifest")->required();
  train_rpn_cmd->add_option("--resume", resume, "continue from this detector checkpoint");

  auto* train_seg_cmd = app.add_subcommand("train-seg", "train the 3D segmenter");
  add_common(train_seg_cmd, true);
  train_seg_cmd->add_option("--manifest", manifest, "dataset manifest")->required();
  train_seg_cmd->add_option("--mode", mode, "attention, mask3d or plain");
  train_seg_cmd->add_option("--rpn-ckpt", rpn_ckpt, "detector checkpoint (attention mode)");

  auto* infer_cmd = app.add_subcommand("infer", "predict labels for one volume");
  add_common(infer_cmd, true);
  infer_cmd->add_option("--seg-ckpt", seg_ckpts, "segmenter checkpoint")->required()->expected(1);
  infer_cmd->add_option("--rpn-ckpt", rpn_ckpt, "detector checkpoint (attention mode)");
  infer_cmd->add_option("--volume", volume, "image SVOL")->required();
  infer_cmd->add_option("--labels", labels, "label SVOL (mask3d input; reports IoU when given)");

  auto* eval_cmd = app.add_subcommand("eval", "score segmenters on the test split");
  add_common(eval_cmd, true);
  eval_cmd->add_option("--manifest", manifest, "dataset manifest")->required();
  eval_cmd->add_option("--seg-ckpt", seg_ckpts, "segmenter checkpoint (repeatable)")->required();
  eval_cmd->add_option("--rpn-ckpt", rpn_ckpt, "detector checkpoint (attention mode)");

  auto* compare_cmd = app.add_subcommand("compare", "train and score plain, mask3d and attention");
  add_common(compare_cmd, true);
  compare_cmd->add_option("--manifest", manifest, "existing dataset manifest (generated when absent)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;
    err << "sbd: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const PipelineConfig cfg = resolve_config(common);
    const fs::path out_dir = common.out;
    std::optional<RpnModel> rpn;
    if (!rpn_ckpt.empty()) rpn.emplace(load_rpn(cfg, rpn_ckpt));

    if (gen->parsed()) {
      out << gen_data(cfg, out_dir).string() << '\n';
    } else if (train_rpn_cmd->parsed()) {
      const auto train = load_split(read_manifest(manifest), "train");
      RpnRunOptions opts{out_dir, std::nullopt, logger};
      if (!resume.empty()) opts.resume = fs::path(resume);
      out << train_rpn(cfg, train, opts).string() << '\n';
    } else if (train_seg_cmd->parsed()) {
      const Method m = require_method(mode);
      const auto train = load_split(read_manifest(manifest), "train");
      const auto result = train_seg(cfg, m, train, {out_dir, rpn ? &*rpn : nullptr, logger});
      out << result.best_checkpoint.string() << '\n';
    } else if (infer_cmd->parsed()) {
      const Checkpoint ckpt = load_checkpoint(seg_ckpts.front());
      const Method m = method_from_kind(ckpt.kind);
      const UNet3D model = load_unet(cfg, ckpt);
      Volume image = read_svol(volume);
      Volume lab = labels.empty() ? Volume(image.dims) : read_svol(labels);
      if (m == Method::kMask3d && labels.empty()) throw UsageError("mask3d inference needs --labels");
      if (m == Method::kAttention && !rpn) throw UsageError("attention inference needs --rpn-ckpt");
      const Sample s = make_sample(fs::path(volume).stem().string(), std::move(image), std::move(lab));
      const Prediction p = infer(model, m, s, rpn ? &*rpn : nullptr);
      if (out_dir.has_parent_path()) fs::create_directories(out_dir.parent_path());
      if (p.guidance) write_svol(out_dir.string() + "_attention.svol", *p.guidance);
      write_svol(out_dir.string() + "_pred.svol", p.labels);
      if (!labels.empty()) out << "iou\t" << fmt(iou_metric(p.labels, s.labels)) << '\n';
    } else if (eval_cmd->parsed()) {
      const auto test = load_split(read_manifest(manifest), "test");
      std::vector<EvalReport> reports;
      for (const auto& path : seg_ckpts) {
        const Checkpoint ckpt = load_checkpoint(path);
        const Method m = method_from_kind(ckpt.kind);
        if (m == Method::kAttention && !rpn) throw UsageError("attention checkpoint " + path + " needs --rpn-ckpt");
        reports.push_back(evaluate(load_unet(cfg, ckpt), m, test, rpn ? &*rpn : nullptr));
      }
      fs::create_directories(out_dir);
      const std::string table = format_report_table(reports);
      io::write_text(out_dir / "report.txt", table);
      io::write_text(out_dir / "report.tsv", format_report_tsv(reports));
      out << table;
    } else if (compare_cmd->parsed()) {
      CompareOptions opts;
      opts.out_dir = out_dir;
      if (!manifest.empty()) opts.manifest = fs::path(manifest);
      opts.log = logger;
      const auto result = compare(cfg, opts);
      out << format_report_table(result.reports);
    }
    return 0;
  } catch (const UsageError& e) {
    err << "sbd: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "sbd: numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "sbd: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "sbd: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace sbd::cli
