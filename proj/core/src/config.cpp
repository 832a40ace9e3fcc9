#include "sbd/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "sbd/binary_io.hpp"
#include "sbd/error.hpp"

namespace sbd {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw UsageError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw UsageError("config key '" + std::string(key) + "': expected true or false, got '" + std::string(text) + "'");
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view text) {
  std::vector<T> out;
  while (true) {
    const auto comma = text.find(',');
    out.push_back(parse_number<T>(key, trim(text.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      s += fmt(v[i]);
    } else {
      s += std::to_string(v[i]);
    }
  }
  return s;
}

struct Field {
  const char* key;
  std::function<void(PipelineConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

#define SBD_NUM(KEY, TYPE, EXPR)                                                                          \
  Field {                                                                                                 \
    KEY, [](PipelineConfig& c, std::string_view k, std::string_view v) { c.EXPR = parse_number<TYPE>(k, v); }, \
        [](const PipelineConfig& c) {                                                                      \
          if constexpr (std::is_floating_point_v<TYPE>) {                                                  \
            return fmt(c.EXPR);                                                                            \
          } else {                                                                                         \
            return std::to_string(c.EXPR);                                                                 \
          }                                                                                                \
        }                                                                                                  \
  }
#define SBD_BOOL(KEY, EXPR)                                                                                 \
  Field {                                                                                                   \
    KEY, [](PipelineConfig& c, std::string_view k, std::string_view v) { c.EXPR = parse_bool(k, v); },      \
        [](const PipelineConfig& c) { return std::string(c.EXPR ? "true" : "false"); }                     \
  }
#define SBD_LIST(KEY, TYPE, EXPR)                                                                             \
  Field {                                                                                                     \
    KEY, [](PipelineConfig& c, std::string_view k, std::string_view v) { c.EXPR = parse_list<TYPE>(k, v); }, \
        [](const PipelineConfig& c) { return fmt_list(c.EXPR); }                                             \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SBD_NUM("seed", std::uint64_t, seed),
      SBD_NUM("data.depth", int, data.dims.d),
      SBD_NUM("data.height", int, data.dims.h),
      SBD_NUM("data.width", int, data.dims.w),
      SBD_NUM("data.n_train", int, data.n_train),
      SBD_NUM("data.n_test", int, data.n_test),
      SBD_NUM("data.radius_min", double, data.phantom.radius_min),
      SBD_NUM("data.radius_max", double, data.phantom.radius_max),
      SBD_NUM("data.interior_mean", double, data.phantom.interior_mean),
      SBD_NUM("data.rim_brightness", double, data.phantom.rim_brightness),
      SBD_NUM("data.background_mean", double, data.phantom.background_mean),
      SBD_NUM("data.background_texture", double, data.phantom.background_texture),
      SBD_NUM("data.speckle", double, data.phantom.speckle),
      SBD_LIST("rpn.backbone_channels", int, rpn.backbone_channels),
      SBD_NUM("rpn.head_channels", int, rpn.head_channels),
      SBD_LIST("rpn.anchor_scales", double, rpn.anchor_scales),
      SBD_LIST("rpn.anchor_ratios", double, rpn.anchor_ratios),
      SBD_NUM("rpn.pos_iou", double, rpn.pos_iou),
      SBD_NUM("rpn.neg_iou", double, rpn.neg_iou),
      SBD_NUM("rpn.batch", int, rpn.batch),
      SBD_NUM("rpn.pos_fraction", double, rpn.pos_fraction),
      SBD_BOOL("rpn.positives_only", rpn.positives_only),
      SBD_NUM("rpn.score_thresh", double, rpn.score_thresh),
      SBD_NUM("rpn.nms_thresh", double, rpn.nms_thresh),
      SBD_NUM("rpn.max_proposals", int, rpn.max_proposals_per_slice),
      SBD_NUM("rpn.init_std", double, rpn.init_std),
      SBD_NUM("rpn.input_scale", double, rpn.input_scale),
      Field{"rpn.backbone_init",
            [](PipelineConfig& c, std::string_view k, std::string_view v) {
              if (v == "he") {
                c.rpn.backbone_init = BackboneInit::kHe;
              } else if (v == "gaussian") {
                c.rpn.backbone_init = BackboneInit::kGaussian;
              } else {
                throw UsageError("config key '" + std::string(k) + "': expected he or gaussian, got '" +
                                 std::string(v) + "'");
              }
            },
            [](const PipelineConfig& c) {
              return std::string(c.rpn.backbone_init == BackboneInit::kHe ? "he" : "gaussian");
            }},
      SBD_NUM("rpn.iters", std::int64_t, rpn_train.iters),
      SBD_NUM("rpn.lr", double, rpn_train.sgd.lr),
      SBD_NUM("rpn.momentum", double, rpn_train.sgd.momentum),
      SBD_NUM("rpn.weight_decay", double, rpn_train.sgd.weight_decay),
      SBD_NUM("rpn.log_every", std::int64_t, rpn_train.log_every),
      SBD_NUM("rpn.checkpoint_every", std::int64_t, rpn_train.checkpoint_every),
      SBD_BOOL("rpn.augment", rpn_train.augment),
      SBD_NUM("rpn.max_shift", double, rpn_train.max_shift),
      SBD_NUM("unet.depth", int, unet.depth),
      SBD_NUM("unet.base_channels", int, unet.base_channels),
      SBD_NUM("unet.init_std", double, unet.init_std),
      SBD_NUM("seg.iters", std::int64_t, seg.iters),
      SBD_NUM("seg.lr", double, seg.adam.lr),
      SBD_NUM("seg.beta1", double, seg.adam.beta1),
      SBD_NUM("seg.beta2", double, seg.adam.beta2),
      SBD_NUM("seg.epsilon", double, seg.adam.epsilon),
      SBD_NUM("seg.log_every", std::int64_t, seg.log_every),
      SBD_NUM("seg.checkpoint_every", std::int64_t, seg.checkpoint_every),
      SBD_NUM("seg.val_phantoms", int, seg.val_phantoms),
      SBD_BOOL("seg.gt_attention", seg.gt_attention),
  };
  return table;
}

#undef SBD_NUM
#undef SBD_BOOL
#undef SBD_LIST

void require(bool ok, const std::string& message) {
  if (!ok) throw UsageError("config: " + message);
}

}  // namespace

void PipelineConfig::validate() const {
  const auto& d = data.dims;
  require(d.d > 0 && d.h > 0 && d.w > 0, "data.depth, data.height and data.width must be positive");
  require(data.n_train > 0, "data.n_train must be positive");
  require(data.n_test > 0, "data.n_test must be positive");
  const auto& p = data.phantom;
  require(p.radius_min > 0 && p.radius_min <= p.radius_max, "data.radius_min must lie in (0, data.radius_max]");
  require(p.speckle >= 0 && p.speckle <= 1, "data.speckle must lie in [0, 1]");
  for (double v : {p.interior_mean, p.rim_brightness, p.background_mean})
    require(v >= 0 && v <= 1, "data intensity means must lie in [0, 1]");
  require(p.background_texture >= 0, "data.background_texture must be non-negative");

  try {
    rpn.validate();
    unet.validate();
  } catch (const InputError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  const int ds = rpn.downsample_factor();
  require(d.h % ds == 0, "data.height " + std::to_string(d.h) + " is not divisible by the detector downsample factor " +
                             std::to_string(ds));
  require(d.w % ds == 0, "data.width " + std::to_string(d.w) + " is not divisible by the detector downsample factor " +
                             std::to_string(ds));
  const int us = 1 << unet.depth;
  require(d.d % us == 0, "data.depth " + std::to_string(d.d) + " is not divisible by 2^unet.depth = " + std::to_string(us));
  require(d.h % us == 0, "data.height " + std::to_string(d.h) + " is not divisible by 2^unet.depth = " + std::to_string(us));
  require(d.w % us == 0, "data.width " + std::to_string(d.w) + " is not divisible by 2^unet.depth = " + std::to_string(us));

  require(rpn_train.iters >= 0, "rpn.iters must be non-negative");
  require(rpn_train.sgd.lr > 0, "rpn.lr must be positive");
  require(rpn_train.sgd.momentum >= 0 && rpn_train.sgd.momentum < 1, "rpn.momentum must lie in [0, 1)");
  require(rpn_train.sgd.weight_decay >= 0, "rpn.weight_decay must be non-negative");
  require(rpn_train.max_shift >= 0 && rpn_train.max_shift < 1, "rpn.max_shift must lie in [0, 1)");
  require(rpn_train.log_every > 0, "rpn.log_every must be positive");
  require(rpn_train.checkpoint_every > 0, "rpn.checkpoint_every must be positive");
  require(seg.iters >= 0, "seg.iters must be non-negative");
  require(seg.adam.lr > 0, "seg.lr must be positive");
  require(seg.adam.beta1 >= 0 && seg.adam.beta1 < 1, "seg.beta1 must lie in [0, 1)");
  require(seg.adam.beta2 >= 0 && seg.adam.beta2 < 1, "seg.beta2 must lie in [0, 1)");
  require(seg.adam.epsilon > 0, "seg.epsilon must be positive");
  require(seg.log_every > 0, "seg.log_every must be positive");
  require(seg.checkpoint_every > 0, "seg.checkpoint_every must be positive");
  require(seg.val_phantoms > 0, "seg.val_phantoms must be positive");
}

void set_config_value(PipelineConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(cfg, key, trim(value));
      return;
    }
  }
  throw UsageError("config: unknown key '" + std::string(key) + "'");
}

PipelineConfig parse_config(std::string_view text) {
  PipelineConfig cfg;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string format_config(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(cfg);
    out += '\n';
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

}  // namespace sbd
