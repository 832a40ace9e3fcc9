#include "sbd/unet.hpp"

#include "sbd/error.hpp"
#include "sbd/ops.hpp"

namespace sbd {

void UNetConfig::validate() const {
  if (depth < 0) throw InputError("unet.depth must be non-negative");
  if (base_channels <= 0) throw InputError("unet.base_channels must be positive");
  if (in_channels <= 0) throw InputError("unet in_channels must be positive");
  if (num_labels < 2) throw InputError("unet.num_labels must be at least 2");
  if (!(init_std > 0)) throw InputError("init std must be positive");
}

UNet3D::UNet3D(const UNetConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  auto conv3 = [](const std::string& name, std::int64_t in, std::int64_t out) {
    return ConvLayer::make(name, {out, in, 3, 3, 3}, out);
  };
  std::int64_t in = config_.in_channels;
  std::int64_t ch = config_.base_channels;
  for (int l = 0; l < config_.depth; ++l) {
    const std::string name = "enc" + std::to_string(l);
    encoder_.push_back({conv3(name + ".conv1", in, ch), conv3(name + ".conv2", ch, ch)});
    in = ch;
    ch *= 2;
  }
  bottom_ = {conv3("bottom.conv1", in, ch), conv3("bottom.conv2", ch, ch)};
  up_.resize(static_cast<std::size_t>(config_.depth));
  decoder_.resize(static_cast<std::size_t>(config_.depth));
  for (int l = config_.depth - 1; l >= 0; --l) {
    const std::int64_t out = ch / 2;
    const std::string lv = std::to_string(l);
    up_[static_cast<std::size_t>(l)] = ConvLayer::make("up" + lv + ".tconv", {ch, out, 2, 2, 2}, out);
    decoder_[static_cast<std::size_t>(l)] = {conv3("dec" + lv + ".conv1", 2 * out, out),
                                             conv3("dec" + lv + ".conv2", out, out)};
    ch = out;
  }
  head_ = ConvLayer::make("head", {config_.num_labels, ch, 1, 1, 1}, config_.num_labels);
  auto params = parameters();
  init_gaussian(params, config_.init_std, seed);
}

std::vector<Parameter> UNet3D::parameters() const {
  std::vector<Parameter> out;
  for (const auto& l : encoder_) {
    l.conv1.append_to(out);
    l.conv2.append_to(out);
  }
  bottom_.conv1.append_to(out);
  bottom_.conv2.append_to(out);
  for (int l = config_.depth - 1; l >= 0; --l) {
    up_[static_cast<std::size_t>(l)].append_to(out);
    decoder_[static_cast<std::size_t>(l)].conv1.append_to(out);
    decoder_[static_cast<std::size_t>(l)].conv2.append_to(out);
  }
  head_.append_to(out);
  return out;
}

Tensor UNet3D::forward(const Tensor& input) const {
  if (input.rank() != 5 || input.dim(0) != 1 || input.dim(1) != config_.in_channels) {
    throw DimensionError("unet_forward: expected [1," + std::to_string(config_.in_channels) +
                         ",D,H,W] input, got " + shape_str(input.shape()));
  }
  const std::int64_t factor = std::int64_t{1} << config_.depth;
  static const char* kAxis[3] = {"depth", "height", "width"};
  for (int a = 0; a < 3; ++a) {
    if (input.dim(2 + a) % factor != 0) {
      throw DimensionError("unet_forward: " + std::string(kAxis[a]) + " extent " + std::to_string(input.dim(2 + a)) +
                           " is not divisible by " + std::to_string(factor));
    }
  }
  auto block = [](const Tensor& x, const Level& lv) {
    Tensor y = ops::relu(ops::conv3d(x, lv.conv1.weight.value, lv.conv1.bias.value, 1, 1));
    return ops::relu(ops::conv3d(y, lv.conv2.weight.value, lv.conv2.bias.value, 1, 1));
  };
  std::vector<Tensor> skips;
  Tensor x = input;
  for (const auto& lv : encoder_) {
    x = block(x, lv);
    skips.push_back(x);
    x = ops::max_pool3d(x, 2);
  }
  x = block(x, bottom_);
  for (int l = config_.depth - 1; l >= 0; --l) {
    const auto& up = up_[static_cast<std::size_t>(l)];
    x = ops::conv_transpose3d_2x(x, up.weight.value, up.bias.value);
    x = block(ops::concat_channels(skips[static_cast<std::size_t>(l)], x), decoder_[static_cast<std::size_t>(l)]);
  }
  return ops::conv3d(x, head_.weight.value, head_.bias.value);
}

Volume UNet3D::predict(const Tensor& input) const {
  NoGradGuard no_grad;
  return argmax_labels(forward(input));
}

Tensor seg_loss(const Tensor& logits, const Volume& labels) {
  if (logits.rank() != 5 || logits.dim(0) != 1 || logits.dim(2) != labels.dims.d || logits.dim(3) != labels.dims.h ||
      logits.dim(4) != labels.dims.w) {
    throw DimensionError("seg_loss: logits " + shape_str(logits.shape()) + " do not match label volume");
  }
  std::vector<std::int32_t> classes(labels.data.size());
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const float v = labels.data[i];
    if (v != 0.0f && v != 1.0f) throw InputError("seg_loss: labels must be 0 or 1");
    classes[i] = static_cast<std::int32_t>(v);
  }
  return ops::softmax_cross_entropy(logits, classes);
}

Volume argmax_labels(const Tensor& logits) {
  if (logits.rank() != 5 || logits.dim(0) != 1) {
    throw DimensionError("argmax_labels: expected [1,L,D,H,W], got " + shape_str(logits.shape()));
  }
  const Dims d{static_cast<int>(logits.dim(2)), static_cast<int>(logits.dim(3)), static_cast<int>(logits.dim(4))};
  const std::int64_t L = logits.dim(1), S = d.size();
  auto z = logits.data();
  Volume out(d);
  for (std::int64_t s = 0; s < S; ++s) {
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < L; ++c)
      if (z[c * S + s] > z[best * S + s]) best = c;
    out.data[static_cast<std::size_t>(s)] = static_cast<float>(best);
  }
  return out;
}

}  // namespace sbd
