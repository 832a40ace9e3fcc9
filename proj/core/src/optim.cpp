#include "sbd/optim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "sbd/error.hpp"
#include "sbd/rng.hpp"

namespace sbd {

namespace {

std::vector<std::vector<float>> zeros_like(const std::vector<Parameter>& params) {
  std::vector<std::vector<float>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(static_cast<std::size_t>(p.value.numel()), 0.0f);
  return out;
}

void require_grads(const std::vector<Parameter>& params) {
  for (const auto& p : params) {
    if (!p.value.has_grad()) throw UsageError("optimizer step: parameter '" + p.name + "' has no gradient");
  }
}

Tensor buffer_tensor(const Parameter& p, const std::vector<float>& buf) {
  return Tensor::from_data(p.value.shape(), buf);
}

void restore(const std::map<std::string, const Tensor*>& by_name, const std::string& key,
             const Parameter& p, std::vector<float>& buf) {
  auto it = by_name.find(key);
  if (it == by_name.end()) throw FormatError("optimizer state is missing '" + key + "'", 0);
  if (it->second->shape() != p.value.shape()) {
    throw DimensionError("optimizer state '" + key + "' has shape " + shape_str(it->second->shape()) +
                         ", parameter has " + shape_str(p.value.shape()));
  }
  auto d = it->second->data();
  buf.assign(d.begin(), d.end());
}

std::map<std::string, const Tensor*> index_state(const std::vector<NamedTensor>& state) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& s : state) by_name[s.name] = &s.tensor;
  return by_name;
}

}  // namespace

void init_gaussian(std::vector<Parameter>& params, double std, std::uint64_t seed) {
  auto rng = make_rng(seed, Stream::kInit);
  for (auto& p : params) {
    auto d = p.value.data();
    if (p.is_bias) {
      std::fill(d.begin(), d.end(), 0.0f);
      continue;
    }
    const double sigma = p.init_std.value_or(std);
    for (auto& v : d) {
      // Box-Muller; one normal per pair of uniforms keeps the stream simple.
      const double u1 = uniform01(rng), u2 = uniform01(rng);
      const double z = std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
      v = static_cast<float>(sigma * z);
    }
  }
}

void zero_grad(std::vector<Parameter>& params) {
  for (auto& p : params) {
    p.value.zero_grad();
    p.value.grad();
  }
}

Sgd::Sgd(std::vector<Parameter> params, SgdOptions options)
    : params_(std::move(params)), options_(options), velocity_(zeros_like(params_)) {}

void Sgd::step() {
  require_grads(params_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i].value.data();
    auto g = params_[i].value.grad();
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double vel = options_.momentum * v[j] + (g[j] + options_.weight_decay * p[j]);
      v[j] = static_cast<float>(vel);
      p[j] = static_cast<float>(p[j] - options_.lr * vel);
    }
  }
}

std::vector<NamedTensor> Sgd::state() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({"sgd.velocity." + params_[i].name, buffer_tensor(params_[i], velocity_[i])});
  }
  return out;
}

void Sgd::load_state(const std::vector<NamedTensor>& state) {
  const auto by_name = index_state(state);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    restore(by_name, "sgd.velocity." + params_[i].name, params_[i], velocity_[i]);
  }
}

Adam::Adam(std::vector<Parameter> params, AdamOptions options)
    : params_(std::move(params)), options_(options), m_(zeros_like(params_)), v_(zeros_like(params_)) {}

void Adam::step() {
  require_grads(params_);
  ++step_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i].value.data();
    auto g = params_[i].value.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double mj = options_.beta1 * m[j] + (1.0 - options_.beta1) * g[j];
      const double vj = options_.beta2 * v[j] + (1.0 - options_.beta2) * static_cast<double>(g[j]) * g[j];
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = options_.lr * (mj / c1) / (std::sqrt(vj / c2) + options_.epsilon);
      p[j] = static_cast<float>(p[j] - update);
    }
  }
}

std::vector<NamedTensor> Adam::state() const {
  std::vector<NamedTensor> out;
  out.push_back({"adam.step", Tensor::scalar(static_cast<float>(step_))});
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({"adam.m." + params_[i].name, buffer_tensor(params_[i], m_[i])});
    out.push_back({"adam.v." + params_[i].name, buffer_tensor(params_[i], v_[i])});
  }
  return out;
}

void Adam::load_state(const std::vector<NamedTensor>& state) {
  const auto by_name = index_state(state);
  auto it = by_name.find("adam.step");
  if (it == by_name.end() || it->second->numel() != 1) throw FormatError("optimizer state is missing 'adam.step'", 0);
  step_ = static_cast<std::int64_t>(it->second->item());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    restore(by_name, "adam.m." + params_[i].name, params_[i], m_[i]);
    restore(by_name, "adam.v." + params_[i].name, params_[i], v_[i]);
  }
}

}  // namespace sbd
