#include "sbd/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "sbd/error.hpp"
#include "sbd/rng.hpp"

namespace sbd {

namespace {

constexpr int kMaxAttempts = 100;

struct Ellipsoid {
  double cz, cy, cx;
  double az, ay, ax;

  double radius2(int z, int y, int x) const {
    const double dz = (z - cz) / az, dy = (y - cy) / ay, dx = (x - cx) / ax;
    return dz * dz + dy * dy + dx * dx;
  }
};

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Keeps a one-voxel margin so the first and last slices stay empty.
std::optional<Ellipsoid> place(std::mt19937_64& rng, Dims dims, const PhantomParams& p) {
  Ellipsoid e{};
  e.az = uniform(rng, p.radius_min, p.radius_max);
  e.ay = uniform(rng, p.radius_min, p.radius_max);
  e.ax = uniform(rng, p.radius_min, p.radius_max);
  auto center = [&](double a, int extent) -> std::optional<double> {
    const double lo = a + 1.0, hi = extent - 2.0 - a;
    if (hi < lo) return std::nullopt;
    return uniform(rng, lo, hi);
  };
  auto cz = center(e.az, dims.d), cy = center(e.ay, dims.h), cx = center(e.ax, dims.w);
  if (!cz || !cy || !cx) return std::nullopt;
  e.cz = *cz;
  e.cy = *cy;
  e.cx = *cx;
  return e;
}

}  // namespace

Phantom gen_phantom(std::uint64_t seed, Dims dims, const PhantomParams& params) {
  if (dims.d <= 0 || dims.h <= 0 || dims.w <= 0) throw InputError("phantom dims must be positive");
  if (!(params.radius_min > 0) || params.radius_max < params.radius_min) {
    throw InputError("phantom radius range must satisfy 0 < min <= max");
  }
  if (params.speckle < 0 || params.speckle > 1) throw InputError("speckle scale must lie in [0, 1]");

  std::mt19937_64 rng(seed);
  std::optional<Ellipsoid> shape;
  for (int attempt = 0; attempt < kMaxAttempts && !shape; ++attempt) shape = place(rng, dims, params);
  if (!shape) {
    throw InputError("ellipsoid with semi-axes in [" + std::to_string(params.radius_min) + ", " +
                     std::to_string(params.radius_max) + "] does not fit the volume");
  }
  const Ellipsoid& e = *shape;

  Phantom p;
  p.seed = seed;
  p.labels = Volume(dims);
  for (int z = 0; z < dims.d; ++z)
    for (int y = 0; y < dims.h; ++y)
      for (int x = 0; x < dims.w; ++x)
        if (e.radius2(z, y, x) <= 1.0) p.labels.at(z, y, x) = 1.0f;

  // Low-frequency tissue texture: a few random plane waves plus a lateral
  // brightness ramp so that left and right phantoms differ.
  struct Wave {
    double kz, ky, kx, phase;
  };
  std::vector<Wave> waves(4);
  for (auto& w : waves) {
    w = {uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5),
         uniform(rng, 0.0, 2 * std::numbers::pi)};
  }
  const double ramp = uniform(rng, 0.05, 0.15);

  auto is_rim = [&](int z, int y, int x) {
    if (p.labels.at(z, y, x) == 0.0f) return false;
    const int nb[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
    for (const auto& o : nb) {
      const int zz = z + o[0], yy = y + o[1], xx = x + o[2];
      if (zz < 0 || yy < 0 || xx < 0 || zz >= dims.d || yy >= dims.h || xx >= dims.w) return true;
      if (p.labels.at(zz, yy, xx) == 0.0f) return true;
    }
    return false;
  };

  const double mean_rayleigh = std::sqrt(std::numbers::pi / 2.0);
  p.image = Volume(dims);
  for (int z = 0; z < dims.d; ++z)
    for (int y = 0; y < dims.h; ++y)
      for (int x = 0; x < dims.w; ++x) {
        double v;
        if (is_rim(z, y, x)) {
          v = params.rim_brightness;
        } else if (p.labels.at(z, y, x) != 0.0f) {
          v = params.interior_mean;
        } else {
          double t = 0.0;
          for (const auto& w : waves) t += std::sin(w.kz * z + w.ky * y + w.kx * x + w.phase);
          v = params.background_mean + params.background_texture * t / waves.size() +
              ramp * (static_cast<double>(x) / std::max(1, dims.w - 1) - 0.5);
        }
        // Rayleigh draw is consumed unconditionally so the speckle pattern
        // does not depend on the speckle scale.
        const double u = uniform01(rng);
        const double rayleigh = std::sqrt(-2.0 * std::log1p(-u));
        const double factor = (1.0 - params.speckle) + params.speckle * rayleigh / mean_rayleigh;
        p.image.at(z, y, x) = static_cast<float>(std::clamp(v * factor, 0.0, 1.0));
      }

  p.gt_boxes = derive_gt_boxes(p.labels);
  return p;
}

SliceBoxes derive_gt_boxes(const Volume& labels) {
  const Dims d = labels.dims;
  SliceBoxes boxes(static_cast<std::size_t>(d.d));
  for (int z = 0; z < d.d; ++z) {
    int x0 = d.w, y0 = d.h, x1 = -1, y1 = -1;
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x)
        if (labels.at(z, y, x) != 0.0f) {
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
    if (x1 >= 0) boxes[static_cast<std::size_t>(z)] = Box{double(x0), double(y0), double(x1 + 1), double(y1 + 1)};
  }
  return boxes;
}

void mirror_x(Phantom& p) {
  const Dims d = p.image.dims;
  for (Volume* v : {&p.image, &p.labels})
    for (int z = 0; z < d.d; ++z)
      for (int y = 0; y < d.h; ++y) {
        auto row = v->data.begin() + v->index(z, y, 0);
        std::reverse(row, row + d.w);
      }
  for (auto& b : p.gt_boxes) {
    if (b) b = Box{d.w - b->x2, b->y1, d.w - b->x1, b->y2};
  }
}

std::vector<std::uint64_t> dataset_seeds(std::uint64_t seed, int count) {
  std::vector<std::uint64_t> seeds;
  std::set<std::uint64_t> used;
  for (std::uint64_t i = 0; static_cast<int>(seeds.size()) < count; ++i) {
    const auto s = mix_seed(seed, static_cast<std::uint64_t>(Stream::kPhantomSeeds), i);
    if (used.insert(s).second) seeds.push_back(s);
  }
  return seeds;
}

std::vector<DatasetEntry> make_dataset(std::uint64_t seed, Dims dims, const PhantomParams& params,
                                       int n_train, int n_test) {
  if (n_train < 0 || n_test < 0) throw InputError("dataset split sizes must be non-negative");
  const auto seeds = dataset_seeds(seed, n_train + n_test);
  std::vector<DatasetEntry> out;
  out.reserve(seeds.size());
  for (int i = 0; i < n_train + n_test; ++i) {
    DatasetEntry e{i < n_train ? "train" : "test", gen_phantom(seeds[static_cast<std::size_t>(i)], dims, params)};
    if (i < n_train && i >= n_train / 2) mirror_x(e.phantom);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace sbd
