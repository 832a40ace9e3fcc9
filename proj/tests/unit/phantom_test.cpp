#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>
#include <queue>
#include <set>

#include "sbd/attention.hpp"
#include "sbd/error.hpp"
#include "sbd/phantom.hpp"

namespace sbd {
namespace {

const Dims kDims{32, 48, 32};

int components6(const Volume& labels) {
  const Dims d = labels.dims;
  std::vector<char> seen(labels.data.size(), 0);
  int count = 0;
  for (int z = 0; z < d.d; ++z)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x) {
        if (labels.at(z, y, x) == 0.0f || seen[static_cast<std::size_t>(labels.index(z, y, x))]) continue;
        ++count;
        std::queue<std::array<int, 3>> q;
        q.push({z, y, x});
        seen[static_cast<std::size_t>(labels.index(z, y, x))] = 1;
        while (!q.empty()) {
          const auto [cz, cy, cx] = q.front();
          q.pop();
          const int nb[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
          for (const auto& o : nb) {
            const int zz = cz + o[0], yy = cy + o[1], xx = cx + o[2];
            if (zz < 0 || yy < 0 || xx < 0 || zz >= d.d || yy >= d.h || xx >= d.w) continue;
            const auto i = static_cast<std::size_t>(labels.index(zz, yy, xx));
            if (labels.data[i] == 0.0f || seen[i]) continue;
            seen[i] = 1;
            q.push({zz, yy, xx});
          }
        }
      }
  return count;
}

// Min/max scan per slice, written independently of derive_gt_boxes.
std::optional<Box> scan_box(const Volume& labels, int z) {
  std::optional<Box> b;
  for (int y = 0; y < labels.dims.h; ++y)
    for (int x = 0; x < labels.dims.w; ++x) {
      if (labels.at(z, y, x) == 0.0f) continue;
      const Box cell{double(x), double(y), double(x + 1), double(y + 1)};
      if (!b) {
        b = cell;
      } else {
        b = Box{std::min(b->x1, cell.x1), std::min(b->y1, cell.y1), std::max(b->x2, cell.x2), std::max(b->y2, cell.y2)};
      }
    }
  return b;
}

TEST(Phantom, InvariantsOverManySeeds) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const Phantom p = gen_phantom(seed, kDims);
    ASSERT_EQ(p.image.dims, kDims);
    ASSERT_EQ(p.labels.dims, kDims);
    EXPECT_EQ(components6(p.labels), 1) << "seed " << seed;
    for (float v : p.image.data) ASSERT_TRUE(std::isfinite(v) && v >= 0.0f && v <= 1.0f) << "seed " << seed;
    for (float v : p.labels.data) ASSERT_TRUE(v == 0.0f || v == 1.0f);
    ASSERT_EQ(p.gt_boxes.size(), 32u);
    for (int z = 0; z < kDims.d; ++z) EXPECT_EQ(p.gt_boxes[static_cast<std::size_t>(z)], scan_box(p.labels, z));
    const double fraction = static_cast<double>(p.labels.count_nonzero()) / static_cast<double>(kDims.size());
    EXPECT_GE(fraction, 0.005) << "seed " << seed;
    EXPECT_LE(fraction, 0.15) << "seed " << seed;
    const Volume att = attention_from_gt_boxes(p.gt_boxes, kDims);
    for (std::size_t i = 0; i < att.data.size(); ++i) ASSERT_GE(att.data[i], p.labels.data[i]);
  }
}

TEST(Phantom, SameSeedIsBitIdentical) {
  const Phantom a = gen_phantom(42, kDims), b = gen_phantom(42, kDims), c = gen_phantom(43, kDims);
  EXPECT_EQ(a.image.data, b.image.data);
  EXPECT_EQ(a.labels.data, b.labels.data);
  EXPECT_NE(a.image.data, c.image.data);
}

TEST(Phantom, NoiseFreeInteriorDarkerThanRim) {
  PhantomParams params;
  params.speckle = 0;
  const Phantom p = gen_phantom(5, kDims, params);
  double interior = 0, rim = 0;
  int ni = 0, nr = 0;
  for (std::size_t i = 0; i < p.labels.data.size(); ++i) {
    if (p.labels.data[i] == 0.0f) continue;
    if (std::abs(p.image.data[i] - params.rim_brightness) < 1e-6) {
      rim += p.image.data[i];
      ++nr;
    } else {
      interior += p.image.data[i];
      ++ni;
    }
  }
  ASSERT_GT(ni, 0);
  ASSERT_GT(nr, 0);
  EXPECT_LT(interior / ni, rim / nr);
  EXPECT_NEAR(interior / ni, params.interior_mean, 1e-6);
}

TEST(Phantom, FirstAndLastSlicesEmpty) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Phantom p = gen_phantom(seed, kDims);
    EXPECT_FALSE(p.gt_boxes.front().has_value());
    EXPECT_FALSE(p.gt_boxes.back().has_value());
  }
}

TEST(Phantom, ImpossibleFitIsInputError) {
  PhantomParams params;
  params.radius_min = 20;
  params.radius_max = 30;
  EXPECT_THROW(gen_phantom(1, {16, 16, 16}, params), InputError);
  params = {};
  params.speckle = 1.5;
  EXPECT_THROW(gen_phantom(1, kDims, params), InputError);
}

TEST(DeriveGtBoxes, EmptyAndSingleVoxel) {
  Volume labels(Dims{3, 5, 6});
  labels.at(1, 2, 4) = 1;
  const auto boxes = derive_gt_boxes(labels);
  EXPECT_FALSE(boxes[0].has_value());
  ASSERT_TRUE(boxes[1].has_value());
  EXPECT_EQ(*boxes[1], (Box{4, 2, 5, 3}));
  EXPECT_FALSE(boxes[2].has_value());
}

TEST(DeriveGtBoxes, MatchesScanOnRandomMasks) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    Volume labels(Dims{4, 9, 7});
    for (auto& v : labels.data) v = (rng() % 11 == 0) ? 1.0f : 0.0f;
    const auto boxes = derive_gt_boxes(labels);
    for (int z = 0; z < 4; ++z) EXPECT_EQ(boxes[static_cast<std::size_t>(z)], scan_box(labels, z));
  }
}

TEST(MirrorX, FlipsImageLabelsAndBoxes) {
  Phantom p = gen_phantom(3, kDims);
  const Phantom orig = p;
  mirror_x(p);
  for (int z = 0; z < kDims.d; z += 5)
    for (int y = 0; y < kDims.h; y += 3)
      for (int x = 0; x < kDims.w; ++x) {
        EXPECT_EQ(p.image.at(z, y, x), orig.image.at(z, y, kDims.w - 1 - x));
        EXPECT_EQ(p.labels.at(z, y, x), orig.labels.at(z, y, kDims.w - 1 - x));
      }
  for (int z = 0; z < kDims.d; ++z) EXPECT_EQ(p.gt_boxes[static_cast<std::size_t>(z)], scan_box(p.labels, z));
}

TEST(Dataset, CountsSplitsAndMirroring) {
  PhantomParams params;
  const auto ds = make_dataset(7, kDims, params);
  ASSERT_EQ(ds.size(), 19u);
  int train = 0;
  std::set<std::uint64_t> seeds;
  for (const auto& e : ds) {
    train += e.split == "train";
    seeds.insert(e.phantom.seed);
  }
  EXPECT_EQ(train, 10);
  EXPECT_EQ(seeds.size(), 19u);
  const auto expected = dataset_seeds(7, 19);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(ds[i].phantom.seed, expected[i]);
  // Training phantoms 5..9 are mirrored copies of their seeds' phantoms.
  for (std::size_t i = 0; i < 10; ++i) {
    Phantom fresh = gen_phantom(ds[i].phantom.seed, kDims, params);
    if (i >= 5) mirror_x(fresh);
    EXPECT_EQ(fresh.image.data, ds[i].phantom.image.data) << i;
  }
  const auto again = make_dataset(7, kDims, params);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(again[i].phantom.image.data, ds[i].phantom.image.data);
}

}  // namespace
}  // namespace sbd
