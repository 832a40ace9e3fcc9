#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sbd/geometry.hpp"
#include "sbd/volume.hpp"

namespace sbd {

/// Appearance knobs of the synthetic ultrasound phantom.
struct PhantomParams {
  double radius_min = 4.0;  ///< semi-axis range, voxels
  double radius_max = 9.0;
  double interior_mean = 0.15;   ///< hypoechoic core
  double rim_brightness = 0.9;   ///< one-voxel bright shell
  double background_mean = 0.45;
  double background_texture = 0.15;  ///< amplitude of low-frequency tissue texture
  double speckle = 0.5;  ///< 0 = noise free, 1 = fully developed Rayleigh speckle
};

using SliceBoxes = std::vector<std::optional<Box>>;

/// An ellipsoidal "femoral head" in speckled tissue, with voxel labels and
/// one tight ground-truth box per object-bearing slice.
struct Phantom {
  Volume image;
  Volume labels;
  SliceBoxes gt_boxes;
  std::uint64_t seed = 0;
};

/// Deterministic per seed. Throws InputError when no ellipsoid of the
/// requested size fits after 100 attempts.
Phantom gen_phantom(std::uint64_t seed, Dims dims, const PhantomParams& params = {});

/// Tight box per slice along depth; slices without foreground get none.
SliceBoxes derive_gt_boxes(const Volume& labels);

/// Mirrors image, labels and boxes along x (left/right hip).
void mirror_x(Phantom& p);

struct DatasetEntry {
  std::string split;  ///< "train" or "test"
  Phantom phantom;
};

/// n_train + n_test phantoms with distinct seeds. The second half of the
/// training phantoms is mirrored along x.
std::vector<DatasetEntry> make_dataset(std::uint64_t seed, Dims dims, const PhantomParams& params,
                                       int n_train = 10, int n_test = 9);

/// Seeds make_dataset uses for its phantoms, in order.
std::vector<std::uint64_t> dataset_seeds(std::uint64_t seed, int count);

}  // namespace sbd
