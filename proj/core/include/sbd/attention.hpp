#pragma once

#include "sbd/phantom.hpp"
#include "sbd/rpn.hpp"
#include "sbd/volume.hpp"

// The binary attention channel handed from the detector to the segmenter.
//
// A voxel (d, y, x) is inside a box when its center (x + 0.5, y + 0.5) lies
// in the box's half-open extent.
namespace sbd {

/// Union of each slice's proposal boxes. Throws InputError when the number
/// of proposal slices differs from dims.d.
Volume build_attention(const ProposalSet& proposals, Dims dims);

/// Same rasterization from ground-truth boxes (an ideal detector).
Volume attention_from_gt_boxes(const SliceBoxes& boxes, Dims dims);

/// Filled 3D tight bounding box of all foreground voxels; all zero when the
/// labels are empty.
Volume build_3d_mask(const Volume& labels);

}  // namespace sbd
