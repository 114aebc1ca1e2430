#pragma once

#include "dsg/autodiff.hpp"
#include "dsg/geometry.hpp"
#include "dsg/raster.hpp"
#include "dsg/scene.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace dsg {

// 8 histogram bins per RGB channel + (x, y, w, h) + area fraction + mean
// luminance of the crop.
inline constexpr int kDescriptorDim = 30;
inline constexpr int kMaxProposals = 32;

struct ProposalConfig {
  double jitter = 0.10;       // uniform jitter, fraction of w/h per coordinate
  int n_background = 4;
  double bg_area_min = 0.005;  // background box area, fraction of canvas
  double bg_area_max = 0.10;
  double bg_iou_reject = 0.3;  // reject background boxes above this vs any GT
  int bg_max_tries = 100;
};

struct BoxSet {
  std::vector<Box> boxes;
  MatrixRM desc;  // B x 30
  std::vector<std::pair<int, int>> pairs;  // all ordered (i, j), i != j, i-major
  std::vector<Box> union_boxes;
  MatrixRM union_desc;  // P x 30

  int count() const { return static_cast<int>(boxes.size()); }
  int pair_count() const { return static_cast<int>(pairs.size()); }
  // Row of the ordered pair (i, j) in the i-major layout.
  int pair_index(int i, int j) const;
};

// Crop statistics for a box. Throws if the box does not intersect the canvas.
Eigen::Matrix<double, kDescriptorDim, 1> describe(const Image& image, const Box& box);

// Detector stage stand-in: one jittered copy of every entity box plus random
// background boxes, with descriptors and all pairwise union features.
// Deterministic in seed.
BoxSet propose(const Scene& scene, const Image& image, std::uint64_t seed,
               const ProposalConfig& config);

// Trainable feature embedding f_i = MLP(d_i); see model.hpp for wiring.

}  // namespace dsg
