#include "dsg/proposals.hpp"

#include "dsg/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace dsg {

int BoxSet::pair_index(int i, int j) const {
  if (i == j) throw std::invalid_argument("pair_index: i == j");
  int b = count();
  return i * (b - 1) + (j < i ? j : j - 1);
}

Eigen::Matrix<double, kDescriptorDim, 1> describe(const Image& image, const Box& box) {
  if (box.x2() <= 0.0 || box.x >= 1.0 || box.y2() <= 0.0 || box.y >= 1.0 || box.w <= 0.0 ||
      box.h <= 0.0) {
    throw std::invalid_argument("describe: box does not intersect the canvas");
  }
  int n = image.width;
  int x0 = std::max(0, static_cast<int>(std::floor(box.x * n)));
  int x1 = std::min(n - 1, static_cast<int>(std::ceil(box.x2() * n)));
  int y0 = std::max(0, static_cast<int>(std::floor(box.y * n)));
  int y1 = std::min(n - 1, static_cast<int>(std::ceil(box.y2() * n)));

  double hist[3][8] = {};
  long count = 0;
  double lum_sum = 0.0;
  for (int py = y0; py <= y1; ++py) {
    double cy = (py + 0.5) / n;
    if (cy < box.y || cy >= box.y2()) continue;
    for (int px = x0; px <= x1; ++px) {
      double cx = (px + 0.5) / n;
      if (cx < box.x || cx >= box.x2()) continue;
      const std::uint8_t* p = image.pixel(px, py);
      for (int c = 0; c < 3; ++c) hist[c][std::min(7, p[c] / 32)] += 1.0;
      lum_sum += (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
      ++count;
    }
  }

  Eigen::Matrix<double, kDescriptorDim, 1> d;
  for (int c = 0; c < 3; ++c) {
    for (int b = 0; b < 8; ++b) {
      d[c * 8 + b] = count > 0 ? hist[c][b] / static_cast<double>(count) : 0.125;
    }
  }
  d[24] = box.x;
  d[25] = box.y;
  d[26] = box.w;
  d[27] = box.h;
  d[28] = box.w * box.h;
  d[29] = count > 0 ? lum_sum / static_cast<double>(count) : 0.5;
  return d;
}

BoxSet propose(const Scene& scene, const Image& image, std::uint64_t seed,
               const ProposalConfig& cfg) {
  Rng rng(seed);
  BoxSet out;

  for (const Entity& e : scene.entities) {
    const Box& b = e.box;
    Box p;
    p.x = b.x + rng.uniform(-cfg.jitter, cfg.jitter) * b.w;
    p.y = b.y + rng.uniform(-cfg.jitter, cfg.jitter) * b.h;
    p.w = b.w + rng.uniform(-cfg.jitter, cfg.jitter) * b.w;
    p.h = b.h + rng.uniform(-cfg.jitter, cfg.jitter) * b.h;
    out.boxes.push_back(clip_to_canvas(p));
  }

  for (int k = 0; k < cfg.n_background; ++k) {
    for (int t = 0; t < cfg.bg_max_tries; ++t) {
      double area = rng.uniform(cfg.bg_area_min, cfg.bg_area_max);
      double aspect = rng.uniform(0.5, 2.0);
      Box b;
      b.w = std::min(1.0, std::sqrt(area * aspect));
      b.h = std::min(1.0, area / b.w);
      b.x = rng.uniform(0.0, 1.0 - b.w);
      b.y = rng.uniform(0.0, 1.0 - b.h);
      bool clear = true;
      for (const Entity& e : scene.entities) {
        if (iou(b, e.box) > cfg.bg_iou_reject) {
          clear = false;
          break;
        }
      }
      if (clear) {
        out.boxes.push_back(b);
        break;
      }
    }
  }

  int b = out.count();
  if (b > kMaxProposals) {
    throw std::runtime_error("propose: proposal count exceeds the 32-box cap");
  }
  out.desc.resize(b, kDescriptorDim);
  for (int i = 0; i < b; ++i) out.desc.row(i) = describe(image, out.boxes[i]).transpose();

  out.pairs.reserve(static_cast<size_t>(b) * (b - 1));
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < b; ++j) {
      if (i != j) out.pairs.emplace_back(i, j);
    }
  }
  out.union_boxes.reserve(out.pairs.size());
  out.union_desc.resize(static_cast<long>(out.pairs.size()), kDescriptorDim);
  for (size_t p = 0; p < out.pairs.size(); ++p) {
    Box u = union_box(out.boxes[out.pairs[p].first], out.boxes[out.pairs[p].second]);
    out.union_boxes.push_back(u);
    out.union_desc.row(static_cast<long>(p)) = describe(image, u).transpose();
  }
  return out;
}

}  // namespace dsg
