#pragma once

#include "dsg/scene.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dsg {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  std::uint8_t* pixel(int x, int y) { return &rgb[3 * (static_cast<size_t>(y) * width + x)]; }
  const std::uint8_t* pixel(int x, int y) const {
    return &rgb[3 * (static_cast<size_t>(y) * width + x)];
  }
};

// Pure function of the scene: mid-gray background, entities painted far to
// near by depth. Each entity has a pure-color core and an outer band whose
// brightness scales with depth, which is the image-level depth cue the
// box descriptors pick up as mean luminance.
Image rasterize(const Scene& scene);

void write_ppm(const std::string& path, const Image& image);
Image read_ppm(const std::string& path);

}  // namespace dsg
