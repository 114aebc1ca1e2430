#include "dsg/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace dsg {

namespace {

constexpr std::uint8_t kBackground = 128;
constexpr double kCoreScale = 0.72;           // fraction of the box that stays pure color
constexpr double kBandShadeFloor = 0.05;      // band brightness at depth 0

bool inside_shape(int shape, const Box& b, double px, double py) {
  if (px < b.x || px >= b.x2() || py < b.y || py >= b.y2()) return false;
  switch (shape) {
    case 0:  // square: the whole box
      return true;
    case 1: {  // circle: inscribed ellipse
      double nx = (px - b.center_x()) / (0.5 * b.w);
      double ny = (py - b.center_y()) / (0.5 * b.h);
      return nx * nx + ny * ny <= 1.0;
    }
    case 2: {  // triangle: apex at top-center, base at the bottom edge
      double t = (py - b.y) / b.h;
      return std::abs(px - b.center_x()) <= 0.5 * b.w * t;
    }
    default:
      throw std::invalid_argument("rasterize: bad shape id");
  }
}

Box core_box(const Box& b) {
  double cw = b.w * kCoreScale;
  double ch = b.h * kCoreScale;
  return Box{b.center_x() - 0.5 * cw, b.center_y() - 0.5 * ch, cw, ch};
}

}  // namespace

Image rasterize(const Scene& scene) {
  int n = scene.canvas_px;
  Image img;
  img.width = n;
  img.height = n;
  img.rgb.assign(static_cast<size_t>(n) * n * 3, kBackground);

  // Painter's order: far to near; smaller depth is further behind.
  std::vector<int> order(scene.entities.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scene.entities[a].depth < scene.entities[b].depth;
  });

  for (int idx : order) {
    const Entity& e = scene.entities[idx];
    auto rgb = color_rgb(e.color);
    double band_shade = kBandShadeFloor + (1.0 - kBandShadeFloor) * e.depth;
    Box core = core_box(e.box);
    int x0 = std::max(0, static_cast<int>(std::floor(e.box.x * n)));
    int x1 = std::min(n - 1, static_cast<int>(std::ceil(e.box.x2() * n)));
    int y0 = std::max(0, static_cast<int>(std::floor(e.box.y * n)));
    int y1 = std::min(n - 1, static_cast<int>(std::ceil(e.box.y2() * n)));
    for (int py = y0; py <= y1; ++py) {
      double cy = (py + 0.5) / n;
      for (int px = x0; px <= x1; ++px) {
        double cx = (px + 0.5) / n;
        if (!inside_shape(e.shape, e.box, cx, cy)) continue;
        double shade = inside_shape(e.shape, core, cx, cy) ? 1.0 : band_shade;
        std::uint8_t* p = img.pixel(px, py);
        for (int c = 0; c < 3; ++c) {
          p[c] = static_cast<std::uint8_t>(std::lround(rgb[c] * shade));
        }
      }
    }
  }
  return img;
}

void write_ppm(const std::string& path, const Image& image) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open image for writing: " + path);
  os << "P6\n" << image.width << " " << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.rgb.data()),
           static_cast<std::streamsize>(image.rgb.size()));
  if (!os) throw std::runtime_error("image write failed: " + path);
}

Image read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open image: " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0) {
    throw std::runtime_error("unsupported PPM file: " + path);
  }
  is.get();  // single whitespace after header
  Image img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<size_t>(w) * h * 3);
  is.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!is) throw std::runtime_error("truncated PPM file: " + path);
  return img;
}

}  // namespace dsg
