#include "cipherbreak/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "cipherbreak/errors.hpp"
#include "cipherbreak/image_io.hpp"
#include "cipherbreak/rng.hpp"

namespace cipherbreak::synthetic {

namespace {

using Color = std::array<std::uint8_t, 3>;

Color hsv(double h, double s, double v) {
  h = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(h);
  const double f = h - i;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r = 0, g = 0, b = 0;
  switch (i % 6) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
  auto q8 = [](double x) { return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255)); };
  return {q8(r), q8(g), q8(b)};
}

Rng image_rng(std::uint64_t seed, std::uint64_t index) {
  // splitmix-style mixing keeps neighbouring indices decorrelated
  std::uint64_t z = seed * 0x9e3779b97f4a7c15ULL + index + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return Rng(z ^ (z >> 31));
}

double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

}  // namespace

ImageTensor shapes_image(int size, std::uint64_t seed, std::uint64_t index) {
  if (size <= 0) throw ArgumentError("image size must be positive");
  Rng rng = image_rng(seed, index);
  const Color bg = hsv(rng.uniform(), rng.uniform(0.0, 0.6), rng.uniform(0.2, 0.95));
  ImageTensor img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = bg[c];

  const int count = rng.range(1, 3);
  for (int s = 0; s < count; ++s) {
    const int kind = rng.range(0, 2);
    const Color col = hsv(rng.uniform(), rng.uniform(0.5, 1.0), rng.uniform(0.4, 1.0));
    const double cx = rng.uniform(0.2, 0.8) * size;
    const double cy = rng.uniform(0.2, 0.8) * size;
    const double rx = rng.uniform(0.1, 0.3) * size;
    const double ry = rng.uniform(0.1, 0.3) * size;
    const double rot = rng.uniform(0.0, 2 * 3.14159265358979323846);
    std::array<double, 6> tri{};
    for (int v = 0; v < 3; ++v) {
      const double a = rot + v * 2.0943951023931953 + rng.uniform(-0.4, 0.4);
      tri[2 * v] = cx + rx * 1.3 * std::cos(a);
      tri[2 * v + 1] = cy + ry * 1.3 * std::sin(a);
    }
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        bool inside = false;
        if (kind == 0) {
          inside = std::abs(px - cx) <= rx && std::abs(py - cy) <= ry;
        } else if (kind == 1) {
          const double dx = (px - cx) / rx, dy = (py - cy) / ry;
          inside = dx * dx + dy * dy <= 1.0;
        } else {
          const double e0 = edge(tri[0], tri[1], tri[2], tri[3], px, py);
          const double e1 = edge(tri[2], tri[3], tri[4], tri[5], px, py);
          const double e2 = edge(tri[4], tri[5], tri[0], tri[1], px, py);
          inside = (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
        }
        if (inside)
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = col[c];
      }
    }
  }
  return img;
}

ImageTensor textured_image(int size, std::uint64_t seed, std::uint64_t index) {
  if (size <= 0) throw ArgumentError("image size must be positive");
  Rng rng = image_rng(seed ^ 0x7e47u, index);
  std::array<std::array<double, 4>, 3> grad{};
  for (auto& g : grad)
    for (auto& v : g) v = rng.uniform();
  constexpr int kWaves = 6;
  std::array<std::array<double, 5>, kWaves> waves{};
  for (auto& w : waves) {
    w = {rng.uniform(0.5, 6.0), rng.uniform(0.5, 6.0), rng.uniform(0, 6.283), rng.uniform(10, 40),
         static_cast<double>(rng.range(0, 2))};
  }
  ImageTensor img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = (x + 0.5) / size, v = (y + 0.5) / size;
      for (int c = 0; c < 3; ++c) {
        const auto& g = grad[c];
        double val = 255 * (g[0] * (1 - u) * (1 - v) + g[1] * u * (1 - v) + g[2] * (1 - u) * v + g[3] * u * v);
        for (const auto& w : waves) {
          const double amp = (static_cast<int>(w[4]) == c ? 1.0 : 0.5) * w[3];
          val += amp * std::sin(6.283 * (w[0] * u + w[1] * v) + w[2]);
        }
        val += rng.uniform(-12.0, 12.0);
        img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(val, 0.0, 255.0)));
      }
    }
  }
  return img;
}

void write_shapes_dataset(const std::filesystem::path& dir, int count, int size, std::uint64_t seed) {
  if (count <= 0) throw ArgumentError("synthetic dataset needs at least one image");
  std::filesystem::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "shapes_%05d.png", i);
    write_png(dir / name, shapes_image(size, seed, static_cast<std::uint64_t>(i)));
  }
}

}  // namespace cipherbreak::synthetic
