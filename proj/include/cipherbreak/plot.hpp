#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cipherbreak/embedder.hpp"
#include "cipherbreak/image.hpp"
#include "cipherbreak/perceptual.hpp"

namespace cipherbreak::plot {

// Minimal raster canvas for static report figures. Text uses a built-in 3x5
// glyph set (digits, A-Z, a few symbols); other characters render blank.
class Canvas {
 public:
  Canvas(int w, int h, std::array<std::uint8_t, 3> bg = {255, 255, 255});

  void fill_rect(int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> c);  // inclusive-exclusive
  void hline(int x0, int x1, int y, std::array<std::uint8_t, 3> c);
  void vline(int x, int y0, int y1, std::array<std::uint8_t, 3> c);
  void text(int x, int y, const std::string& s, std::array<std::uint8_t, 3> c, int scale = 2);
  static int text_width(const std::string& s, int scale = 2) { return static_cast<int>(s.size()) * 4 * scale; }

  const ImageTensor& image() const { return img_; }

 private:
  void set(int x, int y, std::array<std::uint8_t, 3> c);
  ImageTensor img_;
};

// Blue (-1) -> white (0) -> red (+1).
std::array<std::uint8_t, 3> diverging(double v);

// Square cells annotated with two-decimal values; row labels on the left.
ImageTensor heatmap(const Matrix& m, const std::vector<std::string>& labels);

// One horizontal box per row on a shared axis: box Q1..Q3, median bar,
// whiskers, outlier ticks.
ImageTensor box_plot(const std::vector<std::string>& labels, const std::vector<BoxSummary>& rows);

}  // namespace cipherbreak::plot
