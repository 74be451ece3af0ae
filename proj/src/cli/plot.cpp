#include "cipherbreak/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "cipherbreak/errors.hpp"

namespace cipherbreak::plot {

namespace {

using Color = std::array<std::uint8_t, 3>;

constexpr Color kBlack{0, 0, 0};
constexpr Color kGray{150, 150, 150};
constexpr Color kBox{120, 160, 210};

// 3x5 glyphs, rows top to bottom, '#' = ink.
const std::map<char, const char*>& glyphs() {
  static const std::map<char, const char*> g = {
      {'0', "###"
            "# #"
            "# #"
            "# #"
            "###"},
      {'1', " # "
            "## "
            " # "
            " # "
            "###"},
      {'2', "###"
            "  #"
            "###"
            "#  "
            "###"},
      {'3', "###"
            "  #"
            "###"
            "  #"
            "###"},
      {'4', "# #"
            "# #"
            "###"
            "  #"
            "  #"},
      {'5', "###"
            "#  "
            "###"
            "  #"
            "###"},
      {'6', "###"
            "#  "
            "###"
            "# #"
            "###"},
      {'7', "###"
            "  #"
            "  #"
            "  #"
            "  #"},
      {'8', "###"
            "# #"
            "###"
            "# #"
            "###"},
      {'9', "###"
            "# #"
            "###"
            "  #"
            "###"},
      {'A', " # "
            "# #"
            "###"
            "# #"
            "# #"},
      {'B', "## "
            "# #"
            "## "
            "# #"
            "## "},
      {'C', "###"
            "#  "
            "#  "
            "#  "
            "###"},
      {'D', "## "
            "# #"
            "# #"
            "# #"
            "## "},
      {'E', "###"
            "#  "
            "## "
            "#  "
            "###"},
      {'F', "###"
            "#  "
            "## "
            "#  "
            "#  "},
      {'G', "###"
            "#  "
            "# #"
            "# #"
            "###"},
      {'H', "# #"
            "# #"
            "###"
            "# #"
            "# #"},
      {'I', "###"
            " # "
            " # "
            " # "
            "###"},
      {'J', "  #"
            "  #"
            "  #"
            "# #"
            "###"},
      {'K', "# #"
            "## "
            "#  "
            "## "
            "# #"},
      {'L', "#  "
            "#  "
            "#  "
            "#  "
            "###"},
      {'M', "# #"
            "###"
            "###"
            "# #"
            "# #"},
      {'N', "###"
            "# #"
            "# #"
            "# #"
            "# #"},
      {'O', "###"
            "# #"
            "# #"
            "# #"
            "###"},
      {'P', "###"
            "# #"
            "###"
            "#  "
            "#  "},
      {'Q', "###"
            "# #"
            "# #"
            "###"
            "  #"},
      {'R', "## "
            "# #"
            "## "
            "# #"
            "# #"},
      {'S', "###"
            "#  "
            "###"
            "  #"
            "###"},
      {'T', "###"
            " # "
            " # "
            " # "
            " # "},
      {'U', "# #"
            "# #"
            "# #"
            "# #"
            "###"},
      {'V', "# #"
            "# #"
            "# #"
            "# #"
            " # "},
      {'W', "# #"
            "# #"
            "###"
            "###"
            "# #"},
      {'X', "# #"
            "# #"
            " # "
            "# #"
            "# #"},
      {'Y', "# #"
            "# #"
            " # "
            " # "
            " # "},
      {'Z', "###"
            "  #"
            " # "
            "#  "
            "###"},
      {'.', "   "
            "   "
            "   "
            "   "
            " # "},
      {'-', "   "
            "   "
            "###"
            "   "
            "   "},
      {'_', "   "
            "   "
            "   "
            "   "
            "###"},
      {'+', "   "
            " # "
            "###"
            " # "
            "   "},
      {':', "   "
            " # "
            "   "
            " # "
            "   "},
      {'/', "  #"
            "  #"
            " # "
            "#  "
            "#  "},
  };
  return g;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string clip_label(const std::string& s, std::size_t n) { return s.size() <= n ? s : s.substr(0, n); }

}  // namespace

Canvas::Canvas(int w, int h, Color bg) : img_(w, h) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) set(x, y, bg);
}

void Canvas::set(int x, int y, Color c) {
  if (x < 0 || y < 0 || x >= img_.width() || y >= img_.height()) return;
  for (int k = 0; k < 3; ++k) img_.at(x, y, k) = c[static_cast<std::size_t>(k)];
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Color c) {
  for (int y = std::max(0, y0); y < std::min(img_.height(), y1); ++y)
    for (int x = std::max(0, x0); x < std::min(img_.width(), x1); ++x) set(x, y, c);
}

void Canvas::hline(int x0, int x1, int y, Color c) {
  if (x0 > x1) std::swap(x0, x1);
  for (int x = x0; x <= x1; ++x) set(x, y, c);
}

void Canvas::vline(int x, int y0, int y1, Color c) {
  if (y0 > y1) std::swap(y0, y1);
  for (int y = y0; y <= y1; ++y) set(x, y, c);
}

void Canvas::text(int x, int y, const std::string& s, Color c, int scale) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char ch = static_cast<char>(std::toupper(static_cast<unsigned char>(s[i])));
    const auto it = glyphs().find(ch);
    if (it == glyphs().end()) continue;
    const int gx = x + static_cast<int>(i) * 4 * scale;
    for (int r = 0; r < 5; ++r)
      for (int col = 0; col < 3; ++col)
        if (it->second[r * 3 + col] == '#') fill_rect(gx + col * scale, y + r * scale, gx + (col + 1) * scale, y + (r + 1) * scale, c);
  }
}

Color diverging(double v) {
  v = std::clamp(v, -1.0, 1.0);
  const auto mix = [](double a, double b, double t) { return static_cast<std::uint8_t>(std::lround(a + (b - a) * t)); };
  if (v >= 0) return {255, mix(255, 40, v), mix(255, 40, v)};
  return {mix(255, 40, -v), mix(255, 70, -v), 255};
}

ImageTensor heatmap(const Matrix& m, const std::vector<std::string>& labels) {
  const int n = static_cast<int>(m.size());
  if (n == 0 || labels.size() != m.size()) throw DimensionError("heatmap needs a square matrix with one label per row");
  for (const auto& row : m)
    if (static_cast<int>(row.size()) != n) throw DimensionError("heatmap matrix is not square");
  constexpr int cell = 44, pad = 8;
  int label_w = 0;
  for (const auto& l : labels) label_w = std::max(label_w, Canvas::text_width(clip_label(l, 12)));
  const int left = pad + label_w + pad, top = pad + 14;
  Canvas c(left + n * cell + pad, top + n * cell + pad);
  for (int j = 0; j < n; ++j) c.text(left + j * cell + cell / 2 - 4, pad, std::to_string(j), kBlack);
  for (int i = 0; i < n; ++i) {
    c.text(pad, top + i * cell + cell / 2 - 5, clip_label(labels[static_cast<std::size_t>(i)], 12), kBlack);
    for (int j = 0; j < n; ++j) {
      const double v = m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      c.fill_rect(left + j * cell, top + i * cell, left + (j + 1) * cell, top + (i + 1) * cell, diverging(v));
      const auto s = fixed2(v);
      c.text(left + j * cell + (cell - Canvas::text_width(s)) / 2, top + i * cell + cell / 2 - 5, s, kBlack);
    }
  }
  for (int k = 0; k <= n; ++k) {
    c.hline(left, left + n * cell, top + k * cell, kGray);
    c.vline(left + k * cell, top, top + n * cell, kGray);
  }
  return c.image();
}

ImageTensor box_plot(const std::vector<std::string>& labels, const std::vector<BoxSummary>& rows) {
  if (rows.empty() || labels.size() != rows.size()) throw DimensionError("box plot needs one label per row");
  double lo = rows[0].whisker_low, hi = rows[0].whisker_high;
  for (const auto& r : rows) {
    lo = std::min(lo, r.whisker_low);
    hi = std::max(hi, r.whisker_high);
    for (double o : r.outliers) {
      lo = std::min(lo, o);
      hi = std::max(hi, o);
    }
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  constexpr int row_h = 36, plot_w = 480, pad = 10, axis_h = 30;
  int label_w = 0;
  for (const auto& l : labels) label_w = std::max(label_w, Canvas::text_width(clip_label(l, 16)));
  const int left = pad + label_w + pad;
  const int n = static_cast<int>(rows.size());
  Canvas c(left + plot_w + 2 * pad, pad + n * row_h + axis_h + pad);
  const auto px = [&](double v) { return left + static_cast<int>(std::lround((v - lo) / (hi - lo) * (plot_w - 1))); };
  for (int i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    const int y0 = pad + i * row_h + 8, y1 = pad + (i + 1) * row_h - 8, ym = (y0 + y1) / 2;
    c.text(pad, ym - 5, clip_label(labels[static_cast<std::size_t>(i)], 16), kBlack);
    c.hline(px(r.whisker_low), px(r.q1), ym, kBlack);
    c.hline(px(r.q3), px(r.whisker_high), ym, kBlack);
    c.vline(px(r.whisker_low), y0 + 4, y1 - 4, kBlack);
    c.vline(px(r.whisker_high), y0 + 4, y1 - 4, kBlack);
    c.fill_rect(px(r.q1), y0, px(r.q3) + 1, y1 + 1, kBox);
    c.hline(px(r.q1), px(r.q3), y0, kBlack);
    c.hline(px(r.q1), px(r.q3), y1, kBlack);
    c.vline(px(r.q1), y0, y1, kBlack);
    c.vline(px(r.q3), y0, y1, kBlack);
    c.fill_rect(px(r.median) - 1, y0, px(r.median) + 2, y1 + 1, kBlack);
    for (double o : r.outliers) c.fill_rect(px(o) - 2, ym - 2, px(o) + 3, ym + 3, kBlack);
  }
  const int ay = pad + n * row_h + 4;
  c.hline(left, left + plot_w - 1, ay, kBlack);
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    const int x = px(v);
    c.vline(x, ay, ay + 4, kBlack);
    const auto s = short_number(v);
    c.text(std::clamp(x - Canvas::text_width(s) / 2, 0, c.image().width() - Canvas::text_width(s)), ay + 8, s, kBlack);
  }
  return c.image();
}

}  // namespace cipherbreak::plot
