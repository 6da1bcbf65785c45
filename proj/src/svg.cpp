// Copyright 2026 The mmtraj Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mmtraj/errors.hpp"

namespace mmtraj::svg {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 480;
constexpr double kLeft = 70;
constexpr double kRight = 150;
constexpr double kTop = 40;
constexpr double kBottom = 60;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string Tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string Escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const {
    return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
  }
};

std::pair<double, double> Extent(const std::vector<const std::vector<double>*>& columns) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto* c : columns) {
    for (double v : *c) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (hi - lo < 1e-12) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

void Open(std::ostringstream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << Num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"16\">" << Escape(title) << "</text>\n";
}

void DrawAxes(std::ostringstream& out, const Frame& f, const Axes& axes) {
  const double left = kLeft, right = kWidth - kRight, top = kTop, bottom = kHeight - kBottom;
  out << "<rect x=\"" << Num(left) << "\" y=\"" << Num(top) << "\" width=\"" << Num(right - left)
      << "\" height=\"" << Num(bottom - top) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    out << "<text x=\"" << Num(f.px(xv)) << "\" y=\"" << Num(bottom + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << Tick(xv)
        << "</text>\n";
    out << "<text x=\"" << Num(left - 6) << "\" y=\"" << Num(f.py(yv) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << Tick(yv)
        << "</text>\n";
  }
  out << "<text x=\"" << Num((left + right) / 2) << "\" y=\"" << Num(kHeight - 16)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << Escape(axes.x_label) << "</text>\n";
  out << "<text transform=\"translate(18," << Num((top + bottom) / 2)
      << ") rotate(-90)\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << Escape(axes.y_label) << "</text>\n";
  if (axes.diagonal) {
    const double lo = std::max(f.x0, f.y0);
    const double hi = std::min(f.x1, f.y1);
    if (lo < hi) {
      out << "<line x1=\"" << Num(f.px(lo)) << "\" y1=\"" << Num(f.py(lo)) << "\" x2=\""
          << Num(f.px(hi)) << "\" y2=\"" << Num(f.py(hi))
          << "\" stroke=\"grey\" stroke-dasharray=\"4 4\"/>\n";
    }
  }
}

void Legend(std::ostringstream& out, std::size_t index, const std::string& label) {
  const double y = kTop + 14 + 18 * static_cast<double>(index);
  const double x = kWidth - kRight + 10;
  out << "<rect x=\"" << Num(x) << "\" y=\"" << Num(y - 9) << "\" width=\"10\" height=\"10\" fill=\""
      << kPalette[index % 10] << "\"/>\n<text x=\"" << Num(x + 14) << "\" y=\"" << Num(y)
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << Escape(label) << "</text>\n";
}

Frame MakeFrame(const Axes& axes, std::pair<double, double> xr, std::pair<double, double> yr) {
  if (axes.x_range) xr = *axes.x_range;
  if (axes.y_range) yr = *axes.y_range;
  return {xr.first, xr.second, yr.first, yr.second};
}

void Polyline(std::ostringstream& out, const Frame& f, const std::vector<double>& x,
              const std::vector<double>& y, const char* colour) {
  out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
  bool first = true;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
    out << (first ? "" : " ") << Num(f.px(x[i])) << ',' << Num(f.py(y[i]));
    first = false;
  }
  out << "\"/>\n";
}

void Markers(std::ostringstream& out, const Frame& f, const std::vector<double>& x,
             const std::vector<double>& y, const char* colour) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
    out << "<circle cx=\"" << Num(f.px(x[i])) << "\" cy=\"" << Num(f.py(y[i]))
        << "\" r=\"2.5\" fill=\"" << colour << "\"/>\n";
  }
}

}  // namespace

std::string line_plot(const Axes& axes, const std::vector<Series>& series) {
  std::vector<const std::vector<double>*> xs, ys;
  for (const auto& s : series) {
    xs.push_back(&s.x);
    ys.push_back(&s.y);
  }
  const Frame f = MakeFrame(axes, Extent(xs), Extent(ys));
  std::ostringstream out;
  Open(out, axes.title);
  DrawAxes(out, f, axes);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* colour = kPalette[i % 10];
    if (series[i].markers) {
      Markers(out, f, series[i].x, series[i].y, colour);
    } else {
      Polyline(out, f, series[i].x, series[i].y, colour);
    }
    Legend(out, i, series[i].label);
  }
  out << "</svg>\n";
  return out.str();
}

std::string band_plot(const Axes& axes, const std::vector<double>& x, const std::vector<double>& lo,
                      const std::vector<double>& hi, const std::vector<double>& centre,
                      const Series& reference) {
  const Frame f = MakeFrame(axes, Extent({&x, &reference.x}), Extent({&lo, &hi, &reference.y}));
  std::ostringstream out;
  Open(out, axes.title);
  DrawAxes(out, f, axes);
  out << "<polygon fill=\"" << kPalette[0] << "\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
  for (std::size_t i = 0; i < x.size(); ++i) {
    out << (i ? " " : "") << Num(f.px(x[i])) << ',' << Num(f.py(hi[i]));
  }
  for (std::size_t i = x.size(); i-- > 0;) out << ' ' << Num(f.px(x[i])) << ',' << Num(f.py(lo[i]));
  out << "\"/>\n";
  Polyline(out, f, x, centre, kPalette[0]);
  Legend(out, 0, "forecast mean, 95% band");
  if (!reference.x.empty()) {
    Polyline(out, f, reference.x, reference.y, kPalette[1]);
    Markers(out, f, reference.x, reference.y, kPalette[1]);
    Legend(out, 1, reference.label);
  }
  out << "</svg>\n";
  return out.str();
}

std::string heatmap(const Axes& axes, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels, const Matrix& values, double lo,
                    double hi) {
  std::ostringstream out;
  Open(out, axes.title);
  const double left = kLeft, right = kWidth - kRight, top = kTop, bottom = kHeight - kBottom;
  const double cw = (right - left) / static_cast<double>(std::max<std::size_t>(1, values.cols()));
  const double ch = (bottom - top) / static_cast<double>(std::max<std::size_t>(1, values.rows()));
  for (std::size_t r = 0; r < values.rows(); ++r) {
    for (std::size_t c = 0; c < values.cols(); ++c) {
      const double v = values(r, c);
      const double x = left + cw * static_cast<double>(c);
      const double y = top + ch * static_cast<double>(r);
      std::string fill = "#dddddd";
      if (std::isfinite(v)) {
        const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
        const int red = static_cast<int>(std::lround(255 * t));
        const int blue = static_cast<int>(std::lround(255 * (1 - t)));
        char buf[16];
        std::snprintf(buf, sizeof buf, "#%02x40%02x", red, blue);
        fill = buf;
      }
      out << "<rect x=\"" << Num(x) << "\" y=\"" << Num(y) << "\" width=\"" << Num(cw)
          << "\" height=\"" << Num(ch) << "\" fill=\"" << fill << "\" stroke=\"white\"/>\n";
      if (std::isfinite(v) && ch >= 12) {
        out << "<text x=\"" << Num(x + cw / 2) << "\" y=\"" << Num(y + ch / 2 + 4)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\" "
            << "fill=\"white\">" << Tick(v) << "</text>\n";
      }
    }
  }
  const std::size_t row_step = std::max<std::size_t>(1, row_labels.size() / 20);
  for (std::size_t r = 0; r < row_labels.size(); r += row_step) {
    out << "<text x=\"" << Num(left - 6) << "\" y=\"" << Num(top + ch * (static_cast<double>(r) + 0.5) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
        << Escape(row_labels[r]) << "</text>\n";
  }
  for (std::size_t c = 0; c < col_labels.size(); ++c) {
    out << "<text x=\"" << Num(left + cw * (static_cast<double>(c) + 0.5)) << "\" y=\""
        << Num(bottom + 18) << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"11\">" << Escape(col_labels[c]) << "</text>\n";
  }
  out << "<text x=\"" << Num((left + right) / 2) << "\" y=\"" << Num(kHeight - 16)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << Escape(axes.x_label) << "</text>\n";
  out << "<text transform=\"translate(18," << Num((top + bottom) / 2)
      << ") rotate(-90)\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << Escape(axes.y_label) << "</text>\n";
  out << "<text x=\"" << Num(right + 10) << "\" y=\"" << Num(top + 14)
      << "\" font-family=\"sans-serif\" font-size=\"11\">scale " << Tick(lo) << " .. " << Tick(hi)
      << "</text>\n<text x=\"" << Num(right + 10) << "\" y=\"" << Num(top + 32)
      << "\" font-family=\"sans-serif\" font-size=\"11\">grey = missing</text>\n";
  out << "</svg>\n";
  return out.str();
}

std::string message(const std::string& title, const std::string& text) {
  std::ostringstream out;
  Open(out, title);
  out << "<text x=\"" << Num(kWidth / 2) << "\" y=\"" << Num(kHeight / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" << Escape(text)
      << "</text>\n</svg>\n";
  return out.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace mmtraj::svg
