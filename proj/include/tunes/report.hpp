#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "tunes/types.hpp"

namespace tunes {

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t file_fnv1a64(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    h = fnv1a64(buf, static_cast<std::size_t>(f.gcount()), h);
  }
  return h;
}

inline std::string to_hex16(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setfill('0') << std::setw(16) << v;
  return s.str();
}

inline void write_csv(const std::string& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  for (std::size_t i = 0; i < header.size(); ++i) {
    f << (i ? "," : "") << header[i];
  }
  f << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
    f << '\n';
  }
  if (!f) throw std::runtime_error("write failed for " + path);
}

inline std::string fmt_num(double v, int precision = 6) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

/// Checksums every regular file under `dir` (except the manifest itself)
/// into run_manifest.txt, one "<fnv1a64 hex>  <relative path>" line each.
inline void write_run_manifest(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> rel;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string r = fs::relative(e.path(), dir).string();
    if (r == "run_manifest.txt") continue;
    rel.push_back(r);
  }
  std::sort(rel.begin(), rel.end());
  std::ofstream f(fs::path(dir) / "run_manifest.txt");
  if (!f) throw std::runtime_error("cannot write run manifest in " + dir);
  for (const std::string& r : rel) {
    f << to_hex16(file_fnv1a64((fs::path(dir) / r).string())) << "  " << r << '\n';
  }
}

// ---------------------------------------------------------------------------
// Minimal SVG line plots
// ---------------------------------------------------------------------------

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
};

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Hand-rolled SVG: axes with ticks, one polyline with point markers per
/// series, legend in the top-left plot corner. Log axes use base 10.
inline void write_svg_line_plot(const std::string& path, const std::string& title,
                                const std::string& xlabel, const std::string& ylabel,
                                const std::vector<PlotSeries>& series,
                                bool log_x = false, bool log_y = false) {
  const double W = 720, H = 480;
  const double ml = 80, mr = 30, mt = 50, mb = 60;
  const double pw = W - ml - mr, ph = H - mt - mb;

  auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return log_y ? std::log10(v) : v; };

  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeError("plot series: x/y length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if ((log_x && s.x[i] <= 0) || (log_y && s.y[i] <= 0)) continue;
      const double xv = tx(s.x[i]), yv = ty(s.y[i]);
      if (first) {
        x0 = x1 = xv;
        y0 = y1 = yv;
        first = false;
      } else {
        x0 = std::min(x0, xv);
        x1 = std::max(x1, xv);
        y0 = std::min(y0, yv);
        y1 = std::max(y1, yv);
      }
    }
  }
  if (x1 - x0 < 1e-12) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 - y0 < 1e-12) {
    y0 -= 0.5;
    y1 += 0.5;
  }

  auto px = [&](double v) { return ml + (tx(v) - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return mt + ph - (ty(v) - y0) / (y1 - y0) * ph; };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};

  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\""
    << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  f << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  f << "<text x=\"" << W / 2 << "\" y=\"28\" text-anchor=\"middle\" "
       "font-family=\"sans-serif\" font-size=\"16\">"
    << detail::svg_escape(title) << "</text>\n";

  // frame
  f << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw
    << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#444\"/>\n";

  // ticks
  const int nticks = 5;
  for (int i = 0; i <= nticks; ++i) {
    const double fr = double(i) / nticks;
    const double xv = x0 + fr * (x1 - x0);
    const double yv = y0 + fr * (y1 - y0);
    const double xpix = ml + fr * pw;
    const double ypix = mt + ph - fr * ph;
    const double xval = log_x ? std::pow(10.0, xv) : xv;
    const double yval = log_y ? std::pow(10.0, yv) : yv;
    f << "<line x1=\"" << xpix << "\" y1=\"" << mt + ph << "\" x2=\"" << xpix
      << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"#444\"/>\n";
    f << "<text x=\"" << xpix << "\" y=\"" << mt + ph + 20
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
      << fmt_num(xval, 4) << "</text>\n";
    f << "<line x1=\"" << ml - 5 << "\" y1=\"" << ypix << "\" x2=\"" << ml
      << "\" y2=\"" << ypix << "\" stroke=\"#444\"/>\n";
    f << "<text x=\"" << ml - 8 << "\" y=\"" << ypix + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
      << fmt_num(yval, 4) << "</text>\n";
  }
  f << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 15
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
    << detail::svg_escape(xlabel) << "</text>\n";
  f << "<text x=\"20\" y=\"" << mt + ph / 2
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
       "transform=\"rotate(-90 20 "
    << mt + ph / 2 << ")\">" << detail::svg_escape(ylabel) << "</text>\n";

  int si = 0;
  for (const auto& s : series) {
    const char* color = palette[si % 6];
    std::ostringstream pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if ((log_x && s.x[i] <= 0) || (log_y && s.y[i] <= 0)) continue;
      pts << px(s.x[i]) << "," << py(s.y[i]) << " ";
      f << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i])
        << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    f << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\""
      << color << "\" stroke-width=\"1.5\"/>\n";
    f << "<rect x=\"" << ml + 10 << "\" y=\"" << mt + 8 + 18 * si
      << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
    f << "<text x=\"" << ml + 27 << "\" y=\"" << mt + 18 + 18 * si
      << "\" font-family=\"sans-serif\" font-size=\"12\">"
      << detail::svg_escape(s.name) << "</text>\n";
    ++si;
  }
  f << "</svg>\n";
  if (!f) throw std::runtime_error("write failed for " + path);
}

}  // namespace tunes
