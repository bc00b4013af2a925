#include "dualreach/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dualreach {

namespace {

constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  }
};

}  // namespace

std::string render_svg(const Plot& plot) {
  Range xr, yr;
  for (const auto& s : plot.series) {
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(v);
  }
  for (const auto& b : plot.bands) {
    for (double v : b.x) xr.add(v);
    for (double v : b.lo) yr.add(v);
    for (double v : b.hi) yr.add(v);
  }
  xr.settle();
  yr.settle();
  const double pw = plot.width - kLeft - kRight;
  const double ph = plot.height - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto sy = [&](double y) { return kTop + (1.0 - (y - yr.lo) / (yr.hi - yr.lo)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << plot.width << "\" height=\"" << plot.height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << plot.width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(plot.title)
    << "</text>\n";
  o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    const double yv = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    o << "<text x=\"" << num(sx(xv)) << "\" y=\"" << num(kTop + ph + 16) << "\" text-anchor=\"middle\">" << tick(xv)
      << "</text>\n";
    o << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(sy(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv)
      << "</text>\n";
    o << "<line x1=\"" << kLeft << "\" x2=\"" << num(kLeft + pw) << "\" y1=\"" << num(sy(yv)) << "\" y2=\""
      << num(sy(yv)) << "\" stroke=\"#ddd\"/>\n";
  }
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << plot.height - 10 << "\" text-anchor=\"middle\">"
    << esc(plot.xlabel) << "</text>\n";
  o << "<text transform=\"translate(16," << num(kTop + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << esc(plot.ylabel) << "</text>\n";

  for (const auto& b : plot.bands) {
    if (b.x.empty()) continue;
    o << "<polygon fill=\"" << b.color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < b.x.size(); ++i) o << num(sx(b.x[i])) << ',' << num(sy(b.hi[i])) << ' ';
    for (std::size_t i = b.x.size(); i-- > 0;) o << num(sx(b.x[i])) << ',' << num(sy(b.lo[i])) << ' ';
    o << "\"/>\n";
  }
  int legend = 0;
  for (const auto& s : plot.series) {
    const std::size_t n = std::min(s.x.size(), s.y.size());
    if (s.dots) {
      for (std::size_t i = 0; i < n; ++i)
        o << "<circle cx=\"" << num(sx(s.x[i])) << "\" cy=\"" << num(sy(s.y[i])) << "\" r=\"2.5\" fill=\"" << s.color
          << "\"/>\n";
    } else if (n > 0) {
      o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < n; ++i) o << num(sx(s.x[i])) << ',' << num(sy(s.y[i])) << ' ';
      o << "\"/>\n";
    }
    if (!s.label.empty()) {
      const double ly = kTop + 14 + 16 * legend++;
      o << "<rect x=\"" << num(kLeft + pw - 150) << "\" y=\"" << num(ly - 9) << "\" width=\"10\" height=\"10\" fill=\""
        << s.color << "\"/>\n";
      o << "<text x=\"" << num(kLeft + pw - 135) << "\" y=\"" << num(ly) << "\">" << esc(s.label) << "</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

void write_svg(const std::string& path, const Plot& plot) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << render_svg(plot);
  if (!out) throw std::runtime_error("write failed: " + path);
}

void sliding_stats(const std::vector<double>& v, int window, std::vector<double>& mean,
                   std::vector<double>& stddev) {
  if (window < 1) throw std::invalid_argument("window must be positive");
  mean.assign(v.size(), 0.0);
  stddev.assign(v.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t start = i + 1 >= static_cast<std::size_t>(window) ? i + 1 - window : 0;
    const double n = static_cast<double>(i + 1 - start);
    double s = 0.0;
    for (std::size_t j = start; j <= i; ++j) s += v[j];
    const double m = s / n;
    double ss = 0.0;
    for (std::size_t j = start; j <= i; ++j) ss += (v[j] - m) * (v[j] - m);
    mean[i] = m;
    stddev[i] = std::sqrt(ss / n);
  }
}

Plot score_plot(const std::vector<double>& scores, int window) {
  std::vector<double> mean, sd;
  sliding_stats(scores, window, mean, sd);
  Plot p;
  p.title = "Training score";
  p.xlabel = "episode";
  p.ylabel = "score";
  Band band;
  Series line;
  line.label = "mean of last " + std::to_string(window);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    band.x.push_back(static_cast<double>(i));
    band.lo.push_back(mean[i] - sd[i]);
    band.hi.push_back(mean[i] + sd[i]);
    line.x.push_back(static_cast<double>(i));
    line.y.push_back(mean[i]);
  }
  p.bands.push_back(std::move(band));
  p.series.push_back(std::move(line));
  return p;
}

}  // namespace dualreach
