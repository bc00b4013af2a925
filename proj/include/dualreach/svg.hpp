// Minimal SVG line plots for training curves and smoothing overlays.
#pragma once

#include <string>
#include <vector>

namespace dualreach {

struct Series {
  std::vector<double> x;
  std::vector<double> y;
  std::string label;
  std::string color = "#1f77b4";
  bool dots = false;  // markers instead of a polyline
};

struct Band {
  std::vector<double> x;
  std::vector<double> lo;
  std::vector<double> hi;
  std::string color = "#1f77b4";
};

struct Plot {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  std::vector<Band> bands;
  std::vector<Series> series;
  int width = 720;
  int height = 420;
};

std::string render_svg(const Plot& plot);
void write_svg(const std::string& path, const Plot& plot);

// Sliding mean and population std over the trailing `window` values
// (shorter at the start).
void sliding_stats(const std::vector<double>& v, int window, std::vector<double>& mean,
                   std::vector<double>& stddev);

// Score curve: sliding mean line with a one-std band.
Plot score_plot(const std::vector<double>& scores, int window = 20);

}  // namespace dualreach
