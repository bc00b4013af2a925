#include "dualreach/trajectory_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dualreach/config.hpp"
#include "dualreach/environment.hpp"

namespace dualreach {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw FormatError("write failed: " + path.string());
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double parse_number(const std::string& text, const std::string& where) {
  const std::string s = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw FormatError(where + ": '" + s + "' is not a number");
  return v;
}

}  // namespace

void write_trajectory_csv(const std::filesystem::path& path, const JointTrajectory& traj) {
  if (static_cast<int>(traj.t.size()) != traj.knots())
    throw std::invalid_argument("trajectory time and knot counts differ");
  auto out = open_out(path);
  out << "t";
  for (int j = 0; j < traj.joints(); ++j) out << ",q" << j;
  out << "\n";
  for (int r = 0; r < traj.knots(); ++r) {
    out << format_double(traj.t[static_cast<std::size_t>(r)]);
    for (int j = 0; j < traj.joints(); ++j) out << ',' << format_double(traj.q(r, j));
    out << "\n";
  }
  finish(out, path);
}

JointTrajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open trajectory " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  const auto header = split_csv(line);
  if (header.size() < 2 || trim(header[0]) != "t")
    throw FormatError(path.string() + ": header must be t,q0,...");
  for (std::size_t j = 1; j < header.size(); ++j)
    if (trim(header[j]) != "q" + std::to_string(j - 1))
      throw FormatError(path.string() + ": header column " + std::to_string(j) + " should be q" +
                        std::to_string(j - 1));
  const std::size_t cols = header.size();
  std::vector<double> t;
  std::vector<double> flat;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() != cols)
      throw FormatError(where + ": expected " + std::to_string(cols) + " columns, got " +
                        std::to_string(cells.size()));
    t.push_back(parse_number(cells[0], where));
    if (t.size() > 1 && !(t.back() > t[t.size() - 2])) throw FormatError(where + ": time must increase");
    for (std::size_t j = 1; j < cols; ++j) flat.push_back(parse_number(cells[j], where));
  }
  if (t.size() < 2) throw FormatError(path.string() + ": need at least two rows");
  JointTrajectory traj;
  traj.t = std::move(t);
  const auto rows = static_cast<Eigen::Index>(traj.t.size());
  const auto nj = static_cast<Eigen::Index>(cols - 1);
  traj.q.resize(rows, nj);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index j = 0; j < nj; ++j) traj.q(r, j) = flat[static_cast<std::size_t>(r * nj + j)];
  return traj;
}

void write_score_csv(const std::filesystem::path& path, const std::vector<EpisodeLog>& log) {
  auto out = open_out(path);
  const std::size_t k = log.empty() ? 2 : log.front().errors.size();
  out << "episode";
  for (std::size_t i = 0; i < k; ++i) out << ",error" << i + 1;
  out << ",score\n";
  for (const auto& e : log) {
    out << e.episode;
    for (double v : e.errors) out << ',' << format_double(v);
    out << ',' << format_double(e.score) << "\n";
  }
  finish(out, path);
}

void write_smoothing_report(const std::filesystem::path& path, const std::vector<JointReport>& report) {
  auto out = open_out(path);
  out << "joint,p_opt,evaluations,roughness_before,roughness_after\n";
  for (const auto& r : report) {
    out << r.joint << ',' << format_double(r.p) << ',' << r.evaluations << ','
        << format_double(r.roughness_before) << ',' << format_double(r.roughness_after) << "\n";
  }
  finish(out, path);
}

void write_end_effector_csv(const std::filesystem::path& path, const std::vector<double>& t,
                            const std::vector<std::vector<Eigen::Vector3d>>& points) {
  if (t.size() != points.size()) throw std::invalid_argument("time and point counts differ");
  auto out = open_out(path);
  const std::size_t k = points.empty() ? 0 : points.front().size();
  out << "t";
  for (std::size_t i = 1; i <= k; ++i) out << ",x" << i << ",y" << i << ",z" << i;
  out << "\n";
  for (std::size_t r = 0; r < t.size(); ++r) {
    out << format_double(t[r]);
    for (const auto& p : points[r]) out << ',' << format_double(p.x()) << ',' << format_double(p.y()) << ',' << format_double(p.z());
    out << "\n";
  }
  finish(out, path);
}

void write_scene(const std::filesystem::path& path, const Scene& scene) {
  auto out = open_out(path);
  auto triple = [](const Eigen::Vector3d& v) {
    return format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
  };
  out << "[scene]\ngoals =";
  for (const auto& g : scene.goals) out << ' ' << triple(g);
  out << "\n";
  for (const auto& o : scene.obstacles) {
    out << "\n[obstacle]\n";
    if (const auto* s = std::get_if<Sphere>(&o)) {
      out << "shape = sphere\ncenter = " << triple(s->center) << "\nradius = " << format_double(s->radius) << "\n";
    } else {
      const auto& b = std::get<Box>(o);
      out << "shape = box\ncenter = " << triple(b.center) << "\nhalf_extents = " << triple(b.half_extents) << "\n";
    }
  }
  finish(out, path);
}

Scene read_scene(const std::filesystem::path& path) {
  const Config cfg = Config::load(path);
  Scene scene;
  const auto& s = cfg.section_or_empty("scene");
  const auto g = s.get_doubles("goals", {});
  if (g.size() % 3 != 0) throw ConfigError(path.string() + ": goals must be x y z triples");
  for (std::size_t i = 0; i < g.size(); i += 3) scene.goals.emplace_back(g[i], g[i + 1], g[i + 2]);
  scene.obstacles = obstacles_from(cfg);
  return scene;
}

}  // namespace dualreach
