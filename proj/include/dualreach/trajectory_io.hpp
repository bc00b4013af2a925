// CSV and scene-file readers/writers. Numbers are written with 17
// significant digits so doubles survive a round trip.
#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualreach/digrad.hpp"
#include "dualreach/smoothing.hpp"

namespace dualreach {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Header `t,q0,...,q{n-1}`, one row per knot.
void write_trajectory_csv(const std::filesystem::path& path, const JointTrajectory& traj);
JointTrajectory read_trajectory_csv(const std::filesystem::path& path);

// Header `episode,error1,...,errork,score`.
void write_score_csv(const std::filesystem::path& path, const std::vector<EpisodeLog>& log);

// Header `joint,p_opt,evaluations,roughness_before,roughness_after`, one row
// per joint (unsmoothed joints report p_opt = 1 and zero evaluations).
void write_smoothing_report(const std::filesystem::path& path, const std::vector<JointReport>& report);

// Header `t,x1,y1,z1,...,xk,yk,zk`.
void write_end_effector_csv(const std::filesystem::path& path, const std::vector<double>& t,
                            const std::vector<std::vector<Eigen::Vector3d>>& points);

struct Scene {
  std::vector<Eigen::Vector3d> goals;
  std::vector<Obstacle> obstacles;
};

// INI: a [scene] section with `goals = x y z ...` plus one [obstacle]
// section per obstacle.
void write_scene(const std::filesystem::path& path, const Scene& scene);
Scene read_scene(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace dualreach
