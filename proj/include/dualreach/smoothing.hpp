// Cubic smoothing splines for joint trajectories and the constraint-aware
// search for the smallest feasible smoothing parameter.
//
// Convention: p = 1 interpolates the knots, p = 0 is the weighted
// least-squares straight line. In between the spline minimizes
//   p * sum_i w_i (y_i - g(t_i))^2 + (1 - p) * integral g''(t)^2 dt
// with natural boundary conditions.
#pragma once

#include <Eigen/Core>

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualreach/kinematics.hpp"

namespace dualreach {

class InfeasibleTrajectory : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Piecewise cubic: on [t_i, t_{i+1}], a_i + b_i dt + c_i dt^2 + d_i dt^3.
struct SplineCoefficients {
  std::vector<double> knots;
  Eigen::VectorXd a, b, c, d;  // one entry per interval
};

struct SmoothingSpline {
  double p = 1.0;
  Eigen::VectorXd values;  // g(t_i)
  Eigen::VectorXd second;  // g''(t_i); zero at both ends
  SplineCoefficients coeffs;
};

// Knots must be strictly increasing (at least two); weights positive. An
// infinite weight pins that knot exactly.
SmoothingSpline fit_smoothing_spline(const std::vector<double>& t, const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& weights, double p);
SmoothingSpline fit_smoothing_spline(const std::vector<double>& t, const Eigen::VectorXd& y, double p);

struct SplineSample {
  double value = 0.0;
  double first = 0.0;
  double second = 0.0;
};

// Throws std::domain_error outside [t_0, t_{n-1}].
SplineSample evaluate_spline(const SplineCoefficients& s, double t);

// integral of g''^2 over the knot span (exact for piecewise-linear g'').
double roughness_integral(const SmoothingSpline& s);
// sum of squared second differences of the knot values.
double roughness_discrete(const Eigen::VectorXd& values);
// sum_i w_i (y_i - g_i)^2
double weighted_residual(const SmoothingSpline& s, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& weights);

struct BisectionResult {
  double p = 1.0;
  int evaluations = 0;
};

// Smallest feasible p to within `precision`, assuming feasibility is monotone
// in p. Checks p = 1 first and throws InfeasibleTrajectory if it fails; the
// returned p was itself evaluated feasible.
BisectionResult binary_search_p(const std::function<bool(double)>& feasible, double precision = 1e-6);

enum class EndpointMode {
  kWeighted,  // endpoint weight `endpoint_weight`
  kClamped,   // endpoints reproduced exactly
};

struct SmoothingOptions {
  double precision = 1e-6;
  int subdivisions = 10;  // dense samples per knot interval
  EndpointMode endpoints = EndpointMode::kWeighted;
  double endpoint_weight = 1e6;
};

Eigen::VectorXd smoothing_weights(int n, const SmoothingOptions& options);

struct JointTrajectory {
  std::vector<double> t;
  Eigen::MatrixXd q;  // one row per knot, one column per joint

  int knots() const { return static_cast<int>(q.rows()); }
  int joints() const { return static_cast<int>(q.cols()); }
};

using PosturePredicate = std::function<bool(const JointVector&)>;

// Collision-free and statically stable.
PosturePredicate scene_predicate(const RobotModel& model, const std::vector<Obstacle>& obstacles);

// Evaluates every joint spline at `subdivisions` points per interval plus the
// last knot and checks each posture.
bool trajectory_feasible(const std::vector<SplineCoefficients>& joints, int subdivisions,
                         const PosturePredicate& ok);

struct JointReport {
  int joint = 0;
  bool smoothed = false;
  double p = 1.0;
  int evaluations = 0;
  double roughness_before = 0.0;  // interpolating spline through the raw knots
  double roughness_after = 0.0;   // spline at the chosen p
};

struct SmoothingResult {
  std::vector<SmoothingSpline> splines;  // one per joint
  std::vector<JointReport> report;
  JointTrajectory smoothed;  // spline values at the original knots
};

// Smooths the listed joints one after another. While joint j is searched,
// joints already processed use their chosen spline and the rest use the
// interpolating spline, so every candidate is a full-trajectory check.
SmoothingResult spline_fit_all(const JointTrajectory& traj, const std::vector<int>& joints,
                               const PosturePredicate& ok, const SmoothingOptions& options = {});

// Dense samples of a smoothing result: rows are postures.
JointTrajectory sample_trajectory(const std::vector<SmoothingSpline>& splines, int subdivisions);

}  // namespace dualreach
