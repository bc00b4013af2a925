#include "dualreach/smoothing.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>

namespace dualreach {

namespace {

std::vector<double> intervals(const std::vector<double>& t) {
  std::vector<double> h(t.size() - 1);
  for (std::size_t i = 0; i + 1 < t.size(); ++i) h[i] = t[i + 1] - t[i];
  return h;
}

SplineCoefficients make_coefficients(const std::vector<double>& t, const Eigen::VectorXd& g,
                                     const Eigen::VectorXd& m) {
  const auto n = static_cast<Eigen::Index>(t.size());
  SplineCoefficients s;
  s.knots = t;
  s.a.resize(n - 1);
  s.b.resize(n - 1);
  s.c.resize(n - 1);
  s.d.resize(n - 1);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double h = t[i + 1] - t[i];
    s.a[i] = g[i];
    s.b[i] = (g[i + 1] - g[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0;
    s.c[i] = m[i] / 2.0;
    s.d[i] = (m[i + 1] - m[i]) / (6.0 * h);
  }
  return s;
}

}  // namespace

SmoothingSpline fit_smoothing_spline(const std::vector<double>& t, const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& weights, double p) {
  const auto n = static_cast<Eigen::Index>(t.size());
  if (n < 2) throw std::invalid_argument("smoothing spline needs at least two knots");
  if (y.size() != n || weights.size() != n)
    throw std::invalid_argument("knot, value and weight counts differ");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("smoothing parameter must be in [0, 1]");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(t[i]) || !std::isfinite(y[i])) throw std::invalid_argument("non-finite knot");
    if (!(weights[i] > 0.0)) throw std::invalid_argument("weights must be positive");
    if (i > 0 && !(t[i] > t[i - 1])) throw std::invalid_argument("knots must be strictly increasing");
  }

  SmoothingSpline out;
  out.p = p;
  if (n == 2) {
    out.values = y;
    out.second = Eigen::VectorXd::Zero(2);
    out.coeffs = make_coefficients(t, out.values, out.second);
    return out;
  }

  const auto h = intervals(t);
  const Eigen::Index m = n - 2;
  Eigen::VectorXd winv(n);
  for (Eigen::Index i = 0; i < n; ++i) winv[i] = std::isinf(weights[i]) ? 0.0 : 1.0 / weights[i];

  // Q is n x (n-2) with three nonzeros per column; R is (n-2) x (n-2) tridiagonal.
  auto q = [&](Eigen::Index row, Eigen::Index col) -> double {
    const Eigen::Index i = col + 1;
    if (row == i - 1) return 1.0 / h[i - 1];
    if (row == i) return -1.0 / h[i - 1] - 1.0 / h[i];
    if (row == i + 1) return 1.0 / h[i];
    return 0.0;
  };

  // M = p R + (1 - p) Q^T W^-1 Q, pentadiagonal.
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(5 * m));
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = std::max<Eigen::Index>(0, r - 2); c <= std::min(m - 1, r + 2); ++c) {
      double v = 0.0;
      if (r == c) v += p * (h[r] + h[r + 1]) / 3.0;
      if (c == r + 1) v += p * h[r + 1] / 6.0;
      if (c == r - 1) v += p * h[r] / 6.0;
      double qwq = 0.0;
      for (Eigen::Index k = std::max(r, c); k <= std::min(r, c) + 2; ++k) qwq += q(k, r) * winv[k] * q(k, c);
      v += (1.0 - p) * qwq;
      if (v != 0.0) entries.emplace_back(r, c, v);
    }
  }
  Eigen::SparseMatrix<double> mat(m, m);
  mat.setFromTriplets(entries.begin(), entries.end());

  Eigen::VectorXd qty(m);
  for (Eigen::Index c = 0; c < m; ++c) qty[c] = q(c, c) * y[c] + q(c + 1, c) * y[c + 1] + q(c + 2, c) * y[c + 2];

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(mat);
  if (solver.info() != Eigen::Success) throw std::runtime_error("smoothing system is singular");
  const Eigen::VectorXd u = solver.solve(qty);
  if (solver.info() != Eigen::Success) throw std::runtime_error("smoothing solve failed");

  Eigen::VectorXd qu = Eigen::VectorXd::Zero(n);
  for (Eigen::Index c = 0; c < m; ++c)
    for (Eigen::Index k = c; k <= c + 2; ++k) qu[k] += q(k, c) * u[c];

  out.values = y - (1.0 - p) * winv.cwiseProduct(qu);
  out.second = Eigen::VectorXd::Zero(n);
  out.second.segment(1, m) = p * u;
  out.coeffs = make_coefficients(t, out.values, out.second);
  return out;
}

SmoothingSpline fit_smoothing_spline(const std::vector<double>& t, const Eigen::VectorXd& y, double p) {
  return fit_smoothing_spline(t, y, Eigen::VectorXd::Ones(y.size()), p);
}

SplineSample evaluate_spline(const SplineCoefficients& s, double t) {
  const auto& k = s.knots;
  if (k.size() < 2) throw std::invalid_argument("spline has no intervals");
  const double slack = 1e-12 * (k.back() - k.front());
  if (!(t >= k.front() - slack && t <= k.back() + slack))
    throw std::domain_error("spline evaluated outside its knot span");
  auto it = std::upper_bound(k.begin(), k.end(), t);
  auto i = static_cast<Eigen::Index>(std::distance(k.begin(), it)) - 1;
  i = std::clamp<Eigen::Index>(i, 0, static_cast<Eigen::Index>(k.size()) - 2);
  const double dt = t - k[static_cast<std::size_t>(i)];
  SplineSample out;
  out.value = s.a[i] + dt * (s.b[i] + dt * (s.c[i] + dt * s.d[i]));
  out.first = s.b[i] + dt * (2.0 * s.c[i] + 3.0 * dt * s.d[i]);
  out.second = 2.0 * s.c[i] + 6.0 * dt * s.d[i];
  return out;
}

double roughness_integral(const SmoothingSpline& s) {
  const auto& t = s.coeffs.knots;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const double h = t[i + 1] - t[i];
    const double a = s.second[static_cast<Eigen::Index>(i)];
    const double b = s.second[static_cast<Eigen::Index>(i + 1)];
    total += h / 3.0 * (a * a + a * b + b * b);
  }
  return total;
}

double roughness_discrete(const Eigen::VectorXd& v) {
  double total = 0.0;
  for (Eigen::Index i = 1; i + 1 < v.size(); ++i) {
    const double d2 = v[i + 1] - 2.0 * v[i] + v[i - 1];
    total += d2 * d2;
  }
  return total;
}

double weighted_residual(const SmoothingSpline& s, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (std::isinf(w[i])) continue;
    const double r = y[i] - s.values[i];
    total += w[i] * r * r;
  }
  return total;
}

BisectionResult binary_search_p(const std::function<bool(double)>& feasible, double precision) {
  if (!(precision > 0.0 && precision < 1.0)) throw std::invalid_argument("precision must be in (0, 1)");
  BisectionResult r;
  r.evaluations = 1;
  if (!feasible(1.0)) throw InfeasibleTrajectory("trajectory is infeasible even without smoothing");
  double lower = 0.0;
  double upper = 1.0;
  while (upper - lower >= precision) {
    const double mid = 0.5 * (lower + upper);
    ++r.evaluations;
    if (feasible(mid)) {
      upper = mid;
    } else {
      lower = mid;
    }
  }
  r.p = upper;
  return r;
}

Eigen::VectorXd smoothing_weights(int n, const SmoothingOptions& options) {
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  const double end = options.endpoints == EndpointMode::kClamped
                         ? std::numeric_limits<double>::infinity()
                         : options.endpoint_weight;
  if (n > 0) {
    w[0] = end;
    w[n - 1] = end;
  }
  return w;
}

PosturePredicate scene_predicate(const RobotModel& model, const std::vector<Obstacle>& obstacles) {
  return [&model, obstacles](const JointVector& q) {
    const Pose pose = forward_kinematics(model, q);
    return !check_collision(model, pose, obstacles).colliding && check_stability(model, pose);
  };
}

bool trajectory_feasible(const std::vector<SplineCoefficients>& joints, int subdivisions,
                         const PosturePredicate& ok) {
  if (joints.empty()) return true;
  if (subdivisions < 1) throw std::invalid_argument("subdivisions must be positive");
  const auto& t = joints.front().knots;
  JointVector q(static_cast<Eigen::Index>(joints.size()));
  auto check_at = [&](double time) {
    for (std::size_t j = 0; j < joints.size(); ++j)
      q[static_cast<Eigen::Index>(j)] = evaluate_spline(joints[j], time).value;
    return ok(q);
  };
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const double h = t[i + 1] - t[i];
    for (int s = 0; s < subdivisions; ++s)
      if (!check_at(t[i] + h * s / subdivisions)) return false;
  }
  return check_at(t.back());
}

SmoothingResult spline_fit_all(const JointTrajectory& traj, const std::vector<int>& joints,
                               const PosturePredicate& ok, const SmoothingOptions& options) {
  const int n = traj.knots();
  if (static_cast<int>(traj.t.size()) != n) throw std::invalid_argument("time and knot counts differ");
  for (int j : joints)
    if (j < 0 || j >= traj.joints()) throw std::invalid_argument("joint index out of range");
  const Eigen::VectorXd w = smoothing_weights(n, options);

  SmoothingResult result;
  std::vector<SplineCoefficients> current;
  for (int j = 0; j < traj.joints(); ++j) {
    auto s = fit_smoothing_spline(traj.t, traj.q.col(j), w, 1.0);
    current.push_back(s.coeffs);
    result.report.push_back({j, false, 1.0, 0, roughness_integral(s), roughness_integral(s)});
    result.splines.push_back(std::move(s));
  }

  for (int j : joints) {
    const Eigen::VectorXd y = traj.q.col(j);
    auto feasible = [&](double p) {
      current[static_cast<std::size_t>(j)] = fit_smoothing_spline(traj.t, y, w, p).coeffs;
      return trajectory_feasible(current, options.subdivisions, ok);
    };
    BisectionResult b;
    try {
      b = binary_search_p(feasible, options.precision);
    } catch (const InfeasibleTrajectory&) {
      throw InfeasibleTrajectory("trajectory is infeasible before smoothing joint " + std::to_string(j));
    }
    auto s = fit_smoothing_spline(traj.t, y, w, b.p);
    current[static_cast<std::size_t>(j)] = s.coeffs;
    auto& rep = result.report[static_cast<std::size_t>(j)];
    rep.smoothed = true;
    rep.p = b.p;
    rep.evaluations = b.evaluations;
    rep.roughness_after = roughness_integral(s);
    result.splines[static_cast<std::size_t>(j)] = std::move(s);
  }

  result.smoothed.t = traj.t;
  result.smoothed.q.resize(n, traj.joints());
  for (int j = 0; j < traj.joints(); ++j) result.smoothed.q.col(j) = result.splines[static_cast<std::size_t>(j)].values;
  return result;
}

JointTrajectory sample_trajectory(const std::vector<SmoothingSpline>& splines, int subdivisions) {
  JointTrajectory out;
  if (splines.empty()) return out;
  if (subdivisions < 1) throw std::invalid_argument("subdivisions must be positive");
  const auto& t = splines.front().coeffs.knots;
  for (std::size_t i = 0; i + 1 < t.size(); ++i)
    for (int s = 0; s < subdivisions; ++s) out.t.push_back(t[i] + (t[i + 1] - t[i]) * s / subdivisions);
  out.t.push_back(t.back());
  out.q.resize(static_cast<Eigen::Index>(out.t.size()), static_cast<Eigen::Index>(splines.size()));
  for (std::size_t r = 0; r < out.t.size(); ++r)
    for (std::size_t j = 0; j < splines.size(); ++j)
      out.q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          evaluate_spline(splines[j].coeffs, out.t[r]).value;
  return out;
}

}  // namespace dualreach
