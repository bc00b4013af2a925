#include "dualreach/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "dualreach/config.hpp"

namespace dualreach {
namespace {

std::string str(int i) { return std::to_string(i); }

}  // namespace

RobotModel::RobotModel(std::vector<Joint> joints, std::vector<Link> links,
                       std::vector<Chain> chains, std::vector<int> shared_joints,
                       std::vector<Eigen::Vector2d> support_polygon)
    : joints_(std::move(joints)),
      links_(std::move(links)),
      chains_(std::move(chains)),
      shared_(std::move(shared_joints)),
      support_(std::move(support_polygon)) {
  const int n = num_joints();
  if (n == 0) throw std::invalid_argument("robot has no joints");
  for (int i = 0; i < n; ++i) {
    auto& j = joints_[i];
    if (!(j.lower < j.upper))
      throw std::invalid_argument("joint " + str(i) + ": limits must satisfy lower < upper");
    if (j.parent >= i || j.parent < -1)
      throw std::invalid_argument("joint " + str(i) + ": parent must precede the joint");
    const double norm = j.axis.norm();
    if (!(norm > 0.0)) throw std::invalid_argument("joint " + str(i) + ": zero rotation axis");
    j.axis /= norm;
    if (j.home < j.lower || j.home > j.upper)
      throw std::invalid_argument("joint " + str(i) + ": home angle outside limits");
  }
  for (std::size_t l = 0; l < links_.size(); ++l) {
    if (links_[l].joint < 0 || links_[l].joint >= n)
      throw std::invalid_argument("link " + str(static_cast<int>(l)) + ": bad joint index");
    if (links_[l].radius < 0.0 || links_[l].mass < 0.0)
      throw std::invalid_argument("link " + str(static_cast<int>(l)) + ": negative radius or mass");
  }
  if (chains_.empty()) throw std::invalid_argument("robot has no chains");

  std::set<int> shared_set(shared_.begin(), shared_.end());
  std::vector<int> owner(n, -1);
  exclusive_.resize(chains_.size());
  for (int c = 0; c < num_chains(); ++c) {
    const auto& chain = chains_[c];
    if (chain.joints.empty()) throw std::invalid_argument("chain " + str(c) + " is empty");
    // The chain must be exactly the ancestor path of its last joint.
    std::vector<int> path;
    for (int j = chain.joints.back(); j >= 0; j = joints_[j].parent) {
      if (j >= n) throw std::invalid_argument("chain " + str(c) + ": bad joint index");
      path.push_back(j);
    }
    std::reverse(path.begin(), path.end());
    if (path != chain.joints)
      throw std::invalid_argument("chain " + str(c) +
                                  " is not the ancestor path of its last joint");
    for (int s : shared_set)
      if (std::find(chain.joints.begin(), chain.joints.end(), s) == chain.joints.end())
        throw std::invalid_argument("chain " + str(c) + " misses shared joint " + str(s));
    for (int j : chain.joints) {
      if (shared_set.count(j)) continue;
      if (owner[j] != -1)
        throw std::invalid_argument("joint " + str(j) +
                                    " appears in two chains but is not shared");
      owner[j] = c;
      exclusive_[c].push_back(j);
    }
  }
  if (support_.size() < 3) throw std::invalid_argument("support polygon needs >= 3 vertices");
}

JointVector RobotModel::home() const {
  JointVector q(num_joints());
  for (int i = 0; i < num_joints(); ++i) q[i] = joints_[i].home;
  return q;
}

JointVector RobotModel::lower_limits() const {
  JointVector q(num_joints());
  for (int i = 0; i < num_joints(); ++i) q[i] = joints_[i].lower;
  return q;
}

JointVector RobotModel::upper_limits() const {
  JointVector q(num_joints());
  for (int i = 0; i < num_joints(); ++i) q[i] = joints_[i].upper;
  return q;
}

namespace {

Eigen::Vector3d to_vec3(const std::vector<double>& v, const std::string& what) {
  if (v.size() != 3) throw ConfigError(what + ": expected 3 numbers");
  return {v[0], v[1], v[2]};
}

int resolve_joint(const std::string& ref, const std::vector<Joint>& joints) {
  for (std::size_t i = 0; i < joints.size(); ++i)
    if (joints[i].name == ref) return static_cast<int>(i);
  char* end = nullptr;
  const long idx = std::strtol(ref.c_str(), &end, 10);
  if (end != ref.c_str() && *end == '\0' && idx >= 0 && idx < static_cast<long>(joints.size()))
    return static_cast<int>(idx);
  throw ConfigError("unknown joint reference '" + ref + "'");
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ' ' || ch == '\t' || ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

RobotModel robot_from_config(const Config& cfg) {
  const auto& robot = cfg.section_or_empty("robot");
  const std::string preset = robot.get_string("preset", "");
  if (preset == "planar") return planar_dual_arm();
  if (preset == "spatial") return spatial_dual_arm();
  if (!preset.empty()) throw ConfigError("unknown robot preset '" + preset + "'");

  std::vector<Joint> joints;
  for (const auto* s : cfg.sections("joint")) {
    Joint j;
    j.name = s->get_string("name", "joint" + std::to_string(joints.size()));
    j.axis = to_vec3(s->get_doubles("axis"), "joint axis");
    const auto limits = s->get_doubles("limits");
    if (limits.size() != 2) throw ConfigError("joint limits: expected 'lower upper'");
    j.lower = limits[0];
    j.upper = limits[1];
    j.home = s->get_double("home", 0.0);
    const std::string parent = s->get_string("parent", "base");
    j.parent = parent == "base" ? -1 : resolve_joint(parent, joints);
    j.offset = Eigen::Isometry3d::Identity();
    j.offset.translation() = to_vec3(s->get_doubles("offset", {0, 0, 0}), "joint offset");
    if (s->has("offset_axis")) {
      j.offset.linear() =
          Eigen::AngleAxisd(s->get_double("offset_angle"),
                            to_vec3(s->get_doubles("offset_axis"), "offset_axis").normalized())
              .toRotationMatrix();
    }
    joints.push_back(std::move(j));
  }

  std::vector<Link> links;
  for (const auto* s : cfg.sections("link")) {
    Link l;
    l.joint = resolve_joint(s->get_string("joint"), joints);
    l.a = to_vec3(s->get_doubles("a", {0, 0, 0}), "link a");
    l.b = to_vec3(s->get_doubles("b"), "link b");
    l.radius = s->get_double("radius");
    l.mass = s->get_double("mass", 0.0);
    links.push_back(l);
  }

  std::vector<Chain> chains;
  for (const auto* s : cfg.sections("chain")) {
    Chain c;
    c.name = s->get_string("name", "chain" + std::to_string(chains.size()));
    for (const auto& w : words(s->get_string("joints"))) c.joints.push_back(resolve_joint(w, joints));
    c.tip = to_vec3(s->get_doubles("tip", {0, 0, 0}), "chain tip");
    chains.push_back(std::move(c));
  }

  std::vector<int> shared;
  for (const auto& w : words(robot.get_string("shared", ""))) shared.push_back(resolve_joint(w, joints));

  std::vector<Eigen::Vector2d> support;
  const auto poly = robot.get_doubles("support", {});
  if (poly.size() % 2 != 0) throw ConfigError("support polygon: odd number of coordinates");
  for (std::size_t i = 0; i + 1 < poly.size(); i += 2) support.emplace_back(poly[i], poly[i + 1]);

  try {
    return RobotModel(std::move(joints), std::move(links), std::move(chains), std::move(shared),
                      std::move(support));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(cfg.source() + ": " + e.what());
  }
}

RobotModel planar_dual_arm() {
  const Eigen::Vector3d left_axis(0, -1, 0);  // +angle rotates -x toward -z
  const Eigen::Vector3d right_axis(0, 1, 0);  // +angle rotates +x toward -z
  auto at = [](double x, double y, double z) {
    Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
    t.translation() = Eigen::Vector3d(x, y, z);
    return t;
  };
  constexpr double kTorso = 0.40, kShoulder = 0.15, kUpper = 0.22, kFore = 0.22;
  std::vector<Joint> joints = {
      {"torso", left_axis, -0.6, 0.6, 0.0, -1, at(0, 0, 0)},
      {"l_shoulder", left_axis, -2.6, 2.6, 1.2, 0, at(-kShoulder, 0, kTorso)},
      {"l_elbow", left_axis, -2.8, 2.8, 0.6, 1, at(-kUpper, 0, 0)},
      {"r_shoulder", right_axis, -2.6, 2.6, 1.2, 0, at(kShoulder, 0, kTorso)},
      {"r_elbow", right_axis, -2.8, 2.8, 0.6, 3, at(kUpper, 0, 0)},
  };
  std::vector<Link> links = {
      {0, {0, 0, 0}, {0, 0, kTorso}, 0.05, 4.0},
      {1, {0, 0, 0}, {-kUpper, 0, 0}, 0.03, 0.5},
      {2, {0, 0, 0}, {-kFore, 0, 0}, 0.025, 0.3},
      {3, {0, 0, 0}, {kUpper, 0, 0}, 0.03, 0.5},
      {4, {0, 0, 0}, {kFore, 0, 0}, 0.025, 0.3},
  };
  std::vector<Chain> chains = {
      {"left", {0, 1, 2}, {-kFore, 0, 0}},
      {"right", {0, 3, 4}, {kFore, 0, 0}},
  };
  std::vector<Eigen::Vector2d> support = {{-0.15, -0.08}, {0.15, -0.08}, {0.15, 0.08}, {-0.15, 0.08}};
  return RobotModel(std::move(joints), std::move(links), std::move(chains), {0}, std::move(support));
}

RobotModel spatial_dual_arm() {
  auto at = [](double x, double y, double z) {
    Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
    t.translation() = Eigen::Vector3d(x, y, z);
    return t;
  };
  const Eigen::Vector3d X = Eigen::Vector3d::UnitX(), Y = Eigen::Vector3d::UnitY(),
                        Z = Eigen::Vector3d::UnitZ();
  constexpr double kUpper = 0.22, kFore = 0.22;
  std::vector<Joint> joints = {
      {"torso_yaw", Z, -0.8, 0.8, 0.0, -1, at(0, 0, 0)},
      {"torso_pitch", Y, -0.4, 0.4, 0.0, 0, at(0, 0, 0.15)},
      {"torso_roll", X, -0.4, 0.4, 0.0, 1, at(0, 0, 0.15)},
      {"l_shoulder_pitch", Y, -2.6, 2.6, 0.0, 2, at(0, 0.15, 0.12)},
      {"l_shoulder_roll", X, -1.5, 1.5, 0.0, 3, at(0, 0, 0)},
      {"l_elbow", Y, -2.6, 0.2, -0.6, 4, at(0, 0, -kUpper)},
      {"r_shoulder_pitch", Y, -2.6, 2.6, 0.0, 2, at(0, -0.15, 0.12)},
      {"r_shoulder_roll", X, -1.5, 1.5, 0.0, 6, at(0, 0, 0)},
      {"r_elbow", Y, -2.6, 0.2, -0.6, 7, at(0, 0, -kUpper)},
  };
  std::vector<Link> links = {
      {0, {0, 0, 0}, {0, 0, 0.15}, 0.06, 2.0},
      {1, {0, 0, 0}, {0, 0, 0.15}, 0.06, 1.5},
      {2, {0, 0, 0}, {0, 0, 0.12}, 0.06, 1.0},
      {4, {0, 0, 0}, {0, 0, -kUpper}, 0.03, 0.5},
      {5, {0, 0, 0}, {0, 0, -kFore}, 0.025, 0.3},
      {7, {0, 0, 0}, {0, 0, -kUpper}, 0.03, 0.5},
      {8, {0, 0, 0}, {0, 0, -kFore}, 0.025, 0.3},
  };
  std::vector<Chain> chains = {
      {"left", {0, 1, 2, 3, 4, 5}, {0, 0, -kFore}},
      {"right", {0, 1, 2, 6, 7, 8}, {0, 0, -kFore}},
  };
  std::vector<Eigen::Vector2d> support = {{-0.1, -0.15}, {0.1, -0.15}, {0.1, 0.15}, {-0.1, 0.15}};
  return RobotModel(std::move(joints), std::move(links), std::move(chains), {0, 1, 2},
                    std::move(support));
}

Pose forward_kinematics(const RobotModel& model, const JointVector& q) {
  const int n = model.num_joints();
  if (q.size() != n)
    throw std::invalid_argument("forward_kinematics: expected " + str(n) + " joint angles, got " +
                                str(static_cast<int>(q.size())));
  Pose pose;
  pose.frames.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& j = model.joints()[i];
    const Eigen::Isometry3d parent =
        j.parent < 0 ? Eigen::Isometry3d::Identity() : pose.frames[j.parent];
    pose.frames[i] = parent * j.offset * Eigen::AngleAxisd(q[i], j.axis);
  }
  pose.end_effectors.reserve(model.num_chains());
  for (const auto& c : model.chains())
    pose.end_effectors.push_back(pose.frames[c.joints.back()] * c.tip);
  pose.links.reserve(model.links().size());
  for (const auto& l : model.links())
    pose.links.push_back({pose.frames[l.joint] * l.a, pose.frames[l.joint] * l.b});
  return pose;
}

std::vector<Eigen::Vector3d> end_effectors(const RobotModel& model, const JointVector& q) {
  return forward_kinematics(model, q).end_effectors;
}

JointVector clamp_to_limits(const RobotModel& model, const JointVector& q) {
  if (q.size() != model.num_joints())
    throw std::invalid_argument("clamp_to_limits: dimension mismatch");
  JointVector out(q.size());
  for (int i = 0; i < q.size(); ++i)
    out[i] = std::clamp(q[i], model.joints()[i].lower, model.joints()[i].upper);
  return out;
}

Obstacle make_sphere(const Eigen::Vector3d& center, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("sphere radius must be positive");
  return Sphere{center, radius};
}

Obstacle make_box(const Eigen::Vector3d& center, const Eigen::Vector3d& half_extents) {
  if (!(half_extents.array() > 0.0).all())
    throw std::invalid_argument("box half extents must be positive");
  return Box{center, half_extents};
}

int encoded_size(const Obstacle& obstacle) {
  return std::holds_alternative<Sphere>(obstacle) ? 4 : 6;
}

void encode(const Obstacle& obstacle, Eigen::Ref<Eigen::VectorXd> out) {
  if (const auto* s = std::get_if<Sphere>(&obstacle)) {
    out.head<3>() = s->center;
    out[3] = s->radius;
  } else {
    const auto& b = std::get<Box>(obstacle);
    out.head<3>() = b.center;
    out.segment<3>(3) = b.half_extents;
  }
}

double point_segment_distance(const Eigen::Vector3d& p, const Segment& s) {
  const Eigen::Vector3d d = s.b - s.a;
  const double len2 = d.squaredNorm();
  double t = len2 > 0.0 ? (p - s.a).dot(d) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (s.a + t * d - p).norm();
}

double point_box_distance(const Eigen::Vector3d& p, const Box& box) {
  const Eigen::Vector3d lo = box.center - box.half_extents;
  const Eigen::Vector3d hi = box.center + box.half_extents;
  const Eigen::Vector3d excess = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
  return excess.norm();
}

double segment_box_distance(const Segment& s, const Box& box) {
  const Eigen::Vector3d lo = box.center - box.half_extents;
  const Eigen::Vector3d hi = box.center + box.half_extents;
  const Eigen::Vector3d d = s.b - s.a;

  // Squared distance is a sum of per-axis quadratics whose active piece only
  // changes where the segment crosses a face plane.
  std::vector<double> breaks = {0.0, 1.0};
  for (int k = 0; k < 3; ++k) {
    if (d[k] == 0.0) continue;
    for (double bound : {lo[k], hi[k]}) {
      const double t = (bound - s.a[k]) / d[k];
      if (t > 0.0 && t < 1.0) breaks.push_back(t);
    }
  }
  std::sort(breaks.begin(), breaks.end());

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double t0 = breaks[i], t1 = breaks[i + 1];
    const double tm = 0.5 * (t0 + t1);
    double qa = 0.0, qb = 0.0, qc = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double pm = s.a[k] + tm * d[k];
      double bound;
      if (pm < lo[k]) {
        bound = lo[k];
      } else if (pm > hi[k]) {
        bound = hi[k];
      } else {
        continue;
      }
      const double off = s.a[k] - bound;
      qa += d[k] * d[k];
      qb += 2.0 * d[k] * off;
      qc += off * off;
    }
    double t = t0;
    if (qa > 0.0) t = std::clamp(-qb / (2.0 * qa), t0, t1);
    best = std::min({best, qa * t * t + qb * t + qc, qa * t0 * t0 + qb * t0 + qc,
                     qa * t1 * t1 + qb * t1 + qc});
  }
  return std::sqrt(std::max(best, 0.0));
}

double segment_obstacle_distance(const Segment& s, const Obstacle& obstacle) {
  if (const auto* sphere = std::get_if<Sphere>(&obstacle))
    return point_segment_distance(sphere->center, s) - sphere->radius;
  return segment_box_distance(s, std::get<Box>(obstacle));
}

CollisionReport check_collision(const RobotModel& model, const Pose& pose,
                                const std::vector<Obstacle>& obstacles) {
  CollisionReport report;
  for (std::size_t l = 0; l < pose.links.size(); ++l) {
    const double radius = model.links()[l].radius;
    for (std::size_t o = 0; o < obstacles.size(); ++o) {
      if (segment_obstacle_distance(pose.links[l], obstacles[o]) < radius)
        report.pairs.emplace_back(static_cast<int>(l), static_cast<int>(o));
    }
  }
  report.colliding = !report.pairs.empty();
  return report;
}

CollisionReport check_collision(const RobotModel& model, const JointVector& q,
                                const std::vector<Obstacle>& obstacles) {
  if (obstacles.empty()) return {};
  return check_collision(model, forward_kinematics(model, q), obstacles);
}

Eigen::Vector3d center_of_mass(const RobotModel& model, const Pose& pose) {
  Eigen::Vector3d weighted = Eigen::Vector3d::Zero();
  double total = 0.0;
  for (std::size_t l = 0; l < pose.links.size(); ++l) {
    const double m = model.links()[l].mass;
    weighted += m * 0.5 * (pose.links[l].a + pose.links[l].b);
    total += m;
  }
  if (total <= 0.0) return pose.frames.front().translation();
  return weighted / total;
}

bool point_in_convex_polygon(const std::vector<Eigen::Vector2d>& polygon,
                             const Eigen::Vector2d& p) {
  const std::size_t n = polygon.size();
  int sign = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& a = polygon[i];
    const Eigen::Vector2d& b = polygon[(i + 1) % n];
    const double cross = (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
    if (cross == 0.0) continue;
    const int s = cross > 0.0 ? 1 : -1;
    if (sign == 0) {
      sign = s;
    } else if (s != sign) {
      return false;
    }
  }
  return true;
}

bool check_stability(const RobotModel& model, const Pose& pose) {
  const Eigen::Vector3d com = center_of_mass(model, pose);
  return point_in_convex_polygon(model.support_polygon(), com.head<2>());
}

bool check_stability(const RobotModel& model, const JointVector& q) {
  return check_stability(model, forward_kinematics(model, q));
}

Eigen::Vector3d sample_point(const WorkspaceBounds& bounds, Rng& rng) {
  Eigen::Vector3d p;
  for (int k = 0; k < 3; ++k) {
    if (bounds.hi[k] < bounds.lo[k]) throw std::invalid_argument("workspace bounds: hi < lo");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    p[k] = bounds.lo[k] + u(rng) * (bounds.hi[k] - bounds.lo[k]);
  }
  return p;
}

GoalSample sample_goals(const WorkspaceBounds& bounds,
                        const std::vector<Eigen::Vector3d>& offsets, Rng& rng) {
  GoalSample out;
  out.object = sample_point(bounds, rng);
  out.goals.reserve(offsets.size());
  for (const auto& off : offsets) out.goals.push_back(out.object + off);
  return out;
}

ObstacleSample sample_obstacles(int count, const ObstacleRanges& ranges,
                                const RobotModel& model, const JointVector& clear_posture,
                                const std::vector<Eigen::Vector3d>& keep_clear,
                                double keep_clear_radius, Rng& rng, int max_attempts) {
  if (count < 0) throw std::invalid_argument("obstacle count must be >= 0");
  ObstacleSample out;
  if (count == 0) return out;
  const Pose pose = forward_kinematics(model, clear_posture);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto lerp = [&](double lo, double hi) { return lo + u(rng) * (hi - lo); };

  for (int i = 0; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
      ++out.attempts;
      const Eigen::Vector3d center = sample_point(ranges.centers, rng);
      Obstacle candidate;
      if (ranges.shape == ObstacleShape::kSphere) {
        candidate = make_sphere(center, lerp(ranges.min_radius, ranges.max_radius));
      } else {
        Eigen::Vector3d half;
        for (int k = 0; k < 3; ++k) half[k] = lerp(ranges.min_half[k], ranges.max_half[k]);
        candidate = make_box(center, half);
      }
      bool ok = true;
      for (std::size_t l = 0; l < pose.links.size() && ok; ++l)
        ok = segment_obstacle_distance(pose.links[l], candidate) >=
             model.links()[l].radius + ranges.clearance;
      for (const auto& p : keep_clear) {
        if (!ok) break;
        ok = segment_obstacle_distance({p, p}, candidate) >= keep_clear_radius;
      }
      if (ok) {
        out.obstacles.push_back(candidate);
        placed = true;
      }
    }
    if (!placed)
      throw std::runtime_error("sample_obstacles: could not place obstacle " + str(i) + " in " +
                               str(max_attempts) + " attempts");
  }
  return out;
}

}  // namespace dualreach
