#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dualreach/config.hpp"
#include "dualreach/kinematics.hpp"

using namespace dualreach;

namespace {

// Two unit links in the x-y plane rotating about z.
RobotModel two_link_arm() {
  Joint j0{"j0", Eigen::Vector3d::UnitZ(), -M_PI, M_PI, 0.0, -1, Eigen::Isometry3d::Identity()};
  Eigen::Isometry3d off = Eigen::Isometry3d::Identity();
  off.translation() = Eigen::Vector3d(1, 0, 0);
  Joint j1{"j1", Eigen::Vector3d::UnitZ(), -M_PI, M_PI, 0.0, 0, off};
  std::vector<Link> links = {{0, {0, 0, 0}, {1, 0, 0}, 0.05, 1.0}, {1, {0, 0, 0}, {1, 0, 0}, 0.05, 1.0}};
  std::vector<Chain> chains = {{"arm", {0, 1}, {1, 0, 0}}};
  std::vector<Eigen::Vector2d> support = {{-1, -1}, {1, -1}, {1, 1}, {-1, 1}};
  return RobotModel({j0, j1}, links, chains, {}, support);
}

Eigen::Matrix4d rodrigues(const Eigen::Vector3d& axis, double angle) {
  Eigen::Matrix3d k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  t.topLeftCorner<3, 3>() = Eigen::Matrix3d::Identity() + std::sin(angle) * k + (1 - std::cos(angle)) * k * k;
  return t;
}

// Step-by-step 4x4 products along the parent links.
Eigen::Vector3d oracle_tip(const RobotModel& m, const JointVector& q, int chain) {
  const auto& c = m.chains()[chain];
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  for (int j : c.joints) t = t * m.joints()[j].offset.matrix() * rodrigues(m.joints()[j].axis, q[j]);
  Eigen::Vector4d tip;
  tip << c.tip, 1.0;
  return (t * tip).head<3>();
}

}  // namespace

TEST(ForwardKinematics, StraightArm) {
  const auto m = two_link_arm();
  const auto ee = end_effectors(m, Eigen::Vector2d(0, 0));
  EXPECT_NEAR(ee[0].x(), 2.0, 1e-12);
  EXPECT_NEAR(ee[0].y(), 0.0, 1e-12);
}

TEST(ForwardKinematics, RigidRotation) {
  const auto m = two_link_arm();
  const auto ee = end_effectors(m, Eigen::Vector2d(M_PI / 2, 0));
  EXPECT_NEAR(ee[0].x(), 0.0, 1e-12);
  EXPECT_NEAR(ee[0].y(), 2.0, 1e-12);
}

TEST(ForwardKinematics, MatchesHomogeneousTransformOracle) {
  for (const auto& m : {planar_dual_arm(), spatial_dual_arm()}) {
    for (int seed = 0; seed < 100; ++seed) {
      Rng rng(seed);
      JointVector q(m.num_joints());
      for (int j = 0; j < m.num_joints(); ++j)
        q[j] = std::uniform_real_distribution<double>(m.joints()[j].lower, m.joints()[j].upper)(rng);
      const auto ee = end_effectors(m, q);
      for (int c = 0; c < m.num_chains(); ++c) EXPECT_LT((ee[c] - oracle_tip(m, q, c)).norm(), 1e-10);
    }
  }
}

TEST(ForwardKinematics, PureAndChainLocal) {
  const auto m = planar_dual_arm();
  JointVector q = m.home();
  const auto a = end_effectors(m, q);
  const auto b = end_effectors(m, q);
  EXPECT_EQ(a[0], b[0]);
  q[4] += 0.7;  // right elbow: the left hand must not move
  const auto c = end_effectors(m, q);
  EXPECT_EQ(a[0], c[0]);
  EXPECT_NE(a[1], c[1]);
}

TEST(ForwardKinematics, DimensionMismatchThrows) {
  EXPECT_THROW(forward_kinematics(planar_dual_arm(), JointVector::Zero(3)), std::invalid_argument);
}

TEST(RobotModel, RejectsBadStructure) {
  Joint j{"j", Eigen::Vector3d::UnitZ(), 1.0, -1.0, 0.0, -1, Eigen::Isometry3d::Identity()};
  std::vector<Eigen::Vector2d> support = {{-1, -1}, {1, -1}, {0, 1}};
  EXPECT_THROW(RobotModel({j}, {}, {{"c", {0}, {}}}, {}, support), std::invalid_argument);
  j.lower = -1;
  j.upper = 1;
  EXPECT_THROW(RobotModel({j}, {}, {{"c", {0}, {}}}, {}, {{0, 0}, {1, 0}}), std::invalid_argument);
}

TEST(RobotModel, PlanarPartition) {
  const auto m = planar_dual_arm();
  EXPECT_EQ(m.num_joints(), 5);
  EXPECT_EQ(m.shared_joints(), std::vector<int>{0});
  EXPECT_EQ(m.exclusive_joints(0), (std::vector<int>{1, 2}));
  EXPECT_EQ(m.exclusive_joints(1), (std::vector<int>{3, 4}));
}

TEST(RobotModel, FromConfigPresetAndExplicit) {
  const auto preset = robot_from_config(Config::parse("[robot]\npreset = spatial\n"));
  EXPECT_EQ(preset.num_joints(), 9);
  const auto explicit_model = robot_from_config(Config::parse(R"(
[robot]
support = -1 -1, 1 -1, 0 1
[joint]
name = hip
axis = 0 0 1
limits = -3 3
[joint]
name = elbow
parent = hip
axis = 0 0 1
offset = 1 0 0
limits = -2 2
[link]
joint = hip
a = 0 0 0
b = 1 0 0
radius = 0.05
mass = 1
[chain]
name = arm
joints = hip elbow
tip = 1 0 0
)"));
  EXPECT_EQ(explicit_model.num_joints(), 2);
  const auto ee = end_effectors(explicit_model, Eigen::Vector2d(0, 0));
  EXPECT_NEAR(ee[0].x(), 2.0, 1e-12);
}

TEST(ClampToLimits, ProjectionProperties) {
  const auto m = planar_dual_arm();
  const JointVector inside = m.home();
  EXPECT_EQ(clamp_to_limits(m, inside), inside);
  JointVector below = m.lower_limits().array() - 1.0;
  EXPECT_EQ(clamp_to_limits(m, below), m.lower_limits());
  Rng rng(3);
  std::normal_distribution<double> n(0, 4);
  for (int i = 0; i < 100; ++i) {
    JointVector q(5), r(5);
    for (int j = 0; j < 5; ++j) q[j] = n(rng), r[j] = q[j] + std::abs(n(rng));
    const auto cq = clamp_to_limits(m, q);
    EXPECT_EQ(clamp_to_limits(m, cq), cq);
    const auto cr = clamp_to_limits(m, r);
    for (int j = 0; j < 5; ++j) EXPECT_LE(cq[j], cr[j]);
  }
}

TEST(Collision, CapsuleNearSphere) {
  const auto m = two_link_arm();
  // End link along x from (1,0,0) to (2,0,0), radius 0.05. Sphere surface 0.04 from the axis.
  const std::vector<Obstacle> obs = {make_sphere({1.5, 0.14, 0}, 0.1)};
  const auto r = check_collision(m, Eigen::Vector2d(0, 0), obs);
  EXPECT_TRUE(r.colliding);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0], std::make_pair(1, 0));
  EXPECT_FALSE(check_collision(m, Eigen::Vector2d(0, 0), {}).colliding);
}

TEST(Collision, MonotoneInRadius) {
  const auto m = planar_dual_arm();
  Rng rng(11);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d c(u(rng), 0.0, u(rng) + 0.3);
    bool was = false;
    for (double r = 0.01; r < 0.3; r += 0.01) {
      const bool now = check_collision(m, m.home(), {make_sphere(c, r)}).colliding;
      EXPECT_TRUE(!was || now);
      was = now;
    }
  }
}

TEST(Collision, SegmentBoxMatchesPointSampling) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(-1, 1), h(0.05, 0.5);
  int compared = 0;
  for (int i = 0; i < 1000; ++i) {
    const Segment s{{u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)}};
    const Box box{{u(rng) * 0.5, u(rng) * 0.5, u(rng) * 0.5}, {h(rng), h(rng), h(rng)}};
    const double radius = 0.1 * (u(rng) + 1.0);
    double sampled = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 10000; ++k) {
      const Eigen::Vector3d p = s.a + (s.b - s.a) * (k / 10000.0);
      sampled = std::min(sampled, point_box_distance(p, box));
    }
    const double exact = segment_box_distance(s, box);
    EXPECT_LE(exact, sampled + 1e-12);
    if (std::abs(sampled - radius) > 1e-4) {
      ++compared;
      EXPECT_EQ(exact < radius, sampled < radius);
    }
  }
  EXPECT_GT(compared, 900);
}

TEST(Collision, PointPrimitives) {
  const Segment s{{0, 0, 0}, {1, 0, 0}};
  EXPECT_NEAR(point_segment_distance({0.5, 1, 0}, s), 1.0, 1e-12);
  EXPECT_NEAR(point_segment_distance({-1, 0, 0}, s), 1.0, 1e-12);
  const Box b{{0, 0, 0}, {1, 1, 1}};
  EXPECT_EQ(point_box_distance({0.5, 0.5, 0.5}, b), 0.0);
  EXPECT_NEAR(point_box_distance({2, 2, 1}, b), std::sqrt(2.0), 1e-12);
  EXPECT_THROW(make_sphere({0, 0, 0}, 0.0), std::invalid_argument);
  EXPECT_THROW(make_box({0, 0, 0}, {1, 0, 1}), std::invalid_argument);
}

TEST(Stability, HomeIsStableCantileverIsNot) {
  const auto m = planar_dual_arm();
  EXPECT_TRUE(check_stability(m, m.home()));
  JointVector q = m.home();
  q[0] = 0.6;  // lean the torso fully
  q[1] = -1.0;
  q[3] = 2.5;
  EXPECT_FALSE(check_stability(m, q));
}

TEST(Stability, PolygonTestMatchesHalfPlaneOracle) {
  const std::vector<Eigen::Vector2d> poly = {{-0.15, -0.08}, {0.15, -0.08}, {0.15, 0.08}, {-0.15, 0.08}};
  auto oracle = [&](const Eigen::Vector2d& p) {
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const auto& a = poly[i];
      const auto& b = poly[(i + 1) % poly.size()];
      if ((b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x()) < 0) return false;
    }
    return true;
  };
  for (int i = -40; i <= 40; ++i)
    for (int j = -20; j <= 20; ++j) {
      const Eigen::Vector2d p(i * 0.005, j * 0.005);
      EXPECT_EQ(point_in_convex_polygon(poly, p), oracle(p));
      std::vector<Eigen::Vector2d> cw(poly.rbegin(), poly.rend());
      EXPECT_EQ(point_in_convex_polygon(cw, p), oracle(p));
    }
}

TEST(Sampling, GoalsDegenerateAndDeterministic) {
  const WorkspaceBounds point{{0.1, 0, 0.2}, {0.1, 0, 0.2}};
  Rng rng(1);
  const auto g = sample_goals(point, {{-0.15, 0, 0}, {0.15, 0, 0}}, rng);
  EXPECT_EQ(g.object, Eigen::Vector3d(0.1, 0, 0.2));
  EXPECT_NEAR(g.goals[1].x() - g.goals[0].x(), 0.3, 1e-15);
  const WorkspaceBounds box{{-1, -1, -1}, {1, 2, 3}};
  Rng a(9), b(9);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sample_point(box, a), sample_point(box, b));
}

TEST(Sampling, UniformMeanWithinThreeSigma) {
  const WorkspaceBounds box{{-1, 0, 2}, {1, 4, 3}};
  Rng rng(21);
  const int n = 10000;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) sum += sample_point(box, rng);
  const Eigen::Vector3d mean = sum / n;
  for (int k = 0; k < 3; ++k) {
    const double w = box.hi[k] - box.lo[k];
    const double sigma = w / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
    EXPECT_LT(std::abs(mean[k] - 0.5 * (box.lo[k] + box.hi[k])), 3 * sigma);
  }
}

TEST(Sampling, ObstaclesCountRangesAndClearance) {
  const auto m = spatial_dual_arm();
  ObstacleRanges r;
  r.centers = {{0.1, -0.4, 0.0}, {0.5, 0.4, 0.6}};
  Rng rng(4);
  EXPECT_TRUE(sample_obstacles(0, r, m, m.home(), {}, 0.0, rng).obstacles.empty());
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = sample_obstacles(3, r, m, m.home(), {}, 0.0, rng);
    ASSERT_EQ(s.obstacles.size(), 3u);
    EXPECT_LE(s.attempts, 100);
    for (const auto& o : s.obstacles) {
      const auto& sp = std::get<Sphere>(o);
      EXPECT_GE(sp.radius, r.min_radius);
      EXPECT_LE(sp.radius, r.max_radius);
      EXPECT_TRUE((sp.center.array() >= r.centers.lo.array()).all());
      EXPECT_TRUE((sp.center.array() <= r.centers.hi.array()).all());
    }
    EXPECT_FALSE(check_collision(m, m.home(), s.obstacles).colliding);
  }
}

TEST(Sampling, ImpossibleObstacleThrows) {
  const auto m = planar_dual_arm();
  ObstacleRanges r;
  r.centers = {{0, 0, 0.2}, {0, 0, 0.2}};  // always on the torso
  Rng rng(1);
  EXPECT_THROW(sample_obstacles(1, r, m, m.home(), {}, 0.0, rng, 50), std::runtime_error);
}
