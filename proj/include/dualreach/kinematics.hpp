// Kinematic simulator for multi-chain robots that share a set of torso
// joints: forward kinematics, capsule collision queries against sphere and
// box obstacles, and a quasi-static center-of-mass stability test.
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace dualreach {

class Config;

using Rng = std::mt19937_64;
using JointVector = Eigen::VectorXd;

struct Joint {
  std::string name;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();  // unit, in the joint frame
  double lower = -M_PI;
  double upper = M_PI;
  double home = 0.0;
  int parent = -1;  // index of the parent joint; -1 attaches to the base
  // Fixed transform from the parent joint frame (after its rotation) to this
  // joint's frame at q = 0.
  Eigen::Isometry3d offset = Eigen::Isometry3d::Identity();
};

// Capsule rigidly attached to a joint frame. Mass sits at the segment midpoint.
struct Link {
  int joint = 0;
  Eigen::Vector3d a = Eigen::Vector3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  double radius = 0.0;
  double mass = 0.0;
};

struct Chain {
  std::string name;
  std::vector<int> joints;  // base to tip; must be the ancestor path of the last joint
  Eigen::Vector3d tip = Eigen::Vector3d::Zero();  // end effector in the last joint frame
};

// Immutable after construction; the constructor enforces every structural
// invariant and throws std::invalid_argument on violation.
class RobotModel {
 public:
  RobotModel(std::vector<Joint> joints, std::vector<Link> links,
             std::vector<Chain> chains, std::vector<int> shared_joints,
             std::vector<Eigen::Vector2d> support_polygon);

  int num_joints() const { return static_cast<int>(joints_.size()); }
  int num_chains() const { return static_cast<int>(chains_.size()); }
  const std::vector<Joint>& joints() const { return joints_; }
  const std::vector<Link>& links() const { return links_; }
  const std::vector<Chain>& chains() const { return chains_; }
  const std::vector<int>& shared_joints() const { return shared_; }
  const std::vector<Eigen::Vector2d>& support_polygon() const { return support_; }

  // Joints of chain `c` that no other chain uses.
  const std::vector<int>& exclusive_joints(int c) const { return exclusive_.at(c); }
  JointVector home() const;
  JointVector lower_limits() const;
  JointVector upper_limits() const;

 private:
  std::vector<Joint> joints_;
  std::vector<Link> links_;
  std::vector<Chain> chains_;
  std::vector<int> shared_;
  std::vector<std::vector<int>> exclusive_;
  std::vector<Eigen::Vector2d> support_;
};

// Builds a model from [joint], [link], [chain] and [support] sections.
RobotModel robot_from_config(const Config& cfg);

// Planar dual-arm robot in the x-z plane: one torso joint shared by two
// two-joint arms. Gravity is -z.
RobotModel planar_dual_arm();
// Spatial variant with a three-joint torso and two three-joint arms.
RobotModel spatial_dual_arm();

struct Segment {
  Eigen::Vector3d a;
  Eigen::Vector3d b;
};

struct Pose {
  std::vector<Eigen::Isometry3d> frames;     // per joint, world frame
  std::vector<Eigen::Vector3d> end_effectors;  // per chain
  std::vector<Segment> links;                // per link, world frame
};

Pose forward_kinematics(const RobotModel& model, const JointVector& q);
std::vector<Eigen::Vector3d> end_effectors(const RobotModel& model, const JointVector& q);

JointVector clamp_to_limits(const RobotModel& model, const JointVector& q);

// ---------------------------------------------------------------------------
// Obstacles

struct Sphere {
  Eigen::Vector3d center;
  double radius;
};

struct Box {
  Eigen::Vector3d center;
  Eigen::Vector3d half_extents;
};

using Obstacle = std::variant<Sphere, Box>;

// Validating constructors (radius > 0, half extents > 0).
Obstacle make_sphere(const Eigen::Vector3d& center, double radius);
Obstacle make_box(const Eigen::Vector3d& center, const Eigen::Vector3d& half_extents);

// Number of state-vector entries used to encode an obstacle (4 or 6).
int encoded_size(const Obstacle& obstacle);
void encode(const Obstacle& obstacle, Eigen::Ref<Eigen::VectorXd> out);

double point_segment_distance(const Eigen::Vector3d& p, const Segment& s);
double point_box_distance(const Eigen::Vector3d& p, const Box& box);
// Exact: minimizes the piecewise-quadratic squared distance along the segment.
double segment_box_distance(const Segment& s, const Box& box);
// Distance between the capsule axis and the obstacle surface (negative inside
// a sphere; zero when the axis touches a box).
double segment_obstacle_distance(const Segment& s, const Obstacle& obstacle);

struct CollisionReport {
  bool colliding = false;
  std::vector<std::pair<int, int>> pairs;  // (link, obstacle)
};

CollisionReport check_collision(const RobotModel& model, const JointVector& q,
                                const std::vector<Obstacle>& obstacles);
CollisionReport check_collision(const RobotModel& model, const Pose& pose,
                                const std::vector<Obstacle>& obstacles);

// ---------------------------------------------------------------------------
// Stability

Eigen::Vector3d center_of_mass(const RobotModel& model, const Pose& pose);
// Half-plane test; accepts either winding. Boundary points count as inside.
bool point_in_convex_polygon(const std::vector<Eigen::Vector2d>& polygon,
                             const Eigen::Vector2d& p);
bool check_stability(const RobotModel& model, const JointVector& q);
bool check_stability(const RobotModel& model, const Pose& pose);

// ---------------------------------------------------------------------------
// Scene sampling

struct WorkspaceBounds {
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();
};

Eigen::Vector3d sample_point(const WorkspaceBounds& bounds, Rng& rng);

struct GoalSample {
  Eigen::Vector3d object;              // sampled object center
  std::vector<Eigen::Vector3d> goals;  // object + offset, one per chain
};

// One object position, uniform over `bounds`; each chain's goal is the object
// center plus its offset (e.g. +-half the object width).
GoalSample sample_goals(const WorkspaceBounds& bounds,
                        const std::vector<Eigen::Vector3d>& offsets, Rng& rng);

enum class ObstacleShape { kSphere, kBox };

struct ObstacleRanges {
  ObstacleShape shape = ObstacleShape::kSphere;
  WorkspaceBounds centers;
  double min_radius = 0.03;  // spheres
  double max_radius = 0.08;
  Eigen::Vector3d min_half = Eigen::Vector3d::Constant(0.03);  // boxes
  Eigen::Vector3d max_half = Eigen::Vector3d::Constant(0.08);
  double clearance = 0.0;  // extra margin required against the clear posture
};

struct ObstacleSample {
  std::vector<Obstacle> obstacles;
  int attempts = 0;  // total draws including rejected ones
};

// Draws `count` obstacles, rejecting any that touch the robot in posture
// `clear_posture` or contain one of `keep_clear` (with `keep_clear_radius`).
// Throws std::runtime_error if one obstacle needs more than `max_attempts`.
ObstacleSample sample_obstacles(int count, const ObstacleRanges& ranges,
                                const RobotModel& model, const JointVector& clear_posture,
                                const std::vector<Eigen::Vector3d>& keep_clear,
                                double keep_clear_radius, Rng& rng,
                                int max_attempts = 1000);

}  // namespace dualreach
