#pragma once

#include <vector>

#include "negrasp/exec.hpp"
#include "negrasp/scene.hpp"
#include "negrasp/vec.hpp"

namespace negrasp {

// Robotiq 2F-140 sized two-finger gripper, default profile.
inline constexpr double kMaxGraspWidth = 0.2021;  // meters

// Grasp state: se(3) twist plus gripper opening. Vector layout is
// [omega(3), tau(3), width]; omega is axis-angle in radians, tau the
// translational twist component in meters.
struct GraspPose {
  Vec3 omega = Vec3::Zero();
  Vec3 tau = Vec3::Zero();
  double width = 0.0;

  Vec7 to_vec7() const {
    Vec7 v;
    v << omega, tau, width;
    return v;
  }
  static GraspPose from_vec7(const Vec7& v) {
    return GraspPose{v.segment<3>(0), v.segment<3>(3), v(6)};
  }

  // Wraps |omega| into [0, pi]; the rotation is unchanged.
  GraspPose canonicalized() const;
};

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.block<3, 3>(0, 0) = rotation;
    m.block<3, 1>(0, 3) = translation;
    return m;
  }
};

struct GripperModel {
  double max_width = kMaxGraspWidth;
  double finger_depth = 0.04;
  double finger_thickness = 0.01;
  double palm_clearance = 0.02;
};

// Box with arbitrary orientation: axes are the columns of `rotation`.
struct OrientedBox {
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  Vec3 half_extents = Vec3::Zero();

  bool contains_strict(const Vec3& p) const {
    const Vec3 q = rotation.transpose() * (p - center);
    return std::abs(q.x()) < half_extents.x() &&
           std::abs(q.y()) < half_extents.y() &&
           std::abs(q.z()) < half_extents.z();
  }
};

// Gripper collision proxy in the scene frame. Local convention, identity
// pose: closing axis = x, approach axis = z (fingers extend toward +z),
// grasp center = center of the closing volume.
struct GripperBoxes {
  OrientedBox fingers[2];
  OrientedBox palm;
  OrientedBox closing;  // region between the finger inner faces
};

Mat3 skew(const Vec3& v);

// SE(3) exponential: Rodrigues rotation plus the V-matrix applied to tau.
// Width is ignored. Throws std::invalid_argument on non-finite input.
RigidTransform exp_map(const GraspPose& pose);

// Principal-branch inverse of exp_map; width of the result is 0. Rotations
// with angle near pi go through the stabilized eigenvector branch. Throws
// std::invalid_argument if `rotation` is not orthonormal within 1e-6.
GraspPose log_map(const RigidTransform& xform);

struct PoseDistanceWeights {
  double rotation = 0.1;  // meters per radian
  double width = 1.0;
};

// Translation L2 + weighted geodesic rotation angle + weighted width gap.
double pose_distance(const GraspPose& a, const GraspPose& b,
                     const PoseDistanceWeights& w = {});

// Angle of Ra^T * Rb in [0, pi].
double geodesic_angle(const Mat3& ra, const Mat3& rb);

// Throws std::invalid_argument if pose.width > model.max_width.
GripperBoxes gripper_boxes(const GraspPose& pose, const GripperModel& model);

// True iff any scene point lies strictly inside a finger or the palm box
// (closing volume excluded).
bool collides(const GraspPose& pose, const GripperModel& model,
              const SceneCloud& cloud, Exec exec = Exec::kParallel);

// Number of masked points strictly inside the closing volume. Throws
// std::invalid_argument on an out-of-range mask index.
int closing_volume_hits(const GraspPose& pose, const GripperModel& model,
                        const SceneCloud& cloud,
                        const std::vector<int>& object_mask,
                        Exec exec = Exec::kParallel);

}  // namespace negrasp
