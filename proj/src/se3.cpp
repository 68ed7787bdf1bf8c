#include "negrasp/se3.hpp"

#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace negrasp {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Rodrigues / V-matrix coefficients with series fallbacks below theta ~ 1e-2,
// where the closed forms lose digits to cancellation.
struct TwistCoeffs {
  double a;  // sin(t)/t
  double b;  // (1-cos(t))/t^2
  double c;  // (t-sin(t))/t^3
};

TwistCoeffs twist_coeffs(double theta) {
  TwistCoeffs k;
  const double t2 = theta * theta;
  if (theta < 1e-2) {
    k.a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    k.b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
    k.c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  } else {
    k.a = std::sin(theta) / theta;
    k.b = (1.0 - std::cos(theta)) / t2;
    k.c = (theta - std::sin(theta)) / (t2 * theta);
  }
  return k;
}

// Coefficient of skew(omega)^2 in V^{-1}: (1 - (t/2)cot(t/2)) / t^2.
// Regular at pi, series below ~1e-2.
double vinv_c2(double theta) {
  const double t2 = theta * theta;
  if (theta < 1e-2) {
    return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  }
  const double half = 0.5 * theta;
  return (1.0 - half * std::cos(half) / std::sin(half)) / t2;
}

Vec3 vee_antisymmetric(const Mat3& m) {
  return Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)) * 0.5;
}

bool finite(const GraspPose& p) {
  return p.omega.allFinite() && p.tau.allFinite() && std::isfinite(p.width);
}

}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

GraspPose GraspPose::canonicalized() const {
  GraspPose out = *this;
  const double theta = omega.norm();
  if (theta > kPi) {
    double wrapped = std::fmod(theta, 2.0 * kPi);
    if (wrapped > kPi) wrapped -= 2.0 * kPi;
    out.omega = omega * (wrapped / theta);
  }
  return out;
}

RigidTransform exp_map(const GraspPose& pose) {
  if (!finite(pose)) {
    throw std::invalid_argument("exp_map: non-finite pose");
  }
  const double theta = pose.omega.norm();
  const TwistCoeffs k = twist_coeffs(theta);
  const Mat3 w = skew(pose.omega);
  const Mat3 w2 = w * w;
  RigidTransform out;
  out.rotation = Mat3::Identity() + k.a * w + k.b * w2;
  const Mat3 v = Mat3::Identity() + k.b * w + k.c * w2;
  out.translation = v * pose.tau;
  return out;
}

GraspPose log_map(const RigidTransform& xform) {
  const Mat3& r = xform.rotation;
  if (!r.allFinite() || !xform.translation.allFinite()) {
    throw std::invalid_argument("log_map: non-finite transform");
  }
  const Mat3 rtr_err = r.transpose() * r - Mat3::Identity();
  if (rtr_err.cwiseAbs().maxCoeff() > 1e-6 || r.determinant() < 0.0) {
    throw std::invalid_argument("log_map: rotation not orthonormal");
  }

  const double cos_theta =
      std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::acos(cos_theta);

  Vec3 omega;
  if (theta < 1e-6) {
    // sin(t)/t ~ 1: vee already is sin(theta)*axis ~ omega.
    omega = vee_antisymmetric(r);
  } else if (theta > kPi - 1e-4) {
    // Eigenvector branch: axis from the symmetric part, where
    // n n^T = ((R + R^T)/2 - cos(t) I) / (1 - cos(t)).
    const Mat3 nnt = ((r + r.transpose()) * 0.5 - cos_theta * Mat3::Identity()) /
                     (1.0 - cos_theta);
    int col = 0;
    nnt.diagonal().maxCoeff(&col);
    Vec3 axis = nnt.col(col).normalized();
    // Orient by the antisymmetric residue when it is meaningful, otherwise
    // pick the canonical sign (both signs represent the same rotation at pi).
    const Vec3 s = vee_antisymmetric(r);
    if (s.norm() > 1e-12) {
      if (s.dot(axis) < 0.0) axis = -axis;
    } else if (axis.x() < 0.0 || (axis.x() == 0.0 && axis.y() < 0.0) ||
               (axis.x() == 0.0 && axis.y() == 0.0 && axis.z() < 0.0)) {
      axis = -axis;
    }
    omega = theta * axis;
  } else {
    omega = vee_antisymmetric(r) * (theta / std::sin(theta));
  }

  const Mat3 w = skew(omega);
  const Mat3 v_inv = Mat3::Identity() - 0.5 * w + vinv_c2(theta) * (w * w);
  GraspPose out;
  out.omega = omega;
  out.tau = v_inv * xform.translation;
  out.width = 0.0;
  return out;
}

double geodesic_angle(const Mat3& ra, const Mat3& rb) {
  const double c = std::clamp(((ra.transpose() * rb).trace() - 1.0) * 0.5,
                              -1.0, 1.0);
  return std::acos(c);
}

double pose_distance(const GraspPose& a, const GraspPose& b,
                     const PoseDistanceWeights& w) {
  const RigidTransform ta = exp_map(a);
  const RigidTransform tb = exp_map(b);
  return (ta.translation - tb.translation).norm() +
         w.rotation * geodesic_angle(ta.rotation, tb.rotation) +
         w.width * std::abs(a.width - b.width);
}

GripperBoxes gripper_boxes(const GraspPose& pose, const GripperModel& model) {
  if (pose.width > model.max_width || pose.width < 0.0) {
    throw std::invalid_argument("gripper_boxes: width outside [0, max_width]");
  }
  const RigidTransform t = exp_map(pose);
  const double w = pose.width;
  const double ft = model.finger_thickness;
  const double fd = model.finger_depth;
  const double pc = model.palm_clearance;

  auto place = [&](const Vec3& local_center, const Vec3& half) {
    OrientedBox box;
    box.center = t.rotation * local_center + t.translation;
    box.rotation = t.rotation;
    box.half_extents = half;
    return box;
  };

  GripperBoxes boxes;
  const Vec3 finger_half(ft / 2.0, ft / 2.0, fd / 2.0);
  boxes.fingers[0] = place(Vec3(w / 2.0 + ft / 2.0, 0, 0), finger_half);
  boxes.fingers[1] = place(Vec3(-w / 2.0 - ft / 2.0, 0, 0), finger_half);
  boxes.palm = place(Vec3(0, 0, -fd / 2.0 - pc / 2.0),
                     Vec3(w / 2.0 + ft, ft / 2.0, pc / 2.0));
  boxes.closing = place(Vec3::Zero(), Vec3(w / 2.0, ft / 2.0, fd / 2.0));
  return boxes;
}

bool collides(const GraspPose& pose, const GripperModel& model,
              const SceneCloud& cloud, Exec exec) {
  const GripperBoxes boxes = gripper_boxes(pose, model);
  auto hit = [&](const Vec3& p) {
    return boxes.fingers[0].contains_strict(p) ||
           boxes.fingers[1].contains_strict(p) ||
           boxes.palm.contains_strict(p);
  };
  const int n = cloud.size();
  if (exec == Exec::kSerial) {
    for (int i = 0; i < n; ++i) {
      if (hit(cloud.points[i])) return true;
    }
    return false;
  }
  bool any = false;
#pragma omp parallel for reduction(|| : any) schedule(static)
  for (int i = 0; i < n; ++i) {
    any = any || hit(cloud.points[i]);
  }
  return any;
}

int closing_volume_hits(const GraspPose& pose, const GripperModel& model,
                        const SceneCloud& cloud,
                        const std::vector<int>& object_mask, Exec exec) {
  const GripperBoxes boxes = gripper_boxes(pose, model);
  const int n = cloud.size();
  for (int idx : object_mask) {
    if (idx < 0 || idx >= n) {
      throw std::invalid_argument("closing_volume_hits: mask index out of range");
    }
  }
  const int m = static_cast<int>(object_mask.size());
  int count = 0;
  if (exec == Exec::kSerial) {
    for (int i = 0; i < m; ++i) {
      if (boxes.closing.contains_strict(cloud.points[object_mask[i]])) ++count;
    }
    return count;
  }
#pragma omp parallel for reduction(+ : count) schedule(static)
  for (int i = 0; i < m; ++i) {
    if (boxes.closing.contains_strict(cloud.points[object_mask[i]])) ++count;
  }
  return count;
}

}  // namespace negrasp
