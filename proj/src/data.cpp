#include "negrasp/data.hpp"

#include <algorithm>
#include <cmath>

#include "negrasp/rng.hpp"

namespace negrasp {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Folds an in-plane grasp angle into (-pi/2, pi/2]; a two-finger grasp is
// unchanged by a half turn.
double fold_angle(double a) {
  double r = std::fmod(a, kPi);
  if (r > kPi / 2.0) r -= kPi;
  if (r <= -kPi / 2.0) r += kPi;
  return r;
}

Mat3 rot_z(double a) {
  Mat3 r;
  r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return r;
}

GraspPose pose_from_frame(const Mat3& rotation, const Vec3& position,
                          double width) {
  GraspPose p = log_map(RigidTransform{rotation, position});
  p.width = width;
  return p;
}

// Right-handed frame with the given closing axis (local x) and an approach
// (local z) pointing downward, i.e. against `up_hint`.
Mat3 grasp_frame(const Vec3& closing, const Vec3& up_hint) {
  const Vec3 x = closing.normalized();
  Vec3 up = up_hint - up_hint.dot(x) * x;
  if (up.norm() < 1e-9) up = Vec3::UnitY() - Vec3::UnitY().dot(x) * x;
  up.normalize();
  const Vec3 z = -up;
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return r;
}

Vec3 sample_sphere_surface(Rng& rng, const Vec3& center, double radius) {
  Vec3 n;
  do {
    n = Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian());
  } while (n.norm() < 1e-12);
  return center + radius * n.normalized();
}

}  // namespace

double CameraModel::focal() const {
  if (fov_deg <= 0.0 || fov_deg >= 180.0) {
    throw std::invalid_argument("CameraModel: fov out of range");
  }
  return height / (2.0 * std::tan(fov_deg * kPi / 180.0 / 2.0));
}

SceneCloud depth_to_cloud(const DepthMap& depth, const CameraModel& cam) {
  const double f = cam.focal();
  SceneCloud cloud;
  cloud.object_names[0] = "scene";
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      if (!depth.valid_at(v, u)) continue;
      const double d = depth.at(v, u);
      cloud.points.emplace_back((u - cam.cx()) / f * d, (v - cam.cy()) / f * d,
                                d);
      cloud.object_labels.push_back(0);
    }
  }
  if (cloud.points.empty()) {
    throw EmptySceneError("depth_to_cloud: no valid depth pixels");
  }
  return cloud;
}

double bilinear_depth(const DepthMap& depth, double x, double y) {
  if (depth.width < 2 || depth.height < 2 || !(x >= 0.0) || !(y >= 0.0) ||
      !(x <= depth.width - 1.0) || !(y <= depth.height - 1.0)) {
    throw std::invalid_argument("bilinear_depth: sample outside interior");
  }
  const int x0 = std::min(static_cast<int>(std::floor(x)), depth.width - 2);
  const int y0 = std::min(static_cast<int>(std::floor(y)), depth.height - 2);
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      if (!depth.valid_at(y0 + dy, x0 + dx)) {
        throw NeighborInvalidError("bilinear_depth: invalid neighbor pixel");
      }
    }
  }
  const double fx = x - x0;
  const double fy = y - y0;
  return (1 - fx) * (1 - fy) * depth.at(y0, x0) +
         fx * (1 - fy) * depth.at(y0, x0 + 1) +
         (1 - fx) * fy * depth.at(y0 + 1, x0) +
         fx * fy * depth.at(y0 + 1, x0 + 1);
}

GraspPose lift_grasp(const Rect2DGrasp& rect, const DepthMap& depth,
                     const CameraModel& cam) {
  if (rect.width_px <= 0.0) {
    throw std::invalid_argument("lift_grasp: width_px must be positive");
  }
  const double f = cam.focal();
  const double d = bilinear_depth(depth, rect.center_x, rect.center_y);
  const Vec3 translation((rect.center_x - cam.cx()) / f * d,
                         (rect.center_y - cam.cy()) / f * d, d);
  const double angle = fold_angle(rect.angle);
  GraspPose pose = pose_from_frame(rot_z(angle), translation,
                                   rect.width_px * d / f);
  return pose.canonicalized();
}

FilterReport filter_grasps(GraspScene& scene, const GripperModel& model,
                           Exec exec) {
  FilterReport report;
  for (auto& [noun, poses] : scene.grasps) {
    const auto mask_it = scene.masks.find(noun);
    if (mask_it == scene.masks.end()) {
      throw std::invalid_argument("filter_grasps: no mask for object " + noun);
    }
    const std::vector<int>& mask = mask_it->second;
    const int n = static_cast<int>(poses.size());
    // 0 keep, otherwise the rejection reason + 1.
    std::vector<int> verdict(n, 0);
    const bool parallel = exec == Exec::kParallel;
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (int i = 0; i < n; ++i) {
      const GraspPose& g = poses[i];
      if (g.width > model.max_width || g.width < 0.0) {
        verdict[i] = 1 + static_cast<int>(RejectReason::kWidth);
      } else if (collides(g, model, scene.cloud, Exec::kSerial)) {
        verdict[i] = 1 + static_cast<int>(RejectReason::kCollision);
      } else if (closing_volume_hits(g, model, scene.cloud, mask,
                                     Exec::kSerial) == 0) {
        verdict[i] = 1 + static_cast<int>(RejectReason::kClosingMiss);
      }
    }
    std::vector<GraspPose> kept;
    kept.reserve(n);
    for (int i = 0; i < n; ++i) {
      switch (verdict[i]) {
        case 0:
          kept.push_back(poses[i]);
          ++report.kept;
          break;
        case 1 + static_cast<int>(RejectReason::kWidth):
          ++report.rejected_width;
          break;
        case 1 + static_cast<int>(RejectReason::kCollision):
          ++report.rejected_collision;
          break;
        default:
          ++report.rejected_closing_miss;
          break;
      }
    }
    poses = std::move(kept);
  }
  return report;
}

GraspScene gen_toy_scene(const ToySceneSpec& spec, std::uint64_t seed,
                         const GripperModel& model) {
  if (spec.objects.empty()) {
    throw std::invalid_argument("gen_toy_scene: no objects");
  }
  Rng rng({seed, kStreamSceneGen});

  // Resolve centers: rest every primitive on the z=0 support plane, with
  // optional xy jitter.
  std::vector<Vec3> centers(spec.objects.size());
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const PrimitiveSpec& obj = spec.objects[i];
    Vec3 c = obj.position;
    if (spec.position_jitter > 0.0) {
      c.x() += (2.0 * rng.uniform() - 1.0) * spec.position_jitter;
      c.y() += (2.0 * rng.uniform() - 1.0) * spec.position_jitter;
    }
    const double lift = obj.kind == PrimitiveSpec::Kind::kSphere
                            ? obj.size.x()
                            : obj.size.z();
    c.z() = obj.position.z() + lift;
    centers[i] = c;

    if (obj.kind == PrimitiveSpec::Kind::kSphere) {
      if (2.0 * obj.size.x() > model.max_width) {
        throw UngraspableObjectError("gen_toy_scene: sphere too wide: " +
                                     obj.name);
      }
    } else {
      if (std::min(2.0 * obj.size.x(), 2.0 * obj.size.y()) > model.max_width) {
        throw UngraspableObjectError("gen_toy_scene: box too wide: " + obj.name);
      }
    }
  }
  // Reject overlapping primitives via bounding spheres.
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    for (std::size_t j = i + 1; j < spec.objects.size(); ++j) {
      const double ri = spec.objects[i].size.norm();
      const double rj = spec.objects[j].size.norm();
      if ((centers[i] - centers[j]).norm() < ri + rj) {
        throw std::invalid_argument("gen_toy_scene: overlapping objects");
      }
    }
  }

  GraspScene scene;
  scene.cloud.object_names[0] = "table";

  double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const double r = spec.objects[i].size.norm();
    min_x = std::min(min_x, centers[i].x() - r);
    max_x = std::max(max_x, centers[i].x() + r);
    min_y = std::min(min_y, centers[i].y() - r);
    max_y = std::max(max_y, centers[i].y() + r);
  }
  const double margin = 0.15;

  // Support plane points, label 0.
  for (int i = 0; i < spec.plane_points; ++i) {
    const double x = min_x - margin + rng.uniform() * (max_x - min_x + 2 * margin);
    const double y = min_y - margin + rng.uniform() * (max_y - min_y + 2 * margin);
    scene.cloud.points.emplace_back(x, y, 0.0);
    scene.cloud.object_labels.push_back(0);
  }

  // Object surface points.
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const PrimitiveSpec& obj = spec.objects[i];
    const int label = static_cast<int>(i) + 1;
    scene.cloud.object_names[label] = obj.name;
    std::vector<int> mask;
    mask.reserve(spec.points_per_object);
    for (int k = 0; k < spec.points_per_object; ++k) {
      Vec3 p;
      if (obj.kind == PrimitiveSpec::Kind::kSphere) {
        p = sample_sphere_surface(rng, centers[i], obj.size.x());
      } else {
        const Vec3 h = obj.size;
        // Face picked by area.
        const double ax = h.y() * h.z();
        const double ay = h.x() * h.z();
        const double az = h.x() * h.y();
        const double pick = rng.uniform() * (ax + ay + az);
        const double u = 2.0 * rng.uniform() - 1.0;
        const double v = 2.0 * rng.uniform() - 1.0;
        const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
        if (pick < ax) {
          p = centers[i] + Vec3(side * h.x(), u * h.y(), v * h.z());
        } else if (pick < ax + ay) {
          p = centers[i] + Vec3(u * h.x(), side * h.y(), v * h.z());
        } else {
          p = centers[i] + Vec3(u * h.x(), v * h.y(), side * h.z());
        }
      }
      mask.push_back(scene.cloud.size());
      scene.cloud.points.push_back(p);
      scene.cloud.object_labels.push_back(label);
    }
    scene.masks[obj.name] = std::move(mask);
    scene.prompts[obj.name] = "Grasp the " + obj.name;
  }

  // Analytic antipodal grasp candidates.
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const PrimitiveSpec& obj = spec.objects[i];
    std::vector<GraspPose> poses;
    if (obj.kind == PrimitiveSpec::Kind::kSphere) {
      const double r = obj.size.x();
      const double offset = std::max(0.0, r - model.finger_depth / 4.0);
      for (int k = 0; k < spec.grasps_per_object; ++k) {
        const double az = rng.uniform() * 2.0 * kPi;
        const double el = (2.0 * rng.uniform() - 1.0) * kPi / 6.0;
        const Vec3 closing(std::cos(el) * std::cos(az),
                           std::cos(el) * std::sin(az), std::sin(el));
        const Mat3 frame = grasp_frame(closing, Vec3::UnitZ());
        // frame.col(2) is the downward approach; back off along it so the
        // palm clears the sphere while the closing band still cuts it.
        const Vec3 pos = centers[i] - offset * frame.col(2);
        poses.push_back(pose_from_frame(frame, pos, 2.0 * r));
      }
    } else {
      const Vec3 h = obj.size;
      std::vector<int> axes;
      if (2.0 * h.x() <= model.max_width) axes.push_back(0);
      if (2.0 * h.y() <= model.max_width) axes.push_back(1);
      for (int k = 0; k < spec.grasps_per_object; ++k) {
        const int axis = axes[static_cast<int>(rng.below(axes.size()))];
        const Vec3 closing = axis == 0 ? Vec3::UnitX() : Vec3::UnitY();
        const double free_half = axis == 0 ? h.y() : h.x();
        const double off = (2.0 * rng.uniform() - 1.0) * 0.6 * free_half;
        Vec3 pos = centers[i];
        pos.z() += h.z();  // straddle the top face
        if (axis == 0) {
          pos.y() += off;
        } else {
          pos.x() += off;
        }
        const Mat3 frame = grasp_frame(closing, Vec3::UnitZ());
        poses.push_back(
            pose_from_frame(frame, pos, 2.0 * (axis == 0 ? h.x() : h.y())));
      }
    }
    scene.grasps[obj.name] = std::move(poses);
  }

  // Keep only grasps that survive the physical filters and whose closing
  // volume stays off every other object.
  filter_grasps(scene, model, Exec::kSerial);
  for (auto& [noun, poses] : scene.grasps) {
    std::vector<GraspPose> kept;
    for (const GraspPose& g : poses) {
      bool cross_hit = false;
      for (const auto& [other, mask] : scene.masks) {
        if (other == noun) continue;
        if (closing_volume_hits(g, model, scene.cloud, mask, Exec::kSerial) >
            0) {
          cross_hit = true;
          break;
        }
      }
      if (!cross_hit) kept.push_back(g);
    }
    poses = std::move(kept);
  }
  return scene;
}

}  // namespace negrasp
