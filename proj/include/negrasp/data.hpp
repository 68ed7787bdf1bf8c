#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "negrasp/exec.hpp"
#include "negrasp/se3.hpp"

namespace negrasp {

// Pinhole camera with central principal point. The field of view is the
// vertical one; focal length in pixels follows from it.
struct CameraModel {
  double fov_deg = 55.0;
  int width = 640;
  int height = 480;

  double focal() const;
  double cx() const { return width / 2.0; }
  double cy() const { return height / 2.0; }
};

// Row-major depth image in meters; entries <= 0 or non-finite are invalid.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // row-major, height * width

  float at(int row, int col) const { return data[row * width + col]; }
  float& at(int row, int col) { return data[row * width + col]; }
  bool valid_at(int row, int col) const {
    const float d = at(row, col);
    return std::isfinite(d) && d > 0.0f;
  }
};

struct Rect2DGrasp {
  double center_x = 0.0;  // subpixel column
  double center_y = 0.0;  // subpixel row
  double angle = 0.0;     // radians, in the image plane
  double width_px = 0.0;
  double height_px = 0.0;
};

// One training/eval record: scene points, per-object prompts, ground-truth
// grasps and point masks.
struct GraspScene {
  std::string id;
  SceneCloud cloud;
  std::map<std::string, std::string> prompts;          // noun -> prompt
  std::map<std::string, std::vector<GraspPose>> grasps; // noun -> poses
  std::map<std::string, std::vector<int>> masks;        // noun -> point idx
};

class EmptySceneError : public std::runtime_error {
 public:
  explicit EmptySceneError(const std::string& m) : std::runtime_error(m) {}
};

class NeighborInvalidError : public std::runtime_error {
 public:
  explicit NeighborInvalidError(const std::string& m) : std::runtime_error(m) {}
};

class UngraspableObjectError : public std::runtime_error {
 public:
  explicit UngraspableObjectError(const std::string& m)
      : std::runtime_error(m) {}
};

// Back-projects every valid pixel; throws EmptySceneError when none is.
// Labels are all 0 ("scene"); callers segment afterwards if needed.
SceneCloud depth_to_cloud(const DepthMap& depth, const CameraModel& cam);

// Bilinear blend of the four surrounding pixels. Throws
// NeighborInvalidError when any of them is invalid, and
// std::invalid_argument outside the valid interior.
double bilinear_depth(const DepthMap& depth, double x, double y);

// Lifts a rectangle grasp: translation from the back-projected center,
// approach along camera +z, closing axis from the in-plane angle (folded
// into (-pi/2, pi/2] for the antipodal symmetry), metric width from
// width_px * depth / focal.
GraspPose lift_grasp(const Rect2DGrasp& rect, const DepthMap& depth,
                     const CameraModel& cam);

enum class RejectReason { kWidth, kCollision, kClosingMiss };

struct FilterReport {
  int kept = 0;
  int rejected_width = 0;
  int rejected_collision = 0;
  int rejected_closing_miss = 0;
};

// Drops grasps that exceed max width, collide with the cloud, or whose
// closing volume misses the object mask. Checks run in that order; a grasp
// is counted under the first reason that fires.
FilterReport filter_grasps(GraspScene& scene, const GripperModel& model,
                           Exec exec = Exec::kParallel);

struct PrimitiveSpec {
  enum class Kind { kSphere, kBox } kind = Kind::kSphere;
  std::string name;
  Vec3 position = Vec3::Zero();  // center; z measured from the support plane
  Vec3 size = Vec3::Zero();      // sphere: (radius,0,0); box: half extents
};

struct ToySceneSpec {
  std::vector<PrimitiveSpec> objects;
  int points_per_object = 512;
  int plane_points = 512;
  int grasps_per_object = 32;
  double position_jitter = 0.0;  // uniform +-jitter applied per scene
};

// Samples surface points for each primitive plus a ground plane, plants
// analytic antipodal grasps (sphere: diametral, width = diameter; box:
// opposing faces, width = face gap), and keeps only grasps that pass
// filter_grasps and touch no other object's mask. Throws
// UngraspableObjectError if a primitive cannot fit the gripper.
GraspScene gen_toy_scene(const ToySceneSpec& spec, std::uint64_t seed,
                         const GripperModel& model = {});

}  // namespace negrasp
