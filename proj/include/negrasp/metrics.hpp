#pragma once

#include <functional>
#include <string>
#include <vector>

#include "negrasp/exec.hpp"
#include "negrasp/se3.hpp"

namespace negrasp {

// All-pairs pose distances, detected x truth.
MatX pairwise_pose_distances(const std::vector<GraspPose>& a,
                             const std::vector<GraspPose>& b,
                             const PoseDistanceWeights& weights = {},
                             Exec exec = Exec::kParallel);

// Fraction of ground-truth grasps with a detected grasp within delta.
// Throws std::invalid_argument on an empty truth set.
double coverage_rate(const std::vector<GraspPose>& detected,
                     const std::vector<GraspPose>& truth, double delta = 0.02,
                     const PoseDistanceWeights& weights = {},
                     Exec exec = Exec::kParallel);

// Exact optimal-transport cost between uniform distributions over the two
// sets under pose_distance. Equal sizes reduce to an assignment; unequal
// sizes split mass uniformly and solve the transportation problem.
// Throws std::invalid_argument when either side is empty.
double emd(const std::vector<GraspPose>& detected,
           const std::vector<GraspPose>& truth,
           const PoseDistanceWeights& weights = {},
           Exec exec = Exec::kParallel);

// Fraction of detected grasps whose gripper proxy hits no scene point.
double collision_free_rate(const std::vector<GraspPose>& detected,
                           const SceneCloud& cloud, const GripperModel& model,
                           Exec exec = Exec::kParallel);

// Exact min-cost solution of the transportation problem with integer
// supplies/demands; exposed for the metric tests.
double min_cost_transport(const MatX& cost, const std::vector<long>& supply,
                          const std::vector<long>& demand);

// Wall-clock seconds per 1000 grasps. `sample_pair(i)` runs detection for
// scene-prompt pair i and returns the number of grasps produced; pair 0 is
// run once untimed as warm-up.
double inference_timer(const std::function<int(int)>& sample_pair, int pairs,
                       int grasps_per_pair);

struct SceneEval {
  std::string scene_id;
  std::string prompt;
  double cr = 0.0;
  double emd = 0.0;
  double cfr = 0.0;
  int detected_count = 0;
  int truth_count = 0;
};

struct EvalReport {
  double cr = 0.0;
  double emd = 0.0;
  double cfr = 0.0;
  double it_seconds = 0.0;  // seconds per 1000 grasps, when measured
  double delta = 0.02;
  PoseDistanceWeights weights;
  std::vector<SceneEval> per_scene;

  // Means over scene-prompt pairs.
  void aggregate();
};

}  // namespace negrasp
