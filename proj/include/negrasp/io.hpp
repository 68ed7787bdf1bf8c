#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "negrasp/data.hpp"
#include "negrasp/denoiser.hpp"
#include "negrasp/metrics.hpp"
#include "negrasp/training.hpp"

namespace negrasp {

// Grasp file: JSON array of {omega:[3], tau:[3], width} records, SI units.
void save_grasps(const std::string& path, const std::vector<GraspPose>& grasps);
std::vector<GraspPose> load_grasps(const std::string& path);

// Scene file: {id, points, labels, names, grasps, masks}.
void save_scene(const std::string& path, const GraspScene& scene);
GraspScene load_scene(const std::string& path);

// Depth map: one JSON header line {width, height, dtype:"f32le"} followed
// by row-major little-endian float32 samples.
void save_depth(const std::string& path, const DepthMap& depth);
DepthMap load_depth(const std::string& path);

// Model checkpoint: JSON manifest (config, vocabulary, seed, normalization,
// schedule, array index) plus a sidecar of raw little-endian float64
// values, keyed by parameter name. Adam moments ride along so training can
// resume bit-exactly.
struct Checkpoint {
  DenoiserParams params;
  AdamState opt;
  Normalization norm;
  int schedule_steps = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::uint64_t seed = 0;
  int epochs_done = 0;

  NoiseSchedule schedule() const {
    return linear_schedule(schedule_steps, beta_start, beta_end);
  }
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Run configuration consumed by the train/sample commands.
struct RunConfig {
  DenoiserConfig model;
  TrainConfig train;
  int schedule_steps = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& config);

void save_eval_report(const std::string& json_path, const std::string& csv_path,
                      const EvalReport& report);

// Appends one JSON line per command invocation; the only artifact allowed
// to carry timestamps.
void append_manifest(const std::string& path, const std::string& command,
                     std::uint64_t seed,
                     const std::vector<std::pair<std::string, std::string>>&
                         fields);

}  // namespace negrasp
