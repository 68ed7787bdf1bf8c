#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "negrasp/data.hpp"
#include "negrasp/denoiser.hpp"
#include "negrasp/schedule.hpp"

namespace negrasp {

struct TrainConfig {
  double loss_ratio_zeta = 0.1;  // weight of the negative-embedding loss
  double p_mask = 0.1;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int batch_size = 32;
  int epochs = 20;
  std::uint64_t seed = 0;
  int freeze_scene_after = -1;  // epoch index; -1 means epochs / 2
  bool normalize = true;        // whiten grasp vectors with dataset stats

  int resolved_freeze_epoch() const {
    return freeze_scene_after >= 0 ? freeze_scene_after : epochs / 2;
  }
};

// Text embeddings of the other objects in the scene (m x d). m may be 0
// for single-object scenes.
struct NegativeSet {
  MatX embeddings;
  int count() const { return static_cast<int>(embeddings.rows()); }
};

// Squared L2 between predicted and true noise.
double noise_loss(const Vec7& eps_pred, const Vec7& eps_true);

// min_i ||t~ - t_i||^2; returns 0 and sets *flagged for an empty set.
double negative_loss(const Embedding& neg_emb, const NegativeSet& negatives,
                     bool* flagged_empty = nullptr);

// (1 - zeta) * noise + zeta * negative.
double total_loss(double noise, double negative, double zeta);

// Returns the null embedding when u < p_mask, the text unchanged otherwise.
Embedding mask_text(const Embedding& text, double u, double p_mask,
                    const Embedding& null_embedding);

// Adam first/second moments; shapes mirror the parameters.
struct AdamState {
  DenoiserParams m;
  DenoiserParams v;
  long step = 0;
};

AdamState init_adam(const DenoiserParams& params);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // decoupled
};

// In-place update; arrays whose name starts with "point_mlp" are skipped
// when freeze_scene is set.
void adam_update(DenoiserParams& params, const DenoiserParams& grads,
                 AdamState& state, const AdamConfig& config,
                 bool freeze_scene = false);

// Per-dimension affine map between world grasp vectors and the whitened
// space the diffusion runs in.
struct Normalization {
  Vec7 mean = Vec7::Zero();
  Vec7 scale = Vec7::Ones();

  Vec7 to_model(const Vec7& g) const {
    return (g - mean).cwiseQuotient(scale);
  }
  Vec7 to_world(const Vec7& g) const { return g.cwiseProduct(scale) + mean; }
};

// One element of a training batch before noise is drawn. `epoch` and
// `sample_index` key the per-sample random stream.
struct TrainBatchItem {
  const SceneCloud* cloud = nullptr;
  int prompt_row = -1;
  std::vector<int> negative_rows;
  Vec7 g0 = Vec7::Zero();  // already in model (whitened) space
  int epoch = 0;
  int sample_index = 0;
};

// Draws (t, eps, mask) per item from streams keyed by (seed, epoch, sample
// index), runs the split forward/backward, applies one Adam step.
BatchLoss train_step(const std::vector<TrainBatchItem>& batch,
                     const NoiseSchedule& sched, DenoiserParams& params,
                     AdamState& opt, const TrainConfig& config,
                     bool freeze_scene, Exec exec = Exec::kParallel);

struct FitResult {
  DenoiserParams params;
  AdamState opt;
  Normalization norm;
  int epochs_done = 0;
};

// Called once per optimizer step with (step index, losses).
using StepLogger = std::function<void(long, const BatchLoss&)>;

// Full training loop over scene files: builds the vocabulary, whitening
// stats and sample list, then runs epochs of train_step. `start_epoch` plus
// a warm `FitResult` resumes a previous run bit-exactly.
FitResult fit(const std::vector<GraspScene>& scenes,
              const DenoiserConfig& model_config, const TrainConfig& config,
              const NoiseSchedule& sched, const StepLogger& logger,
              Exec exec = Exec::kParallel, const FitResult* resume_from = nullptr,
              int start_epoch = 0);

// Sorted unique prompt nouns across the scenes.
std::vector<std::string> build_vocabulary(const std::vector<GraspScene>& scenes);

}  // namespace negrasp
