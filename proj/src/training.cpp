#include "negrasp/training.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "negrasp/rng.hpp"

namespace negrasp {

double noise_loss(const Vec7& eps_pred, const Vec7& eps_true) {
  return (eps_pred - eps_true).squaredNorm();
}

double negative_loss(const Embedding& neg_emb, const NegativeSet& negatives,
                     bool* flagged_empty) {
  if (flagged_empty != nullptr) *flagged_empty = negatives.count() == 0;
  if (negatives.count() == 0) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < negatives.count(); ++i) {
    const double d =
        (neg_emb.vec - negatives.embeddings.row(i).transpose()).squaredNorm();
    best = std::min(best, d);
  }
  return best;
}

double total_loss(double noise, double negative, double zeta) {
  if (!(zeta > 0.0) || !(zeta < 1.0)) {
    throw std::invalid_argument("total_loss: zeta outside (0,1)");
  }
  return (1.0 - zeta) * noise + zeta * negative;
}

Embedding mask_text(const Embedding& text, double u, double p_mask,
                    const Embedding& null_embedding) {
  if (!(u >= 0.0) || !(u < 1.0)) {
    throw std::invalid_argument("mask_text: u outside [0,1)");
  }
  return u < p_mask ? null_embedding : text;
}

AdamState init_adam(const DenoiserParams& params) {
  AdamState s;
  s.m = zeros_like(params);
  s.v = zeros_like(params);
  s.step = 0;
  return s;
}

void adam_update(DenoiserParams& params, const DenoiserParams& grads,
                 AdamState& state, const AdamConfig& config,
                 bool freeze_scene) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, state.step);
  const double bc2 = 1.0 - std::pow(config.beta2, state.step);

  std::vector<std::pair<std::string, MatX*>> p_arrays, m_arrays, v_arrays;
  std::vector<const MatX*> g_arrays;
  visit_params(params, [&](const char* n, MatX& a) { p_arrays.emplace_back(n, &a); });
  visit_params(grads, [&](const char*, const MatX& a) { g_arrays.push_back(&a); });
  visit_params(state.m, [&](const char* n, MatX& a) { m_arrays.emplace_back(n, &a); });
  visit_params(state.v, [&](const char* n, MatX& a) { v_arrays.emplace_back(n, &a); });

  for (std::size_t i = 0; i < p_arrays.size(); ++i) {
    if (freeze_scene && p_arrays[i].first.rfind("point_mlp", 0) == 0) continue;
    MatX& p = *p_arrays[i].second;
    const MatX& g = *g_arrays[i];
    MatX& m = *m_arrays[i].second;
    MatX& v = *v_arrays[i].second;
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    p.array() -= config.lr * ((m.array() / bc1) /
                                  ((v.array() / bc2).sqrt() + config.eps) +
                              config.weight_decay * p.array());
  }
}

BatchLoss train_step(const std::vector<TrainBatchItem>& batch,
                     const NoiseSchedule& sched, DenoiserParams& params,
                     AdamState& opt, const TrainConfig& config,
                     bool freeze_scene, Exec exec) {
  const int null_row = params.config.null_row();
  std::vector<TrainItem> items;
  items.reserve(batch.size());
  for (const TrainBatchItem& b : batch) {
    Rng noise_rng({config.seed, kStreamTrainNoise,
                   static_cast<std::uint64_t>(b.epoch),
                   static_cast<std::uint64_t>(b.sample_index)});
    TrainItem it;
    it.cloud = b.cloud;
    it.t = 1 + static_cast<int>(noise_rng.below(sched.steps));
    for (int k = 0; k < 7; ++k) it.eps_true(k) = noise_rng.gaussian();
    it.g_noisy = q_sample(b.g0, it.t, it.eps_true, sched);
    const double u = noise_rng.uniform();
    it.text_row = u < config.p_mask ? null_row : b.prompt_row;
    it.prompt_row = b.prompt_row;
    it.negative_rows = b.negative_rows;
    items.push_back(std::move(it));
  }

  DenoiserParams grads = zeros_like(params);
  const LossWeights weights{1.0 - config.loss_ratio_zeta,
                            config.loss_ratio_zeta};
  const BatchLoss loss = param_gradients(items, params, weights, grads, exec);

  AdamConfig adam;
  adam.lr = config.lr;
  adam.weight_decay = config.weight_decay;
  adam_update(params, grads, opt, adam, freeze_scene);
  return loss;
}

std::vector<std::string> build_vocabulary(
    const std::vector<GraspScene>& scenes) {
  std::set<std::string> nouns;
  for (const GraspScene& s : scenes) {
    for (const auto& [noun, prompt] : s.prompts) nouns.insert(noun);
  }
  return {nouns.begin(), nouns.end()};
}

FitResult fit(const std::vector<GraspScene>& scenes,
              const DenoiserConfig& model_config, const TrainConfig& config,
              const NoiseSchedule& sched, const StepLogger& logger, Exec exec,
              const FitResult* resume_from, int start_epoch) {
  if (scenes.empty()) throw std::invalid_argument("fit: no scenes");

  DenoiserConfig cfg = model_config;
  cfg.vocabulary = build_vocabulary(scenes);
  std::map<std::string, int> row_of;
  for (std::size_t i = 0; i < cfg.vocabulary.size(); ++i) {
    row_of[cfg.vocabulary[i]] = static_cast<int>(i);
  }

  struct SampleRef {
    const SceneCloud* cloud;
    int prompt_row;
    std::vector<int> negative_rows;
    Vec7 g0_world;
  };
  std::vector<SampleRef> samples;
  for (const GraspScene& s : scenes) {
    std::vector<int> scene_rows;
    for (const auto& [noun, poses] : s.grasps) {
      if (!poses.empty()) scene_rows.push_back(row_of.at(noun));
    }
    for (const auto& [noun, poses] : s.grasps) {
      const int row = row_of.at(noun);
      std::vector<int> negatives;
      for (int r : scene_rows) {
        if (r != row) negatives.push_back(r);
      }
      for (const GraspPose& g : poses) {
        samples.push_back({&s.cloud, row, negatives, g.to_vec7()});
      }
    }
  }
  if (samples.empty()) throw std::invalid_argument("fit: no grasp samples");

  Normalization norm;
  if (config.normalize) {
    Vec7 mean = Vec7::Zero();
    for (const SampleRef& s : samples) mean += s.g0_world;
    mean /= static_cast<double>(samples.size());
    Vec7 var = Vec7::Zero();
    for (const SampleRef& s : samples) {
      var += (s.g0_world - mean).cwiseAbs2();
    }
    var /= static_cast<double>(samples.size());
    norm.mean = mean;
    norm.scale = var.cwiseSqrt().cwiseMax(1e-3);
  }

  FitResult result;
  if (resume_from != nullptr) {
    result = *resume_from;
  } else {
    result.params = init_params(cfg, config.seed);
    result.opt = init_adam(result.params);
    result.norm = norm;
  }

  const int n = static_cast<int>(samples.size());
  long step = result.opt.step;
  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    const bool freeze = epoch >= config.resolved_freeze_epoch();
    // Deterministic per-epoch shuffle.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng({config.seed, kStreamTrainStep,
                     static_cast<std::uint64_t>(epoch)});
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.below(i + 1));
      std::swap(order[i], order[j]);
    }
    for (int begin = 0; begin < n; begin += config.batch_size) {
      const int end = std::min(n, begin + config.batch_size);
      std::vector<TrainBatchItem> batch;
      batch.reserve(end - begin);
      for (int k = begin; k < end; ++k) {
        const SampleRef& s = samples[order[k]];
        TrainBatchItem item;
        item.cloud = s.cloud;
        item.prompt_row = s.prompt_row;
        item.negative_rows = s.negative_rows;
        item.g0 = result.norm.to_model(s.g0_world);
        item.epoch = epoch;
        item.sample_index = order[k];
        batch.push_back(std::move(item));
      }
      const BatchLoss loss =
          train_step(batch, sched, result.params, result.opt, config, freeze,
                     exec);
      ++step;
      if (logger) logger(step, loss);
    }
    result.epochs_done = epoch + 1;
  }
  return result;
}

}  // namespace negrasp
