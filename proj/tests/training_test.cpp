#include "negrasp/training.hpp"

#include <cmath>

#include "gtest/gtest.h"
#include "negrasp/rng.hpp"

namespace negrasp {
namespace {

DenoiserConfig tiny_config() {
  DenoiserConfig cfg;
  cfg.embed_dim = 16;
  cfg.time_dim = 8;
  cfg.num_tokens = 4;
  cfg.num_heads = 2;
  cfg.vocabulary = {"ball", "box", "cup"};
  return cfg;
}

SceneCloud random_cloud(int n, std::uint64_t seed) {
  Rng rng({seed, 40});
  SceneCloud c;
  c.object_names[0] = "scene";
  for (int i = 0; i < n; ++i) {
    c.points.emplace_back(rng.gaussian(), rng.gaussian(), rng.gaussian());
    c.object_labels.push_back(0);
  }
  return c;
}

TEST(NoiseLoss, Examples) {
  Vec7 a = Vec7::Zero(), b = Vec7::Zero();
  EXPECT_DOUBLE_EQ(noise_loss(a, a), 0.0);
  a(0) = 1.0;
  EXPECT_DOUBLE_EQ(noise_loss(a, b), 1.0);
  Vec7 pred = Vec7::Zero(), truth = Vec7::Zero();
  pred(0) = 1.0;
  truth(1) = 1.0;
  EXPECT_DOUBLE_EQ(noise_loss(pred, truth), 2.0);
}

TEST(NegativeLoss, Examples) {
  Embedding t;
  t.vec = VecX::Zero(4);
  NegativeSet negs;
  negs.embeddings = MatX::Zero(2, 4);
  negs.embeddings(0, 0) = 1.0;  // e1
  negs.embeddings(1, 0) = 2.0;  // 2 e1
  EXPECT_DOUBLE_EQ(negative_loss(t, negs), 1.0);  // min(1, 4)

  NegativeSet one;
  one.embeddings = MatX::Zero(1, 4);
  one.embeddings(0, 2) = 3.0;
  EXPECT_DOUBLE_EQ(negative_loss(t, one), 9.0);

  t.vec = negs.embeddings.row(1).transpose();
  EXPECT_DOUBLE_EQ(negative_loss(t, negs), 0.0);
}

TEST(NegativeLoss, EmptySetReturnsZeroAndFlags) {
  Embedding t;
  t.vec = VecX::Ones(4);
  NegativeSet empty;
  empty.embeddings = MatX::Zero(0, 4);
  bool flagged = false;
  EXPECT_DOUBLE_EQ(negative_loss(t, empty, &flagged), 0.0);
  EXPECT_TRUE(flagged);
}

TEST(NegativeLoss, PermutationInvariant) {
  Rng rng({5, 5});
  Embedding t;
  t.vec = VecX::NullaryExpr(8, [&](Eigen::Index) { return rng.gaussian(); });
  NegativeSet negs;
  negs.embeddings =
      MatX::NullaryExpr(5, 8, [&](Eigen::Index, Eigen::Index) {
        return rng.gaussian();
      });
  NegativeSet reversed;
  reversed.embeddings = negs.embeddings.colwise().reverse();
  EXPECT_DOUBLE_EQ(negative_loss(t, negs), negative_loss(t, reversed));
}

TEST(TotalLoss, PaperMix) {
  EXPECT_DOUBLE_EQ(total_loss(1.0, 0.0, 0.1), 0.9);
  EXPECT_DOUBLE_EQ(total_loss(0.0, 1.0, 0.1), 0.1);
  EXPECT_DOUBLE_EQ(total_loss(1.0, 1.0, 0.2), 1.0);
  EXPECT_THROW(total_loss(1.0, 1.0, 0.0), std::invalid_argument);
}

TEST(MaskText, Examples) {
  Embedding text;
  text.vec = VecX::Ones(4);
  text.table_row = 0;
  Embedding null_emb;
  null_emb.vec = VecX::Zero(4);
  null_emb.table_row = 3;
  EXPECT_EQ(mask_text(text, 0.05, 0.1, null_emb).table_row, 3);
  EXPECT_EQ(mask_text(text, 0.95, 0.1, null_emb).table_row, 0);
  EXPECT_EQ(mask_text(text, 0.0, 0.0, null_emb).table_row, 0);
  EXPECT_THROW(mask_text(text, 1.0, 0.1, null_emb), std::invalid_argument);
}

struct TrainFixture {
  DenoiserConfig cfg = tiny_config();
  SceneCloud cloud = random_cloud(24, 12);
  NoiseSchedule sched = linear_schedule(50, 1e-4, 0.02);

  std::vector<TrainBatchItem> batch(int n) const {
    std::vector<TrainBatchItem> items(n);
    Rng rng({91, 6});
    for (int i = 0; i < n; ++i) {
      items[i].cloud = &cloud;
      items[i].prompt_row = i % 3;
      items[i].negative_rows = {(i + 1) % 3};
      for (int k = 0; k < 7; ++k) items[i].g0(k) = rng.gaussian() * 0.3;
      items[i].epoch = 0;
      items[i].sample_index = i;
    }
    return items;
  }
};

TEST(TrainStep, ZeroLearningRateLeavesParamsUnchanged) {
  TrainFixture f;
  DenoiserParams params = init_params(f.cfg, 41);
  const DenoiserParams before = params;
  AdamState opt = init_adam(params);
  TrainConfig config;
  config.lr = 0.0;
  config.weight_decay = 1e-4;
  train_step(f.batch(4), f.sched, params, opt, config, false);
  std::vector<const MatX*> arrays;
  visit_params(before, [&](const char*, const MatX& m) { arrays.push_back(&m); });
  std::size_t idx = 0;
  visit_params(params, [&](const char* name, const MatX& m) {
    EXPECT_TRUE(m == *arrays[idx++]) << name;
  });
}

TEST(TrainStep, DeterministicAcrossRuns) {
  TrainFixture f;
  TrainConfig config;
  config.seed = 7;
  auto run = [&] {
    DenoiserParams params = init_params(f.cfg, 42);
    AdamState opt = init_adam(params);
    for (int step = 0; step < 10; ++step) {
      auto batch = f.batch(4);
      for (auto& item : batch) item.epoch = step;
      train_step(batch, f.sched, params, opt, config, false);
    }
    return params;
  };
  const DenoiserParams a = run();
  const DenoiserParams b = run();
  std::vector<const MatX*> arrays;
  visit_params(a, [&](const char*, const MatX& m) { arrays.push_back(&m); });
  std::size_t idx = 0;
  visit_params(b, [&](const char* name, const MatX& m) {
    EXPECT_TRUE(m == *arrays[idx++]) << name;
  });
}

TEST(TrainStep, OverfitsFixedToyBatch) {
  TrainFixture f;
  DenoiserParams params = init_params(f.cfg, 43);
  AdamState opt = init_adam(params);
  TrainConfig config;
  config.seed = 3;
  config.p_mask = 0.1;
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 500; ++step) {
    auto batch = f.batch(8);
    for (auto& item : batch) item.epoch = step;
    const BatchLoss loss =
        train_step(batch, f.sched, params, opt, config, false);
    if (step == 0) first = loss.total;
    last = loss.total;
  }
  EXPECT_LT(last, 0.5 * first);
}

TEST(TrainStep, FrozenSceneEncoderStaysPut) {
  TrainFixture f;
  DenoiserParams params = init_params(f.cfg, 44);
  const MatX point1_before = params.point1.w;
  const MatX grasp1_before = params.grasp1.w;
  AdamState opt = init_adam(params);
  TrainConfig config;
  train_step(f.batch(4), f.sched, params, opt, config, /*freeze_scene=*/true);
  EXPECT_TRUE(params.point1.w == point1_before);
  EXPECT_FALSE(params.grasp1.w == grasp1_before);
}

TEST(Masking, FullMaskSendsNoNoiseGradientToPromptRows) {
  // With every sample masked and the negative loss switched off, only the
  // null row of the text table may receive gradient.
  TrainFixture f;
  DenoiserParams params = init_params(f.cfg, 45);
  const int null_row = params.config.null_row();

  std::vector<TrainItem> items(3);
  Rng rng({14, 14});
  for (int i = 0; i < 3; ++i) {
    items[i].cloud = &f.cloud;
    items[i].text_row = null_row;  // p_mask = 1: every noise path masked
    items[i].prompt_row = i;
    items[i].negative_rows = {(i + 1) % 3};
    for (int k = 0; k < 7; ++k) {
      items[i].g_noisy(k) = rng.gaussian();
      items[i].eps_true(k) = rng.gaussian();
    }
    items[i].t = 5 + i;
  }
  DenoiserParams grads = zeros_like(params);
  param_gradients(items, params, LossWeights{1.0, 0.0}, grads);
  for (int row = 0; row < params.text_table.rows(); ++row) {
    if (row == null_row) continue;
    EXPECT_TRUE(grads.text_table.row(row).isZero(0.0)) << "row " << row;
  }
  EXPECT_FALSE(grads.text_table.row(null_row).isZero(0.0));
}

TEST(TotalLossGradient, MatchesZetaWeightedSum) {
  // d(total)/d(theta) = (1-zeta) d(noise)/d + zeta d(negative)/d, checked
  // through the zero-weight decompositions.
  TrainFixture f;
  const DenoiserParams params = init_params(f.cfg, 46);
  std::vector<TrainItem> items(2);
  Rng rng({18, 18});
  for (int i = 0; i < 2; ++i) {
    items[i].cloud = &f.cloud;
    items[i].text_row = i;
    items[i].prompt_row = i;
    items[i].negative_rows = {2};
    for (int k = 0; k < 7; ++k) {
      items[i].g_noisy(k) = rng.gaussian();
      items[i].eps_true(k) = rng.gaussian();
    }
    items[i].t = 3 + i;
  }
  const double zeta = 0.3;
  DenoiserParams g_total = zeros_like(params);
  DenoiserParams g_noise = zeros_like(params);
  DenoiserParams g_neg = zeros_like(params);
  param_gradients(items, params, LossWeights{1.0 - zeta, zeta}, g_total);
  param_gradients(items, params, LossWeights{1.0, 0.0}, g_noise);
  param_gradients(items, params, LossWeights{0.0, 1.0}, g_neg);

  std::vector<const MatX*> noise_arrays, neg_arrays;
  visit_params(g_noise, [&](const char*, const MatX& m) {
    noise_arrays.push_back(&m);
  });
  visit_params(g_neg, [&](const char*, const MatX& m) {
    neg_arrays.push_back(&m);
  });
  std::size_t idx = 0;
  visit_params(g_total, [&](const char* name, const MatX& m) {
    const MatX combined =
        (1.0 - zeta) * *noise_arrays[idx] + zeta * *neg_arrays[idx];
    EXPECT_LT((m - combined).cwiseAbs().maxCoeff(), 1e-12) << name;
    ++idx;
  });
}

}  // namespace
}  // namespace negrasp
