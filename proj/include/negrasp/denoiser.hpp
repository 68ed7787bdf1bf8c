#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "negrasp/exec.hpp"
#include "negrasp/scene.hpp"
#include "negrasp/vec.hpp"

namespace negrasp {

// Reserved prompt standing for the masked / unconditional text condition.
inline constexpr const char* kNullPrompt = "<null>";

struct DenoiserConfig {
  int embed_dim = 64;   // token/text/feature width
  int time_dim = 64;    // sinusoidal embedding width, must be even
  int num_tokens = 16;  // scene tokens produced by the encoder
  int num_heads = 4;
  std::vector<std::string> vocabulary;  // nouns; the null row sits after them

  int vocab_rows() const { return static_cast<int>(vocabulary.size()) + 1; }
  int null_row() const { return static_cast<int>(vocabulary.size()); }
  int head_dim() const { return embed_dim / num_heads; }
};

struct Linear {
  MatX w;
  MatX b;  // column vector
};

// Every learnable array of the network. The same struct doubles as the
// gradient / optimizer-moment container since shapes always match.
struct DenoiserParams {
  DenoiserConfig config;

  Linear grasp1, grasp2;  // 7 -> d -> d
  Linear point1, point2;  // 3 -> d -> d
  MatX text_table;        // (V+1) x d, last row is the null prompt
  Linear query_proj, key_proj, value_proj, out_proj;
  Linear time_proj;       // d_t -> d
  Linear fusion;          // 2d -> d
  Linear noise1, noise2;  // d -> d -> 7
  Linear neg1, neg2;      // d -> d -> d

  std::size_t scalar_count() const;
};

// Visits every parameter array in a stable order (checkpoint order).
template <typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
  fn("grasp_enc.w1", p.grasp1.w);
  fn("grasp_enc.b1", p.grasp1.b);
  fn("grasp_enc.w2", p.grasp2.w);
  fn("grasp_enc.b2", p.grasp2.b);
  fn("point_mlp.w1", p.point1.w);
  fn("point_mlp.b1", p.point1.b);
  fn("point_mlp.w2", p.point2.w);
  fn("point_mlp.b2", p.point2.b);
  fn("text_table", p.text_table);
  fn("attn.wq", p.query_proj.w);
  fn("attn.bq", p.query_proj.b);
  fn("attn.wk", p.key_proj.w);
  fn("attn.bk", p.key_proj.b);
  fn("attn.wv", p.value_proj.w);
  fn("attn.bv", p.value_proj.b);
  fn("attn.wo", p.out_proj.w);
  fn("attn.bo", p.out_proj.b);
  fn("time_proj.w", p.time_proj.w);
  fn("time_proj.b", p.time_proj.b);
  fn("fusion.w", p.fusion.w);
  fn("fusion.b", p.fusion.b);
  fn("noise_head.w1", p.noise1.w);
  fn("noise_head.b1", p.noise1.b);
  fn("noise_head.w2", p.noise2.w);
  fn("noise_head.b2", p.noise2.b);
  fn("neg_head.w1", p.neg1.w);
  fn("neg_head.b1", p.neg1.b);
  fn("neg_head.w2", p.neg2.w);
  fn("neg_head.b2", p.neg2.b);
}

DenoiserParams init_params(const DenoiserConfig& config, std::uint64_t seed);
DenoiserParams zeros_like(const DenoiserParams& p);

struct SceneTokens {
  MatX tokens;  // num_tokens x embed_dim
};

struct Embedding {
  VecX vec;
  int table_row = -1;  // -1 when not a plain table row
};

struct DenoiserOutput {
  Vec7 eps_pred;
  Embedding neg_embedding;
};

// Scene encoder intermediates kept for the backward pass.
struct SceneEncodeCache {
  std::vector<Vec3> sorted_points;
  MatX hidden_pre;               // N x d, first layer pre-activation
  MatX features;                 // N x d
  std::vector<int> centroid_ids; // indices into sorted_points
  Eigen::MatrixXi pool_argmax;   // num_tokens x d, row index into features
};

// Per-point MLP features grouped by farthest-point-sampled centroids and
// max-pooled. Points are pre-sorted lexicographically so the result does
// not depend on input order. Throws if the cloud has fewer points than
// tokens requested.
SceneTokens encode_scene(const SceneCloud& cloud, const DenoiserParams& params,
                         Exec exec = Exec::kParallel,
                         SceneEncodeCache* cache = nullptr);

// Prompt must read "Grasp the <noun>" (case-insensitive) or be kNullPrompt.
// Unknown nouns raise VocabularyError listing the accepted nouns.
Embedding encode_text(const std::string& prompt, const DenoiserParams& params);

class VocabularyError : public std::invalid_argument {
 public:
  explicit VocabularyError(const std::string& msg) : std::invalid_argument(msg) {}
};

// [sin(t w_k), k rising | cos(t w_k)] with w_k = 10000^{-2k/d}.
VecX time_embedding(int t, int time_dim);

struct ForwardCache {
  Vec7 g;
  int t = 0;
  MatX tokens;        // copy of the conditioning tokens
  VecX text_noise;    // text fed to the fused query
  VecX text_neg;      // text subtracted in the negative head
  VecX temb, time_feat;
  VecX grasp_pre1, grasp_h1, grasp_feat;
  VecX f_uni, query;
  VecX q_proj;
  MatX k_proj, v_proj;            // num_tokens x d
  MatX att;                       // num_heads x num_tokens softmax weights
  VecX att_concat, att_out;
  VecX noise_pre1, noise_h1;
  VecX neg_in, neg_pre1, neg_h1;
};

// Spec surface: one text embedding conditions both the fused query and the
// negative head.
DenoiserOutput forward(const Vec7& g_t, const SceneTokens& tokens,
                       const Embedding& text, int t,
                       const DenoiserParams& params,
                       ForwardCache* cache = nullptr);

// Training surface: the noise path may see the masked text while the
// negative head keeps the real prompt.
DenoiserOutput forward_split(const Vec7& g_t, const SceneTokens& tokens,
                             const VecX& text_noise, const VecX& text_neg,
                             int t, const DenoiserParams& params,
                             ForwardCache* cache = nullptr);

struct BackwardResult {
  MatX d_tokens;      // num_tokens x d
  VecX d_text_noise;  // gradient through the fused query path
  VecX d_text_neg;    // gradient through the negative head subtraction
};

// Accumulates parameter gradients for one item given output gradients.
BackwardResult backward(const ForwardCache& cache, const Vec7& d_eps,
                        const VecX& d_neg, const DenoiserParams& params,
                        DenoiserParams& grads);

// Routes pooled token gradients back through the per-point MLP.
void backward_scene(const SceneEncodeCache& cache, const MatX& d_tokens,
                    const DenoiserParams& params, DenoiserParams& grads);

struct LossWeights {
  double noise = 0.9;
  double negative = 0.1;
};

// One element of a gradient batch. `text_row` already reflects masking;
// `prompt_row` is the unmasked prompt driving the negative head.
struct TrainItem {
  const SceneCloud* cloud = nullptr;
  int text_row = -1;
  int prompt_row = -1;
  std::vector<int> negative_rows;
  Vec7 g_noisy = Vec7::Zero();
  Vec7 eps_true = Vec7::Zero();
  int t = 1;
};

struct BatchLoss {
  double noise = 0.0;
  double negative = 0.0;
  double total = 0.0;
};

// Mean-reduced analytic gradients of the weighted loss over the batch.
// Throws NumericFailure (carrying the batch index) if an item's loss is
// not finite.
BatchLoss param_gradients(const std::vector<TrainItem>& batch,
                          const DenoiserParams& params,
                          const LossWeights& weights, DenoiserParams& grads,
                          Exec exec = Exec::kParallel);

class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(const std::string& msg, int batch_index)
      : std::runtime_error(msg), batch_index(batch_index) {}
  int batch_index;
};

}  // namespace negrasp
