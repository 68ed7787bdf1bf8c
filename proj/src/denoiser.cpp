#include "negrasp/denoiser.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "negrasp/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace negrasp {
namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) { return x * sigmoid(x); }

double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

VecX silu_vec(const VecX& v) {
  VecX out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = silu(v(i));
  return out;
}

VecX apply(const Linear& l, const VecX& x) { return l.w * x + l.b.col(0); }

// y = w x + b; accumulates dw, db and returns dx.
VecX linear_backward(const Linear& l, const VecX& x, const VecX& dy,
                     Linear& grad) {
  grad.w.noalias() += dy * x.transpose();
  grad.b.col(0).noalias() += dy;
  return l.w.transpose() * dy;
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  std::size_t b = s.find_last_not_of(" \t.");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

MatX xavier(int rows, int cols, Rng& rng) {
  const double s = std::sqrt(6.0 / (rows + cols));
  MatX m(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) m(r, c) = (2.0 * rng.uniform() - 1.0) * s;
  }
  return m;
}

Linear make_linear(int rows, int cols, Rng& rng) {
  return Linear{xavier(rows, cols, rng), MatX::Zero(rows, 1)};
}

}  // namespace

std::size_t DenoiserParams::scalar_count() const {
  std::size_t n = 0;
  visit_params(*this, [&](const char*, const MatX& m) { n += m.size(); });
  return n;
}

DenoiserParams init_params(const DenoiserConfig& config, std::uint64_t seed) {
  if (config.embed_dim % config.num_heads != 0 || config.time_dim % 2 != 0) {
    throw std::invalid_argument("init_params: inconsistent dimensions");
  }
  Rng rng({seed, kStreamInit});
  const int d = config.embed_dim;
  DenoiserParams p;
  p.config = config;
  p.grasp1 = make_linear(d, 7, rng);
  p.grasp2 = make_linear(d, d, rng);
  p.point1 = make_linear(d, 3, rng);
  p.point2 = make_linear(d, d, rng);
  p.text_table.resize(config.vocab_rows(), d);
  for (int r = 0; r < p.text_table.rows(); ++r) {
    for (int c = 0; c < d; ++c) p.text_table(r, c) = rng.gaussian() * 0.125;
  }
  p.query_proj = make_linear(d, d, rng);
  p.key_proj = make_linear(d, d, rng);
  p.value_proj = make_linear(d, d, rng);
  p.out_proj = make_linear(d, d, rng);
  p.time_proj = make_linear(d, config.time_dim, rng);
  p.fusion = make_linear(d, 2 * d, rng);
  p.noise1 = make_linear(d, d, rng);
  p.noise2 = make_linear(7, d, rng);
  p.neg1 = make_linear(d, d, rng);
  p.neg2 = make_linear(d, d, rng);
  return p;
}

DenoiserParams zeros_like(const DenoiserParams& p) {
  DenoiserParams z;
  z.config = p.config;
  std::vector<MatX*> dst_arrays;
  visit_params(z, [&](const char*, MatX& m) { dst_arrays.push_back(&m); });
  std::size_t i = 0;
  visit_params(p, [&](const char*, const MatX& m) {
    *dst_arrays[i++] = MatX::Zero(m.rows(), m.cols());
  });
  return z;
}

VecX time_embedding(int t, int time_dim) {
  if (t < 0 || time_dim <= 0 || time_dim % 2 != 0) {
    throw std::invalid_argument("time_embedding: bad arguments");
  }
  VecX v(time_dim);
  const int half = time_dim / 2;
  for (int k = 0; k < half; ++k) {
    const double freq = std::pow(10000.0, -2.0 * k / time_dim);
    v(k) = std::sin(t * freq);
    v(half + k) = std::cos(t * freq);
  }
  return v;
}

Embedding encode_text(const std::string& prompt, const DenoiserParams& params) {
  const DenoiserConfig& cfg = params.config;
  if (prompt == kNullPrompt) {
    return Embedding{params.text_table.row(cfg.null_row()).transpose(),
                     cfg.null_row()};
  }
  const std::string low = lowercase(trim(prompt));
  const std::string prefix = "grasp the ";
  std::string noun;
  if (low.rfind(prefix, 0) == 0) {
    noun = trim(low.substr(prefix.size()));
  }
  for (std::size_t i = 0; i < cfg.vocabulary.size(); ++i) {
    if (lowercase(cfg.vocabulary[i]) == noun && !noun.empty()) {
      return Embedding{params.text_table.row(static_cast<int>(i)).transpose(),
                       static_cast<int>(i)};
    }
  }
  std::ostringstream msg;
  msg << "unknown prompt \"" << prompt << "\"; expected \"Grasp the <noun>\" "
      << "with a noun in {";
  for (std::size_t i = 0; i < cfg.vocabulary.size(); ++i) {
    msg << (i ? ", " : "") << cfg.vocabulary[i];
  }
  msg << "} or the null token " << kNullPrompt;
  throw VocabularyError(msg.str());
}

SceneTokens encode_scene(const SceneCloud& cloud, const DenoiserParams& params,
                         Exec exec, SceneEncodeCache* cache) {
  const DenoiserConfig& cfg = params.config;
  const int n = cloud.size();
  const int d = cfg.embed_dim;
  const int ns = cfg.num_tokens;
  if (!cloud.valid()) throw std::invalid_argument("encode_scene: invalid cloud");
  if (n < ns) {
    throw std::invalid_argument("encode_scene: fewer points than tokens");
  }

  // Canonical ordering makes the result independent of input permutation.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const Vec3& pa = cloud.points[a];
    const Vec3& pb = cloud.points[b];
    if (pa.x() != pb.x()) return pa.x() < pb.x();
    if (pa.y() != pb.y()) return pa.y() < pb.y();
    return pa.z() < pb.z();
  });
  std::vector<Vec3> pts(n);
  for (int i = 0; i < n; ++i) pts[i] = cloud.points[order[i]];

  MatX hidden_pre(n, d);
  MatX features(n, d);
  const bool parallel = exec == Exec::kParallel;
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) {
    const VecX pre = params.point1.w * pts[i] + params.point1.b.col(0);
    hidden_pre.row(i) = pre.transpose();
    features.row(i) = (params.point2.w * silu_vec(pre) + params.point2.b.col(0))
                          .transpose();
  }

  // Farthest point sampling, first centroid = first canonical point.
  std::vector<int> centroids;
  centroids.reserve(ns);
  centroids.push_back(0);
  std::vector<double> dist2(n);
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) dist2[i] = (pts[i] - pts[0]).squaredNorm();
  for (int k = 1; k < ns; ++k) {
    int best = 0;
    for (int i = 1; i < n; ++i) {
      if (dist2[i] > dist2[best]) best = i;
    }
    centroids.push_back(best);
#pragma omp parallel for schedule(static) if (parallel)
    for (int i = 0; i < n; ++i) {
      dist2[i] = std::min(dist2[i], (pts[i] - pts[best]).squaredNorm());
    }
  }

  std::vector<int> group(n);
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_d = (pts[i] - pts[centroids[0]]).squaredNorm();
    for (int k = 1; k < ns; ++k) {
      const double dk = (pts[i] - pts[centroids[k]]).squaredNorm();
      if (dk < best_d) {
        best_d = dk;
        best = k;
      }
    }
    group[i] = best;
  }

  // Max-pool features per group; a centroid always pools its own point so
  // no token is left empty.
  MatX tokens(ns, d);
  Eigen::MatrixXi argmax(ns, d);
  for (int k = 0; k < ns; ++k) {
    tokens.row(k) = features.row(centroids[k]);
    for (int c = 0; c < d; ++c) argmax(k, c) = centroids[k];
  }
  for (int i = 0; i < n; ++i) {
    const int k = group[i];
    for (int c = 0; c < d; ++c) {
      if (features(i, c) > tokens(k, c)) {
        tokens(k, c) = features(i, c);
        argmax(k, c) = i;
      }
    }
  }

  if (cache != nullptr) {
    cache->sorted_points = std::move(pts);
    cache->hidden_pre = std::move(hidden_pre);
    cache->features = std::move(features);
    cache->centroid_ids = std::move(centroids);
    cache->pool_argmax = std::move(argmax);
  }
  return SceneTokens{std::move(tokens)};
}

DenoiserOutput forward_split(const Vec7& g_t, const SceneTokens& tokens,
                             const VecX& text_noise, const VecX& text_neg,
                             int t, const DenoiserParams& params,
                             ForwardCache* cache) {
  const DenoiserConfig& cfg = params.config;
  const int d = cfg.embed_dim;
  const int ns = cfg.num_tokens;
  const int heads = cfg.num_heads;
  const int hd = cfg.head_dim();
  if (tokens.tokens.rows() != ns || tokens.tokens.cols() != d ||
      text_noise.size() != d || text_neg.size() != d) {
    throw std::invalid_argument("forward: shape mismatch");
  }

  const VecX temb = time_embedding(t, cfg.time_dim);
  const VecX time_feat = apply(params.time_proj, temb);

  const VecX grasp_pre1 = params.grasp1.w * g_t + params.grasp1.b.col(0);
  const VecX grasp_h1 = silu_vec(grasp_pre1);
  const VecX grasp_feat = apply(params.grasp2, grasp_h1);

  VecX f_uni(2 * d);
  f_uni.head(d) = time_feat;
  f_uni.tail(d) = grasp_feat + text_noise;
  const VecX query = apply(params.fusion, f_uni);

  const VecX q_proj = apply(params.query_proj, query);
  const MatX k_proj = tokens.tokens * params.key_proj.w.transpose() +
                      VecX::Ones(ns) * params.key_proj.b.col(0).transpose();
  const MatX v_proj = tokens.tokens * params.value_proj.w.transpose() +
                      VecX::Ones(ns) * params.value_proj.b.col(0).transpose();

  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  MatX att(heads, ns);
  VecX att_concat(d);
  for (int a = 0; a < heads; ++a) {
    const int o = a * hd;
    VecX logits(ns);
    for (int j = 0; j < ns; ++j) {
      logits(j) = q_proj.segment(o, hd).dot(k_proj.row(j).segment(o, hd)) * scale;
    }
    const double mx = logits.maxCoeff();
    VecX e = (logits.array() - mx).exp();
    e /= e.sum();
    att.row(a) = e.transpose();
    VecX out = VecX::Zero(hd);
    for (int j = 0; j < ns; ++j) {
      out += e(j) * v_proj.row(j).segment(o, hd).transpose();
    }
    att_concat.segment(o, hd) = out;
  }
  const VecX att_out = apply(params.out_proj, att_concat);

  const VecX noise_pre1 = params.noise1.w * att_out + params.noise1.b.col(0);
  const VecX noise_h1 = silu_vec(noise_pre1);
  const VecX eps = apply(params.noise2, noise_h1);

  const VecX neg_in =
      tokens.tokens.colwise().mean().transpose() - text_neg;
  const VecX neg_pre1 = params.neg1.w * neg_in + params.neg1.b.col(0);
  const VecX neg_h1 = silu_vec(neg_pre1);
  const VecX neg = apply(params.neg2, neg_h1);

  if (cache != nullptr) {
    cache->g = g_t;
    cache->t = t;
    cache->tokens = tokens.tokens;
    cache->text_noise = text_noise;
    cache->text_neg = text_neg;
    cache->temb = temb;
    cache->time_feat = time_feat;
    cache->grasp_pre1 = grasp_pre1;
    cache->grasp_h1 = grasp_h1;
    cache->grasp_feat = grasp_feat;
    cache->f_uni = f_uni;
    cache->query = query;
    cache->q_proj = q_proj;
    cache->k_proj = k_proj;
    cache->v_proj = v_proj;
    cache->att = att;
    cache->att_concat = att_concat;
    cache->att_out = att_out;
    cache->noise_pre1 = noise_pre1;
    cache->noise_h1 = noise_h1;
    cache->neg_in = neg_in;
    cache->neg_pre1 = neg_pre1;
    cache->neg_h1 = neg_h1;
  }

  DenoiserOutput out;
  out.eps_pred = eps.head<7>();
  out.neg_embedding = Embedding{neg, -1};
  return out;
}

DenoiserOutput forward(const Vec7& g_t, const SceneTokens& tokens,
                       const Embedding& text, int t,
                       const DenoiserParams& params, ForwardCache* cache) {
  return forward_split(g_t, tokens, text.vec, text.vec, t, params, cache);
}

BackwardResult backward(const ForwardCache& c, const Vec7& d_eps,
                        const VecX& d_neg, const DenoiserParams& params,
                        DenoiserParams& grads) {
  const DenoiserConfig& cfg = params.config;
  const int d = cfg.embed_dim;
  const int ns = cfg.num_tokens;
  const int heads = cfg.num_heads;
  const int hd = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  BackwardResult res;
  res.d_tokens = MatX::Zero(ns, d);
  res.d_text_noise = VecX::Zero(d);
  res.d_text_neg = VecX::Zero(d);

  // Negative head.
  VecX d_neg_h1 = linear_backward(params.neg2, c.neg_h1, d_neg, grads.neg2);
  VecX d_neg_pre1(d);
  for (int i = 0; i < d; ++i) d_neg_pre1(i) = d_neg_h1(i) * silu_grad(c.neg_pre1(i));
  VecX d_neg_in = linear_backward(params.neg1, c.neg_in, d_neg_pre1, grads.neg1);
  for (int j = 0; j < ns; ++j) {
    res.d_tokens.row(j) += d_neg_in.transpose() / static_cast<double>(ns);
  }
  res.d_text_neg = -d_neg_in;

  // Noise head.
  VecX d_noise_h1 =
      linear_backward(params.noise2, c.noise_h1, VecX(d_eps), grads.noise2);
  VecX d_noise_pre1(d);
  for (int i = 0; i < d; ++i) {
    d_noise_pre1(i) = d_noise_h1(i) * silu_grad(c.noise_pre1(i));
  }
  VecX d_att_out =
      linear_backward(params.noise1, c.att_out, d_noise_pre1, grads.noise1);

  // Attention.
  VecX d_att_concat =
      linear_backward(params.out_proj, c.att_concat, d_att_out, grads.out_proj);
  VecX d_q_proj = VecX::Zero(d);
  MatX d_k_proj = MatX::Zero(ns, d);
  MatX d_v_proj = MatX::Zero(ns, d);
  for (int a = 0; a < heads; ++a) {
    const int o = a * hd;
    const VecX d_out = d_att_concat.segment(o, hd);
    VecX d_att(ns);
    for (int j = 0; j < ns; ++j) {
      d_att(j) = d_out.dot(c.v_proj.row(j).segment(o, hd));
      d_v_proj.row(j).segment(o, hd) += c.att(a, j) * d_out.transpose();
    }
    const double dot = c.att.row(a).dot(d_att.transpose());
    for (int j = 0; j < ns; ++j) {
      const double d_logit = c.att(a, j) * (d_att(j) - dot);
      d_q_proj.segment(o, hd) +=
          d_logit * scale * c.k_proj.row(j).segment(o, hd).transpose();
      d_k_proj.row(j).segment(o, hd) +=
          d_logit * scale * c.q_proj.segment(o, hd).transpose();
    }
  }
  // K = tokens Wk^T + 1 bk^T and likewise for V.
  grads.key_proj.w.noalias() += d_k_proj.transpose() * c.tokens;
  grads.key_proj.b.col(0).noalias() += d_k_proj.colwise().sum().transpose();
  res.d_tokens.noalias() += d_k_proj * params.key_proj.w;
  grads.value_proj.w.noalias() += d_v_proj.transpose() * c.tokens;
  grads.value_proj.b.col(0).noalias() += d_v_proj.colwise().sum().transpose();
  res.d_tokens.noalias() += d_v_proj * params.value_proj.w;

  VecX d_query = linear_backward(params.query_proj, c.query, d_q_proj,
                                 grads.query_proj);
  VecX d_f_uni = linear_backward(params.fusion, c.f_uni, d_query, grads.fusion);

  // Time branch: embedding itself is a fixed function of t.
  linear_backward(params.time_proj, c.temb, VecX(d_f_uni.head(d)),
                  grads.time_proj);

  // Grasp + text sum branch.
  const VecX d_sum = d_f_uni.tail(d);
  res.d_text_noise = d_sum;
  VecX d_grasp_h1 =
      linear_backward(params.grasp2, c.grasp_h1, d_sum, grads.grasp2);
  VecX d_grasp_pre1(d);
  for (int i = 0; i < d; ++i) {
    d_grasp_pre1(i) = d_grasp_h1(i) * silu_grad(c.grasp_pre1(i));
  }
  linear_backward(params.grasp1, VecX(c.g), d_grasp_pre1, grads.grasp1);

  return res;
}

void backward_scene(const SceneEncodeCache& cache, const MatX& d_tokens,
                    const DenoiserParams& params, DenoiserParams& grads) {
  const int n = static_cast<int>(cache.sorted_points.size());
  const int d = static_cast<int>(d_tokens.cols());
  MatX d_features = MatX::Zero(n, d);
  for (int k = 0; k < d_tokens.rows(); ++k) {
    for (int c = 0; c < d; ++c) {
      if (d_tokens(k, c) != 0.0) {
        d_features(cache.pool_argmax(k, c), c) += d_tokens(k, c);
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    if (d_features.row(i).isZero(0.0)) continue;
    const VecX d_f = d_features.row(i).transpose();
    const VecX h1 = silu_vec(VecX(cache.hidden_pre.row(i).transpose()));
    VecX d_h1 = linear_backward(params.point2, h1, d_f, grads.point2);
    VecX d_pre(d);
    for (int c = 0; c < d; ++c) {
      d_pre(c) = d_h1(c) * silu_grad(cache.hidden_pre(i, c));
    }
    linear_backward(params.point1, VecX(cache.sorted_points[i]), d_pre,
                    grads.point1);
  }
}

namespace {

struct ItemResult {
  DenoiserParams grads;
  double noise = 0.0;
  double negative = 0.0;
  bool finite = true;
};

ItemResult item_gradients(const TrainItem& item, const DenoiserParams& params,
                          const LossWeights& weights, double inv_batch) {
  ItemResult r;
  r.grads = zeros_like(params);

  SceneEncodeCache scene_cache;
  const SceneTokens tokens =
      encode_scene(*item.cloud, params, Exec::kSerial, &scene_cache);
  const VecX text_noise =
      params.text_table.row(item.text_row).transpose();
  const VecX text_neg =
      params.text_table.row(item.prompt_row).transpose();

  ForwardCache fwd_cache;
  const DenoiserOutput out = forward_split(item.g_noisy, tokens, text_noise,
                                           text_neg, item.t, params, &fwd_cache);

  const Vec7 eps_diff = out.eps_pred - item.eps_true;
  r.noise = eps_diff.squaredNorm();

  int best_neg = -1;
  double best_dist = 0.0;
  VecX neg_diff;
  for (std::size_t i = 0; i < item.negative_rows.size(); ++i) {
    const VecX diff = out.neg_embedding.vec -
                      params.text_table.row(item.negative_rows[i]).transpose();
    const double dist = diff.squaredNorm();
    if (best_neg < 0 || dist < best_dist) {
      best_neg = static_cast<int>(i);
      best_dist = dist;
      neg_diff = diff;
    }
  }
  r.negative = best_neg >= 0 ? best_dist : 0.0;

  const double total =
      weights.noise * r.noise + weights.negative * r.negative;
  if (!std::isfinite(total)) {
    r.finite = false;
    return r;
  }

  const Vec7 d_eps = 2.0 * weights.noise * inv_batch * eps_diff;
  VecX d_neg = VecX::Zero(out.neg_embedding.vec.size());
  if (best_neg >= 0) {
    d_neg = 2.0 * weights.negative * inv_batch * neg_diff;
    // The matched negative row is itself a table row.
    r.grads.text_table.row(item.negative_rows[best_neg]) -=
        2.0 * weights.negative * inv_batch * neg_diff.transpose();
  }

  const BackwardResult back = backward(fwd_cache, d_eps, d_neg, params, r.grads);
  r.grads.text_table.row(item.text_row) += back.d_text_noise.transpose();
  r.grads.text_table.row(item.prompt_row) += back.d_text_neg.transpose();
  backward_scene(scene_cache, back.d_tokens, params, r.grads);
  return r;
}

void accumulate(DenoiserParams& into, const DenoiserParams& from) {
  std::vector<MatX*> dst;
  visit_params(into, [&](const char*, MatX& m) { dst.push_back(&m); });
  std::size_t i = 0;
  visit_params(from, [&](const char*, const MatX& m) { *dst[i++] += m; });
}

}  // namespace

BatchLoss param_gradients(const std::vector<TrainItem>& batch,
                          const DenoiserParams& params,
                          const LossWeights& weights, DenoiserParams& grads,
                          Exec exec) {
  if (batch.empty()) throw std::invalid_argument("param_gradients: empty batch");
  const int n = static_cast<int>(batch.size());
  const double inv_batch = 1.0 / n;
  std::vector<ItemResult> results(n);

  const bool parallel = exec == Exec::kParallel;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int i = 0; i < n; ++i) {
    results[i] = item_gradients(batch[i], params, weights, inv_batch);
  }

  grads = zeros_like(params);
  BatchLoss loss;
  for (int i = 0; i < n; ++i) {
    if (!results[i].finite) {
      throw NumericFailure("param_gradients: non-finite loss", i);
    }
    loss.noise += results[i].noise * inv_batch;
    loss.negative += results[i].negative * inv_batch;
    accumulate(grads, results[i].grads);
  }
  loss.total = weights.noise * loss.noise + weights.negative * loss.negative;
  return loss;
}

}  // namespace negrasp
