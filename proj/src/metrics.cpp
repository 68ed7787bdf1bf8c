#include "negrasp/metrics.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace negrasp {
namespace {

struct PoseKey {
  Vec3 position;
  Mat3 rotation;
  double width;
};

std::vector<PoseKey> make_keys(const std::vector<GraspPose>& poses) {
  std::vector<PoseKey> keys(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const RigidTransform t = exp_map(poses[i]);
    keys[i] = {t.translation, t.rotation, poses[i].width};
  }
  return keys;
}

double key_distance(const PoseKey& a, const PoseKey& b,
                    const PoseDistanceWeights& w) {
  return (a.position - b.position).norm() +
         w.rotation * geodesic_angle(a.rotation, b.rotation) +
         w.width * std::abs(a.width - b.width);
}

}  // namespace

MatX pairwise_pose_distances(const std::vector<GraspPose>& a,
                             const std::vector<GraspPose>& b,
                             const PoseDistanceWeights& weights, Exec exec) {
  const std::vector<PoseKey> ka = make_keys(a);
  const std::vector<PoseKey> kb = make_keys(b);
  MatX d(a.size(), b.size());
  const int n = static_cast<int>(a.size());
  const bool parallel = exec == Exec::kParallel;
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      d(i, j) = key_distance(ka[i], kb[j], weights);
    }
  }
  return d;
}

double coverage_rate(const std::vector<GraspPose>& detected,
                     const std::vector<GraspPose>& truth, double delta,
                     const PoseDistanceWeights& weights, Exec exec) {
  if (truth.empty()) throw std::invalid_argument("coverage_rate: empty truth");
  if (detected.empty()) return 0.0;
  const MatX d = pairwise_pose_distances(detected, truth, weights, exec);
  int covered = 0;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    if (d.col(j).minCoeff() <= delta) ++covered;
  }
  return static_cast<double>(covered) / truth.size();
}

double min_cost_transport(const MatX& cost, const std::vector<long>& supply,
                          const std::vector<long>& demand) {
  const int n = static_cast<int>(supply.size());
  const int m = static_cast<int>(demand.size());
  if (cost.rows() != n || cost.cols() != m) {
    throw std::invalid_argument("min_cost_transport: shape mismatch");
  }
  const long total_supply = std::accumulate(supply.begin(), supply.end(), 0L);
  const long total_demand = std::accumulate(demand.begin(), demand.end(), 0L);
  if (total_supply != total_demand) {
    throw std::invalid_argument("min_cost_transport: unbalanced problem");
  }

  // Successive shortest augmenting paths with node potentials on the
  // complete bipartite graph. Each augmentation saturates a source or a
  // sink, so there are at most n + m of them.
  std::vector<long> remaining_supply = supply;
  std::vector<long> remaining_demand = demand;
  MatX flow = MatX::Zero(n, m);
  std::vector<double> pot_src(n, 0.0), pot_dst(m, 0.0);
  const double inf = std::numeric_limits<double>::infinity();

  double total_cost = 0.0;
  long shipped = 0;
  while (shipped < total_supply) {
    // Dijkstra over n + m nodes; sources with remaining supply are the
    // multi-source start set.
    std::vector<double> dist_src(n, inf), dist_dst(m, inf);
    std::vector<int> parent_dst(m, -1);  // source feeding this sink
    std::vector<int> parent_src(n, -1);  // sink feeding this source (residual)
    std::vector<bool> done_src(n, false), done_dst(m, false);
    for (int i = 0; i < n; ++i) {
      if (remaining_supply[i] > 0) dist_src[i] = 0.0;
    }
    while (true) {
      // Pick the unfinished node with the smallest tentative distance.
      double best = inf;
      int best_idx = -1;
      bool best_is_src = true;
      for (int i = 0; i < n; ++i) {
        if (!done_src[i] && dist_src[i] < best) {
          best = dist_src[i];
          best_idx = i;
          best_is_src = true;
        }
      }
      for (int j = 0; j < m; ++j) {
        if (!done_dst[j] && dist_dst[j] < best) {
          best = dist_dst[j];
          best_idx = j;
          best_is_src = false;
        }
      }
      if (best_idx < 0) break;
      if (best_is_src) {
        done_src[best_idx] = true;
        for (int j = 0; j < m; ++j) {
          const double reduced =
              cost(best_idx, j) + pot_src[best_idx] - pot_dst[j];
          if (dist_src[best_idx] + reduced < dist_dst[j] - 1e-15) {
            dist_dst[j] = dist_src[best_idx] + reduced;
            parent_dst[j] = best_idx;
          }
        }
      } else {
        done_dst[best_idx] = true;
        for (int i = 0; i < n; ++i) {
          if (flow(i, best_idx) > 0) {
            const double reduced =
                -cost(i, best_idx) - pot_src[i] + pot_dst[best_idx];
            if (dist_dst[best_idx] + reduced < dist_src[i] - 1e-15) {
              dist_src[i] = dist_dst[best_idx] + reduced;
              parent_src[i] = best_idx;
            }
          }
        }
      }
    }

    // Cheapest reachable sink with remaining demand.
    int sink = -1;
    double sink_dist = inf;
    for (int j = 0; j < m; ++j) {
      if (remaining_demand[j] > 0 && dist_dst[j] < sink_dist) {
        sink_dist = dist_dst[j];
        sink = j;
      }
    }
    if (sink < 0) {
      throw std::runtime_error("min_cost_transport: no augmenting path");
    }

    // Trace back, computing the bottleneck.
    long bottleneck = remaining_demand[sink];
    {
      int j = sink;
      while (true) {
        const int i = parent_dst[j];
        if (remaining_supply[i] > 0 && parent_src[i] == -1) {
          bottleneck = std::min(bottleneck, remaining_supply[i]);
          break;
        }
        const int back_j = parent_src[i];
        bottleneck = std::min(bottleneck, static_cast<long>(flow(i, back_j)));
        j = back_j;
      }
    }
    {
      int j = sink;
      while (true) {
        const int i = parent_dst[j];
        flow(i, j) += bottleneck;
        if (remaining_supply[i] > 0 && parent_src[i] == -1) {
          remaining_supply[i] -= bottleneck;
          break;
        }
        const int back_j = parent_src[i];
        flow(i, back_j) -= bottleneck;
        j = back_j;
      }
      remaining_demand[sink] -= bottleneck;
      shipped += bottleneck;
    }

    // Johnson potential update keeps reduced costs nonnegative.
    for (int i = 0; i < n; ++i) {
      if (dist_src[i] < inf) pot_src[i] += dist_src[i];
    }
    for (int j = 0; j < m; ++j) {
      if (dist_dst[j] < inf) pot_dst[j] += dist_dst[j];
    }
  }

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) total_cost += flow(i, j) * cost(i, j);
  }
  return total_cost;
}

double emd(const std::vector<GraspPose>& detected,
           const std::vector<GraspPose>& truth,
           const PoseDistanceWeights& weights, Exec exec) {
  if (detected.empty() || truth.empty()) {
    throw std::invalid_argument("emd: empty grasp set");
  }
  const int n = static_cast<int>(detected.size());
  const int m = static_cast<int>(truth.size());
  const MatX d = pairwise_pose_distances(detected, truth, weights, exec);
  // Uniform masses 1/n and 1/m become integers after scaling by n*m.
  const std::vector<long> supply(n, m);
  const std::vector<long> demand(m, n);
  const double scaled = min_cost_transport(d, supply, demand);
  return scaled / (static_cast<double>(n) * m);
}

double collision_free_rate(const std::vector<GraspPose>& detected,
                           const SceneCloud& cloud, const GripperModel& model,
                           Exec exec) {
  if (detected.empty()) {
    throw std::invalid_argument("collision_free_rate: empty detected set");
  }
  const int n = static_cast<int>(detected.size());
  int clean = 0;
  const bool parallel = exec == Exec::kParallel;
#pragma omp parallel for reduction(+ : clean) schedule(dynamic) if (parallel)
  for (int i = 0; i < n; ++i) {
    if (!collides(detected[i], model, cloud, Exec::kSerial)) ++clean;
  }
  return static_cast<double>(clean) / n;
}

double inference_timer(const std::function<int(int)>& sample_pair, int pairs,
                       int grasps_per_pair) {
  if (pairs < 1 || grasps_per_pair < 1) {
    throw std::invalid_argument("inference_timer: bad arguments");
  }
  sample_pair(0);  // warm-up, excluded
  const auto start = std::chrono::steady_clock::now();
  long grasps = 0;
  for (int i = 0; i < pairs; ++i) grasps += sample_pair(i);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  if (grasps == 0) return 0.0;
  return elapsed / static_cast<double>(grasps) * 1000.0;
}

void EvalReport::aggregate() {
  cr = emd = cfr = 0.0;
  if (per_scene.empty()) return;
  for (const SceneEval& s : per_scene) {
    cr += s.cr;
    emd += s.emd;
    cfr += s.cfr;
  }
  const double n = static_cast<double>(per_scene.size());
  cr /= n;
  emd /= n;
  cfr /= n;
}

}  // namespace negrasp
