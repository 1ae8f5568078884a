#ifndef STUN_MINING_HPP_
#define STUN_MINING_HPP_

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "stun/losses.hpp"
#include "stun/net.hpp"
#include "stun/types.hpp"

namespace stun {

// "Strictly positive" loss uses this tolerance so float noise cannot flip a
// converged tuple back into the violating set.
inline constexpr double kViolationTol = 1e-9;

// Read-only mining context: geo labels for every pair plus the teacher means
// cached for the current epoch. The cache must be refreshed once per epoch;
// filtering against a stale cache is an error.
struct MiningPool {
  const Dataset* data = nullptr;
  double positive_radius = 10.0;
  double negative_radius = 25.0;
  std::vector<std::vector<std::size_t>> positives;  // per-sample, id order
  std::vector<std::vector<std::size_t>> negatives;
  std::vector<std::vector<double>> cached_means;
  long long cache_epoch = -1;

  bool has_positive(std::size_t anchor) const {
    return !positives[anchor].empty();
  }
};

inline MiningPool build_mining_pool(const Dataset& data,
                                    const ExperimentConfig& cfg) {
  MiningPool pool;
  pool.data = &data;
  pool.positive_radius = cfg.positive_radius_m;
  pool.negative_radius = cfg.negative_radius_m;
  const std::size_t n = data.size();
  pool.positives.resize(n);
  pool.negatives.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      switch (label_of_distance(
          geo_distance(data.samples[i].geo, data.samples[j].geo),
          cfg.positive_radius_m, cfg.negative_radius_m)) {
        case PairLabel::kPositive: pool.positives[i].push_back(j); break;
        case PairLabel::kNegative: pool.negatives[i].push_back(j); break;
        case PairLabel::kIgnore: break;
      }
    }
  }
  return pool;
}

inline void refresh_cache(MiningPool& pool, const TeacherNet& teacher,
                          long long epoch) {
  pool.cached_means.assign(pool.data->size(), {});
  for (std::size_t i = 0; i < pool.data->size(); ++i)
    pool.cached_means[i] = teacher.forward_mean(pool.data->samples[i].image);
  pool.cache_epoch = epoch;
}

// Exhaustive enumeration of geometrically valid tuples for one anchor.
// Doublets pair the anchor with each positive (similar) and each negative
// (dissimilar); triplets take the positive x negative product; quadruplets
// additionally require a second negative that is dissimilar to every other
// member. An anchor without positives yields an empty batch.
inline TupleBatch candidate_tuples(const MiningPool& pool, std::size_t anchor,
                                   TupleKind kind) {
  TupleBatch batch;
  batch.kind = kind;
  const auto& pos = pool.positives[anchor];
  const auto& neg = pool.negatives[anchor];
  if (pos.empty()) return batch;
  const auto& samples = pool.data->samples;
  switch (kind) {
    case TupleKind::kDoublet:
      for (std::size_t p : pos) {
        batch.anchors.push_back(anchor);
        batch.positives.push_back(p);
        batch.similar.push_back(1);
      }
      for (std::size_t n : neg) {
        batch.anchors.push_back(anchor);
        batch.positives.push_back(n);
        batch.similar.push_back(0);
      }
      break;
    case TupleKind::kTriplet:
      for (std::size_t p : pos)
        for (std::size_t n : neg) {
          batch.anchors.push_back(anchor);
          batch.positives.push_back(p);
          batch.negatives1.push_back(n);
        }
      break;
    case TupleKind::kQuadruplet:
      for (std::size_t p : pos)
        for (std::size_t n1 : neg)
          for (std::size_t n2 : neg) {
            if (n2 == n1) continue;
            if (label_of_distance(
                    geo_distance(samples[n2].geo, samples[p].geo),
                    pool.positive_radius,
                    pool.negative_radius) != PairLabel::kNegative)
              continue;
            if (label_of_distance(
                    geo_distance(samples[n2].geo, samples[n1].geo),
                    pool.positive_radius,
                    pool.negative_radius) != PairLabel::kNegative)
              continue;
            batch.anchors.push_back(anchor);
            batch.positives.push_back(p);
            batch.negatives1.push_back(n1);
            batch.negatives2.push_back(n2);
          }
      break;
  }
  return batch;
}

// Keeps exactly the tuples whose loss under the cached means is strictly
// positive; order is preserved.
inline TupleBatch filter_violating(const TupleBatch& tuples,
                                   const std::vector<std::vector<double>>& means,
                                   const ExperimentConfig& cfg) {
  TupleBatch kept;
  kept.kind = tuples.kind;
  for (std::size_t t = 0; t < tuples.size(); ++t) {
    if (tuple_value_at(tuples, t, means, cfg.margin, cfg.margin2) <=
        kViolationTol)
      continue;
    kept.anchors.push_back(tuples.anchors[t]);
    kept.positives.push_back(tuples.positives[t]);
    if (!tuples.negatives1.empty())
      kept.negatives1.push_back(tuples.negatives1[t]);
    if (!tuples.negatives2.empty())
      kept.negatives2.push_back(tuples.negatives2[t]);
    if (!tuples.similar.empty()) kept.similar.push_back(tuples.similar[t]);
  }
  return kept;
}

// Stale-cache-checked variant used by the training loop.
inline TupleBatch violating_tuples(const MiningPool& pool,
                                   const TupleBatch& tuples,
                                   const ExperimentConfig& cfg,
                                   long long current_epoch) {
  if (pool.cache_epoch != current_epoch)
    throw std::logic_error("mining cache is stale (cache epoch " +
                           std::to_string(pool.cache_epoch) + ", current " +
                           std::to_string(current_epoch) + ")");
  return filter_violating(tuples, pool.cached_means, cfg);
}

// Keeps the k hardest tuples (largest loss, ties by enumeration order).
inline TupleBatch select_hardest(const TupleBatch& tuples,
                                 const std::vector<std::vector<double>>& means,
                                 const ExperimentConfig& cfg, std::size_t k) {
  if (tuples.size() <= k) return tuples;
  std::vector<std::size_t> order(tuples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> losses(tuples.size());
  for (std::size_t t = 0; t < tuples.size(); ++t)
    losses[t] = tuple_value_at(tuples, t, means, cfg.margin, cfg.margin2);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return losses[a] > losses[b];
  });
  order.resize(k);
  TupleBatch kept;
  kept.kind = tuples.kind;
  for (std::size_t t : order) {
    kept.anchors.push_back(tuples.anchors[t]);
    kept.positives.push_back(tuples.positives[t]);
    if (!tuples.negatives1.empty())
      kept.negatives1.push_back(tuples.negatives1[t]);
    if (!tuples.negatives2.empty())
      kept.negatives2.push_back(tuples.negatives2[t]);
    if (!tuples.similar.empty()) kept.similar.push_back(tuples.similar[t]);
  }
  return kept;
}

namespace detail {

// Bounded quadruplet candidates for one anchor: every (positive, negative)
// pair, with the second negative chosen as the embedding-nearest negative
// that is geo-dissimilar to the positive and the first negative. Exhaustive
// enumeration over n2 is quadratic in the negative set and only feasible on
// small pools.
inline TupleBatch quadruplet_candidates_bounded(const MiningPool& pool,
                                                std::size_t anchor) {
  TupleBatch batch;
  batch.kind = TupleKind::kQuadruplet;
  const auto& pos = pool.positives[anchor];
  const auto& neg = pool.negatives[anchor];
  if (pos.empty() || neg.size() < 2) return batch;
  const auto& samples = pool.data->samples;
  std::vector<std::size_t> by_dist(neg.begin(), neg.end());
  std::stable_sort(by_dist.begin(), by_dist.end(),
                   [&](std::size_t a, std::size_t b) {
                     return euclidean(pool.cached_means[anchor],
                                      pool.cached_means[a]) <
                            euclidean(pool.cached_means[anchor],
                                      pool.cached_means[b]);
                   });
  auto geo_negative = [&](std::size_t a, std::size_t b) {
    return label_of_distance(geo_distance(samples[a].geo, samples[b].geo),
                             pool.positive_radius,
                             pool.negative_radius) == PairLabel::kNegative;
  };
  for (std::size_t p : pos) {
    for (std::size_t n1 : neg) {
      for (std::size_t n2 : by_dist) {
        if (n2 == n1 || !geo_negative(n2, p) || !geo_negative(n2, n1))
          continue;
        batch.anchors.push_back(anchor);
        batch.positives.push_back(p);
        batch.negatives1.push_back(n1);
        batch.negatives2.push_back(n2);
        break;
      }
    }
  }
  return batch;
}

}  // namespace detail

// One epoch worth of training tuples: per anchor (in id order), the
// violating candidates capped to the hardest `cfg.hard_negative_cap`
// negative-bearing tuples. Similar doublets are not capped (positives are
// few by construction).
inline TupleBatch mine_epoch(const MiningPool& pool,
                             const ExperimentConfig& cfg,
                             long long current_epoch) {
  const TupleKind kind = tuple_kind_for(cfg.loss);
  const auto cap = static_cast<std::size_t>(cfg.hard_negative_cap);
  TupleBatch all;
  all.kind = kind;
  for (std::size_t anchor = 0; anchor < pool.data->size(); ++anchor) {
    if (!pool.has_positive(anchor)) continue;
    TupleBatch cand =
        kind == TupleKind::kQuadruplet
            ? detail::quadruplet_candidates_bounded(pool, anchor)
            : candidate_tuples(pool, anchor, kind);
    TupleBatch viol = violating_tuples(pool, cand, cfg, current_epoch);
    if (kind == TupleKind::kDoublet) {
      TupleBatch sim, dis;
      sim.kind = dis.kind = TupleKind::kDoublet;
      for (std::size_t t = 0; t < viol.size(); ++t) {
        TupleBatch& dst = viol.similar[t] ? sim : dis;
        dst.anchors.push_back(viol.anchors[t]);
        dst.positives.push_back(viol.positives[t]);
        dst.similar.push_back(viol.similar[t]);
      }
      all.append(sim);
      all.append(select_hardest(dis, pool.cached_means, cfg, cap));
    } else {
      all.append(select_hardest(viol, pool.cached_means, cfg, cap));
    }
  }
  return all;
}

}  // namespace stun

#endif  // STUN_MINING_HPP_
