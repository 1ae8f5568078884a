#ifndef STUN_EVAL_HPP_
#define STUN_EVAL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "stun/tensor.hpp"

namespace stun {

// Everything the metrics need to know about one evaluated query: the
// correctness flag of each ranked candidate (geo label against the query),
// the query's uncertainty scalar, and the score of its top-1 candidate
// (ascending-is-better convention).
struct QueryOutcome {
  std::int64_t query_id = -1;
  std::vector<std::uint8_t> flags;
  double uncertainty = 0.0;
  double top1_distance = 0.0;
};

namespace detail {

inline void check_outcomes(const std::vector<QueryOutcome>& outcomes,
                           std::size_t n) {
  if (outcomes.empty())
    throw std::invalid_argument("metrics: empty outcome list");
  for (const QueryOutcome& q : outcomes)
    if (n > q.flags.size())
      throw std::invalid_argument("metrics: n exceeds retrieval depth");
}

}  // namespace detail

// Fraction of queries with at least one true positive in the top n.
inline double recall_at_n(const std::vector<QueryOutcome>& outcomes,
                          std::size_t n) {
  detail::check_outcomes(outcomes, n);
  std::size_t hits = 0;
  for (const QueryOutcome& q : outcomes)
    for (std::size_t k = 0; k < n; ++k)
      if (q.flags[k]) {
        ++hits;
        break;
      }
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

// Truncated average precision divided by n, averaged over queries. The
// normalization makes mAP@1 coincide with r@1 exactly.
inline double map_at_n(const std::vector<QueryOutcome>& outcomes,
                       std::size_t n) {
  detail::check_outcomes(outcomes, n);
  double total = 0.0;
  for (const QueryOutcome& q : outcomes) {
    double ap = 0.0;
    std::size_t correct = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (!q.flags[k]) continue;
      ++correct;
      ap += static_cast<double>(correct) / static_cast<double>(k + 1);
    }
    total += ap / static_cast<double>(n);
  }
  return total / static_cast<double>(outcomes.size());
}

namespace detail {

// Rank-based AP over (query, top-1) pairs: pairs sorted by ascending top-1
// score (id tie-break), label = top-1 correctness. An all-positive set
// scores 1 by the rank formula; an all-negative set returns the given
// default instead of 0/0.
inline double rank_ap(const std::vector<QueryOutcome>& outcomes,
                      double all_negative_value, bool* degenerate = nullptr) {
  std::vector<std::size_t> order(outcomes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (outcomes[a].top1_distance != outcomes[b].top1_distance)
      return outcomes[a].top1_distance < outcomes[b].top1_distance;
    return outcomes[a].query_id < outcomes[b].query_id;
  });
  std::size_t positives = 0;
  for (const QueryOutcome& q : outcomes) positives += q.flags[0] ? 1 : 0;
  if (degenerate) *degenerate = positives == 0;
  if (positives == 0) return all_negative_value;
  double ap = 0.0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (!outcomes[order[i]].flags[0]) continue;
    ++tp;
    ap += static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  return ap / static_cast<double>(positives);
}

}  // namespace detail

// Area under the precision-recall curve of the binary problem "is the top-1
// candidate a true positive", swept over the top-1 score. An all-correct
// set scores 1; a set with no correct pair has no defined recall axis and is
// rejected.
inline double average_precision(const std::vector<QueryOutcome>& outcomes) {
  detail::check_outcomes(outcomes, 1);
  std::size_t positives = 0;
  for (const QueryOutcome& q : outcomes) positives += q.flags[0] ? 1 : 0;
  if (positives == 0)
    throw std::invalid_argument(
        "average_precision: degenerate label set (no positive pair)");
  return detail::rank_ap(outcomes, 0.0);
}

// Per-bin convention used inside calibration reports: an all-correct bin has
// AP 1 by the rank formula, an all-wrong bin scores 0.
inline double average_precision_or_default(
    const std::vector<QueryOutcome>& outcomes) {
  return detail::rank_ap(outcomes, 0.0);
}

struct BinAssignment {
  std::vector<std::size_t> bin_of;     // per input position
  std::vector<std::size_t> bin_sizes;  // per bin
  std::vector<double> bin_means;       // mean raw uncertainty per bin
  std::vector<double> levels;          // normalized so the max level is 1.0
};

// Splits queries into M equal bins (+-1; earlier bins take the extras) by
// ascending uncertainty. Levels are bin means normalized by the largest bin
// mean; an all-zero input degenerates to level 1.0 everywhere.
inline BinAssignment bin_uncertainty_levels(const std::vector<double>& u,
                                            std::size_t m) {
  if (m < 1 || m > u.size())
    throw std::invalid_argument("bin_uncertainty_levels: invalid bin count");
  std::vector<std::size_t> order(u.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return u[a] < u[b]; });
  BinAssignment out;
  out.bin_of.assign(u.size(), 0);
  out.bin_sizes.assign(m, 0);
  out.bin_means.assign(m, 0.0);
  const std::size_t base = u.size() / m;
  const std::size_t extra = u.size() % m;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < m; ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    for (std::size_t t = 0; t < size; ++t, ++pos) {
      out.bin_of[order[pos]] = b;
      out.bin_means[b] += u[order[pos]];
    }
    out.bin_sizes[b] = size;
    if (size) out.bin_means[b] /= static_cast<double>(size);
  }
  double max_mean = 0.0;
  for (double v : out.bin_means) max_mean = std::max(max_mean, v);
  out.levels.assign(m, 1.0);
  if (max_mean > 0.0)
    for (std::size_t b = 0; b < m; ++b)
      out.levels[b] = out.bin_means[b] / max_mean;
  return out;
}

enum class MetricKind { kRecallAtN, kMapAtN, kAp };

inline std::string to_string(MetricKind k, std::size_t n) {
  switch (k) {
    case MetricKind::kRecallAtN: return "r@" + std::to_string(n);
    case MetricKind::kMapAtN: return "mAP@" + std::to_string(n);
    case MetricKind::kAp: return "AP";
  }
  return "?";
}

struct CalibrationBin {
  std::size_t size = 0;
  double mean_uncertainty = 0.0;
  double uncertainty_level = 0.0;  // U(B_i)
  double confidence = 0.0;         // C(B_i) = 1 - U(B_i)
  double metric_value = 0.0;
};

// Per-bin calibration data plus the expected calibration error
// sum_i |B_i| * |metric(B_i) - C(B_i)| / sum_i |B_i|.
struct CalibrationReport {
  MetricKind metric = MetricKind::kAp;
  std::size_t metric_n = 0;
  std::size_t num_bins = 0;
  double ece = 0.0;
  std::vector<CalibrationBin> bins;
};

inline double metric_value(const std::vector<QueryOutcome>& outcomes,
                           MetricKind kind, std::size_t n) {
  switch (kind) {
    case MetricKind::kRecallAtN: return recall_at_n(outcomes, n);
    case MetricKind::kMapAtN: return map_at_n(outcomes, n);
    case MetricKind::kAp: return average_precision_or_default(outcomes);
  }
  return 0.0;
}

inline CalibrationReport ece(const std::vector<QueryOutcome>& outcomes,
                             MetricKind kind, std::size_t n, std::size_t m) {
  detail::check_outcomes(outcomes, kind == MetricKind::kAp ? 1 : n);
  std::vector<double> u(outcomes.size());
  for (std::size_t i = 0; i < outcomes.size(); ++i)
    u[i] = outcomes[i].uncertainty;
  const BinAssignment bins = bin_uncertainty_levels(u, m);

  CalibrationReport report;
  report.metric = kind;
  report.metric_n = n;
  report.num_bins = m;
  report.bins.resize(m);
  std::vector<std::vector<QueryOutcome>> grouped(m);
  for (std::size_t i = 0; i < outcomes.size(); ++i)
    grouped[bins.bin_of[i]].push_back(outcomes[i]);
  double weighted = 0.0;
  for (std::size_t b = 0; b < m; ++b) {
    CalibrationBin& cb = report.bins[b];
    cb.size = bins.bin_sizes[b];
    cb.mean_uncertainty = bins.bin_means[b];
    cb.uncertainty_level = bins.levels[b];
    cb.confidence = 1.0 - bins.levels[b];
    cb.metric_value = grouped[b].empty()
                          ? 0.0
                          : metric_value(grouped[b], kind, n);
    weighted += static_cast<double>(cb.size) *
                std::abs(cb.metric_value - cb.confidence);
  }
  report.ece = weighted / static_cast<double>(outcomes.size());
  return report;
}

struct RemovalPoint {
  double fraction = 0.0;
  double correctness = 0.0;  // top-1 correctness ratio of the kept queries
  std::size_t kept = 0;
};

// Correctness of the remaining (query, top-1) pairs after discarding the
// most uncertain fraction of queries.
inline std::vector<RemovalPoint> removal_curve(
    const std::vector<QueryOutcome>& outcomes,
    const std::vector<double>& fractions) {
  detail::check_outcomes(outcomes, 1);
  std::vector<std::size_t> order(outcomes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (outcomes[a].uncertainty != outcomes[b].uncertainty)
      return outcomes[a].uncertainty < outcomes[b].uncertainty;
    return outcomes[a].query_id < outcomes[b].query_id;
  });
  std::vector<RemovalPoint> curve;
  curve.reserve(fractions.size());
  for (double f : fractions) {
    if (f < 0.0 || f >= 1.0)
      throw std::invalid_argument("removal_curve: fraction outside [0, 1)");
    const auto drop = static_cast<std::size_t>(
        std::floor(f * static_cast<double>(outcomes.size())));
    const std::size_t keep = outcomes.size() - drop;
    if (keep == 0)
      throw std::invalid_argument("removal_curve: fraction removes all queries");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < keep; ++i)
      correct += outcomes[order[i]].flags[0] ? 1 : 0;
    curve.push_back({f, static_cast<double>(correct) / static_cast<double>(keep),
                     keep});
  }
  return curve;
}

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double threshold = 0.0;  // top-1 score at this sweep position
};

// Precision/recall pairs over the top-1 score sweep, one point per pair in
// ascending score order. The step integral of this curve equals
// average_precision.
inline std::vector<PrPoint> pr_curve(const std::vector<QueryOutcome>& outcomes) {
  detail::check_outcomes(outcomes, 1);
  std::size_t positives = 0;
  for (const QueryOutcome& q : outcomes) positives += q.flags[0] ? 1 : 0;
  if (positives == 0)
    throw std::invalid_argument(
        "pr_curve: degenerate label set (no positive pair)");
  std::vector<std::size_t> order(outcomes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (outcomes[a].top1_distance != outcomes[b].top1_distance)
      return outcomes[a].top1_distance < outcomes[b].top1_distance;
    return outcomes[a].query_id < outcomes[b].query_id;
  });
  std::vector<PrPoint> curve;
  curve.reserve(outcomes.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    tp += outcomes[order[i]].flags[0] ? 1 : 0;
    curve.push_back({static_cast<double>(tp) / static_cast<double>(positives),
                     static_cast<double>(tp) / static_cast<double>(i + 1),
                     outcomes[order[i]].top1_distance});
  }
  return curve;
}

inline double pr_curve_area(const std::vector<PrPoint>& curve) {
  double area = 0.0;
  double prev_recall = 0.0;
  for (const PrPoint& p : curve) {
    area += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return area;
}

// Histogram Spread: interquartile range of the pixel intensity distribution
// over the possible intensity range. Quartiles are linearly interpolated
// order statistics of the cumulative histogram.
inline double histogram_spread(const Tensor& gray, double intensity_range = 1.0) {
  if (gray.empty())
    throw std::invalid_argument("histogram_spread: empty image");
  if (intensity_range <= 0.0)
    throw std::invalid_argument("histogram_spread: nonpositive range");
  std::vector<double> v = gray.data;
  std::sort(v.begin(), v.end());
  auto quantile = [&](double p) {
    const double h = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(lo);
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] + frac * (v[lo + 1] - v[lo]);
  };
  return (quantile(0.75) - quantile(0.25)) / intensity_range;
}

// Mean over channels; the grayscale input to histogram_spread.
inline Tensor to_grayscale(const Tensor& image) {
  if (image.rank() != 3)
    throw std::invalid_argument("to_grayscale: expected CxHxW");
  Tensor g({1, image.dim(1), image.dim(2)});
  const std::size_t hw = image.dim(1) * image.dim(2);
  for (std::size_t c = 0; c < image.dim(0); ++c)
    for (std::size_t i = 0; i < hw; ++i) g.data[i] += image.data[c * hw + i];
  for (std::size_t i = 0; i < hw; ++i)
    g.data[i] /= static_cast<double>(image.dim(0));
  return g;
}

// Spearman rank correlation with average ranks on ties.
inline double spearman_correlation(const std::vector<double>& x,
                                   const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman_correlation: need paired data");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(rx.size());
  my /= static_cast<double>(ry.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx, dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace stun

#endif  // STUN_EVAL_HPP_
