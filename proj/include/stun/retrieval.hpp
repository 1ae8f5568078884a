#ifndef STUN_RETRIEVAL_HPP_
#define STUN_RETRIEVAL_HPP_

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "stun/file_io.hpp"
#include "stun/losses.hpp"
#include "stun/types.hpp"

namespace stun {

// Flat embedding database. Search is exhaustive by design: metric numbers
// must be exact, and the scale here makes approximate indexes pointless.
struct EmbeddingIndex {
  std::vector<std::int64_t> ids;
  std::vector<std::vector<double>> means;      // N x D, unit rows
  std::vector<std::vector<double>> variances;  // N x D
  std::vector<GeoTag> geos;

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return means.empty() ? 0 : means[0].size(); }
};

inline EmbeddingIndex build_index(
    const std::vector<EmbeddingDistribution>& embeddings,
    const std::vector<std::int64_t>& ids, const std::vector<GeoTag>& geos) {
  if (embeddings.empty())
    throw std::invalid_argument("build_index: empty embedding list");
  if (ids.size() != embeddings.size() || geos.size() != embeddings.size())
    throw std::invalid_argument("build_index: ids/geos length mismatch");
  const std::size_t d = embeddings[0].mean.size();
  std::set<std::int64_t> seen;
  EmbeddingIndex index;
  index.ids = ids;
  index.geos = geos;
  index.means.reserve(embeddings.size());
  index.variances.reserve(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].mean.size() != d ||
        embeddings[i].variance.size() != d)
      throw std::invalid_argument("build_index: dimension mismatch at row " +
                                  std::to_string(i));
    if (!seen.insert(ids[i]).second)
      throw std::invalid_argument("build_index: duplicate id " +
                                  std::to_string(ids[i]));
    index.means.push_back(embeddings[i].mean);
    index.variances.push_back(embeddings[i].variance);
  }
  return index;
}

// Ranked candidates for one query. `scores` are Euclidean distances in
// ascending order, or mutual-likelihood scores in descending order for the
// MLS-matching variant.
struct RetrievalResult {
  std::int64_t query_id = -1;
  std::vector<std::int64_t> candidate_ids;
  std::vector<double> scores;
  double query_uncertainty = 0.0;
};

// Mean of the variance along all embedding dimensions.
inline double uncertainty_scalar(const EmbeddingDistribution& dist) {
  if (dist.variance.empty())
    throw std::invalid_argument("uncertainty_scalar: empty variance");
  double s = 0.0;
  for (double v : dist.variance) s += v;
  return s / static_cast<double>(dist.variance.size());
}

namespace detail {

template <class Better>
RetrievalResult ranked_query(const EmbeddingIndex& index,
                             const EmbeddingDistribution& query, std::size_t k,
                             std::int64_t query_id,
                             const std::vector<double>& scores, Better better) {
  if (k > index.size())
    throw std::invalid_argument("query: k exceeds index size");
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), 0);
  // Full ordering with id tie-break, then truncate; exact by construction.
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return better(scores[a], scores[b]);
    return index.ids[a] < index.ids[b];
  });
  RetrievalResult r;
  r.query_id = query_id;
  r.query_uncertainty = uncertainty_scalar(query);
  for (std::size_t t = 0; t < k; ++t) {
    r.candidate_ids.push_back(index.ids[order[t]]);
    r.scores.push_back(scores[order[t]]);
  }
  return r;
}

}  // namespace detail

// Exact top-k by Euclidean distance on the means, ties broken by ascending
// id.
inline RetrievalResult query_topk(const EmbeddingIndex& index,
                                  const EmbeddingDistribution& query,
                                  std::size_t k, std::int64_t query_id = -1) {
  std::vector<double> d(index.size());
  for (std::size_t i = 0; i < index.size(); ++i)
    d[i] = euclidean(query.mean, index.means[i]);
  return detail::ranked_query(index, query, k, query_id, d,
                              [](double a, double b) { return a < b; });
}

// Exact top-k by mutual likelihood score (descending), using both the query
// and the database variances.
inline RetrievalResult query_topk_mls(const EmbeddingIndex& index,
                                      const EmbeddingDistribution& query,
                                      std::size_t k,
                                      std::int64_t query_id = -1) {
  std::vector<double> s(index.size());
  for (std::size_t i = 0; i < index.size(); ++i)
    s[i] = mls_score(query,
                     EmbeddingDistribution{index.means[i], index.variances[i]});
  return detail::ranked_query(index, query, k, query_id, s,
                              [](double a, double b) { return a > b; });
}

// --- index file: magic, version, N, D, then ids / means / variances / geos.
inline constexpr char kIndexMagic[] = "STUNIDX1";
inline constexpr std::uint64_t kIndexVersion = 1;

inline void save_index(const EmbeddingIndex& index, const std::string& path) {
  ByteWriter w;
  w.str(kIndexMagic);
  w.u64(kIndexVersion);
  w.u64(index.size());
  w.u64(index.dim());
  w.i64_array(index.ids);
  for (const auto& row : index.means) w.f64_array(row);
  for (const auto& row : index.variances) w.f64_array(row);
  for (const GeoTag& g : index.geos) {
    w.f64(g.easting);
    w.f64(g.northing);
  }
  write_file_atomic(path, w.buf);
}

inline EmbeddingIndex load_index(const std::string& path) {
  const std::string raw = read_file(path);
  ByteReader r(raw);
  if (r.str(8) != kIndexMagic)
    throw DataError("'" + path + "' is not an index file");
  if (r.u64() != kIndexVersion)
    throw DataError("unsupported index version in '" + path + "'");
  const std::uint64_t n = r.u64();
  const std::uint64_t d = r.u64();
  EmbeddingIndex index;
  index.ids = r.i64_array(n);
  index.means.reserve(n);
  index.variances.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) index.means.push_back(r.f64_array(d));
  for (std::uint64_t i = 0; i < n; ++i)
    index.variances.push_back(r.f64_array(d));
  index.geos.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    GeoTag g;
    g.easting = r.f64_array(1)[0];
    g.northing = r.f64_array(1)[0];
    index.geos.push_back(g);
  }
  return index;
}

}  // namespace stun

#endif  // STUN_RETRIEVAL_HPP_
