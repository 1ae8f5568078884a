#ifndef STUN_TYPES_HPP_
#define STUN_TYPES_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stun/config.hpp"
#include "stun/geo.hpp"
#include "stun/tensor.hpp"

namespace stun {

// One observation: image tensor (CxHxW), planar geo tag and a dataset-unique
// id. Immutable after construction by convention.
struct PlaceSample {
  std::int64_t id = 0;
  Tensor image;
  GeoTag geo;
};

struct Dataset {
  std::vector<PlaceSample> samples;
  // Ground-truth injected noise std per sample; empty when unknown (real
  // data). Parallel to `samples` when present.
  std::vector<double> noise_std;
  std::vector<int> image_shape = {0, 0, 0};  // declared CxHxW

  std::size_t size() const { return samples.size(); }
  bool has_noise_labels() const { return noise_std.size() == samples.size(); }
};

inline PairLabel label_of_pair(const PlaceSample& q, const PlaceSample& c,
                               const ExperimentConfig& cfg) {
  return label_of_distance(geo_distance(q.geo, c.geo), cfg.positive_radius_m,
                           cfg.negative_radius_m);
}

// Per-sample Gaussian embedding. The mean is unit-L2 (normalization head)
// and the variance sigmoid-bounded to (0, 1] per dimension.
struct EmbeddingDistribution {
  std::vector<double> mean;
  std::vector<double> variance;
};

enum class TupleKind { kDoublet, kTriplet, kQuadruplet };

inline std::string to_string(TupleKind k) {
  switch (k) {
    case TupleKind::kDoublet: return "doublet";
    case TupleKind::kTriplet: return "triplet";
    case TupleKind::kQuadruplet: return "quadruplet";
  }
  return "?";
}

inline TupleKind tuple_kind_for(LossKind k) {
  switch (k) {
    case LossKind::kContrastive: return TupleKind::kDoublet;
    case LossKind::kTriplet: return TupleKind::kTriplet;
    case LossKind::kQuadruplet: return TupleKind::kQuadruplet;
  }
  return TupleKind::kTriplet;
}

// A batch of mined tuples, stored as parallel index lists into a dataset.
// Doublets use (anchors[i], positives[i]) as the pair with similar[i] as the
// ground-truth similarity flag; triplets add negatives1, quadruplets also
// negatives2. Fields unused by a kind stay empty.
struct TupleBatch {
  TupleKind kind = TupleKind::kTriplet;
  std::vector<std::size_t> anchors;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives1;
  std::vector<std::size_t> negatives2;
  std::vector<std::uint8_t> similar;  // doublets only

  std::size_t size() const { return anchors.size(); }
  bool empty() const { return anchors.empty(); }

  void append(const TupleBatch& o) {
    if (o.kind != kind) throw std::invalid_argument("TupleBatch kind mismatch");
    anchors.insert(anchors.end(), o.anchors.begin(), o.anchors.end());
    positives.insert(positives.end(), o.positives.begin(), o.positives.end());
    negatives1.insert(negatives1.end(), o.negatives1.begin(),
                      o.negatives1.end());
    negatives2.insert(negatives2.end(), o.negatives2.begin(),
                      o.negatives2.end());
    similar.insert(similar.end(), o.similar.begin(), o.similar.end());
  }

  void validate(std::size_t dataset_size) const {
    const std::size_t n = anchors.size();
    auto check_list = [&](const std::vector<std::size_t>& v, const char* name,
                          bool used) {
      if (used && v.size() != n)
        throw std::invalid_argument(std::string("TupleBatch: ") + name +
                                    " length mismatch");
      if (!used && !v.empty())
        throw std::invalid_argument(std::string("TupleBatch: ") + name +
                                    " must be empty for " + to_string(kind));
      for (std::size_t idx : v)
        if (idx >= dataset_size)
          throw std::invalid_argument("TupleBatch: index out of range");
    };
    check_list(positives, "positives", true);
    check_list(negatives1, "negatives1", kind != TupleKind::kDoublet);
    check_list(negatives2, "negatives2", kind == TupleKind::kQuadruplet);
    if (kind == TupleKind::kDoublet) {
      if (similar.size() != n)
        throw std::invalid_argument("TupleBatch: similar length mismatch");
    } else if (!similar.empty()) {
      throw std::invalid_argument("TupleBatch: similar only valid for doublets");
    }
  }
};

}  // namespace stun

#endif  // STUN_TYPES_HPP_
