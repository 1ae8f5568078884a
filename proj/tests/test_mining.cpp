#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <tuple>

#include "stun/mining.hpp"
#include "stun/rng.hpp"
#include "stun/synthdata.hpp"

using namespace stun;

namespace {

// A bare dataset with given geo tags and 1x1x1 images (mining never looks at
// pixels; means are injected directly).
Dataset geo_dataset(const std::vector<GeoTag>& tags) {
  Dataset d;
  d.image_shape = {1, 1, 1};
  for (std::size_t i = 0; i < tags.size(); ++i) {
    PlaceSample s;
    s.id = static_cast<std::int64_t>(i);
    s.geo = tags[i];
    s.image = Tensor({1, 1, 1});
    d.samples.push_back(std::move(s));
  }
  return d;
}

std::vector<std::vector<double>> random_means(Rng& rng, std::size_t n,
                                              std::size_t dim = 4) {
  std::vector<std::vector<double>> means(n);
  for (auto& m : means) {
    m.resize(dim);
    for (double& v : m) v = rng.normal();
    const double norm = l2_norm(m);
    for (double& v : m) v /= norm;
  }
  return means;
}

ExperimentConfig mining_cfg(LossKind loss = LossKind::kTriplet) {
  ExperimentConfig cfg;
  cfg.loss = loss;
  cfg.margin = 0.1;
  cfg.margin2 = 0.1;
  cfg.encoder.embedding_dim = 4;
  return cfg;
}

using Quad = std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>;

std::set<Quad> to_set(const TupleBatch& b) {
  std::set<Quad> out;
  for (std::size_t t = 0; t < b.size(); ++t)
    out.insert({b.anchors[t], b.positives[t],
                b.negatives1.empty() ? 0 : b.negatives1[t],
                b.negatives2.empty() ? 0 : b.negatives2[t]});
  return out;
}

}  // namespace

TEST_CASE("candidate_tuples forced and empty cases") {
  // three samples: anchor at origin, one positive at 5 m, one negative at 40 m
  const Dataset data = geo_dataset({{0, 0}, {5, 0}, {40, 0}});
  const ExperimentConfig cfg = mining_cfg();
  MiningPool pool = build_mining_pool(data, cfg);

  const TupleBatch forced = candidate_tuples(pool, 0, TupleKind::kTriplet);
  REQUIRE(forced.size() == 1);
  CHECK(forced.anchors[0] == 0);
  CHECK(forced.positives[0] == 1);
  CHECK(forced.negatives1[0] == 2);

  // anchor 2 has no positive: empty batch
  CHECK(!pool.has_positive(2));
  CHECK(candidate_tuples(pool, 2, TupleKind::kTriplet).empty());

  // no negatives: doublets exist but triplets do not
  const Dataset near = geo_dataset({{0, 0}, {5, 0}});
  MiningPool pool2 = build_mining_pool(near, cfg);
  CHECK(candidate_tuples(pool2, 0, TupleKind::kTriplet).empty());
  CHECK(candidate_tuples(pool2, 0, TupleKind::kDoublet).size() == 1);
}

TEST_CASE("candidate enumeration matches a brute-force oracle on a grid") {
  // 20 places on a 100 m grid, 2 samples each (same tag) -> positives are
  // the co-located twins, everything else negative
  std::vector<GeoTag> tags;
  for (int p = 0; p < 20; ++p)
    for (int s = 0; s < 2; ++s)
      tags.push_back({100.0 * (p % 5), 100.0 * (p / 5)});
  const Dataset data = geo_dataset(tags);
  const ExperimentConfig cfg = mining_cfg();
  MiningPool pool = build_mining_pool(data, cfg);

  auto label = [&](std::size_t i, std::size_t j) {
    return label_of_distance(geo_distance(tags[i], tags[j]),
                             cfg.positive_radius_m, cfg.negative_radius_m);
  };

  for (std::size_t anchor : {std::size_t{0}, std::size_t{7}, std::size_t{39}}) {
    // oracle: exhaustive loops straight over the label definition
    std::set<Quad> want_tri;
    for (std::size_t p = 0; p < tags.size(); ++p) {
      if (p == anchor || label(anchor, p) != PairLabel::kPositive) continue;
      for (std::size_t n = 0; n < tags.size(); ++n) {
        if (label(anchor, n) != PairLabel::kNegative) continue;
        want_tri.insert({anchor, p, n, 0});
      }
    }
    CHECK(to_set(candidate_tuples(pool, anchor, TupleKind::kTriplet)) ==
          want_tri);

    std::set<Quad> want_quad;
    for (std::size_t p = 0; p < tags.size(); ++p) {
      if (p == anchor || label(anchor, p) != PairLabel::kPositive) continue;
      for (std::size_t n1 = 0; n1 < tags.size(); ++n1) {
        if (label(anchor, n1) != PairLabel::kNegative) continue;
        for (std::size_t n2 = 0; n2 < tags.size(); ++n2) {
          if (n2 == n1 || label(anchor, n2) != PairLabel::kNegative) continue;
          if (label(p, n2) != PairLabel::kNegative) continue;
          if (label(n1, n2) != PairLabel::kNegative) continue;
          want_quad.insert({anchor, p, n1, n2});
        }
      }
    }
    CHECK(to_set(candidate_tuples(pool, anchor, TupleKind::kQuadruplet)) ==
          want_quad);
  }
}

TEST_CASE("no tuple contains duplicate sample indices across roles") {
  std::vector<GeoTag> tags;
  for (int p = 0; p < 6; ++p)
    for (int s = 0; s < 3; ++s) tags.push_back({50.0 * p, 0.0});
  const Dataset data = geo_dataset(tags);
  MiningPool pool = build_mining_pool(data, mining_cfg());
  for (std::size_t a = 0; a < tags.size(); ++a) {
    for (TupleKind kind :
         {TupleKind::kDoublet, TupleKind::kTriplet, TupleKind::kQuadruplet}) {
      const TupleBatch b = candidate_tuples(pool, a, kind);
      for (std::size_t t = 0; t < b.size(); ++t) {
        std::set<std::size_t> roles = {b.anchors[t], b.positives[t]};
        std::size_t count = 2;
        if (!b.negatives1.empty()) {
          roles.insert(b.negatives1[t]);
          ++count;
        }
        if (!b.negatives2.empty()) {
          roles.insert(b.negatives2[t]);
          ++count;
        }
        CHECK(roles.size() == count);
      }
    }
  }
}

TEST_CASE("filter_violating hand cases") {
  // construct means with prescribed distances
  std::vector<std::vector<double>> means = {
      {1.0, 0.0, 0.0, 0.0},  // anchor
      {0.0, 0.0, 0.0, 0.0},  // positive placeholder
      {0.0, 0.0, 0.0, 0.0},  // negative placeholder
  };
  ExperimentConfig cfg = mining_cfg();

  TupleBatch t;
  t.kind = TupleKind::kTriplet;
  t.anchors = {0};
  t.positives = {1};
  t.negatives1 = {2};

  // d(a,p)=0.9, d(a,n)=0.2 -> hinge 0.8 > 0: kept
  means[1] = means[0];
  means[1][0] -= 0.9;
  means[2] = means[0];
  means[2][0] -= 0.2;
  CHECK(filter_violating(t, means, cfg).size() == 1);

  // d(a,p)=0.1, d(a,n)=0.9 -> hinge 0: dropped
  means[1] = means[0];
  means[1][0] -= 0.1;
  means[2] = means[0];
  means[2][0] -= 0.9;
  CHECK(filter_violating(t, means, cfg).empty());

  // empty input -> empty output
  TupleBatch empty;
  empty.kind = TupleKind::kTriplet;
  CHECK(filter_violating(empty, means, cfg).empty());
}

TEST_CASE("filter_violating is sound and complete on a 100-sample pool") {
  std::vector<GeoTag> tags;
  for (int p = 0; p < 20; ++p)
    for (int s = 0; s < 5; ++s)
      tags.push_back({40.0 * (p % 5), 40.0 * (p / 5)});
  const Dataset data = geo_dataset(tags);
  Rng rng(31);
  const auto means = random_means(rng, tags.size());

  for (LossKind loss : {LossKind::kContrastive, LossKind::kTriplet,
                        LossKind::kQuadruplet}) {
    ExperimentConfig cfg = mining_cfg(loss);
    cfg.margin = loss == LossKind::kContrastive ? 0.4 : 0.1;
    MiningPool pool = build_mining_pool(data, cfg);
    const TupleKind kind = tuple_kind_for(loss);
    for (std::size_t anchor : {std::size_t{0}, std::size_t{42}}) {
      const TupleBatch cand = candidate_tuples(pool, anchor, kind);
      const TupleBatch kept = filter_violating(cand, means, cfg);
      // independent loop: a tuple is kept iff its loss is strictly positive
      std::set<Quad> want;
      for (std::size_t t = 0; t < cand.size(); ++t) {
        const double v = tuple_value_at(cand, t, means, cfg.margin, cfg.margin2);
        if (v > 1e-9)
          want.insert({cand.anchors[t], cand.positives[t],
                       cand.negatives1.empty() ? 0 : cand.negatives1[t],
                       cand.negatives2.empty() ? 0 : cand.negatives2[t]});
      }
      CHECK(to_set(kept) == want);
      for (std::size_t t = 0; t < kept.size(); ++t)
        CHECK(tuple_value_at(kept, t, means, cfg.margin, cfg.margin2) > 1e-9);
    }
  }
}

TEST_CASE("stale cache is rejected") {
  const Dataset data = geo_dataset({{0, 0}, {5, 0}, {40, 0}});
  const ExperimentConfig cfg = mining_cfg();
  MiningPool pool = build_mining_pool(data, cfg);
  Rng rng(32);
  pool.cached_means = random_means(rng, 3);
  pool.cache_epoch = 1;
  const TupleBatch cand = candidate_tuples(pool, 0, TupleKind::kTriplet);
  CHECK_THROWS_AS(violating_tuples(pool, cand, cfg, 2), std::logic_error);
  CHECK_NOTHROW(violating_tuples(pool, cand, cfg, 1));
}

TEST_CASE("select_hardest keeps the k largest losses deterministically") {
  const Dataset data = geo_dataset(
      {{0, 0}, {0, 0}, {40, 0}, {80, 0}, {120, 0}, {160, 0}});
  ExperimentConfig cfg = mining_cfg();
  cfg.hard_negative_cap = 2;
  MiningPool pool = build_mining_pool(data, cfg);

  // anchor 0, positive 1 at distance 0; negatives at varying embedding
  // distances. With d(a,p)=0 a triplet violates iff d(a,n) < margin.
  auto on_circle = [](double c) {
    return std::vector<double>{c, std::sqrt(1.0 - c * c), 0, 0};
  };
  std::vector<std::vector<double>> means(6, std::vector<double>{1, 0, 0, 0});
  means[1] = {1, 0, 0, 0};          // d(a,p) = 0
  means[2] = on_circle(0.9999);     // d ~ 0.014, hardest
  means[3] = on_circle(0.998);      // d ~ 0.063
  means[4] = on_circle(0.9);        // d ~ 0.45, not violating
  means[5] = {0.0, 1.0, 0, 0};      // far

  const TupleBatch cand = candidate_tuples(pool, 0, TupleKind::kTriplet);
  const TupleBatch viol = filter_violating(cand, means, cfg);
  const TupleBatch top = select_hardest(viol, means, cfg, 2);
  REQUIRE(top.size() == 2);
  // hardest = smallest embedding distance to the anchor: indices 2 then 3
  CHECK(top.negatives1[0] == 2);
  CHECK(top.negatives1[1] == 3);
  // determinism under repetition
  const TupleBatch again = select_hardest(viol, means, cfg, 2);
  CHECK(to_set(top) == to_set(again));
}

TEST_CASE("mine_epoch caps per anchor and only returns violating tuples") {
  std::vector<GeoTag> tags;
  for (int p = 0; p < 8; ++p)
    for (int s = 0; s < 4; ++s)
      tags.push_back({60.0 * (p % 4), 60.0 * (p / 4)});
  const Dataset data = geo_dataset(tags);
  ExperimentConfig cfg = mining_cfg(LossKind::kTriplet);
  cfg.hard_negative_cap = 3;
  MiningPool pool = build_mining_pool(data, cfg);
  Rng rng(33);
  pool.cached_means = random_means(rng, tags.size());
  pool.cache_epoch = 0;

  const TupleBatch mined = mine_epoch(pool, cfg, 0);
  std::map<std::size_t, int> per_anchor;
  for (std::size_t t = 0; t < mined.size(); ++t) {
    ++per_anchor[mined.anchors[t]];
    CHECK(tuple_value_at(mined, t, pool.cached_means, cfg.margin, cfg.margin2) >
          1e-9);
  }
  for (const auto& [anchor, count] : per_anchor) CHECK(count <= 3);

  // deterministic under a fixed cache
  const TupleBatch again = mine_epoch(pool, cfg, 0);
  CHECK(mined.anchors == again.anchors);
  CHECK(mined.positives == again.positives);
  CHECK(mined.negatives1 == again.negatives1);
}

TEST_CASE("bounded quadruplet mining returns geometrically valid violating tuples") {
  std::vector<GeoTag> tags;
  for (int p = 0; p < 6; ++p)
    for (int s = 0; s < 3; ++s)
      tags.push_back({50.0 * (p % 3), 50.0 * (p / 3)});
  const Dataset data = geo_dataset(tags);
  ExperimentConfig cfg = mining_cfg(LossKind::kQuadruplet);
  cfg.hard_negative_cap = 4;
  MiningPool pool = build_mining_pool(data, cfg);
  Rng rng(34);
  pool.cached_means = random_means(rng, tags.size());
  pool.cache_epoch = 0;

  const TupleBatch mined = mine_epoch(pool, cfg, 0);
  CHECK(!mined.empty());
  auto label = [&](std::size_t i, std::size_t j) {
    return label_of_distance(geo_distance(tags[i], tags[j]),
                             cfg.positive_radius_m, cfg.negative_radius_m);
  };
  for (std::size_t t = 0; t < mined.size(); ++t) {
    CHECK(label(mined.anchors[t], mined.positives[t]) == PairLabel::kPositive);
    CHECK(label(mined.anchors[t], mined.negatives1[t]) == PairLabel::kNegative);
    CHECK(label(mined.anchors[t], mined.negatives2[t]) == PairLabel::kNegative);
    CHECK(label(mined.positives[t], mined.negatives2[t]) ==
          PairLabel::kNegative);
    CHECK(label(mined.negatives1[t], mined.negatives2[t]) ==
          PairLabel::kNegative);
    CHECK(mined.negatives1[t] != mined.negatives2[t]);
  }
}
