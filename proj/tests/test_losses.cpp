#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "stun/losses.hpp"
#include "stun/rng.hpp"

using namespace stun;
using Catch::Approx;

namespace {

Vec random_unit(Rng& rng, std::size_t d) {
  Vec v(d);
  for (double& x : v) x = rng.normal();
  const double n = l2_norm(v);
  for (double& x : v) x /= n;
  return v;
}

// Central finite differences against the analytic gradient. `f` must be a
// pure function of the referenced vectors.
void check_gradient(const std::function<double()>& f, Vec& x,
                    const Vec& analytic, double h = 1e-5,
                    double rtol = 1e-4) {
  REQUIRE(x.size() == analytic.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f();
    x[i] = keep - h;
    const double fm = f();
    x[i] = keep;
    const double numeric = (fp - fm) / (2.0 * h);
    const double tol = rtol * std::max({1.0, std::abs(numeric),
                                        std::abs(analytic[i])});
    INFO("dim " << i << " analytic " << analytic[i] << " numeric " << numeric);
    CHECK(std::abs(analytic[i] - numeric) <= tol);
  }
}

}  // namespace

TEST_CASE("contrastive loss hand values") {
  const Vec a = {1.0, 0.0}, b = {1.0, 0.0};
  CHECK(contrastive_loss(a, b, true, 0.4).value == 0.0);
  CHECK(contrastive_loss(a, b, false, 0.4).value == Approx(0.4));

  Rng rng(1);
  const Vec u = random_unit(rng, 8), v = random_unit(rng, 8);
  // arithmetic oracle: squared Euclidean distance computed by hand
  double d2 = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) d2 += (u[i] - v[i]) * (u[i] - v[i]);
  CHECK(contrastive_loss(u, v, true, 0.4).value == Approx(d2).epsilon(1e-12));
}

TEST_CASE("contrastive dissimilar branch clamps at zero") {
  const Vec a = {1.0, 0.0}, b = {-1.0, 0.0};  // d^2 = 4 > m
  CHECK(contrastive_loss(a, b, false, 0.4).value == 0.0);
}

TEST_CASE("triplet loss hand values") {
  const Vec a = {1.0, 0.0, 0.0};
  const Vec p = a;
  Vec n = {0.0, 1.0, 0.0};
  // d(a,p)=0, d(a,n)=sqrt(2)>1, margin 0.1: slack satisfied
  CHECK(triplet_loss(a, p, n, 0.1).value == 0.0);
  // all identical: both distances 0, hinge active at the margin
  CHECK(triplet_loss(a, a, a, 0.1).value == Approx(0.1));

  Rng rng(2);
  const Vec x = random_unit(rng, 6), y = random_unit(rng, 6),
            z = random_unit(rng, 6);
  const double oracle =
      std::max(euclidean(x, y) - euclidean(x, z) + 0.1, 0.0);
  CHECK(triplet_loss(x, y, z, 0.1).value == Approx(oracle).epsilon(1e-12));
}

TEST_CASE("quadruplet equals the sum of two triplet oracles") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 5;
    const Vec a = random_unit(rng, d), p = random_unit(rng, d),
              n1 = random_unit(rng, d), n2 = random_unit(rng, d);
    const double m1 = 0.1, m2 = 0.05;
    const double oracle = triplet_loss(a, p, n1, m1).value +
                          triplet_loss(a, p, n2, m2).value;
    CHECK(quadruplet_loss(a, p, n1, n2, m1, m2).value ==
          Approx(oracle).epsilon(1e-12));
  }
  // all identical: each hinge contributes its margin
  const Vec a = {0.0, 1.0};
  CHECK(quadruplet_loss(a, a, a, a, 0.1, 0.1).value == Approx(0.2));
  // both negatives far: hinges inactive
  const Vec p = {0.0, 1.0}, far1 = {1.0, 0.0}, far2 = {-1.0, 0.0};
  CHECK(quadruplet_loss(a, p, far1, far2, 0.1, 0.1).value == 0.0);
}

TEST_CASE("quadruplet swap of negatives is invariant iff margins match") {
  Rng rng(4);
  const std::size_t d = 4;
  const Vec a = random_unit(rng, d), p = random_unit(rng, d),
            n1 = random_unit(rng, d), n2 = random_unit(rng, d);
  CHECK(quadruplet_loss(a, p, n1, n2, 0.1, 0.1).value ==
        Approx(quadruplet_loss(a, p, n2, n1, 0.1, 0.1).value));
  // distinct margins generically break the symmetry
  const double v12 = quadruplet_loss(a, p, n1, n2, 0.3, 0.01).value;
  const double v21 = quadruplet_loss(a, p, n2, n1, 0.3, 0.01).value;
  CHECK(v12 != Approx(v21).epsilon(1e-12));
}

TEST_CASE("student loss hand values") {
  // zero residual, unit variance: both terms vanish
  const Vec mu = {0.3, -0.4}, var1 = {1.0, 1.0};
  CHECK(student_loss(mu, mu, var1).value == Approx(0.0).margin(1e-15));
  // scalar: residual 1, variance 1 -> 1/(2*1) + 0.5 ln 1 = 0.5
  CHECK(student_loss(Vec{1.0}, Vec{0.0}, Vec{1.0}).value == Approx(0.5));
  // zero residual, variance 0.5 -> D * 0.5 ln 0.5 per item
  const std::size_t d = 7;
  const Vec m(d, 0.1), v(d, 0.5);
  CHECK(student_loss(m, m, v).value ==
        Approx(d * 0.5 * std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("student loss minimizer over variance sits at the squared residual") {
  // dense grid over (0, 1]; spec tolerance is the grid resolution
  const double r = 0.6;
  double best_v = 0.0, best_loss = 1e100;
  for (int i = 1; i <= 1000; ++i) {
    const double v = i / 1000.0;
    const double loss = student_loss(Vec{r}, Vec{0.0}, Vec{v}).value;
    if (loss < best_loss) {
      best_loss = loss;
      best_v = v;
    }
  }
  CHECK(best_v == Approx(r * r).margin(1e-3));
}

TEST_CASE("student loss rejects nonpositive variance") {
  CHECK_THROWS_AS(student_loss(Vec{0.0}, Vec{0.0}, Vec{0.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(student_loss(Vec{0.0}, Vec{0.0}, Vec{-0.5}),
                  std::invalid_argument);
}

TEST_CASE("mls hand values and symmetry") {
  // identical means, sigma^2 = 0.5 each, one dimension: -0.5 ln(1) = 0
  EmbeddingDistribution a{{0.3}, {0.5}}, b{{0.3}, {0.5}};
  CHECK(mls_loss(a, b) == Approx(0.0).margin(1e-15));

  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    EmbeddingDistribution x{random_unit(rng, 4), {}};
    EmbeddingDistribution y{random_unit(rng, 4), {}};
    for (int k = 0; k < 4; ++k) {
      x.variance.push_back(rng.uniform(0.05, 1.0));
      y.variance.push_back(rng.uniform(0.05, 1.0));
    }
    CHECK(mls_loss(x, y) == Approx(mls_loss(y, x)).epsilon(1e-12));
  }

  // zero residual: larger summed variance strictly lowers the score
  EmbeddingDistribution lo{{0.1}, {0.2}}, hi{{0.1}, {0.4}};
  CHECK(mls_loss(lo, lo) > mls_loss(hi, hi));
}

TEST_CASE("loss gradients match central finite differences") {
  Rng rng(6);
  const double h = 1e-5, rtol = 1e-4;
  const std::size_t d = 8;
  int done = 0;
  while (done < 100) {
    Vec a = random_unit(rng, d), p = random_unit(rng, d),
        n = random_unit(rng, d), n2v = random_unit(rng, d);

    // keep clear of hinge kinks so finite differences are valid
    const double m = 0.1;
    const double tri_margin =
        euclidean(a, p) - euclidean(a, n) + m;
    if (std::abs(tri_margin) < 1e-3) {
      ++done;
      continue;
    }

    {
      Vec ga(d, 0.0), gp(d, 0.0), gn(d, 0.0);
      triplet_value(a, p, n, m, &ga, &gp, &gn);
      auto f = [&]() { return triplet_value(a, p, n, m); };
      check_gradient(f, a, ga, h, rtol);
      check_gradient(f, p, gp, h, rtol);
      check_gradient(f, n, gn, h, rtol);
    }
    {
      const double d2 = squared_euclidean(a, p);
      const bool similar = done % 2 == 0;
      if (!similar && std::abs(0.4 - d2) < 1e-3) {
        ++done;
        continue;
      }
      Vec ga(d, 0.0), gp(d, 0.0);
      contrastive_value(a, p, similar, 0.4, &ga, &gp);
      auto f = [&]() { return contrastive_value(a, p, similar, 0.4); };
      check_gradient(f, a, ga, h, rtol);
      check_gradient(f, p, gp, h, rtol);
    }
    {
      const double m2 = 0.2;
      const double quad_margin2 =
          euclidean(a, p) - euclidean(a, n2v) + m2;
      if (std::abs(quad_margin2) > 1e-3) {
        Vec ga(d, 0.0), gp(d, 0.0), gn1(d, 0.0), gn2(d, 0.0);
        quadruplet_value(a, p, n, n2v, m, m2, &ga, &gp, &gn1, &gn2);
        auto f = [&]() { return quadruplet_value(a, p, n, n2v, m, m2); };
        check_gradient(f, a, ga, h, rtol);
        check_gradient(f, n2v, gn2, h, rtol);
      }
    }
    {
      Vec mu_s = random_unit(rng, d), mu_t = random_unit(rng, d);
      Vec var(d);
      for (double& v : var) v = rng.uniform(0.05, 1.0);
      Vec gm(d, 0.0), gv(d, 0.0);
      student_value(mu_s, mu_t, var, &gm, &gv);
      auto f = [&]() { return student_value(mu_s, mu_t, var); };
      check_gradient(f, mu_s, gm, h, rtol);
      check_gradient(f, var, gv, h, rtol);
    }
    {
      EmbeddingDistribution di{random_unit(rng, d), {}},
          dj{random_unit(rng, d), {}};
      for (std::size_t k = 0; k < d; ++k) {
        di.variance.push_back(rng.uniform(0.05, 1.0));
        dj.variance.push_back(rng.uniform(0.05, 1.0));
      }
      Vec gmi(d, 0.0), gmj(d, 0.0), gvi(d, 0.0), gvj(d, 0.0);
      mls_score(di, dj, &gmi, &gmj, &gvi, &gvj);
      auto f = [&]() { return mls_score(di, dj); };
      check_gradient(f, di.mean, gmi, h, rtol);
      check_gradient(f, dj.mean, gmj, h, rtol);
      check_gradient(f, di.variance, gvi, h, rtol);
      check_gradient(f, dj.variance, gvj, h, rtol);
    }
    ++done;
  }
}

TEST_CASE("student loss exposes no gradient path to the teacher mean") {
  // The API only ever produces gradients for the student mean and variance;
  // perturbing the teacher target changes the value but no gradient slot
  // exists for it.
  Rng rng(7);
  Vec mu_s = random_unit(rng, 4), mu_t = random_unit(rng, 4);
  Vec var = {0.4, 0.5, 0.6, 0.7};
  Vec gm(4, 0.0), gv(4, 0.0);
  const double v1 = student_value(mu_s, mu_t, var, &gm, &gv);
  mu_t[0] += 0.1;
  const double v2 = student_value(mu_s, mu_t, var);
  CHECK(v1 != Approx(v2));  // value reacts to the target
  // gradient vector layout: exactly student mean + student variance, and
  // batch API produces no teacher gradient either
  std::vector<Vec> gms, gvs;
  student_loss({mu_s}, {mu_t}, {var}, &gms, &gvs);
  CHECK(gms.size() == 1);
  CHECK(gvs.size() == 1);
}

TEST_CASE("batch losses are permutation-equivariant") {
  Rng rng(8);
  const std::size_t d = 6;
  std::vector<Vec> means;
  for (int i = 0; i < 9; ++i) means.push_back(random_unit(rng, d));
  TupleBatch batch;
  batch.kind = TupleKind::kTriplet;
  batch.anchors = {0, 3, 6};
  batch.positives = {1, 4, 7};
  batch.negatives1 = {2, 5, 8};

  const LossValue fwd = tuple_loss(batch, means, 0.1, 0.1);
  TupleBatch rev;
  rev.kind = TupleKind::kTriplet;
  rev.anchors = {6, 3, 0};
  rev.positives = {7, 4, 1};
  rev.negatives1 = {8, 5, 2};
  const LossValue bwd = tuple_loss(rev, means, 0.1, 0.1);

  REQUIRE(fwd.per_item.size() == 3);
  CHECK(fwd.per_item[0] == bwd.per_item[2]);
  CHECK(fwd.per_item[2] == bwd.per_item[0]);
  CHECK(fwd.value == Approx(bwd.value).epsilon(1e-12));
  // reduction contract: value is the mean of per_item
  double mean = (fwd.per_item[0] + fwd.per_item[1] + fwd.per_item[2]) / 3.0;
  CHECK(fwd.value == Approx(mean).epsilon(1e-15));
}

TEST_CASE("hinge per-item values are nonnegative") {
  Rng rng(9);
  std::vector<Vec> means;
  for (int i = 0; i < 8; ++i) means.push_back(random_unit(rng, 4));
  TupleBatch batch;
  batch.kind = TupleKind::kQuadruplet;
  batch.anchors = {0, 4};
  batch.positives = {1, 5};
  batch.negatives1 = {2, 6};
  batch.negatives2 = {3, 7};
  for (double v : tuple_loss(batch, means, 0.1, 0.1).per_item)
    CHECK(v >= 0.0);
}

TEST_CASE("dimension mismatch raises") {
  CHECK_THROWS_AS(contrastive_loss(Vec{1.0}, Vec{1.0, 0.0}, true, 0.1),
                  std::invalid_argument);
  CHECK_THROWS_AS(triplet_loss(Vec{1.0, 0.0}, Vec{1.0}, Vec{1.0}, 0.1),
                  std::invalid_argument);
}
