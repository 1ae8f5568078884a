#ifndef STUN_LOSSES_HPP_
#define STUN_LOSSES_HPP_

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "stun/tensor.hpp"
#include "stun/types.hpp"

namespace stun {

// Floor applied inside logs and divisions; keeps gradients finite near the
// sigmoid's lower asymptote.
inline constexpr double kVarianceFloor = 1e-6;

// Scalar loss plus its per-tuple breakdown. `value` is the mean of
// `per_item`; hinge-style losses have nonnegative entries, the
// uncertainty-aware loss may go negative through its log term.
struct LossValue {
  double value = 0.0;
  std::vector<double> per_item;

  static LossValue reduce(std::vector<double> items) {
    LossValue lv;
    lv.per_item = std::move(items);
    double s = 0.0;
    for (double v : lv.per_item) s += v;
    lv.value = lv.per_item.empty() ? 0.0 : s / lv.per_item.size();
    return lv;
  }
};

using Vec = std::vector<double>;

namespace detail {

inline void axpy(double a, const Vec& x, Vec& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void check_var(const Vec& v, const char* what) {
  for (double x : v)
    if (!(x > 0.0))
      throw std::invalid_argument(std::string(what) + ": nonpositive variance");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Per-tuple values and gradients. Gradient outputs, when non-null, must be
// zero-initialized vectors of the input dimension; contributions are
// accumulated scaled by `w`.
// ---------------------------------------------------------------------------

// Similar pairs pull with squared distance, dissimilar pairs push through a
// hinge at margin m on the squared distance.
inline double contrastive_value(const Vec& a, const Vec& b, bool similar,
                                double m, Vec* ga = nullptr, Vec* gb = nullptr,
                                double w = 1.0) {
  check_same_dim(a, b, "contrastive_loss");
  const double d2 = squared_euclidean(a, b);
  if (similar) {
    if (ga)
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double g = 2.0 * (a[i] - b[i]) * w;
        (*ga)[i] += g;
        (*gb)[i] -= g;
      }
    return d2;
  }
  const double h = m - d2;
  if (h <= 0.0) return 0.0;
  if (ga)
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double g = -2.0 * (a[i] - b[i]) * w;
      (*ga)[i] += g;
      (*gb)[i] -= g;
    }
  return h;
}

namespace detail {

// d ||a-b|| / da = (a-b)/||a-b||; zero at coincident points (subgradient).
inline void add_unit_diff_grad(const Vec& a, const Vec& b, double dist,
                               double w, Vec& ga, Vec& gb) {
  if (dist < 1e-12) return;
  const double s = w / dist;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double g = s * (a[i] - b[i]);
    ga[i] += g;
    gb[i] -= g;
  }
}

}  // namespace detail

inline double triplet_value(const Vec& a, const Vec& p, const Vec& n, double m,
                            Vec* ga = nullptr, Vec* gp = nullptr,
                            Vec* gn = nullptr, double w = 1.0) {
  check_same_dim(a, p, "triplet_loss");
  check_same_dim(a, n, "triplet_loss");
  const double dap = euclidean(a, p);
  const double dan = euclidean(a, n);
  const double h = dap - dan + m;
  if (h <= 0.0) return 0.0;
  if (ga) {
    detail::add_unit_diff_grad(a, p, dap, w, *ga, *gp);
    detail::add_unit_diff_grad(a, n, dan, -w, *ga, *gn);
  }
  return h;
}

// Sum of two hinges; the second pushes the anchor away from an extra
// negative that is dissimilar to every other member of the quadruplet.
inline double quadruplet_value(const Vec& a, const Vec& p, const Vec& n1,
                               const Vec& n2, double m1, double m2,
                               Vec* ga = nullptr, Vec* gp = nullptr,
                               Vec* gn1 = nullptr, Vec* gn2 = nullptr,
                               double w = 1.0) {
  const double h1 = triplet_value(a, p, n1, m1, ga, gp, gn1, w);
  const double h2 = triplet_value(a, p, n2, m2, ga, gp, gn2, w);
  return h1 + h2;
}

// Uncertainty-aware regression of the student mean onto the frozen teacher
// mean: per dimension, residual^2 / (2 var) + 0.5 ln(var), summed over
// dimensions. The teacher mean is a constant target; no gradient is ever
// produced for it.
inline double student_value(const Vec& student_mean, const Vec& teacher_mean,
                            const Vec& student_var, Vec* gmean = nullptr,
                            Vec* gvar = nullptr, double w = 1.0) {
  check_same_dim(student_mean, teacher_mean, "student_loss");
  check_same_dim(student_mean, student_var, "student_loss");
  detail::check_var(student_var, "student_loss");
  double total = 0.0;
  for (std::size_t k = 0; k < student_mean.size(); ++k) {
    const double r = student_mean[k] - teacher_mean[k];
    const bool floored = student_var[k] < kVarianceFloor;
    const double v = floored ? kVarianceFloor : student_var[k];
    total += r * r / (2.0 * v) + 0.5 * std::log(v);
    if (gmean) (*gmean)[k] += w * r / v;
    if (gvar && !floored)
      (*gvar)[k] += w * (0.5 / v - r * r / (2.0 * v * v));
  }
  return total;
}

// Mutual likelihood score of two Gaussian embeddings (constant term
// omitted). Symmetric; higher means more likely the same place.
inline double mls_score(const EmbeddingDistribution& di,
                        const EmbeddingDistribution& dj,
                        Vec* gmean_i = nullptr, Vec* gmean_j = nullptr,
                        Vec* gvar_i = nullptr, Vec* gvar_j = nullptr,
                        double w = 1.0) {
  check_same_dim(di.mean, dj.mean, "mls_loss");
  check_same_dim(di.variance, dj.variance, "mls_loss");
  detail::check_var(di.variance, "mls_loss");
  detail::check_var(dj.variance, "mls_loss");
  double total = 0.0;
  for (std::size_t k = 0; k < di.mean.size(); ++k) {
    const double r = di.mean[k] - dj.mean[k];
    double s = di.variance[k] + dj.variance[k];
    const bool floored = s < kVarianceFloor;
    if (floored) s = kVarianceFloor;
    total += -0.5 * (r * r / s + std::log(s));
    if (gmean_i) {
      const double gm = -w * r / s;
      (*gmean_i)[k] += gm;
      (*gmean_j)[k] -= gm;
    }
    if (gvar_i && !floored) {
      const double gv = w * (0.5 * r * r / (s * s) - 0.5 / s);
      (*gvar_i)[k] += gv;
      (*gvar_j)[k] += gv;
    }
  }
  return total;
}

inline double mls_loss(const EmbeddingDistribution& di,
                       const EmbeddingDistribution& dj) {
  return mls_score(di, dj);
}

// ---------------------------------------------------------------------------
// Spec-facing single-tuple wrappers returning LossValue.
// ---------------------------------------------------------------------------

inline LossValue contrastive_loss(const Vec& a, const Vec& b, bool similar,
                                  double m) {
  return LossValue::reduce({contrastive_value(a, b, similar, m)});
}

inline LossValue triplet_loss(const Vec& a, const Vec& p, const Vec& n,
                              double m) {
  return LossValue::reduce({triplet_value(a, p, n, m)});
}

inline LossValue quadruplet_loss(const Vec& a, const Vec& p, const Vec& n1,
                                 const Vec& n2, double m1, double m2) {
  return LossValue::reduce({quadruplet_value(a, p, n1, n2, m1, m2)});
}

// ---------------------------------------------------------------------------
// Batch forms. `means` is indexed by the tuple index lists. When `grads` is
// given, d(value)/d(means[i]) is accumulated per referenced sample index
// (mean reduction over the batch).
// ---------------------------------------------------------------------------

using GradMap = std::map<std::size_t, Vec>;

namespace detail {

inline Vec* slot(GradMap* grads, std::size_t idx, std::size_t dim) {
  if (!grads) return nullptr;
  auto [it, inserted] = grads->try_emplace(idx);
  if (inserted) it->second.assign(dim, 0.0);
  return &it->second;
}

}  // namespace detail

inline double tuple_value_at(const TupleBatch& batch, std::size_t t,
                             const std::vector<Vec>& means, double m1,
                             double m2) {
  switch (batch.kind) {
    case TupleKind::kDoublet:
      return contrastive_value(means[batch.anchors[t]],
                               means[batch.positives[t]],
                               batch.similar[t] != 0, m1);
    case TupleKind::kTriplet:
      return triplet_value(means[batch.anchors[t]], means[batch.positives[t]],
                           means[batch.negatives1[t]], m1);
    case TupleKind::kQuadruplet:
      return quadruplet_value(means[batch.anchors[t]],
                              means[batch.positives[t]],
                              means[batch.negatives1[t]],
                              means[batch.negatives2[t]], m1, m2);
  }
  return 0.0;
}

inline LossValue tuple_loss(const TupleBatch& batch,
                            const std::vector<Vec>& means, double m1,
                            double m2, GradMap* grads = nullptr) {
  const std::size_t n = batch.size();
  std::vector<double> items(n, 0.0);
  const double w = n ? 1.0 / static_cast<double>(n) : 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t ia = batch.anchors[t];
    const std::size_t ip = batch.positives[t];
    const std::size_t dim = means[ia].size();
    Vec* ga = detail::slot(grads, ia, dim);
    Vec* gp = detail::slot(grads, ip, dim);
    switch (batch.kind) {
      case TupleKind::kDoublet:
        items[t] = contrastive_value(means[ia], means[ip],
                                     batch.similar[t] != 0, m1, ga, gp, w);
        break;
      case TupleKind::kTriplet: {
        Vec* gn = detail::slot(grads, batch.negatives1[t], dim);
        items[t] = triplet_value(means[ia], means[ip],
                                 means[batch.negatives1[t]], m1, ga, gp, gn, w);
        break;
      }
      case TupleKind::kQuadruplet: {
        Vec* gn1 = detail::slot(grads, batch.negatives1[t], dim);
        Vec* gn2 = detail::slot(grads, batch.negatives2[t], dim);
        items[t] = quadruplet_value(means[ia], means[ip],
                                    means[batch.negatives1[t]],
                                    means[batch.negatives2[t]], m1, m2, ga, gp,
                                    gn1, gn2, w);
        break;
      }
    }
  }
  return LossValue::reduce(std::move(items));
}

// Batch form of the uncertainty-aware loss; one item per sample, reduced by
// mean so the learning rate is batch-size independent.
inline LossValue student_loss(const std::vector<Vec>& student_means,
                              const std::vector<Vec>& teacher_means,
                              const std::vector<Vec>& student_vars,
                              std::vector<Vec>* grad_means = nullptr,
                              std::vector<Vec>* grad_vars = nullptr) {
  if (student_means.size() != teacher_means.size() ||
      student_means.size() != student_vars.size())
    throw std::invalid_argument("student_loss: batch size mismatch");
  const std::size_t n = student_means.size();
  const double w = n ? 1.0 / static_cast<double>(n) : 0.0;
  std::vector<double> items(n, 0.0);
  if (grad_means) {
    grad_means->assign(n, {});
    grad_vars->assign(n, {});
  }
  for (std::size_t i = 0; i < n; ++i) {
    Vec* gm = nullptr;
    Vec* gv = nullptr;
    if (grad_means) {
      (*grad_means)[i].assign(student_means[i].size(), 0.0);
      (*grad_vars)[i].assign(student_vars[i].size(), 0.0);
      gm = &(*grad_means)[i];
      gv = &(*grad_vars)[i];
    }
    items[i] =
        student_value(student_means[i], teacher_means[i], student_vars[i], gm,
                      gv, w);
  }
  return LossValue::reduce(std::move(items));
}

inline LossValue student_loss(const Vec& student_mean, const Vec& teacher_mean,
                              const Vec& student_var) {
  return LossValue::reduce(
      {student_value(student_mean, teacher_mean, student_var)});
}

}  // namespace stun

#endif  // STUN_LOSSES_HPP_
