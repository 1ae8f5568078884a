#ifndef STUN_PIPELINE_HPP_
#define STUN_PIPELINE_HPP_

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "stun/checkpoint.hpp"
#include "stun/eval.hpp"
#include "stun/retrieval.hpp"
#include "stun/types.hpp"

namespace stun {

inline constexpr char kToolVersion[] = "0.1.0";

struct EvalOptions {
  std::size_t topk = 10;
  std::size_t bins = 11;
  bool mls_match = false;
  std::vector<double> removal_fractions = {0.0, 0.1, 0.2, 0.3, 0.4,
                                           0.5, 0.6, 0.7, 0.8, 0.9};
};

struct MethodEmbeddings {
  std::vector<EmbeddingDistribution> embeddings;
  bool has_uncertainty = false;
};

// Embeds a dataset with whatever net the checkpoint holds. Teacher-style
// checkpoints produce variance-free embeddings (placeholder variance 1);
// MC-dropout checkpoints run `cfg.mc_passes` stochastic forwards seeded from
// the config seed.
inline MethodEmbeddings embed_dataset(const LoadedCheckpoint& ckpt,
                                      const Dataset& data,
                                      const ExperimentConfig& cfg) {
  MethodEmbeddings out;
  out.embeddings.reserve(data.size());
  switch (ckpt.kind) {
    case NetKind::kTeacher: {
      for (const PlaceSample& s : data.samples) {
        std::vector<double> mean = ckpt.teacher.forward_mean(s.image);
        out.embeddings.push_back(
            {std::move(mean), std::vector<double>(
                                  static_cast<std::size_t>(
                                      ckpt.spec.embedding_dim),
                                  1.0)});
      }
      out.has_uncertainty = false;
      break;
    }
    case NetKind::kMcDropout: {
      Rng rng(derive_seed(cfg.seed, 777));
      std::vector<Tensor> imgs;
      imgs.reserve(data.size());
      for (const PlaceSample& s : data.samples) imgs.push_back(s.image);
      auto [means, vars] =
          mc_dropout_forward(ckpt.teacher, imgs, cfg.mc_passes, rng);
      for (std::size_t i = 0; i < means.size(); ++i) {
        for (double& v : vars[i])
          if (v < kVarianceFloor) v = kVarianceFloor;
        out.embeddings.push_back({std::move(means[i]), std::move(vars[i])});
      }
      out.has_uncertainty = true;
      break;
    }
    case NetKind::kStudent:
    case NetKind::kPfe: {
      for (const PlaceSample& s : data.samples)
        out.embeddings.push_back(ckpt.student.forward(s.image));
      out.has_uncertainty = true;
      break;
    }
  }
  return out;
}

// Runs retrieval for every query and labels the ranked candidates
// geographically. With `leave_one_out` the query set is the database set and
// the query's own row is excluded from its ranking.
inline std::vector<QueryOutcome> evaluate_queries(
    const EmbeddingIndex& index, const Dataset& queries,
    const MethodEmbeddings& query_embs, const ExperimentConfig& cfg,
    const EvalOptions& opts, bool leave_one_out) {
  const std::size_t fetch = opts.topk + (leave_one_out ? 1 : 0);
  if (fetch > index.size())
    throw DataError("retrieval depth exceeds database size");
  std::map<std::int64_t, GeoTag> geo_of;
  for (std::size_t i = 0; i < index.size(); ++i)
    geo_of[index.ids[i]] = index.geos[i];

  std::vector<QueryOutcome> outcomes;
  outcomes.reserve(queries.size());
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const PlaceSample& q = queries.samples[qi];
    const EmbeddingDistribution& emb = query_embs.embeddings[qi];
    RetrievalResult r = opts.mls_match
                            ? query_topk_mls(index, emb, fetch, q.id)
                            : query_topk(index, emb, fetch, q.id);
    QueryOutcome o;
    o.query_id = q.id;
    o.uncertainty = query_embs.has_uncertainty ? r.query_uncertainty : 0.0;
    for (std::size_t t = 0; t < r.candidate_ids.size(); ++t) {
      if (leave_one_out && r.candidate_ids[t] == q.id) continue;
      if (o.flags.size() == opts.topk) break;
      const GeoTag cand_geo = geo_of.at(r.candidate_ids[t]);
      const bool correct =
          label_of_distance(geo_distance(q.geo, cand_geo),
                            cfg.positive_radius_m,
                            cfg.negative_radius_m) == PairLabel::kPositive;
      o.flags.push_back(correct ? 1 : 0);
      if (o.flags.size() == 1)
        o.top1_distance = opts.mls_match ? -r.scores[t] : r.scores[t];
    }
    while (o.flags.size() < opts.topk) o.flags.push_back(0);
    outcomes.push_back(std::move(o));
  }
  return outcomes;
}

namespace detail {

inline std::vector<std::size_t> report_ns(std::size_t topk) {
  std::vector<std::size_t> ns;
  for (std::size_t n : {std::size_t{1}, std::size_t{5}, std::size_t{10}})
    if (n <= topk) ns.push_back(n);
  return ns;
}

inline nlohmann::ordered_json calibration_to_json(const CalibrationReport& r) {
  nlohmann::ordered_json j;
  j["metric"] = to_string(r.metric, r.metric_n);
  j["num_bins"] = r.num_bins;
  j["ece"] = r.ece;
  nlohmann::ordered_json bins = nlohmann::ordered_json::array();
  for (const CalibrationBin& b : r.bins) {
    bins.push_back({{"size", b.size},
                    {"mean_uncertainty", b.mean_uncertainty},
                    {"uncertainty_level", b.uncertainty_level},
                    {"confidence", b.confidence},
                    {"metric_value", b.metric_value}});
  }
  j["bins"] = bins;
  return j;
}

}  // namespace detail

// Assembles the full metrics report. Everything downstream (plots, tables,
// comparisons) reads from this JSON; nothing is recomputed elsewhere.
inline nlohmann::ordered_json build_metrics_report(
    const std::vector<QueryOutcome>& outcomes, const Dataset& queries,
    std::size_t database_size, bool has_uncertainty,
    const std::string& method, const ExperimentConfig& cfg,
    const EvalOptions& opts, const std::string& protocol) {
  nlohmann::ordered_json report;
  report["schema_version"] = 1;
  report["tool"] = {{"name", "stun"}, {"version", kToolVersion}};
  report["method"] = method;
  report["config_hash"] = config_hash(cfg);
  report["seed"] = cfg.seed;
  report["dataset"] = {{"num_queries", outcomes.size()},
                       {"num_database", database_size},
                       {"protocol", protocol}};
  report["retrieval"] = {{"topk", opts.topk}, {"mls_match", opts.mls_match}};

  const std::vector<std::size_t> ns = detail::report_ns(opts.topk);
  nlohmann::ordered_json recall, mapn;
  for (std::size_t n : ns) {
    recall[std::to_string(n)] = recall_at_n(outcomes, n);
    mapn[std::to_string(n)] = map_at_n(outcomes, n);
  }
  bool ap_degenerate = false;
  const double ap = detail::rank_ap(outcomes, 0.0, &ap_degenerate);
  report["metrics"] = {{"recall_at", recall},
                       {"map_at", mapn},
                       {"average_precision", ap},
                       {"ap_degenerate", ap_degenerate}};

  if (!ap_degenerate) {
    const std::vector<PrPoint> pr = pr_curve(outcomes);
    nlohmann::ordered_json prj;
    std::vector<double> rec, prec, thr;
    for (const PrPoint& p : pr) {
      rec.push_back(p.recall);
      prec.push_back(p.precision);
      thr.push_back(p.threshold);
    }
    prj["recall"] = rec;
    prj["precision"] = prec;
    prj["threshold"] = thr;
    report["pr_curve"] = prj;
  } else {
    report["pr_curve"] = nullptr;
  }

  nlohmann::ordered_json unc;
  unc["available"] = has_uncertainty;
  if (has_uncertainty) {
    unc["bins"] = opts.bins;
    nlohmann::ordered_json eces, calib;
    for (std::size_t n : ns) {
      const CalibrationReport cr =
          ece(outcomes, MetricKind::kRecallAtN, n, opts.bins);
      eces[to_string(MetricKind::kRecallAtN, n)] = cr.ece;
      calib[to_string(MetricKind::kRecallAtN, n)] =
          detail::calibration_to_json(cr);
      const CalibrationReport cm =
          ece(outcomes, MetricKind::kMapAtN, n, opts.bins);
      eces[to_string(MetricKind::kMapAtN, n)] = cm.ece;
      calib[to_string(MetricKind::kMapAtN, n)] = detail::calibration_to_json(cm);
    }
    const CalibrationReport ca = ece(outcomes, MetricKind::kAp, 1, opts.bins);
    eces["AP"] = ca.ece;
    calib["AP"] = detail::calibration_to_json(ca);
    unc["ece"] = eces;
    unc["calibration"] = calib;

    const std::vector<RemovalPoint> rm =
        removal_curve(outcomes, opts.removal_fractions);
    std::vector<double> fr, corr;
    std::vector<std::size_t> kept;
    for (const RemovalPoint& p : rm) {
      fr.push_back(p.fraction);
      corr.push_back(p.correctness);
      kept.push_back(p.kept);
    }
    unc["removal_curve"] = {{"fractions", fr}, {"correctness", corr},
                            {"kept", kept}};

    // Correlation hooks: predicted uncertainty vs injected noise (when the
    // manifest carries labels) and vs image contrast.
    std::vector<double> u(outcomes.size());
    for (std::size_t i = 0; i < outcomes.size(); ++i)
      u[i] = outcomes[i].uncertainty;
    if (queries.has_noise_labels())
      unc["noise_spearman"] = spearman_correlation(queries.noise_std, u);
    std::vector<double> hs(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i)
      hs[i] = histogram_spread(to_grayscale(queries.samples[i].image));
    unc["hs_spearman"] = spearman_correlation(hs, u);
  }
  report["uncertainty"] = unc;

  nlohmann::ordered_json per_query = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    nlohmann::ordered_json q;
    q["id"] = outcomes[i].query_id;
    q["top1_correct"] = outcomes[i].flags[0] != 0;
    q["top1_score"] = outcomes[i].top1_distance;
    if (has_uncertainty) q["uncertainty"] = outcomes[i].uncertainty;
    if (queries.has_noise_labels()) q["noise_std"] = queries.noise_std[i];
    per_query.push_back(std::move(q));
  }
  report["per_query"] = per_query;
  return report;
}

// End-to-end evaluation of one checkpoint against a database/query split
// (or a single dataset in leave-one-out mode, with `queries == database`).
inline nlohmann::ordered_json run_evaluation(const LoadedCheckpoint& ckpt,
                                             const Dataset& database,
                                             const Dataset& queries,
                                             bool leave_one_out,
                                             const ExperimentConfig& cfg,
                                             const EvalOptions& opts) {
  const MethodEmbeddings db_embs = embed_dataset(ckpt, database, cfg);
  const MethodEmbeddings q_embs =
      leave_one_out ? db_embs : embed_dataset(ckpt, queries, cfg);

  std::vector<std::int64_t> ids;
  std::vector<GeoTag> geos;
  for (const PlaceSample& s : database.samples) {
    ids.push_back(s.id);
    geos.push_back(s.geo);
  }
  const EmbeddingIndex index = build_index(db_embs.embeddings, ids, geos);
  const std::vector<QueryOutcome> outcomes = evaluate_queries(
      index, queries, q_embs, cfg, opts, leave_one_out);

  std::string method = to_string(ckpt.kind);
  if (opts.mls_match) method += "+mls";
  return build_metrics_report(outcomes, queries, database.size(),
                              db_embs.has_uncertainty, method, cfg, opts,
                              leave_one_out ? "leave_one_out" : "split");
}

}  // namespace stun

#endif  // STUN_PIPELINE_HPP_
