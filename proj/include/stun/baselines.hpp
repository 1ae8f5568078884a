#ifndef STUN_BASELINES_HPP_
#define STUN_BASELINES_HPP_

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "stun/pipeline.hpp"

namespace stun {

// One comparison-table row, filled from a metrics report. Every row in a
// table is computed on the identical query set, retrieval depth and bin
// count; the variance-free row (plain teacher) has no ECE entries.
struct ComparisonRow {
  std::string label;
  bool has_uncertainty = false;
  std::vector<double> recall;      // per reported n
  std::vector<double> map_at;      // per reported n
  double ap = 0.0;
  std::vector<double> ece_recall;  // per reported n
  std::vector<double> ece_map;
  double ece_ap = 0.0;
};

struct ComparisonTable {
  std::vector<std::size_t> ns;  // the reported @n values
  std::vector<ComparisonRow> rows;
};

namespace detail {

inline std::string row_label(NetKind kind, bool mls) {
  switch (kind) {
    case NetKind::kTeacher: return "standard";
    case NetKind::kStudent: return "stun";
    case NetKind::kMcDropout: return "mc_dropout";
    case NetKind::kPfe: return mls ? "pfe_mls_match" : "pfe";
  }
  return "?";
}

inline ComparisonRow row_from_report(const std::string& label,
                                     const nlohmann::ordered_json& report,
                                     const std::vector<std::size_t>& ns) {
  ComparisonRow row;
  row.label = label;
  const auto& metrics = report.at("metrics");
  for (std::size_t n : ns) {
    row.recall.push_back(metrics.at("recall_at").at(std::to_string(n)).get<double>());
    row.map_at.push_back(metrics.at("map_at").at(std::to_string(n)).get<double>());
  }
  row.ap = metrics.at("average_precision").get<double>();
  const auto& unc = report.at("uncertainty");
  row.has_uncertainty = unc.value("available", false);
  if (row.has_uncertainty) {
    for (std::size_t n : ns) {
      row.ece_recall.push_back(
          unc.at("ece").at("r@" + std::to_string(n)).get<double>());
      row.ece_map.push_back(
          unc.at("ece").at("mAP@" + std::to_string(n)).get<double>());
    }
    row.ece_ap = unc.at("ece").at("AP").get<double>();
  }
  return row;
}

}  // namespace detail

// Evaluates every checkpoint on the shared query/database protocol and
// assembles the comparison table. A teacher checkpoint yields the
// variance-free "standard" row; a PFE checkpoint yields both the plain and
// the MLS-matching rows.
inline ComparisonTable compare(const std::vector<std::string>& ckpt_paths,
                               const Dataset& database, const Dataset& queries,
                               bool leave_one_out, const ExperimentConfig& cfg,
                               const EvalOptions& base_opts) {
  ComparisonTable table;
  table.ns = detail::report_ns(base_opts.topk);
  int dim = -1;
  for (const std::string& path : ckpt_paths) {
    const LoadedCheckpoint ckpt = load_checkpoint(path);
    if (dim < 0) dim = ckpt.spec.embedding_dim;
    if (ckpt.spec.embedding_dim != dim)
      throw DataError("mixed embedding dimensions across compared methods");
    std::vector<bool> mls_variants = {false};
    if (ckpt.kind == NetKind::kPfe) mls_variants.push_back(true);
    for (bool mls : mls_variants) {
      EvalOptions opts = base_opts;
      opts.mls_match = mls;
      const nlohmann::ordered_json report =
          run_evaluation(ckpt, database, queries, leave_one_out, cfg, opts);
      table.rows.push_back(detail::row_from_report(
          detail::row_label(ckpt.kind, mls), report, table.ns));
    }
  }
  return table;
}

inline nlohmann::ordered_json comparison_to_json(const ComparisonTable& t) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["ns"] = t.ns;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const ComparisonRow& r : t.rows) {
    nlohmann::ordered_json row;
    row["method"] = r.label;
    row["recall_at"] = r.recall;
    row["map_at"] = r.map_at;
    row["average_precision"] = r.ap;
    if (r.has_uncertainty) {
      row["ece_recall_at"] = r.ece_recall;
      row["ece_map_at"] = r.ece_map;
      row["ece_ap"] = r.ece_ap;
    } else {
      row["ece_recall_at"] = nullptr;
      row["ece_map_at"] = nullptr;
      row["ece_ap"] = nullptr;
    }
    rows.push_back(std::move(row));
  }
  j["rows"] = rows;
  return j;
}

// Aligned plain-text rendering; dashes mark the variance-free row's missing
// ECE entries.
inline std::string comparison_to_text(const ComparisonTable& t) {
  auto triple = [](const std::vector<double>& v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) os << " / ";
      os << v[i];
    }
    return os.str();
  };
  std::ostringstream head_n;
  for (std::size_t i = 0; i < t.ns.size(); ++i) {
    if (i) head_n << "/";
    head_n << t.ns[i];
  }
  const std::string ns = head_n.str();
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"method", "r@" + ns, "mAP@" + ns, "AP", "ECE_r@" + ns,
                   "ECE_mAP@" + ns, "ECE_AP"});
  for (const ComparisonRow& r : t.rows) {
    std::ostringstream ap;
    ap << std::fixed << std::setprecision(3) << r.ap;
    std::vector<std::string> row = {r.label, triple(r.recall),
                                    triple(r.map_at), ap.str()};
    if (r.has_uncertainty) {
      std::ostringstream ea;
      ea << std::fixed << std::setprecision(3) << r.ece_ap;
      row.push_back(triple(r.ece_recall));
      row.push_back(triple(r.ece_map));
      row.push_back(ea.str());
    } else {
      row.insert(row.end(), {"-", "-", "-"});
    }
    cells.push_back(std::move(row));
  }
  std::vector<std::size_t> widths(cells[0].size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c)
      widths[c] = std::max(widths[c], row[c].size());
  std::ostringstream out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      out << std::left << std::setw(static_cast<int>(widths[c]) + 2)
          << cells[r][c];
    }
    out << "\n";
    if (r == 0) {
      for (std::size_t c = 0; c < widths.size(); ++c)
        out << std::string(widths[c] + 2, '-');
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace stun

#endif  // STUN_BASELINES_HPP_
