// Command-line surface for the self-teaching uncertainty pipeline:
// synthetic data generation, teacher/student/baseline training, retrieval
// evaluation with calibration metrics, plot emission and method comparison.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "stun/stun.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitHashMismatch = 5;
constexpr int kExitUsage = 64;

const char* kFooter =
    "Exit codes:\n"
    "  0   success\n"
    "  2   configuration error (bad config/spec file, invalid values)\n"
    "  3   data error (manifest, image or checkpoint files)\n"
    "  4   training diverged (non-finite loss)\n"
    "  5   checkpoint/config hash mismatch\n"
    "  64  command line usage error\n"
    "\n"
    "The STUN_OUT_ROOT environment variable, when set, prefixes every\n"
    "relative --out path.";

std::string resolve_out(const std::string& out) {
  const char* root = std::getenv("STUN_OUT_ROOT");
  if (root && *root && fs::path(out).is_relative())
    return (fs::path(root) / out).string();
  return out;
}

std::string file_hash_hex(const std::string& path) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    stun::fnv1a64(stun::read_file(path))));
  return buf;
}

// Every command drops a manifest of what it read and wrote. Content is
// fully determined by the inputs (no timestamps), so identical runs produce
// identical manifests.
void write_run_manifest(const std::string& out_dir,
                        const std::string& command,
                        const nlohmann::ordered_json& inputs,
                        const std::vector<std::string>& outputs,
                        const stun::ExperimentConfig* cfg) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["tool"] = {{"name", "stun"}, {"version", stun::kToolVersion}};
  j["command"] = command;
  if (cfg) {
    j["seed"] = cfg->seed;
    j["config_hash"] = stun::config_hash(*cfg);
    j["config"] = stun::config_to_json(*cfg);
  }
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  stun::write_file_atomic((fs::path(out_dir) / "run_manifest.json").string(),
                          j.dump(2) + "\n");
}

void check_ckpt_hash(const stun::LoadedCheckpoint& ckpt,
                     const stun::ExperimentConfig& cfg,
                     const std::string& path) {
  const std::string expected = stun::config_hash(cfg);
  if (ckpt.config_hash != expected)
    throw stun::HashMismatchError(
        "checkpoint '" + path + "' was trained under config hash " +
        ckpt.config_hash + " but the given config hashes to " + expected);
}

struct CommonArgs {
  std::string config_path;
  std::string data_path;
  std::string query_data_path;
  std::string out_dir;
  std::string ckpt_path;
  long long seed_override = -1;

  stun::ExperimentConfig load_cfg() const {
    stun::ExperimentConfig cfg = stun::load_config(config_path);
    if (seed_override >= 0)
      cfg.seed = static_cast<std::uint64_t>(seed_override);
    return cfg;
  }
};

int cmd_generate(const std::string& spec_path, const std::string& out_raw,
                 long long seed_override) {
  const std::string out = resolve_out(out_raw);
  stun::SynthGenFile gen = stun::load_synth_spec(spec_path);
  if (seed_override >= 0)
    gen.spec.seed = static_cast<std::uint64_t>(seed_override);
  const stun::Dataset data = stun::generate(gen.spec);
  stun::save_dataset(data, out);
  std::vector<std::string> outputs = {"manifest.jsonl", "images/"};
  if (gen.with_splits) {
    const stun::DatasetSplits splits =
        stun::split_dataset(data, gen.spec.samples_per_place, gen.splits);
    stun::write_manifest(splits.train, out, "manifest.train.jsonl");
    stun::write_manifest(splits.database, out, "manifest.database.jsonl");
    stun::write_manifest(splits.query, out, "manifest.query.jsonl");
    outputs.insert(outputs.end(),
                   {"manifest.train.jsonl", "manifest.database.jsonl",
                    "manifest.query.jsonl"});
  }
  nlohmann::ordered_json inputs;
  inputs["spec"] = spec_path;
  inputs["spec_hash"] = file_hash_hex(spec_path);
  write_run_manifest(out, "generate", inputs, outputs, nullptr);
  std::cout << "generated " << data.size() << " samples ("
            << gen.spec.num_places << " places) into " << out << "\n";
  return kExitOk;
}

int cmd_train_teacher(const CommonArgs& a) {
  const std::string out = resolve_out(a.out_dir);
  const stun::ExperimentConfig cfg = a.load_cfg();
  const stun::Dataset data = stun::load_manifest(a.data_path);
  stun::TrainLog log{(fs::path(out) / "train_log.teacher.jsonl").string(), {}};
  stun::TeacherTrainResult result = stun::train_teacher(data, cfg, &log);
  const std::string ckpt = (fs::path(out) / "teacher.ckpt").string();
  stun::save_checkpoint(ckpt, result.net, stun::NetKind::kTeacher,
                        result.state.steps, stun::config_hash(cfg));
  nlohmann::ordered_json inputs;
  inputs["config"] = a.config_path;
  inputs["data"] = a.data_path;
  inputs["data_hash"] = file_hash_hex(a.data_path);
  write_run_manifest(out, "train-teacher", inputs,
                     {"teacher.ckpt", "train_log.teacher.jsonl"}, &cfg);
  std::cout << "teacher trained: " << result.state.steps << " steps, last "
            << "epoch mean loss "
            << (result.state.epoch_mean_loss.empty()
                    ? 0.0
                    : result.state.epoch_mean_loss.back())
            << "\n";
  return kExitOk;
}

int cmd_train_student(const CommonArgs& a) {
  const std::string out = resolve_out(a.out_dir);
  const stun::ExperimentConfig cfg = a.load_cfg();
  const stun::Dataset data = stun::load_manifest(a.data_path);
  const stun::LoadedCheckpoint teacher = stun::load_checkpoint(a.ckpt_path);
  check_ckpt_hash(teacher, cfg, a.ckpt_path);
  if (teacher.kind != stun::NetKind::kTeacher)
    throw stun::DataError("train-student needs a teacher checkpoint, got '" +
                          stun::to_string(teacher.kind) + "'");
  stun::TrainLog log{(fs::path(out) / "train_log.student.jsonl").string(), {}};
  stun::StudentTrainResult result =
      stun::train_student(teacher.teacher, data, cfg, &log);
  const std::string ckpt = (fs::path(out) / "student.ckpt").string();
  stun::save_checkpoint(ckpt, result.net, stun::NetKind::kStudent,
                        result.state.steps, stun::config_hash(cfg));
  nlohmann::ordered_json inputs;
  inputs["config"] = a.config_path;
  inputs["data"] = a.data_path;
  inputs["data_hash"] = file_hash_hex(a.data_path);
  inputs["ckpt"] = a.ckpt_path;
  write_run_manifest(out, "train-student", inputs,
                     {"student.ckpt", "train_log.student.jsonl"}, &cfg);
  std::cout << "student trained: " << result.state.steps << " steps\n";
  return kExitOk;
}

int cmd_train_baseline(const CommonArgs& a, const std::string& baseline) {
  const std::string out = resolve_out(a.out_dir);
  stun::ExperimentConfig cfg = a.load_cfg();
  const stun::Dataset data = stun::load_manifest(a.data_path);
  nlohmann::ordered_json inputs;
  inputs["config"] = a.config_path;
  inputs["data"] = a.data_path;
  inputs["data_hash"] = file_hash_hex(a.data_path);

  if (baseline == "mc-dropout") {
    // The stochastic-regularization baseline trains with dropout active at
    // rate 0.2 unless the config already sets one.
    const std::string log_name = "train_log.mc_dropout.jsonl";
    stun::ExperimentConfig mc_cfg = cfg;
    if (mc_cfg.encoder.dropout_rate == 0.0)
      mc_cfg.encoder.dropout_rate = 0.2;
    stun::TrainLog log{(fs::path(out) / log_name).string(), {}};
    stun::TeacherTrainResult result =
        stun::train_teacher(data, mc_cfg, &log, /*dropout_active=*/true);
    stun::save_checkpoint((fs::path(out) / "mc_dropout.ckpt").string(),
                          result.net, stun::NetKind::kMcDropout,
                          result.state.steps, stun::config_hash(cfg));
    write_run_manifest(out, "train-baseline", inputs,
                       {"mc_dropout.ckpt", log_name}, &cfg);
    std::cout << "mc-dropout baseline trained: " << result.state.steps
              << " steps\n";
    return kExitOk;
  }
  if (baseline == "pfe") {
    const stun::LoadedCheckpoint teacher = stun::load_checkpoint(a.ckpt_path);
    check_ckpt_hash(teacher, cfg, a.ckpt_path);
    if (teacher.kind != stun::NetKind::kTeacher)
      throw stun::DataError("pfe baseline needs a teacher checkpoint");
    stun::TrainLog log{(fs::path(out) / "train_log.pfe.jsonl").string(), {}};
    stun::StudentTrainResult result =
        stun::train_pfe(teacher.teacher, data, cfg, &log);
    stun::save_checkpoint((fs::path(out) / "pfe.ckpt").string(), result.net,
                          stun::NetKind::kPfe, result.state.steps,
                          stun::config_hash(cfg));
    inputs["ckpt"] = a.ckpt_path;
    write_run_manifest(out, "train-baseline", inputs,
                       {"pfe.ckpt", "train_log.pfe.jsonl"}, &cfg);
    std::cout << "pfe baseline trained: " << result.state.steps << " steps\n";
    return kExitOk;
  }
  throw stun::ConfigError("unknown baseline '" + baseline + "'");
}

int cmd_evaluate(const CommonArgs& a, bool mls_match, int bins_flag,
                 int topk_flag, const std::string& export_index) {
  const std::string out = resolve_out(a.out_dir);
  const stun::ExperimentConfig cfg = a.load_cfg();
  const stun::LoadedCheckpoint ckpt = stun::load_checkpoint(a.ckpt_path);
  check_ckpt_hash(ckpt, cfg, a.ckpt_path);

  const stun::Dataset database = stun::load_manifest(a.data_path);
  const bool leave_one_out = a.query_data_path.empty();
  const stun::Dataset queries =
      leave_one_out ? database : stun::load_manifest(a.query_data_path);

  stun::EvalOptions opts;
  opts.topk = static_cast<std::size_t>(topk_flag > 0 ? topk_flag : cfg.topk);
  opts.bins = static_cast<std::size_t>(bins_flag > 0 ? bins_flag : cfg.bins);
  opts.mls_match = mls_match;
  if (opts.mls_match && ckpt.kind == stun::NetKind::kTeacher)
    throw stun::ConfigError(
        "--mls-match needs a variance-predicting checkpoint");
  if (opts.bins > queries.size())
    throw stun::ConfigError("--bins exceeds the number of queries");

  const nlohmann::ordered_json report =
      stun::run_evaluation(ckpt, database, queries, leave_one_out, cfg, opts);
  stun::write_file_atomic((fs::path(out) / "metrics.json").string(),
                          report.dump(2) + "\n");
  std::vector<std::string> outputs = {"metrics.json"};

  if (!export_index.empty()) {
    const stun::MethodEmbeddings db_embs =
        stun::embed_dataset(ckpt, database, cfg);
    std::vector<std::int64_t> ids;
    std::vector<stun::GeoTag> geos;
    for (const stun::PlaceSample& s : database.samples) {
      ids.push_back(s.id);
      geos.push_back(s.geo);
    }
    stun::save_index(stun::build_index(db_embs.embeddings, ids, geos),
                     export_index);
    outputs.push_back(export_index);
  }

  nlohmann::ordered_json inputs;
  inputs["config"] = a.config_path;
  inputs["ckpt"] = a.ckpt_path;
  inputs["data"] = a.data_path;
  inputs["data_hash"] = file_hash_hex(a.data_path);
  if (!leave_one_out) {
    inputs["query_data"] = a.query_data_path;
    inputs["query_data_hash"] = file_hash_hex(a.query_data_path);
  }
  write_run_manifest(out, "evaluate", inputs, outputs, &cfg);
  std::cout << "evaluated " << report.at("dataset").at("num_queries")
            << " queries; r@1 = "
            << report.at("metrics").at("recall_at").value("1", 0.0) << "\n";
  return kExitOk;
}

int cmd_plot(const std::string& report_path, const std::string& out_raw) {
  const std::string out = resolve_out(out_raw);
  const nlohmann::ordered_json report =
      nlohmann::ordered_json::parse(stun::read_file(report_path));
  fs::create_directories(out);
  stun::write_reliability_svg(report,
                              (fs::path(out) / "reliability.svg").string());
  stun::write_pr_svg(report, (fs::path(out) / "pr_curve.svg").string());
  stun::write_removal_svg(report,
                          (fs::path(out) / "removal_curve.svg").string());
  nlohmann::ordered_json inputs;
  inputs["report"] = report_path;
  inputs["report_hash"] = file_hash_hex(report_path);
  write_run_manifest(out, "plot", inputs,
                     {"reliability.svg", "pr_curve.svg", "removal_curve.svg"},
                     nullptr);
  std::cout << "wrote 3 plots to " << out << "\n";
  return kExitOk;
}

int cmd_compare(const CommonArgs& a, const std::vector<std::string>& ckpts,
                int bins_flag, int topk_flag) {
  const std::string out = resolve_out(a.out_dir);
  const stun::ExperimentConfig cfg = a.load_cfg();
  for (const std::string& path : ckpts)
    check_ckpt_hash(stun::load_checkpoint(path), cfg, path);
  const stun::Dataset database = stun::load_manifest(a.data_path);
  const bool leave_one_out = a.query_data_path.empty();
  const stun::Dataset queries =
      leave_one_out ? database : stun::load_manifest(a.query_data_path);
  stun::EvalOptions opts;
  opts.topk = static_cast<std::size_t>(topk_flag > 0 ? topk_flag : cfg.topk);
  opts.bins = static_cast<std::size_t>(bins_flag > 0 ? bins_flag : cfg.bins);
  if (opts.bins > queries.size())
    throw stun::ConfigError("--bins exceeds the number of queries");

  const stun::ComparisonTable table =
      stun::compare(ckpts, database, queries, leave_one_out, cfg, opts);
  stun::write_file_atomic((fs::path(out) / "comparison.json").string(),
                          stun::comparison_to_json(table).dump(2) + "\n");
  const std::string text = stun::comparison_to_text(table);
  stun::write_file_atomic((fs::path(out) / "comparison.txt").string(), text);
  nlohmann::ordered_json inputs;
  inputs["config"] = a.config_path;
  inputs["data"] = a.data_path;
  inputs["data_hash"] = file_hash_hex(a.data_path);
  inputs["ckpts"] = ckpts;
  write_run_manifest(out, "compare", inputs,
                     {"comparison.json", "comparison.txt"}, &cfg);
  std::cout << text;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stun: self-teaching uncertainty estimation for place "
               "recognition"};
  app.require_subcommand(1);
  app.footer(kFooter);

  CommonArgs args;
  std::string spec_path, baseline, report_path, export_index;
  std::vector<std::string> ckpts;
  bool mls_match = false;
  int bins_flag = 0, topk_flag = 0;

  auto* gen = app.add_subcommand("generate",
                                 "Generate a synthetic geo-tagged dataset");
  gen->add_option("--spec", spec_path, "synthetic dataset spec (JSON)")
      ->required();
  gen->add_option("--out", args.out_dir, "output directory")->required();
  gen->add_option("--seed", args.seed_override, "override the spec seed");

  auto add_common = [&](CLI::App* cmd, bool needs_ckpt) {
    cmd->add_option("--config", args.config_path, "experiment config (JSON)")
        ->required();
    cmd->add_option("--data", args.data_path, "dataset manifest")->required();
    cmd->add_option("--out", args.out_dir, "output directory")->required();
    cmd->add_option("--seed", args.seed_override, "override the config seed");
    if (needs_ckpt)
      cmd->add_option("--ckpt", args.ckpt_path, "input checkpoint");
  };

  auto* tt = app.add_subcommand("train-teacher",
                                "Train the deterministic teacher embedder");
  add_common(tt, false);

  auto* ts = app.add_subcommand(
      "train-student", "Distill a variance-predicting student from a teacher");
  add_common(ts, true);
  ts->get_option("--ckpt")->required();

  auto* tb = app.add_subcommand("train-baseline",
                                "Train an uncertainty baseline");
  add_common(tb, true);
  tb->add_option("--baseline", baseline, "mc-dropout | pfe")->required();

  auto* ev = app.add_subcommand("evaluate",
                                "Retrieve and score a checkpoint on a dataset");
  add_common(ev, true);
  ev->get_option("--ckpt")->required();
  ev->add_option("--query-data", args.query_data_path,
                 "separate query manifest (default: leave-one-out on --data)");
  ev->add_flag("--mls-match", mls_match,
               "rank by mutual likelihood score instead of distance");
  ev->add_option("--bins", bins_flag, "calibration bin count override");
  ev->add_option("--topk", topk_flag, "retrieval depth override");
  ev->add_option("--export-index", export_index,
                 "also write the database embedding index to this path");

  auto* pl = app.add_subcommand("plot", "Render figures from a metrics report");
  pl->add_option("--report", report_path, "metrics.json from evaluate")
      ->required();
  pl->add_option("--out", args.out_dir, "output directory")->required();

  auto* cp = app.add_subcommand(
      "compare", "Evaluate several checkpoints into one comparison table");
  cp->add_option("--config", args.config_path, "experiment config (JSON)")
      ->required();
  cp->add_option("--data", args.data_path, "database manifest")->required();
  cp->add_option("--query-data", args.query_data_path,
                 "separate query manifest");
  cp->add_option("--out", args.out_dir, "output directory")->required();
  cp->add_option("--seed", args.seed_override, "override the config seed");
  cp->add_option("--ckpt", ckpts, "checkpoints to compare (repeatable)")
      ->required();
  cp->add_option("--bins", bins_flag, "calibration bin count override");
  cp->add_option("--topk", topk_flag, "retrieval depth override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed())
      return cmd_generate(spec_path, args.out_dir, args.seed_override);
    if (tt->parsed()) return cmd_train_teacher(args);
    if (ts->parsed()) return cmd_train_student(args);
    if (tb->parsed()) return cmd_train_baseline(args, baseline);
    if (ev->parsed())
      return cmd_evaluate(args, mls_match, bins_flag, topk_flag, export_index);
    if (pl->parsed()) return cmd_plot(report_path, args.out_dir);
    if (cp->parsed()) return cmd_compare(args, ckpts, bins_flag, topk_flag);
  } catch (const stun::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const stun::HashMismatchError& e) {
    std::cerr << "hash mismatch: " << e.what() << "\n";
    return kExitHashMismatch;
  } catch (const stun::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const stun::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
