#ifndef STUN_CONFIG_HPP_
#define STUN_CONFIG_HPP_

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "stun/errors.hpp"
#include "stun/rng.hpp"

namespace stun {

enum class LossKind { kContrastive, kTriplet, kQuadruplet };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::kContrastive: return "contrastive";
    case LossKind::kTriplet: return "triplet";
    case LossKind::kQuadruplet: return "quadruplet";
  }
  return "?";
}

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "contrastive") return LossKind::kContrastive;
  if (s == "triplet") return LossKind::kTriplet;
  if (s == "quadruplet") return LossKind::kQuadruplet;
  throw ConfigError("unknown loss kind '" + s + "'");
}

// Encoder description. "tiny_conv" is the stack built by this library; deep
// named backbones are accepted by the schema but need an external weight
// source, so the net factory rejects them with a ConfigError.
struct EncoderSpec {
  std::string backbone = "tiny_conv";
  std::vector<int> conv_widths = {16, 32, 64};
  std::string pooling = "gem";  // "gem" | "average"
  double gem_p = 3.0;
  int embedding_dim = 2048;
  double dropout_rate = 0.0;

  void validate() const {
    if (backbone != "tiny_conv" && backbone.empty())
      throw ConfigError("encoder.backbone must be named");
    if (backbone == "tiny_conv" && conv_widths.empty())
      throw ConfigError("encoder.conv_widths must be nonempty for tiny_conv");
    for (int w : conv_widths)
      if (w < 1) throw ConfigError("encoder.conv_widths entries must be >= 1");
    if (pooling != "gem" && pooling != "average")
      throw ConfigError("encoder.pooling must be 'gem' or 'average'");
    if (gem_p <= 0.0) throw ConfigError("encoder.gem_p must be > 0");
    if (embedding_dim < 2) throw ConfigError("embedding_dim must be >= 2");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ConfigError("encoder.dropout_rate must be in [0, 1)");
  }
};

// All hyperparameters of an experiment. Defaults follow the reference
// setting (D=2048, 3x200x200 inputs, Adam at 1e-5 with 0.99 epoch decay and
// weight decay 1e-3, radii 10 m / 25 m, batch size 8). Desk-scale runs
// override through the config file.
struct ExperimentConfig {
  int schema_version = 1;
  LossKind loss = LossKind::kTriplet;
  double margin = 0.1;   // m for contrastive/triplet; m1 for quadruplet
  double margin2 = 0.1;  // m2 for quadruplet
  int batch_size = 8;
  double learning_rate = 1e-5;
  double lr_decay = 0.99;
  double weight_decay = 0.001;
  double positive_radius_m = 10.0;
  double negative_radius_m = 25.0;
  std::uint64_t seed = 0;
  std::vector<int> image_shape = {3, 200, 200};
  int epochs = 30;           // teacher / baseline training budget
  int epochs_student = -1;   // -1 means: same as epochs
  int hard_negative_cap = 10;
  int mc_passes = 40;
  int bins = 11;
  int topk = 10;
  EncoderSpec encoder;

  int student_epochs() const { return epochs_student < 0 ? epochs : epochs_student; }

  void validate() const {
    if (schema_version != 1)
      throw ConfigError("unsupported schema_version " +
                        std::to_string(schema_version));
    if (margin < 0.0 || margin2 < 0.0)
      throw ConfigError("margins must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
    if (lr_decay <= 0.0 || lr_decay > 1.0)
      throw ConfigError("lr_decay must be in (0, 1]");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (!(positive_radius_m < negative_radius_m))
      throw ConfigError("positive radius must be < negative radius");
    if (image_shape.size() != 3 || image_shape[0] < 1 || image_shape[1] < 1 ||
        image_shape[2] < 1)
      throw ConfigError("image_shape must be [channels, height, width]");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (hard_negative_cap < 1)
      throw ConfigError("hard_negative_cap must be >= 1");
    if (mc_passes < 2) throw ConfigError("mc_passes must be >= 2");
    if (bins < 1) throw ConfigError("bins must be >= 1");
    if (topk < 1) throw ConfigError("topk must be >= 1");
    encoder.validate();
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::set<std::string>& allowed,
                                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace detail

inline nlohmann::json encoder_to_json(const EncoderSpec& e) {
  nlohmann::json j;
  j["backbone"] = e.backbone;
  j["conv_widths"] = e.conv_widths;
  j["pooling"] = e.pooling;
  j["gem_p"] = e.gem_p;
  j["embedding_dim"] = e.embedding_dim;
  j["dropout_rate"] = e.dropout_rate;
  return j;
}

// Config files keep the embedding dimension at the top level; checkpoint
// headers store it inside the encoder object (`allow_dim_key`).
inline EncoderSpec encoder_from_json(const nlohmann::json& j, int embedding_dim,
                                     bool allow_dim_key = false) {
  std::set<std::string> allowed = {"backbone", "conv_widths", "pooling",
                                   "gem_p", "dropout_rate"};
  if (allow_dim_key) allowed.insert("embedding_dim");
  detail::reject_unknown_keys(j, allowed, "encoder");
  EncoderSpec e;
  e.backbone = j.value("backbone", e.backbone);
  if (j.contains("conv_widths"))
    e.conv_widths = j.at("conv_widths").get<std::vector<int>>();
  e.pooling = j.value("pooling", e.pooling);
  e.gem_p = j.value("gem_p", e.gem_p);
  e.embedding_dim = allow_dim_key ? j.value("embedding_dim", embedding_dim)
                                  : embedding_dim;
  e.dropout_rate = j.value("dropout_rate", e.dropout_rate);
  return e;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["schema_version"] = c.schema_version;
  j["loss"] = to_string(c.loss);
  j["margin"] = c.margin;
  j["margin2"] = c.margin2;
  j["embedding_dim"] = c.encoder.embedding_dim;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["lr_decay"] = c.lr_decay;
  j["weight_decay"] = c.weight_decay;
  j["positive_radius_m"] = c.positive_radius_m;
  j["negative_radius_m"] = c.negative_radius_m;
  j["seed"] = c.seed;
  j["image_shape"] = c.image_shape;
  j["epochs"] = c.epochs;
  j["epochs_student"] = c.epochs_student;
  j["hard_negative_cap"] = c.hard_negative_cap;
  j["mc_passes"] = c.mc_passes;
  j["bins"] = c.bins;
  j["topk"] = c.topk;
  j["encoder"] = encoder_to_json(c.encoder);
  j["encoder"].erase("embedding_dim");
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  detail::reject_unknown_keys(
      j,
      {"schema_version", "loss", "margin", "margin2", "embedding_dim",
       "batch_size", "learning_rate", "lr_decay", "weight_decay",
       "positive_radius_m", "negative_radius_m", "seed", "image_shape",
       "epochs", "epochs_student", "hard_negative_cap", "mc_passes", "bins",
       "topk", "encoder"},
      "config");
  if (!j.contains("schema_version"))
    throw ConfigError("config is missing schema_version");
  ExperimentConfig c;
  c.schema_version = j.at("schema_version").get<int>();
  c.loss = loss_kind_from_string(j.value("loss", "triplet"));
  // Margin default follows the loss kind: 0.4 contrastive, 0.1 otherwise.
  c.margin = j.value("margin",
                     c.loss == LossKind::kContrastive ? 0.4 : 0.1);
  c.margin2 = j.value("margin2", 0.1);
  const int d = j.value("embedding_dim", 2048);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.positive_radius_m = j.value("positive_radius_m", c.positive_radius_m);
  c.negative_radius_m = j.value("negative_radius_m", c.negative_radius_m);
  c.seed = j.value("seed", c.seed);
  if (j.contains("image_shape"))
    c.image_shape = j.at("image_shape").get<std::vector<int>>();
  c.epochs = j.value("epochs", c.epochs);
  c.epochs_student = j.value("epochs_student", c.epochs_student);
  c.hard_negative_cap = j.value("hard_negative_cap", c.hard_negative_cap);
  c.mc_passes = j.value("mc_passes", c.mc_passes);
  c.bins = j.value("bins", c.bins);
  c.topk = j.value("topk", c.topk);
  if (j.contains("encoder")) {
    c.encoder = encoder_from_json(j.at("encoder"), d);
  } else {
    c.encoder.embedding_dim = d;
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const ExperimentConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file '" + path + "'");
  out << config_to_json(c).dump(2) << "\n";
}

// Hash of the canonical (key-sorted, whitespace-free) serialization. Used to
// tie checkpoints and reports back to the exact configuration.
inline std::string config_hash(const ExperimentConfig& c) {
  const std::string canon = config_to_json(c).dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canon)));
  return std::string(buf);
}

}  // namespace stun

#endif  // STUN_CONFIG_HPP_
