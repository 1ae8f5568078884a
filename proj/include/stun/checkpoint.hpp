#ifndef STUN_CHECKPOINT_HPP_
#define STUN_CHECKPOINT_HPP_

#include <string>
#include <vector>

#include "json.hpp"

#include "stun/file_io.hpp"
#include "stun/net.hpp"

namespace stun {

// Self-describing checkpoint: magic, JSON header (version, net kind,
// encoder spec, training step, config hash, block manifest), then the raw
// parameter/buffer arrays. Round-trips are bit-exact.
inline constexpr char kCheckpointMagic[] = "STUNCKP1";
inline constexpr int kCheckpointVersion = 1;

enum class NetKind { kTeacher, kStudent, kPfe, kMcDropout };

inline std::string to_string(NetKind k) {
  switch (k) {
    case NetKind::kTeacher: return "teacher";
    case NetKind::kStudent: return "student";
    case NetKind::kPfe: return "pfe";
    case NetKind::kMcDropout: return "mc_dropout";
  }
  return "?";
}

inline NetKind net_kind_from_string(const std::string& s) {
  if (s == "teacher") return NetKind::kTeacher;
  if (s == "student") return NetKind::kStudent;
  if (s == "pfe") return NetKind::kPfe;
  if (s == "mc_dropout") return NetKind::kMcDropout;
  throw DataError("unknown net kind '" + s + "' in checkpoint");
}

inline bool is_student_kind(NetKind k) {
  return k == NetKind::kStudent || k == NetKind::kPfe;
}

namespace detail {

inline void write_checkpoint(const std::string& path, NetKind kind,
                             const EncoderSpec& spec,
                             std::vector<ParamBlock*> blocks,
                             std::int64_t training_step,
                             const std::string& config_hash) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["net_kind"] = to_string(kind);
  header["encoder"] = encoder_to_json(spec);
  header["training_step"] = training_step;
  header["config_hash"] = config_hash;
  nlohmann::json manifest = nlohmann::json::array();
  for (const ParamBlock* b : blocks) {
    manifest.push_back({{"name", b->name},
                        {"size", b->w.size()},
                        {"trainable", b->trainable},
                        {"buffer", b->buffer}});
  }
  header["blocks"] = manifest;
  const std::string hs = header.dump();

  ByteWriter w;
  w.str(kCheckpointMagic);
  w.u64(hs.size());
  w.str(hs);
  for (const ParamBlock* b : blocks) w.f64_array(b->w);
  write_file_atomic(path, w.buf);
}

inline nlohmann::json read_checkpoint_into(const std::string& path,
                                           std::vector<ParamBlock*> blocks,
                                           const std::string& raw) {
  ByteReader r(raw);
  if (r.str(8) != kCheckpointMagic)
    throw DataError("'" + path + "' is not a checkpoint file");
  const std::uint64_t hlen = r.u64();
  nlohmann::json header = nlohmann::json::parse(r.str(hlen));
  if (header.at("format_version").get<int>() != kCheckpointVersion)
    throw DataError("unsupported checkpoint version in '" + path + "'");
  const auto& manifest = header.at("blocks");
  if (manifest.size() != blocks.size())
    throw DataError("checkpoint block count mismatch in '" + path + "'");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& m = manifest[i];
    if (m.at("name").get<std::string>() != blocks[i]->name ||
        m.at("size").get<std::size_t>() != blocks[i]->w.size())
      throw DataError("checkpoint block '" + m.at("name").get<std::string>() +
                      "' does not match the architecture");
    blocks[i]->w = r.f64_array(blocks[i]->w.size());
  }
  return header;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, TeacherNet& net,
                            NetKind kind, std::int64_t training_step,
                            const std::string& config_hash) {
  detail::write_checkpoint(path, kind, net.extractor.spec, net.blocks(),
                           training_step, config_hash);
}

inline void save_checkpoint(const std::string& path, StudentNet& net,
                            NetKind kind, std::int64_t training_step,
                            const std::string& config_hash) {
  detail::write_checkpoint(path, kind, net.extractor.spec, net.blocks(),
                           training_step, config_hash);
}

// A checkpoint loaded back into a concrete net. Exactly one of
// teacher/student is populated, per `kind`.
struct LoadedCheckpoint {
  NetKind kind = NetKind::kTeacher;
  EncoderSpec spec;
  std::int64_t training_step = 0;
  std::string config_hash;
  TeacherNet teacher;
  StudentNet student;

  bool holds_student() const { return is_student_kind(kind); }
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  const std::string raw = read_file(path);
  // Peek the header for the encoder spec, then rebuild and fill.
  ByteReader peek(raw);
  if (peek.str(8) != kCheckpointMagic)
    throw DataError("'" + path + "' is not a checkpoint file");
  const std::uint64_t hlen = peek.u64();
  nlohmann::json header = nlohmann::json::parse(peek.str(hlen));

  LoadedCheckpoint out;
  out.kind = net_kind_from_string(header.at("net_kind").get<std::string>());
  out.spec = encoder_from_json(header.at("encoder"), 0, /*allow_dim_key=*/true);
  out.training_step = header.at("training_step").get<std::int64_t>();
  out.config_hash = header.at("config_hash").get<std::string>();

  Rng scratch(0);
  if (out.holds_student()) {
    TeacherNet shape;
    shape.extractor.build(out.spec, scratch);
    out.student = copy_from_teacher(shape, scratch);
    detail::read_checkpoint_into(path, out.student.blocks(), raw);
  } else {
    out.teacher.extractor.build(out.spec, scratch);
    detail::read_checkpoint_into(path, out.teacher.blocks(), raw);
  }
  return out;
}

}  // namespace stun

#endif  // STUN_CHECKPOINT_HPP_
