#ifndef STUN_SYNTHDATA_HPP_
#define STUN_SYNTHDATA_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "stun/errors.hpp"
#include "stun/file_io.hpp"
#include "stun/rng.hpp"
#include "stun/types.hpp"

namespace stun {

// Synthetic geo-tagged dataset: one smooth random base pattern per place on
// a grid, samples are the base plus per-sample Gaussian pixel noise of an
// assigned level ("clean" or "noisy"). The injected noise level is the
// controllable stand-in for how informative a view is, which is what the
// learned uncertainty should track.
struct SynthSpec {
  int num_places = 50;
  int samples_per_place = 10;
  double place_spacing_m = 100.0;
  std::vector<int> image_shape = {3, 32, 32};
  double noisy_fraction = 0.5;
  double noise_std = 0.25;
  std::uint64_t seed = 0;

  void validate(double negative_radius_m) const {
    if (num_places < 1) throw ConfigError("num_places must be >= 1");
    if (samples_per_place < 1)
      throw ConfigError("samples_per_place must be >= 1");
    if (!(place_spacing_m > negative_radius_m))
      throw ConfigError(
          "place_spacing_m must exceed the negative radius so places are "
          "unambiguous");
    if (image_shape.size() != 3 || image_shape[0] < 1 || image_shape[1] < 1 ||
        image_shape[2] < 1)
      throw ConfigError("image_shape must be [channels, height, width]");
    if (noisy_fraction < 0.0 || noisy_fraction > 1.0)
      throw ConfigError("noisy_fraction must be in [0, 1]");
    if (noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
  }
};

namespace detail {

// Low-frequency field: coarse 4x4 random grid, bilinearly upsampled, mapped
// into [0.25, 0.75] so noise keeps pixels comfortably inside [0, 1].
inline Tensor base_pattern(int channels, int height, int width, Rng& rng) {
  constexpr int kCoarse = 4;
  Tensor img({static_cast<std::size_t>(channels),
              static_cast<std::size_t>(height),
              static_cast<std::size_t>(width)});
  for (int c = 0; c < channels; ++c) {
    std::array<double, kCoarse * kCoarse> grid;
    for (double& v : grid) v = rng.uniform();
    for (int i = 0; i < height; ++i) {
      const double fy = height > 1
                            ? static_cast<double>(i) / (height - 1) * (kCoarse - 1)
                            : 0.0;
      const int y0 = std::min(kCoarse - 2, static_cast<int>(fy));
      const double ty = fy - y0;
      for (int j = 0; j < width; ++j) {
        const double fx =
            width > 1 ? static_cast<double>(j) / (width - 1) * (kCoarse - 1)
                      : 0.0;
        const int x0 = std::min(kCoarse - 2, static_cast<int>(fx));
        const double tx = fx - x0;
        const double v00 = grid[y0 * kCoarse + x0];
        const double v01 = grid[y0 * kCoarse + x0 + 1];
        const double v10 = grid[(y0 + 1) * kCoarse + x0];
        const double v11 = grid[(y0 + 1) * kCoarse + x0 + 1];
        const double v = (1 - ty) * ((1 - tx) * v00 + tx * v01) +
                         ty * ((1 - tx) * v10 + tx * v11);
        img.at(c, i, j) = 0.25 + 0.5 * v;
      }
    }
  }
  return img;
}

}  // namespace detail

inline Dataset generate(const SynthSpec& spec,
                        double negative_radius_m = 25.0) {
  spec.validate(negative_radius_m);
  const int cols =
      static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.num_places))));
  Dataset data;
  data.image_shape = spec.image_shape;
  const int c = spec.image_shape[0], h = spec.image_shape[1],
            w = spec.image_shape[2];
  std::int64_t next_id = 0;
  for (int p = 0; p < spec.num_places; ++p) {
    Rng place_rng(derive_seed(spec.seed, 10000000ULL + p));
    const Tensor base = detail::base_pattern(c, h, w, place_rng);
    const GeoTag geo{(p % cols) * spec.place_spacing_m,
                     (p / cols) * spec.place_spacing_m};

    // Which samples of this place are noisy is a seeded draw, so any
    // index-based split sees both kinds.
    std::vector<std::size_t> order(spec.samples_per_place);
    std::iota(order.begin(), order.end(), 0);
    Rng assign_rng(derive_seed(spec.seed, 20000000ULL + p));
    assign_rng.shuffle(order);
    const auto num_noisy = static_cast<std::size_t>(
        std::llround(spec.noisy_fraction * spec.samples_per_place));
    std::vector<double> stds(spec.samples_per_place, 0.0);
    for (std::size_t t = 0; t < num_noisy; ++t) stds[order[t]] = spec.noise_std;

    for (int s = 0; s < spec.samples_per_place; ++s) {
      PlaceSample sample;
      sample.id = next_id++;
      sample.geo = geo;
      sample.image = base;
      const double std_s = stds[s];
      if (std_s > 0.0) {
        Rng noise_rng(derive_seed(spec.seed, 30000000ULL + sample.id));
        for (double& px : sample.image.data)
          px = std::clamp(px + noise_rng.normal(0.0, std_s), 0.0, 1.0);
      }
      data.samples.push_back(std::move(sample));
      data.noise_std.push_back(std_s);
    }
  }
  return data;
}

// ---------------------------------------------------------------------------
// Manifest + image file IO. Images are stored as a small lossless tensor
// container so round trips are exact; the manifest is line-delimited JSON
// with one sample per line: id, image path (relative to the manifest),
// easting, northing, optional noise_std.
// ---------------------------------------------------------------------------

inline constexpr char kImageMagic[] = "STUNIMG1";

inline void save_image(const Tensor& image, const std::string& path) {
  ByteWriter w;
  w.str(kImageMagic);
  w.u64(image.dim(0));
  w.u64(image.dim(1));
  w.u64(image.dim(2));
  w.f64_array(image.data);
  write_file_atomic(path, w.buf);
}

inline Tensor load_image(const std::string& path) {
  const std::string raw = read_file(path);
  ByteReader r(raw);
  if (r.str(8) != kImageMagic)
    throw DataError("'" + path + "' is not an image tensor file");
  const std::uint64_t c = r.u64(), h = r.u64(), w = r.u64();
  Tensor img({c, h, w});
  img.data = r.f64_array(c * h * w);
  return img;
}

inline std::string image_file_name(std::int64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06lld.img", static_cast<long long>(id));
  return buf;
}

// Writes images/<id>.img files under `dir` for every sample.
inline void write_images(const Dataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  for (const PlaceSample& s : data.samples)
    save_image(s.image,
               (fs::path(dir) / "images" / image_file_name(s.id)).string());
}

// Writes the manifest only; image files are expected to already exist (or
// be written separately) under dir/images/.
inline void write_manifest(const Dataset& data, const std::string& dir,
                           const std::string& name) {
  std::string buf;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const PlaceSample& s = data.samples[i];
    nlohmann::json j;
    j["id"] = s.id;
    j["image"] = "images/" + image_file_name(s.id);
    j["easting"] = s.geo.easting;
    j["northing"] = s.geo.northing;
    if (data.has_noise_labels()) j["noise_std"] = data.noise_std[i];
    buf += j.dump();
    buf += "\n";
  }
  namespace fs = std::filesystem;
  write_file_atomic((fs::path(dir) / name).string(), buf);
}

inline void save_dataset(const Dataset& data, const std::string& dir,
                         const std::string& manifest_name = "manifest.jsonl") {
  write_images(data, dir);
  write_manifest(data, dir, manifest_name);
}

inline Dataset load_manifest(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest '" + manifest_path + "'");
  const fs::path base = fs::path(manifest_path).parent_path();
  Dataset data;
  bool any_noise = false;
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> stds;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      PlaceSample s;
      s.id = j.at("id").get<std::int64_t>();
      s.geo.easting = j.at("easting").get<double>();
      s.geo.northing = j.at("northing").get<double>();
      const std::string rel = j.at("image").get<std::string>();
      try {
        s.image = load_image((base / rel).string());
      } catch (const DataError& e) {
        throw DataError("sample id " + std::to_string(s.id) +
                        ": cannot load image: " + e.what());
      }
      stds.push_back(j.value("noise_std", 0.0));
      if (j.contains("noise_std")) any_noise = true;
      data.samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest '" + manifest_path + "' line " +
                      std::to_string(line_no) + ": " + e.what());
    }
  }
  if (data.samples.empty())
    throw DataError("manifest '" + manifest_path + "' has no samples");
  data.image_shape = {static_cast<int>(data.samples[0].image.dim(0)),
                      static_cast<int>(data.samples[0].image.dim(1)),
                      static_cast<int>(data.samples[0].image.dim(2))};
  for (const PlaceSample& s : data.samples)
    if (static_cast<int>(s.image.dim(0)) != data.image_shape[0] ||
        static_cast<int>(s.image.dim(1)) != data.image_shape[1] ||
        static_cast<int>(s.image.dim(2)) != data.image_shape[2])
      throw DataError("sample id " + std::to_string(s.id) +
                      " image shape differs from the dataset shape");
  if (any_noise) data.noise_std = std::move(stds);
  return data;
}

// Per-place index split: within each place (samples grouped in generation
// order), the first round(train*S) samples go to the training set, the next
// round(database*S) to the database, the rest become queries.
struct SplitFractions {
  double train = 0.6;
  double database = 0.2;
  // query takes the remainder

  void validate() const {
    if (train < 0.0 || database < 0.0 || train + database > 1.0)
      throw ConfigError("split fractions must be nonnegative and sum to <= 1");
  }
};

struct DatasetSplits {
  Dataset train, database, query;
};

inline DatasetSplits split_dataset(const Dataset& data, int samples_per_place,
                                   const SplitFractions& f) {
  f.validate();
  if (samples_per_place < 1 || data.size() % samples_per_place != 0)
    throw DataError("split_dataset: dataset size is not a whole number of places");
  DatasetSplits out;
  out.train.image_shape = out.database.image_shape = out.query.image_shape =
      data.image_shape;
  const auto b1 = static_cast<int>(std::llround(f.train * samples_per_place));
  const auto b2 = b1 + static_cast<int>(
                           std::llround(f.database * samples_per_place));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int s = static_cast<int>(i % samples_per_place);
    Dataset& dst = s < b1 ? out.train : (s < b2 ? out.database : out.query);
    dst.samples.push_back(data.samples[i]);
    if (data.has_noise_labels()) dst.noise_std.push_back(data.noise_std[i]);
  }
  return out;
}

// --- generator spec file (JSON, versioned, unknown keys rejected) ---------

struct SynthGenFile {
  SynthSpec spec;
  bool with_splits = false;
  SplitFractions splits;
};

inline SynthGenFile load_synth_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open synth spec '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("synth spec parse error: " + std::string(e.what()));
  }
  detail::reject_unknown_keys(
      j,
      {"schema_version", "num_places", "samples_per_place", "place_spacing_m",
       "image_shape", "noisy_fraction", "noise_std", "seed", "splits"},
      "synth spec");
  if (j.value("schema_version", 0) != 1)
    throw ConfigError("synth spec requires schema_version 1");
  SynthGenFile out;
  out.spec.num_places = j.value("num_places", out.spec.num_places);
  out.spec.samples_per_place =
      j.value("samples_per_place", out.spec.samples_per_place);
  out.spec.place_spacing_m = j.value("place_spacing_m", out.spec.place_spacing_m);
  if (j.contains("image_shape"))
    out.spec.image_shape = j.at("image_shape").get<std::vector<int>>();
  out.spec.noisy_fraction = j.value("noisy_fraction", out.spec.noisy_fraction);
  out.spec.noise_std = j.value("noise_std", out.spec.noise_std);
  out.spec.seed = j.value("seed", out.spec.seed);
  if (j.contains("splits")) {
    detail::reject_unknown_keys(j.at("splits"), {"train", "database"},
                                "synth spec splits");
    out.with_splits = true;
    out.splits.train = j.at("splits").value("train", out.splits.train);
    out.splits.database = j.at("splits").value("database", out.splits.database);
    out.splits.validate();
  }
  return out;
}

}  // namespace stun

#endif  // STUN_SYNTHDATA_HPP_
