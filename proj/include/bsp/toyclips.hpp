#pragma once

// Procedural labeled clip dataset and its on-disk store.
//
// Each class is a drifting sinusoidal grating. Class c fixes brightness,
// orientation, spatial period and drift direction; each clip draws its own
// drift speed and phase. Frames are stored as float32 in [0,1].

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsp/binio.hpp"
#include "bsp/boundary.hpp"
#include "bsp/error.hpp"
#include "bsp/parallel.hpp"
#include "bsp/rng.hpp"

namespace bsp {

enum class Split : std::uint8_t { train = 0, val = 1 };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "val"; }

struct Clip {
  int clip_id = 0;
  int class_id = 0;
  Split split = Split::train;
  std::size_t T = 0, H = 0, W = 0, C = 0;
  double fps = 25.0;
  std::vector<float> pixels;  // T*H*W*C, row-major

  std::size_t frame_size() const { return H * W * C; }
  std::size_t length() const { return T; }
  /// Zero-based frame view.
  std::span<const float> frame(std::size_t t) const {
    return std::span<const float>(pixels).subspan(t * frame_size(), frame_size());
  }

  friend bool operator==(const Clip&, const Clip&) = default;
};

struct ClipDataset {
  int K = 0;
  std::size_t H = 0, W = 0, C = 0;
  double fps = 25.0;
  std::vector<Clip> clips;

  std::size_t frame_size() const { return H * W * C; }

  /// Indices into `clips` for one split, optionally restricted to a class.
  std::vector<std::size_t> indices(Split split, int class_id = -1) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < clips.size(); ++i)
      if (clips[i].split == split && (class_id < 0 || clips[i].class_id == class_id)) out.push_back(i);
    return out;
  }

  friend bool operator==(const ClipDataset&, const ClipDataset&) = default;
};

struct SourceConfig {
  int K = 8;
  int clips_per_class = 40;
  int len = 64;
  int H = 24;
  int W = 24;
  int C = 1;
  double noise_sigma = 0.05;
  double fps = 25.0;
};

namespace detail {

struct ClipStyle {
  double base = 0.5;       // class brightness
  double angle = 0.0;      // grating orientation, radians
  double period = 6.0;     // spatial period, pixels
  double drift = 0.6;      // signed phase advance per frame, radians
  double phase = 0.0;
};

// Classes come in orientation pairs drifting in opposite directions.
inline ClipStyle draw_style(int class_id, int K, Rng& rng) {
  const int orientations = (K + 1) / 2;
  const int o = class_id % orientations;
  const double sign = (class_id / orientations) % 2 == 0 ? 1.0 : -1.0;
  ClipStyle s;
  s.base = 0.4 + 0.2 * static_cast<double>(class_id) / static_cast<double>(K - 1);
  s.angle = std::numbers::pi * o / orientations;
  s.period = 5.0 + static_cast<double>(o % 4);
  s.drift = sign * uniform_real(rng, 0.5, 0.7);
  s.phase = uniform_real(rng, 0.0, 2.0 * std::numbers::pi);
  return s;
}

/// Clean (noise-free) pixel in [0.1, 0.9].
inline double render_pixel(const ClipStyle& s, double t, int x, int y, int ch, int C) {
  const double u = x * std::cos(s.angle) + y * std::sin(s.angle);
  const double g = std::cos(2.0 * std::numbers::pi * u / s.period - s.drift * t + s.phase);
  const double gain = 1.0 - 0.2 * static_cast<double>(ch) / std::max(1, C);
  return s.base + gain * 0.3 * g;
}

}  // namespace detail

/// Deterministic procedural dataset. Within each class every fourth clip
/// (by index) goes to the val split, giving a 3:1 train:val ratio.
inline ClipDataset generate_source(std::uint64_t seed, const SourceConfig& cfg,
                                   const SynthesisConfig& synth = SynthesisConfig{}) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("gen-source: " + m); };
  if (cfg.K < 4) fail("K must be >= 4");
  if (cfg.clips_per_class < 4) fail("clips_per_class must be >= 4 (each class needs train pairs and a val clip)");
  if (cfg.H < 8 || cfg.W < 8) fail("H and W must be >= 8");
  if (cfg.C < 1) fail("C must be >= 1");
  if (cfg.noise_sigma < 0.0) fail("noise_sigma must be >= 0");
  synth.validate();
  const std::size_t min_len = min_source_length(synth);
  if (cfg.len < 0 || static_cast<std::size_t>(cfg.len) < min_len)
    fail("len " + std::to_string(cfg.len) + " too short for synthesis; minimum length is " +
         std::to_string(min_len));

  ClipDataset ds;
  ds.K = cfg.K;
  ds.H = static_cast<std::size_t>(cfg.H);
  ds.W = static_cast<std::size_t>(cfg.W);
  ds.C = static_cast<std::size_t>(cfg.C);
  ds.fps = cfg.fps;
  const std::size_t total = static_cast<std::size_t>(cfg.K) * static_cast<std::size_t>(cfg.clips_per_class);
  ds.clips.resize(total);
  parallel_for(total, [&](std::size_t idx) {
    const int c = static_cast<int>(idx / static_cast<std::size_t>(cfg.clips_per_class));
    const int j = static_cast<int>(idx % static_cast<std::size_t>(cfg.clips_per_class));
    Rng rng(derive_seed(seed, idx));
    const auto style = detail::draw_style(c, cfg.K, rng);
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma > 0.0 ? cfg.noise_sigma : 1.0);
    Clip& clip = ds.clips[idx];
    clip.clip_id = static_cast<int>(idx);
    clip.class_id = c;
    clip.split = (j % 4 == 3) ? Split::val : Split::train;
    clip.T = static_cast<std::size_t>(cfg.len);
    clip.H = ds.H;
    clip.W = ds.W;
    clip.C = ds.C;
    clip.fps = cfg.fps;
    clip.pixels.resize(clip.T * clip.frame_size());
    std::size_t k = 0;
    for (int t = 0; t < cfg.len; ++t)
      for (int y = 0; y < cfg.H; ++y)
        for (int x = 0; x < cfg.W; ++x)
          for (int ch = 0; ch < cfg.C; ++ch) {
            double v = detail::render_pixel(style, t, x, y, ch, cfg.C);
            if (cfg.noise_sigma > 0.0) v += noise(rng);
            clip.pixels[k++] = static_cast<float>(std::clamp(v, 0.0, 1.0));
          }
  });
  return ds;
}

// ---------------------------------------------------------------------------
// Storage: manifest.json + one "BSPC" tensor file per clip.

inline constexpr int kManifestVersion = 1;

/// Writes a "BSPC" tensor: magic, u32 T,H,W,C, then float32 data.
inline void write_bspc(const std::string& path, std::size_t T, std::size_t H, std::size_t W, std::size_t C,
                       std::span<const float> data) {
  if (data.size() != T * H * W * C)
    throw FormatError(FormatErrc::shape_mismatch, path + ": data length does not match T*H*W*C");
  binio::Writer w;
  w.bytes("BSPC", 4);
  for (auto d : {T, H, W, C}) w.u32(static_cast<std::uint32_t>(d));
  for (float v : data) w.f32(v);
  w.save(path);
}

struct BspcTensor {
  std::size_t T = 0, H = 0, W = 0, C = 0;
  std::vector<float> data;
};

inline BspcTensor read_bspc(const std::string& path) {
  auto r = binio::Reader::open(path);
  r.magic("BSPC");
  BspcTensor t;
  t.T = r.u32();
  t.H = r.u32();
  t.W = r.u32();
  t.C = r.u32();
  t.data.resize(t.T * t.H * t.W * t.C);
  r.f32_array(t.data);
  return t;
}

/// Writes `dir/manifest.json` and `dir/clip_XXXXXX.bspc` for every clip.
inline void save_dataset(const ClipDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["version"] = kManifestVersion;
  m["K"] = ds.K;
  m["H"] = ds.H;
  m["W"] = ds.W;
  m["C"] = ds.C;
  m["fps"] = ds.fps;
  m["clips"] = nlohmann::json::array();
  for (const auto& c : ds.clips) {
    char name[32];
    std::snprintf(name, sizeof name, "clip_%06d.bspc", c.clip_id);
    write_bspc((dir / name).string(), c.T, c.H, c.W, c.C, c.pixels);
    m["clips"].push_back(
        {{"id", c.clip_id}, {"class", c.class_id}, {"split", to_string(c.split)}, {"file", name}, {"len", c.T}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw FormatError(FormatErrc::io, "cannot write " + (dir / "manifest.json").string());
  out << m.dump(2) << '\n';
}

inline ClipDataset load_dataset(const std::filesystem::path& dir) {
  const auto mpath = dir / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw FormatError(FormatErrc::io, "cannot open " + mpath.string());
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrc::bad_manifest, mpath.string() + ": " + e.what());
  }
  ClipDataset ds;
  try {
    if (m.at("version").get<int>() != kManifestVersion)
      throw FormatError(FormatErrc::version_mismatch, mpath.string() + ": unsupported manifest version");
    ds.K = m.at("K").get<int>();
    ds.H = m.at("H").get<std::size_t>();
    ds.W = m.at("W").get<std::size_t>();
    ds.C = m.at("C").get<std::size_t>();
    ds.fps = m.at("fps").get<double>();
    for (const auto& e : m.at("clips")) {
      Clip c;
      c.clip_id = e.at("id").get<int>();
      c.class_id = e.at("class").get<int>();
      const auto split = e.at("split").get<std::string>();
      if (split != "train" && split != "val")
        throw FormatError(FormatErrc::bad_manifest, mpath.string() + ": unknown split '" + split + "'");
      c.split = split == "train" ? Split::train : Split::val;
      const auto file = e.at("file").get<std::string>();
      const auto len = e.at("len").get<std::size_t>();
      auto t = read_bspc((dir / file).string());
      if (t.T != len || t.H != ds.H || t.W != ds.W || t.C != ds.C)
        throw FormatError(FormatErrc::shape_mismatch, file + ": tensor shape disagrees with manifest");
      c.T = t.T;
      c.H = t.H;
      c.W = t.W;
      c.C = t.C;
      c.fps = ds.fps;
      c.pixels = std::move(t.data);
      ds.clips.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrc::bad_manifest, mpath.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace bsp
