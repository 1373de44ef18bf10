#pragma once

// Boundary-sensitive sample construction from labeled clips.
//
//   DiffClass  clips of two classes, cross-faded over (tau-eps, tau+eps]
//   SameClass  two clips of one class, hard cut after frame tau
//   DiffSpeed  one clip, playback rate switches to gamma after frame t
//   SameSpeed  one clip at its native rate (the non-boundary class)
//
// All constructors are pure functions of their inputs and the rng state.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsp/boundary.hpp"
#include "bsp/parallel.hpp"
#include "bsp/rng.hpp"
#include "bsp/toyclips.hpp"

namespace bsp {

struct Provenance {
  std::vector<int> clip_ids;
  std::optional<double> gamma;
  // Zero-based source frame per output frame, -1 where the clip does not
  // contribute. Blended frames list both.
  std::vector<int> first_frames;
  std::vector<int> second_frames;
};

struct SynthSample {
  std::size_t T = 0, H = 0, W = 0, C = 0;
  std::vector<float> pixels;
  BoundaryClass boundary_class = BoundaryClass::SameSpeed;
  std::optional<int> change_point;  // 1-based frame index of the boundary
  Provenance provenance;

  std::size_t frame_size() const { return H * W * C; }
  std::span<const float> frame(std::size_t i) const {
    return std::span<const float>(pixels).subspan(i * frame_size(), frame_size());
  }
  int label() const { return static_cast<int>(boundary_class); }
};

class ClipTooShort : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline SynthSample blank_sample(const Clip& like, int length) {
  SynthSample s;
  s.T = static_cast<std::size_t>(length);
  s.H = like.H;
  s.W = like.W;
  s.C = like.C;
  s.pixels.resize(s.T * s.frame_size());
  s.provenance.first_frames.assign(s.T, -1);
  s.provenance.second_frames.assign(s.T, -1);
  return s;
}

inline void copy_frame(SynthSample& s, std::size_t dst, const Clip& clip, std::size_t src) {
  auto f = clip.frame(src);
  std::copy(f.begin(), f.end(), s.pixels.begin() + static_cast<std::ptrdiff_t>(dst * s.frame_size()));
}

inline void require_length(const Clip& clip, std::size_t need, const char* what) {
  if (clip.T < need)
    throw ClipTooShort(std::string(what) + ": clip " + std::to_string(clip.clip_id) + " has " +
                       std::to_string(clip.T) + " frames, needs " + std::to_string(need));
}

inline void require_same_shape(const Clip& a, const Clip& b) {
  if (a.H != b.H || a.W != b.W || a.C != b.C)
    throw std::invalid_argument("synthesis: clips " + std::to_string(a.clip_id) + " and " +
                                std::to_string(b.clip_id) + " have different frame shapes");
}

}  // namespace detail

/// Zero-based indices of n frames drawn from a clip of length T.
inline std::vector<std::size_t> sample_frames(std::size_t T, std::size_t n, FrameSampling mode, Rng& rng) {
  if (n == 0 || T < n) throw ClipTooShort("sample_frames: cannot draw " + std::to_string(n) + " of " + std::to_string(T));
  std::vector<std::size_t> idx(n);
  if (mode == FrameSampling::window) {
    const std::size_t start = uniform_index(rng, T - n + 1);
    for (std::size_t j = 0; j < n; ++j) idx[j] = start + j;
  } else {
    for (std::size_t j = 0; j < n; ++j)
      idx[j] = n == 1 ? 0
                      : static_cast<std::size_t>(round_half_up(static_cast<double>(j) * static_cast<double>(T - 1) /
                                                               static_cast<double>(n - 1)));
  }
  return idx;
}

inline SynthSample make_diff_class(const Clip& clip1, const Clip& clip2, const SynthesisConfig& cfg, Rng& rng) {
  cfg.validate();
  if (clip1.class_id == clip2.class_id)
    throw std::invalid_argument("make_diff_class: both clips have class " + std::to_string(clip1.class_id));
  detail::require_same_shape(clip1, clip2);
  const int tau = cfg.tau, eps = cfg.epsilon;
  const auto n = static_cast<std::size_t>(tau + eps);
  detail::require_length(clip1, n, "make_diff_class");
  detail::require_length(clip2, n, "make_diff_class");
  const auto f1 = sample_frames(clip1.T, n, cfg.two_clip_sampling, rng);
  const auto f2 = sample_frames(clip2.T, n, cfg.two_clip_sampling, rng);

  SynthSample s = detail::blank_sample(clip1, cfg.length());
  const std::size_t fs = s.frame_size();
  for (int i = 1; i <= 2 * tau; ++i) {
    const auto dst = static_cast<std::size_t>(i - 1);
    if (i <= tau - eps) {
      detail::copy_frame(s, dst, clip1, f1[i - 1]);
      s.provenance.first_frames[dst] = static_cast<int>(f1[i - 1]);
    } else if (in_blend_window(i, tau, eps)) {
      const double w1 = blend_weight_first(i, tau, eps);
      const double w2 = blend_weight_second(i, tau, eps);
      const auto a = clip1.frame(f1[i - 1]);
      const auto b = clip2.frame(f2[i - tau + eps - 1]);
      for (std::size_t p = 0; p < fs; ++p)
        s.pixels[dst * fs + p] = static_cast<float>(w1 * a[p] + w2 * b[p]);
      s.provenance.first_frames[dst] = static_cast<int>(f1[i - 1]);
      s.provenance.second_frames[dst] = static_cast<int>(f2[i - tau + eps - 1]);
    } else {
      detail::copy_frame(s, dst, clip2, f2[i - tau + eps - 1]);
      s.provenance.second_frames[dst] = static_cast<int>(f2[i - tau + eps - 1]);
    }
  }
  s.boundary_class = BoundaryClass::DiffClass;
  s.change_point = tau;
  s.provenance.clip_ids = {clip1.clip_id, clip2.clip_id};
  return s;
}

inline SynthSample make_same_class(const Clip& clip1, const Clip& clip2, const SynthesisConfig& cfg, Rng& rng) {
  cfg.validate();
  if (clip1.class_id != clip2.class_id)
    throw std::invalid_argument("make_same_class: classes differ (" + std::to_string(clip1.class_id) + " vs " +
                                std::to_string(clip2.class_id) + ")");
  if (clip1.clip_id == clip2.clip_id)
    throw std::invalid_argument("make_same_class: both inputs are clip " + std::to_string(clip1.clip_id));
  detail::require_same_shape(clip1, clip2);
  const int tau = cfg.tau;
  const auto n = static_cast<std::size_t>(tau);
  detail::require_length(clip1, n, "make_same_class");
  detail::require_length(clip2, n, "make_same_class");
  const auto f1 = sample_frames(clip1.T, n, cfg.two_clip_sampling, rng);
  const auto f2 = sample_frames(clip2.T, n, cfg.two_clip_sampling, rng);

  SynthSample s = detail::blank_sample(clip1, cfg.length());
  for (std::size_t j = 0; j < n; ++j) {
    detail::copy_frame(s, j, clip1, f1[j]);
    s.provenance.first_frames[j] = static_cast<int>(f1[j]);
    detail::copy_frame(s, n + j, clip2, f2[j]);
    s.provenance.second_frames[n + j] = static_cast<int>(f2[j]);
  }
  s.boundary_class = BoundaryClass::SameClass;
  s.change_point = tau;
  s.provenance.clip_ids = {clip1.clip_id, clip2.clip_id};
  return s;
}

/// Speed-change sample with explicit (t, gamma, offset). `offset` is the
/// zero-based clip frame shown as output frame 1. gamma == 1 is accepted
/// here and reproduces the native-rate slice.
inline SynthSample speed_change_at(const Clip& clip, const SynthesisConfig& cfg, int t, double gamma,
                                   std::size_t offset) {
  const int L = cfg.length();
  if (t < 1 || t >= L) throw std::invalid_argument("speed_change_at: change point outside [1, 2*tau-1]");
  if (!(gamma > 0.0)) throw std::invalid_argument("speed_change_at: gamma must be positive");
  const auto need = static_cast<std::size_t>(speed_change_required_length(t, gamma, cfg.tau));
  detail::require_length(clip, offset + need, "make_diff_speed");
  SynthSample s = detail::blank_sample(clip, L);
  for (int i = 1; i <= L; ++i) {
    const auto src = offset + static_cast<std::size_t>(speed_change_source_index(i, t, gamma) - 1);
    detail::copy_frame(s, static_cast<std::size_t>(i - 1), clip, src);
    s.provenance.first_frames[static_cast<std::size_t>(i - 1)] = static_cast<int>(src);
  }
  s.boundary_class = BoundaryClass::DiffSpeed;
  s.change_point = t;
  s.provenance.clip_ids = {clip.clip_id};
  s.provenance.gamma = gamma;
  return s;
}

inline SynthSample make_diff_speed(const Clip& clip, const SynthesisConfig& cfg, Rng& rng) {
  cfg.validate();
  const int t = uniform_int(rng, cfg.t_min, cfg.t_max);
  const double gamma = cfg.gamma_set[uniform_index(rng, cfg.gamma_set.size())];
  const auto need = static_cast<std::size_t>(speed_change_required_length(t, gamma, cfg.tau));
  detail::require_length(clip, need, "make_diff_speed");
  const std::size_t offset = uniform_index(rng, clip.T - need + 1);
  return speed_change_at(clip, cfg, t, gamma, offset);
}

inline SynthSample same_speed_at(const Clip& clip, const SynthesisConfig& cfg, std::size_t offset) {
  const auto L = static_cast<std::size_t>(cfg.length());
  detail::require_length(clip, offset + L, "make_same_speed");
  SynthSample s = detail::blank_sample(clip, cfg.length());
  for (std::size_t i = 0; i < L; ++i) {
    detail::copy_frame(s, i, clip, offset + i);
    s.provenance.first_frames[i] = static_cast<int>(offset + i);
  }
  s.boundary_class = BoundaryClass::SameSpeed;
  s.change_point.reset();
  s.provenance.clip_ids = {clip.clip_id};
  return s;
}

inline SynthSample make_same_speed(const Clip& clip, const SynthesisConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto L = static_cast<std::size_t>(cfg.length());
  detail::require_length(clip, L, "make_same_speed");
  return same_speed_at(clip, cfg, uniform_index(rng, clip.T - L + 1));
}

/// Checks that a split can feed every boundary class.
inline void check_synthesizable(const ClipDataset& ds, Split split) {
  const auto all = ds.indices(split);
  if (all.empty()) throw std::invalid_argument(std::string("sample_batch: ") + to_string(split) + " split is empty");
  std::vector<int> per_class(static_cast<std::size_t>(std::max(ds.K, 1)), 0);
  for (auto i : all) per_class.at(static_cast<std::size_t>(ds.clips[i].class_id))++;
  int classes = 0;
  for (int k = 0; k < static_cast<int>(per_class.size()); ++k) {
    if (per_class[k] == 0) continue;
    ++classes;
    if (per_class[k] < 2)
      throw std::invalid_argument("sample_batch: class " + std::to_string(k) + " has fewer than 2 " +
                                  to_string(split) + " clips; same-class quota cannot be met");
  }
  if (classes < 2) throw std::invalid_argument("sample_batch: diff-class quota needs at least 2 classes");
}

/// One sample of the given class with sources drawn uniformly from `pool`.
inline SynthSample synthesize_one(const ClipDataset& ds, const std::vector<std::size_t>& pool, BoundaryClass cls,
                                  const SynthesisConfig& cfg, Rng& rng) {
  auto pick = [&]() -> const Clip& { return ds.clips[pool[uniform_index(rng, pool.size())]]; };
  switch (cls) {
    case BoundaryClass::DiffClass: {
      const Clip& a = pick();
      std::vector<std::size_t> others;
      for (auto i : pool)
        if (ds.clips[i].class_id != a.class_id) others.push_back(i);
      const Clip& b = ds.clips[others[uniform_index(rng, others.size())]];
      return make_diff_class(a, b, cfg, rng);
    }
    case BoundaryClass::SameClass: {
      const Clip& a = pick();
      std::vector<std::size_t> mates;
      for (auto i : pool)
        if (ds.clips[i].class_id == a.class_id && ds.clips[i].clip_id != a.clip_id) mates.push_back(i);
      const Clip& b = ds.clips[mates[uniform_index(rng, mates.size())]];
      return make_same_class(a, b, cfg, rng);
    }
    case BoundaryClass::DiffSpeed: {
      constexpr int kRetries = 16;
      for (int attempt = 0;; ++attempt) {
        try {
          return make_diff_speed(pick(), cfg, rng);
        } catch (const ClipTooShort&) {
          if (attempt + 1 >= kRetries) throw;
        }
      }
    }
    case BoundaryClass::SameSpeed:
      return make_same_speed(pick(), cfg, rng);
  }
  throw std::logic_error("synthesize_one: unknown class");
}

/// Balanced batch: batch_size/4 samples of each class, interleaved
/// 0,1,2,3,0,1,... Each sample runs on its own rng stream derived from one
/// draw of `rng`, so output does not depend on the worker count.
inline std::vector<SynthSample> sample_batch(const ClipDataset& ds, const SynthesisConfig& cfg, Rng& rng,
                                             std::size_t batch_size, Split split = Split::train) {
  if (batch_size == 0 || batch_size % 4 != 0)
    throw std::invalid_argument("sample_batch: batch_size " + std::to_string(batch_size) + " is not a positive multiple of 4");
  cfg.validate();
  check_synthesizable(ds, split);
  const auto pool = ds.indices(split);
  const std::uint64_t batch_seed = rng();
  std::vector<SynthSample> out(batch_size);
  parallel_for(batch_size, [&](std::size_t k) {
    Rng local(derive_seed(batch_seed, k));
    out[k] = synthesize_one(ds, pool, static_cast<BoundaryClass>(k % 4), cfg, local);
  });
  return out;
}

/// Sample dump: one BSPC tensor per sample plus labels.json.
inline void dump_samples(const std::vector<SynthSample>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json labels = nlohmann::json::array();
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& s = samples[k];
    char name[32];
    std::snprintf(name, sizeof name, "sample_%06zu.bspc", k);
    write_bspc((dir / name).string(), s.T, s.H, s.W, s.C, s.pixels);
    nlohmann::json e{{"sample_id", k}, {"boundary_class", s.label()}, {"file", name}};
    e["change_point"] = s.change_point ? nlohmann::json(*s.change_point) : nlohmann::json(nullptr);
    e["gamma"] = s.provenance.gamma ? nlohmann::json(*s.provenance.gamma) : nlohmann::json(nullptr);
    labels.push_back(std::move(e));
  }
  std::ofstream out(dir / "labels.json");
  if (!out) throw FormatError(FormatErrc::io, "cannot write " + (dir / "labels.json").string());
  out << labels.dump(2) << '\n';
}

}  // namespace bsp
