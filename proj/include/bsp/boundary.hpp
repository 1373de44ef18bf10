#pragma once

// Boundary classes and the index algebra used to synthesize them. Frame
// indices in this header are 1-based, matching the blend and resampling
// formulas; callers subtract one when addressing storage.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsp {

enum class BoundaryClass : int {
  DiffClass = 0,
  SameClass = 1,
  DiffSpeed = 2,
  SameSpeed = 3,
};

inline constexpr int kNumBoundaryClasses = 4;

inline const char* to_string(BoundaryClass c) {
  switch (c) {
    case BoundaryClass::DiffClass: return "diff_class";
    case BoundaryClass::SameClass: return "same_class";
    case BoundaryClass::DiffSpeed: return "diff_speed";
    case BoundaryClass::SameSpeed: return "same_speed";
  }
  return "?";
}

/// How the tau+epsilon (or tau) source frames of the two-clip classes are
/// picked from each clip.
enum class FrameSampling {
  window,   // contiguous native-rate window at a uniformly random offset
  uniform,  // evenly spaced over the whole clip
};

struct SynthesisConfig {
  int tau = 8;
  int epsilon = 3;
  std::vector<double> gamma_set{1.0 / 3.0, 0.5, 2.0, 3.0};
  int t_min = 4;
  int t_max = 12;
  FrameSampling two_clip_sampling = FrameSampling::window;

  static SynthesisConfig with_tau(int tau, int epsilon) {
    SynthesisConfig c;
    c.tau = tau;
    c.epsilon = epsilon;
    c.t_min = tau / 2;
    c.t_max = 3 * tau / 2;
    return c;
  }

  int length() const { return 2 * tau; }

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("synthesis config: " + m); };
    if (tau < 2) fail("tau must be >= 2");
    if (epsilon < 1 || epsilon >= tau) fail("epsilon must lie in [1, tau-1]");
    if (gamma_set.empty()) fail("gamma_set is empty");
    for (double g : gamma_set) {
      if (!(g > 0.0) || !std::isfinite(g)) fail("gamma values must be positive");
      if (g == 1.0) fail("gamma_set must not contain 1");
    }
    if (t_min > t_max) fail("change point range is empty");
    if (t_min < 2 || t_max > 2 * tau - 2) fail("change point range must lie inside [2, 2*tau-2]");
  }
};

/// Weight of the outgoing clip at output frame i inside the blend window.
inline double blend_weight_first(int i, int tau, int epsilon) {
  return static_cast<double>(tau + epsilon - i) / (2.0 * epsilon);
}

/// Weight of the incoming clip at output frame i inside the blend window.
inline double blend_weight_second(int i, int tau, int epsilon) {
  return static_cast<double>(i - tau + epsilon) / (2.0 * epsilon);
}

inline bool in_blend_window(int i, int tau, int epsilon) { return i > tau - epsilon && i <= tau + epsilon; }

inline long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5)); }

/// Source frame for output frame i of a speed-change sample with change
/// point t and rate gamma: i itself up to t, then the nearest frame to
/// t + gamma*(i - t).
inline long speed_change_source_index(int i, int t, double gamma) {
  if (i <= t) return i;
  return round_half_up(static_cast<double>(t) + gamma * static_cast<double>(i - t));
}

/// Frames a clip must hold for a speed-change sample drawn with (t, gamma).
inline long speed_change_required_length(int t, double gamma, int tau) {
  long need = 0;
  for (int i = 1; i <= 2 * tau; ++i) need = std::max(need, speed_change_source_index(i, t, gamma));
  return need;
}

/// Shortest source clip every synthesis path can draw from.
inline std::size_t min_source_length(const SynthesisConfig& cfg) {
  long need = 2L * (cfg.tau + cfg.epsilon);
  for (int t = cfg.t_min; t <= cfg.t_max; ++t)
    for (double g : cfg.gamma_set) need = std::max(need, speed_change_required_length(t, g, cfg.tau));
  return static_cast<std::size_t>(need);
}

}  // namespace bsp
