#pragma once

// Synthetic temporal-localization benchmark: untrimmed videos built from
// val clips, frozen sliding-snippet features, boundary scores, a linear
// probe, and the AP / tIoU / recall metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsp/integration.hpp"

namespace bsp {

enum class BackgroundKind { freeze, noise, mixed };

inline const char* to_string(BackgroundKind k) {
  switch (k) {
    case BackgroundKind::freeze: return "freeze";
    case BackgroundKind::noise: return "noise";
    case BackgroundKind::mixed: return "mixed";
  }
  return "?";
}

inline BackgroundKind background_from_string(const std::string& s) {
  if (s == "freeze") return BackgroundKind::freeze;
  if (s == "noise") return BackgroundKind::noise;
  if (s == "mixed") return BackgroundKind::mixed;
  throw std::invalid_argument("unknown background kind '" + s + "' (expected freeze, noise or mixed)");
}

struct UntrimmedConfig {
  int num_videos = 64;
  int length = 256;
  int instances = 2;
  // freeze: background holds the neighbouring instance's edge frame (motion
  // stops, appearance stays). noise: i.i.d. grey noise frames. mixed: each
  // background run picks one of the two with equal probability.
  BackgroundKind background = BackgroundKind::mixed;
  int min_instance = 24;
  int max_instance = 64;
  int min_gap = 8;
  double noise_sigma = 0.05;
  double noise_level = 0.5;
};

/// One ground-truth action instance, 1-based inclusive frame range.
struct Segment {
  int start = 0;
  int end = 0;
  int class_id = 0;
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct UntrimmedVideo {
  int video_id = 0;
  std::size_t L = 0, H = 0, W = 0, C = 0;
  std::vector<float> pixels;
  std::vector<Segment> segments;
  std::vector<int> boundary_positions;  // sorted starts and ends

  std::size_t frame_size() const { return H * W * C; }
  std::span<const float> frames(std::size_t first, std::size_t count) const {
    return std::span<const float>(pixels).subspan(first * frame_size(), count * frame_size());
  }
};

inline std::vector<int> boundaries_of(const std::vector<Segment>& segs) {
  std::vector<int> b;
  for (const auto& s : segs) {
    b.push_back(s.start);
    b.push_back(s.end);
  }
  std::sort(b.begin(), b.end());
  return b;
}

inline std::vector<UntrimmedVideo> gen_untrimmed(const ClipDataset& ds, std::uint64_t seed, const UntrimmedConfig& cfg) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("gen-untrimmed: " + m); };
  if (cfg.num_videos < 0 || cfg.instances < 0) fail("num_videos and instances must be >= 0");
  if (cfg.length < 1) fail("length must be >= 1");
  if (cfg.min_instance < 2 || cfg.max_instance < cfg.min_instance) fail("need 2 <= min_instance <= max_instance");
  if (cfg.min_gap < 1) fail("min_gap must be >= 1");
  const auto pool = ds.indices(Split::val);
  if (cfg.instances > 0 && pool.empty()) fail("val split is empty");
  int shortest = std::numeric_limits<int>::max();
  for (auto i : pool) shortest = std::min(shortest, static_cast<int>(ds.clips[i].T));
  const int max_len = std::min(cfg.max_instance, shortest);
  if (cfg.instances > 0 && max_len < cfg.min_instance)
    fail("val clips (" + std::to_string(shortest) + " frames) shorter than min_instance");
  const long need = static_cast<long>(cfg.instances) * cfg.min_instance +
                    static_cast<long>(cfg.instances + 1) * cfg.min_gap * (cfg.instances > 0);
  if (need > cfg.length)
    fail("cannot pack " + std::to_string(cfg.instances) + " instances into " + std::to_string(cfg.length) +
         " frames (need " + std::to_string(need) + ")");

  std::vector<UntrimmedVideo> out(static_cast<std::size_t>(cfg.num_videos));
  parallel_for(out.size(), [&](std::size_t v) {
    Rng rng(derive_seed(seed, v));
    const std::size_t F = ds.frame_size();
    UntrimmedVideo& vid = out[v];
    vid.video_id = static_cast<int>(v);
    vid.L = static_cast<std::size_t>(cfg.length);
    vid.H = ds.H;
    vid.W = ds.W;
    vid.C = ds.C;
    vid.pixels.assign(vid.L * F, 0.0f);
    std::normal_distribution<double> noise(0.0, 1.0);
    auto put_noisy = [&](std::size_t t, std::span<const float> base, double level) {
      for (std::size_t k = 0; k < F; ++k) {
        const double b = base.empty() ? level : static_cast<double>(base[k]);
        vid.pixels[t * F + k] = static_cast<float>(std::clamp(b + cfg.noise_sigma * noise(rng), 0.0, 1.0));
      }
    };

    const int n = cfg.instances;
    if (n == 0) {
      for (std::size_t t = 0; t < vid.L; ++t) put_noisy(t, {}, cfg.noise_level);
      return;
    }
    // Instance lengths, then a random composition of the leftover frames
    // into n+1 gaps of at least min_gap frames each.
    std::vector<int> lens(static_cast<std::size_t>(n));
    int budget = cfg.length - (n + 1) * cfg.min_gap;
    for (int i = 0; i < n; ++i) {
      const int room = budget - (n - 1 - i) * cfg.min_instance;
      const int hi = std::min(max_len, room);
      lens[static_cast<std::size_t>(i)] = uniform_int(rng, cfg.min_instance, hi);
      budget -= lens[static_cast<std::size_t>(i)];
    }
    std::vector<int> cuts(static_cast<std::size_t>(n));
    for (auto& c : cuts) c = uniform_int(rng, 0, budget);
    std::sort(cuts.begin(), cuts.end());
    std::vector<int> gaps(static_cast<std::size_t>(n + 1));
    for (int i = 0; i <= n; ++i) {
      const int lo = i == 0 ? 0 : cuts[static_cast<std::size_t>(i - 1)];
      const int hi = i == n ? budget : cuts[static_cast<std::size_t>(i)];
      gaps[static_cast<std::size_t>(i)] = cfg.min_gap + hi - lo;
    }

    int pos = 0;  // 0-based next frame
    std::vector<std::pair<int, int>> bg;  // 0-based [lo, hi) background runs
    for (int i = 0; i < n; ++i) {
      bg.emplace_back(pos, pos + gaps[static_cast<std::size_t>(i)]);
      pos += gaps[static_cast<std::size_t>(i)];
      const Clip& c = ds.clips[pool[uniform_index(rng, pool.size())]];
      const int l = lens[static_cast<std::size_t>(i)];
      const auto off = uniform_index(rng, c.T - static_cast<std::size_t>(l) + 1);
      std::copy_n(c.pixels.begin() + static_cast<std::ptrdiff_t>(off * F), static_cast<std::size_t>(l) * F,
                  vid.pixels.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(pos) * F));
      vid.segments.push_back({pos + 1, pos + l, c.class_id});
      pos += l;
    }
    bg.emplace_back(pos, cfg.length);

    for (std::size_t r = 0; r < bg.size(); ++r) {
      const auto [lo, hi] = bg[r];
      std::vector<float> hold;
      const bool freeze = cfg.background == BackgroundKind::freeze ||
                          (cfg.background == BackgroundKind::mixed && uniform_index(rng, 2) == 0);
      if (freeze) {
        // Before the first instance: its first frame; otherwise the last
        // frame of the preceding instance.
        const std::size_t src = r == 0 ? static_cast<std::size_t>(vid.segments[0].start - 1)
                                       : static_cast<std::size_t>(vid.segments[r - 1].end - 1);
        const auto f = vid.frames(src, 1);
        hold.assign(f.begin(), f.end());
      }
      for (int t = lo; t < hi; ++t) put_noisy(static_cast<std::size_t>(t), hold, cfg.noise_level);
    }
    vid.boundary_positions = boundaries_of(vid.segments);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Sliding-snippet features.

struct SnippetConfig {
  std::size_t window = 8;
  std::size_t stride = 4;
};

struct SnippetTrack {
  int video_id = 0;
  nd::Tensor features;          // [N, D]
  std::vector<double> centers;  // 1-based frame coordinate of each snippet centre
  std::vector<int> labels;      // 1 if a boundary position lies inside the snippet

  std::size_t size() const { return labels.size(); }
};

inline std::size_t snippet_count(std::size_t L, const SnippetConfig& sc) {
  if (sc.window == 0 || sc.stride == 0) throw std::invalid_argument("snippets: window and stride must be > 0");
  if (L < sc.window) throw std::invalid_argument("snippets: video shorter than one window");
  return (L - sc.window) / sc.stride + 1;
}

/// Snippet j covers 1-based frames [j*stride + 1, j*stride + window].
inline std::vector<int> snippet_labels(const UntrimmedVideo& v, const SnippetConfig& sc) {
  const std::size_t N = snippet_count(v.L, sc);
  std::vector<int> y(N, 0);
  for (std::size_t j = 0; j < N; ++j) {
    const auto lo = static_cast<int>(j * sc.stride + 1), hi = static_cast<int>(j * sc.stride + sc.window);
    for (int b : v.boundary_positions)
      if (b >= lo && b <= hi) y[j] = 1;
  }
  return y;
}

inline SnippetTrack extract_track(const FeatureExtractor& fx, const UntrimmedVideo& v, const SnippetConfig& sc = {}) {
  const std::size_t N = snippet_count(v.L, sc);
  std::vector<std::span<const float>> views;
  for (std::size_t j = 0; j < N; ++j) views.push_back(v.frames(j * sc.stride, sc.window));
  SnippetTrack tr;
  tr.video_id = v.video_id;
  tr.features = fx.features(frames_tensor(views, sc.window, v.frame_size()));
  for (std::size_t j = 0; j < N; ++j)
    tr.centers.push_back(static_cast<double>(j * sc.stride) + (static_cast<double>(sc.window) + 1.0) / 2.0);
  tr.labels = snippet_labels(v, sc);
  return tr;
}

inline std::vector<SnippetTrack> extract_tracks(const FeatureExtractor& fx, const std::vector<UntrimmedVideo>& videos,
                                                const SnippetConfig& sc = {}) {
  std::vector<SnippetTrack> out(videos.size());
  parallel_for(videos.size(), [&](std::size_t i) { out[i] = extract_track(fx, videos[i], sc); });
  return out;
}

// ---------------------------------------------------------------------------
// Boundary scores and metrics.

/// Per-dimension z-normalization over the snippets of one track.
inline nd::Tensor znormalized(const nd::Tensor& f) {
  const std::size_t N = f.dim(0), D = f.dim(1);
  nd::Tensor out = f;
  for (std::size_t d = 0; d < D; ++d) {
    double m = 0.0, s = 0.0;
    for (std::size_t j = 0; j < N; ++j) m += f[j * D + d];
    m /= static_cast<double>(N);
    for (std::size_t j = 0; j < N; ++j) s += (f[j * D + d] - m) * (f[j * D + d] - m);
    s = std::sqrt(s / static_cast<double>(N));
    for (std::size_t j = 0; j < N; ++j) out[j * D + d] = s > 0.0 ? (f[j * D + d] - m) / s : 0.0;
  }
  return out;
}

/// score_j = ||f_{j+1} - f_j||_2 over consecutive snippets.
inline std::vector<double> boundary_score(const nd::Tensor& features, bool znorm = false) {
  if (features.rank() != 2) throw nd::ShapeError("boundary_score: features must be [N,D]");
  const std::size_t N = features.dim(0), D = features.dim(1);
  if (N < 2) throw std::invalid_argument("boundary_score: need at least 2 snippets");
  const nd::Tensor f = znorm ? znormalized(features) : features;
  std::vector<double> s(N - 1);
  for (std::size_t j = 0; j + 1 < N; ++j) {
    double acc = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      const double diff = f[(j + 1) * D + d] - f[j * D + d];
      acc += diff * diff;
    }
    s[j] = std::sqrt(acc);
  }
  return s;
}

inline std::vector<double> boundary_score(const SnippetTrack& tr, bool znorm = false) {
  return boundary_score(tr.features, znorm);
}

/// A consecutive pair is boundary-adjacent when either snippet holds a boundary.
inline std::vector<int> pair_labels(const std::vector<int>& snippet_labels) {
  std::vector<int> y;
  for (std::size_t j = 0; j + 1 < snippet_labels.size(); ++j) y.push_back(snippet_labels[j] | snippet_labels[j + 1]);
  return y;
}

/// Mean of precision@rank over positives; descending score, ties by index.
inline double framewise_ap(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("framewise_ap: " + std::to_string(scores.size()) + " scores vs " +
                                std::to_string(labels.size()) + " labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r)
    if (labels[order[r]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  if (hits == 0) throw std::invalid_argument("framewise_ap: no positive labels");
  return sum / static_cast<double>(hits);
}

struct Interval {
  double start = 0.0;
  double end = 0.0;
};

inline double tiou(Interval a, Interval b) {
  if (!(a.start < a.end) || !(b.start < b.end)) throw std::invalid_argument("tiou: degenerate segment");
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  return inter / uni;
}

/// Local maxima strictly above `threshold`, kept greedily by descending score
/// (ties by index); a kept peak suppresses others closer than min_separation.
inline std::vector<std::size_t> detect_boundaries(const std::vector<double>& scores, double threshold,
                                                  std::size_t min_separation) {
  if (min_separation < 1) throw std::invalid_argument("detect_boundaries: min_separation must be >= 1");
  std::vector<std::size_t> cand;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool left = i == 0 || scores[i] >= scores[i - 1];
    const bool right = i + 1 == scores.size() || scores[i] >= scores[i + 1];
    if (left && right && scores[i] > threshold) cand.push_back(i);
  }
  std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> kept;
  for (auto c : cand) {
    const bool clear = std::none_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return (c > k ? c - k : k - c) < min_separation;
    });
    if (clear) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

/// Fraction of gt positions with some prediction within tol. An empty gt set
/// gives 1.0.
inline double recall_at_tolerance(const std::vector<double>& pred, const std::vector<double>& gt, double tol) {
  if (gt.empty()) return 1.0;
  std::size_t hit = 0;
  for (double g : gt)
    if (std::any_of(pred.begin(), pred.end(), [&](double p) { return std::abs(p - g) <= tol; })) ++hit;
  return static_cast<double>(hit) / static_cast<double>(gt.size());
}

// ---------------------------------------------------------------------------
// Linear probe.

enum class ProbeContext { none, absdiff };

struct ProbeConfig {
  // absdiff: each snippet row is [f_j; |f_j - f_{j-1}|; |f_{j+1} - f_j|],
  // with zero differences at the track ends.
  ProbeContext context = ProbeContext::absdiff;
  long steps = 300;
  double lr = 0.5;
  double momentum = 0.9;
  bool standardize = true;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  double ap = 0.0;
  std::vector<double> test_scores;
  std::vector<int> test_labels;
};

namespace detail {

inline void stack_tracks(const std::vector<SnippetTrack>& tracks, ProbeContext ctx, nd::Tensor& x,
                         std::vector<int>& y) {
  if (tracks.empty()) throw std::invalid_argument("linear_probe: no tracks");
  const std::size_t D = tracks.front().features.dim(1);
  const std::size_t W = ctx == ProbeContext::absdiff ? 3 * D : D;
  std::size_t N = 0;
  for (const auto& t : tracks) {
    if (t.features.dim(1) != D) throw nd::ShapeError("linear_probe: tracks disagree on feature dim");
    N += t.size();
  }
  x = nd::Tensor({N, W});
  y.clear();
  std::size_t r = 0;
  for (const auto& t : tracks) {
    const auto& f = t.features;
    const std::size_t n = t.size();
    for (std::size_t j = 0; j < n; ++j, ++r)
      for (std::size_t d = 0; d < D; ++d) {
        x[r * W + d] = f[j * D + d];
        if (ctx == ProbeContext::absdiff) {
          x[r * W + D + d] = j > 0 ? std::abs(f[j * D + d] - f[(j - 1) * D + d]) : 0.0;
          x[r * W + 2 * D + d] = j + 1 < n ? std::abs(f[(j + 1) * D + d] - f[j * D + d]) : 0.0;
        }
      }
    y.insert(y.end(), t.labels.begin(), t.labels.end());
  }
}

}  // namespace detail

/// Logistic (2-way softmax) head on frozen snippet rows, full-batch
/// momentum descent on the train tracks; AP of the boundary logit margin on
/// the test tracks.
inline ProbeResult linear_probe(const std::vector<SnippetTrack>& train, const std::vector<SnippetTrack>& test,
                                const ProbeConfig& cfg = {}) {
  nd::Tensor xtr, xte;
  std::vector<int> ytr, yte;
  detail::stack_tracks(train, cfg.context, xtr, ytr);
  detail::stack_tracks(test, cfg.context, xte, yte);
  const std::size_t D = xtr.dim(1);
  if (xte.dim(1) != D) throw nd::ShapeError("linear_probe: train/test feature dims differ");
  if (cfg.standardize) {
    const std::size_t N = xtr.dim(0);
    for (std::size_t d = 0; d < D; ++d) {
      double m = 0.0, s = 0.0;
      for (std::size_t i = 0; i < N; ++i) m += xtr[i * D + d];
      m /= static_cast<double>(N);
      for (std::size_t i = 0; i < N; ++i) s += (xtr[i * D + d] - m) * (xtr[i * D + d] - m);
      s = std::sqrt(s / static_cast<double>(N));
      const double inv = s > 1e-12 ? 1.0 / s : 0.0;
      for (std::size_t i = 0; i < N; ++i) xtr[i * D + d] = (xtr[i * D + d] - m) * inv;
      for (std::size_t i = 0; i < xte.dim(0); ++i) xte[i * D + d] = (xte[i * D + d] - m) * inv;
    }
  }
  nd::ParamSet head = init_linear(cfg.seed, D, 2);
  nd::SgdState state;
  for (long step = 0; step < cfg.steps; ++step) {
    nd::Graph g;
    const auto ids = nd::bind(g, prefixed(head, "p."), true);
    const auto loss = g.softmax_cross_entropy(linear_nodes(g, ids, "p.", g.input(xtr)), ytr);
    check_finite_loss(g.value(loss).item(), "linear_probe", step);
    const auto grads = nd::gradients(g, loss);
    auto merged = prefixed(head, "p.");
    nd::sgd_step(merged, nd::collect(grads, ids, merged), state, cfg.lr, cfg.momentum);
    head = strip_prefix(merged, "p.");
  }
  const auto logits = apply_linear(head, xte);
  ProbeResult res;
  for (std::size_t i = 0; i < xte.dim(0); ++i) res.test_scores.push_back(logits[i * 2 + 1] - logits[i * 2]);
  res.test_labels = yte;
  res.ap = framewise_ap(res.test_scores, res.test_labels);
  return res;
}

// ---------------------------------------------------------------------------
// Full evaluation of one extractor.

struct EvalConfig {
  UntrimmedConfig videos;
  SnippetConfig snippets;
  ProbeConfig probe;
  double tol_frames = 4.0;
  double detect_k = 1.0;  // threshold = mean + k*std of each track's scores
  std::size_t min_separation = 2;
  bool znorm = false;
  double train_fraction = 0.5;
};

struct ExtractorEval {
  std::string extractor;
  double ap = 0.0;
  double recall = 0.0;
  double ratio = 0.0;
  std::vector<std::vector<double>> scores;  // per video boundary scores
};

/// 1-based frame coordinate of boundary score j (between snippets j, j+1).
inline double score_position(std::size_t j, const SnippetConfig& sc) {
  return static_cast<double>(j * sc.stride) + (static_cast<double>(sc.window) + 1.0) / 2.0 +
         static_cast<double>(sc.stride) / 2.0;
}

inline ExtractorEval evaluate_tracks(const std::string& name, const std::vector<SnippetTrack>& tracks,
                                     const std::vector<UntrimmedVideo>& videos, const EvalConfig& cfg) {
  if (tracks.size() != videos.size() || tracks.size() < 2) throw std::invalid_argument("evaluate: need >= 2 videos");
  ExtractorEval e;
  e.extractor = name;
  double bsum = 0.0, nsum = 0.0;
  std::size_t bn = 0, nn = 0, gt_total = 0;
  double hits = 0.0;
  for (std::size_t v = 0; v < tracks.size(); ++v) {
    auto s = boundary_score(tracks[v], cfg.znorm);
    const auto pl = pair_labels(tracks[v].labels);
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (pl[j]) {
        bsum += s[j];
        ++bn;
      } else {
        nsum += s[j];
        ++nn;
      }
    }
    double m = 0.0, sd = 0.0;
    for (double x : s) m += x;
    m /= static_cast<double>(s.size());
    for (double x : s) sd += (x - m) * (x - m);
    sd = std::sqrt(sd / static_cast<double>(s.size()));
    std::vector<double> pred;
    for (auto j : detect_boundaries(s, m + cfg.detect_k * sd, cfg.min_separation))
      pred.push_back(score_position(j, cfg.snippets));
    std::vector<double> gt(videos[v].boundary_positions.begin(), videos[v].boundary_positions.end());
    hits += recall_at_tolerance(pred, gt, cfg.tol_frames) * static_cast<double>(gt.size());
    gt_total += gt.size();
    e.scores.push_back(std::move(s));
  }
  const double bmean = bn ? bsum / static_cast<double>(bn) : 0.0;
  const double nmean = nn ? nsum / static_cast<double>(nn) : 0.0;
  e.ratio = nmean > 0.0 ? bmean / nmean : 0.0;
  e.recall = gt_total ? hits / static_cast<double>(gt_total) : 1.0;

  const auto ntrain = static_cast<std::size_t>(std::round(cfg.train_fraction * static_cast<double>(tracks.size())));
  const std::size_t cut = std::clamp<std::size_t>(ntrain, 1, tracks.size() - 1);
  const std::vector<SnippetTrack> tr(tracks.begin(), tracks.begin() + static_cast<std::ptrdiff_t>(cut));
  const std::vector<SnippetTrack> te(tracks.begin() + static_cast<std::ptrdiff_t>(cut), tracks.end());
  e.ap = linear_probe(tr, te, cfg.probe).ap;
  return e;
}

inline ExtractorEval evaluate_extractor(const std::string& name, const FeatureExtractor& fx,
                                        const std::vector<UntrimmedVideo>& videos, const EvalConfig& cfg) {
  return evaluate_tracks(name, extract_tracks(fx, videos, cfg.snippets), videos, cfg);
}

inline void write_eval_csv(const std::string& path, const std::vector<ExtractorEval>& rows) {
  std::ofstream out(path);
  if (!out) throw FormatError(FormatErrc::io, "cannot write " + path);
  out << "extractor,ap,recall,ratio\n";
  out.precision(9);
  for (const auto& r : rows) out << r.extractor << ',' << r.ap << ',' << r.recall << ',' << r.ratio << '\n';
}

/// scores/<video_id>.csv: pair,frame,boundary,<one column per extractor>.
inline void write_score_traces(const std::filesystem::path& dir, const std::vector<UntrimmedVideo>& videos,
                               const std::vector<SnippetTrack>& any_tracks, const std::vector<ExtractorEval>& rows,
                               const SnippetConfig& sc) {
  std::filesystem::create_directories(dir);
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const auto path = dir / (std::to_string(videos[v].video_id) + ".csv");
    std::ofstream out(path);
    if (!out) throw FormatError(FormatErrc::io, "cannot write " + path.string());
    out.precision(9);
    out << "pair,frame,boundary";
    for (const auto& r : rows) out << ',' << r.extractor;
    out << '\n';
    const auto pl = pair_labels(any_tracks[v].labels);
    for (std::size_t j = 0; j < pl.size(); ++j) {
      out << j << ',' << score_position(j, sc) << ',' << pl[j];
      for (const auto& r : rows) out << ',' << r.scores[v][j];
      out << '\n';
    }
  }
}

}  // namespace bsp
