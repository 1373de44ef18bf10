#pragma once

// Pre-training objectives on top of the encoder:
//   - 4-way boundary classification on synthesized samples (default),
//   - per-frame change-point regression against a Gaussian heatmap,
//   - vanilla action classification on native-rate snippets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bsp/encoder.hpp"
#include "bsp/error.hpp"
#include "bsp/parallel.hpp"
#include "bsp/synthesis.hpp"
#include "bsp/toyclips.hpp"

namespace bsp {

enum class LossKind { boundary_cls, boundary_reg, vanilla_cls, two_head };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::boundary_cls: return "boundary_cls";
    case LossKind::boundary_reg: return "boundary_reg";
    case LossKind::vanilla_cls: return "vanilla_cls";
    case LossKind::two_head: return "two_head";
  }
  return "?";
}

enum class Reduction { sum, mean };

struct TrainConfig {
  double lr = 0.02;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  long steps = 2000;
  long eval_every = 200;
  std::uint64_t seed = 0;
  LossKind loss_kind = LossKind::boundary_cls;
  std::size_t val_size = 512;

  // Regression options.
  Reduction reg_reduction = Reduction::sum;
  bool reg_include_same_speed = true;
  std::optional<double> heatmap_variance;  // defaults to tau

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
    if (steps <= 0) fail("steps must be > 0");
    if (!(lr >= 0.0)) fail("lr must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0,1)");
    if (batch_size == 0) fail("batch_size must be > 0");
    if (eval_every <= 0) fail("eval_every must be > 0");
    if (loss_kind != LossKind::vanilla_cls && batch_size % 4 != 0)
      fail("batch_size must be divisible by 4 for boundary tasks");
    if (val_size == 0 || val_size % 4 != 0) fail("val_size must be a positive multiple of 4");
  }
};

struct EvalRecord {
  long step = 0;
  double loss = 0.0;      // mean train loss since the previous record
  double val_loss = 0.0;
  double metric = 0.0;    // accuracy, or mean localization error for regression
};

struct TrainReport {
  std::vector<EvalRecord> records;
  std::vector<double> step_losses;

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw FormatError(FormatErrc::io, "cannot write " + path);
    out << "step,loss,val_loss,metric\n";
    out.precision(9);
    for (const auto& r : records) out << r.step << ',' << r.loss << ',' << r.val_loss << ',' << r.metric << '\n';
  }

  /// Mean of step losses over [from, from+window).
  double smoothed_loss(std::size_t from, std::size_t window) const {
    const std::size_t hi = std::min(step_losses.size(), from + window);
    if (from >= hi) return 0.0;
    double s = 0.0;
    for (std::size_t i = from; i < hi; ++i) s += step_losses[i];
    return s / static_cast<double>(hi - from);
  }
};

struct TrainResult {
  EncoderParams encoder;
  nd::ParamSet head;
  TrainReport report;
};

// Rng stream ids, combined with TrainConfig::seed through derive_seed.
namespace streams {
inline constexpr std::uint64_t boundary_batches = 1;
inline constexpr std::uint64_t action_batches = 2;
inline constexpr std::uint64_t boundary_val = 3;
inline constexpr std::uint64_t action_val = 4;
inline constexpr std::uint64_t boundary_head = 5;
inline constexpr std::uint64_t action_head = 6;
inline constexpr std::uint64_t regression_head = 7;
inline constexpr std::uint64_t projection_heads = 8;
}  // namespace streams

// ---------------------------------------------------------------------------

/// y_t = exp(-(t-mu)^2 / (2*variance)) for t = 1..L; variance defaults to tau.
inline std::vector<double> gaussian_heatmap(int mu, int tau, int L, std::optional<double> variance = std::nullopt) {
  if (L < 1) throw std::invalid_argument("gaussian_heatmap: L must be >= 1");
  if (tau < 1) throw std::invalid_argument("gaussian_heatmap: tau must be >= 1");
  if (mu < 1 || mu > L)
    throw std::out_of_range("gaussian_heatmap: mu " + std::to_string(mu) + " outside [1, " + std::to_string(L) + "]");
  const double var = variance.value_or(static_cast<double>(tau));
  std::vector<double> y(static_cast<std::size_t>(L));
  for (int t = 1; t <= L; ++t) {
    const double d = static_cast<double>(t - mu);
    y[static_cast<std::size_t>(t - 1)] = std::exp(-(d * d) / (2.0 * var));
  }
  return y;
}

/// Regression target for a sample: the heatmap at its change point, or all
/// zeros for the non-boundary class.
inline std::vector<double> regression_target(const SynthSample& s, int tau, std::optional<double> variance) {
  const int L = static_cast<int>(s.T);
  if (!s.change_point) return std::vector<double>(static_cast<std::size_t>(L), 0.0);
  return gaussian_heatmap(*s.change_point, tau, L, variance);
}

struct ActionSnippet {
  std::vector<float> pixels;  // T*F
  int label = 0;
  int clip_id = 0;
};

/// Native-rate snippets of `length` frames with their clip class, one rng
/// stream per snippet.
inline std::vector<ActionSnippet> sample_action_batch(const ClipDataset& ds, std::size_t length, Rng& rng,
                                                      std::size_t batch_size, Split split = Split::train) {
  const auto pool = ds.indices(split);
  if (pool.empty()) throw std::invalid_argument(std::string("action batch: ") + to_string(split) + " split is empty");
  const std::uint64_t batch_seed = rng();
  std::vector<ActionSnippet> out(batch_size);
  parallel_for(batch_size, [&](std::size_t k) {
    Rng local(derive_seed(batch_seed, k));
    const Clip& c = ds.clips[pool[uniform_index(local, pool.size())]];
    if (c.T < length) throw ClipTooShort("action batch: clip " + std::to_string(c.clip_id) + " too short");
    const std::size_t off = uniform_index(local, c.T - length + 1);
    const auto fs = c.frame_size();
    out[k].pixels.assign(c.pixels.begin() + static_cast<std::ptrdiff_t>(off * fs),
                         c.pixels.begin() + static_cast<std::ptrdiff_t>((off + length) * fs));
    out[k].label = c.class_id;
    out[k].clip_id = c.clip_id;
  });
  return out;
}

inline nd::Tensor batch_tensor(const std::vector<SynthSample>& s, std::size_t lo, std::size_t hi) {
  std::vector<std::span<const float>> views;
  for (std::size_t i = lo; i < hi; ++i) views.emplace_back(s[i].pixels);
  return frames_tensor(views, s[lo].T, s[lo].frame_size());
}

inline nd::Tensor batch_tensor(const std::vector<ActionSnippet>& s, std::size_t lo, std::size_t hi,
                               std::size_t length) {
  std::vector<std::span<const float>> views;
  for (std::size_t i = lo; i < hi; ++i) views.emplace_back(s[i].pixels);
  return frames_tensor(views, length, s[lo].pixels.size() / length);
}

inline void check_finite_loss(double loss, const char* who, long step) {
  if (!std::isfinite(loss)) throw DivergenceError(who, step);
}

/// Applies one momentum step over a merged ParamSet; lr == 0 is a no-op.
inline void apply_update(nd::ParamSet& params, const nd::ParamSet& grads, nd::SgdState& state, const TrainConfig& cfg) {
  if (cfg.lr == 0.0) return;
  nd::sgd_step(params, grads, state, cfg.lr, cfg.momentum);
}

inline EncoderParams encoder_from(const nd::ParamSet& merged, const EncoderConfig& cfg, const std::string& prefix) {
  return EncoderParams{cfg, strip_prefix(merged, prefix)};
}

// ---------------------------------------------------------------------------
// Classification heads (boundary or action).

struct ClsEval {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Logits of a linear head on pooled features, evaluated in chunks.
inline std::vector<std::vector<double>> head_logits(const EncoderParams& enc, const nd::ParamSet& head,
                                                    const nd::Tensor& x) {
  nd::Graph g;
  const auto pe = nd::bind(g, enc.tensors, false);
  const auto ph = nd::bind(g, prefixed(head, "head."), false);
  const auto xin = g.input(x);
  const auto out = encode_nodes(g, enc.cfg, pe, xin);
  const auto logits = linear_nodes(g, ph, "head.", out.pooled);
  const auto& L = g.value(logits);
  const std::size_t K = L.dim(1);
  std::vector<std::vector<double>> rows(L.dim(0), std::vector<double>(K));
  for (std::size_t b = 0; b < L.dim(0); ++b)
    for (std::size_t k = 0; k < K; ++k) rows[b][k] = L[b * K + k];
  return rows;
}

inline ClsEval score_logits(const std::vector<std::vector<double>>& logits, const std::vector<int>& labels) {
  ClsEval e;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& z = logits[i];
    const double mx = *std::max_element(z.begin(), z.end());
    double se = 0.0;
    for (double v : z) se += std::exp(v - mx);
    e.loss += mx + std::log(se) - z[static_cast<std::size_t>(labels[i])];
    const auto arg = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    if (arg == labels[i]) e.accuracy += 1.0;
  }
  e.loss /= static_cast<double>(logits.size());
  e.accuracy /= static_cast<double>(logits.size());
  return e;
}

inline constexpr std::size_t kEvalChunk = 128;

inline ClsEval evaluate_boundary_classifier(const EncoderParams& enc, const nd::ParamSet& head,
                                            const std::vector<SynthSample>& val) {
  std::vector<std::vector<double>> logits;
  std::vector<int> labels;
  for (std::size_t lo = 0; lo < val.size(); lo += kEvalChunk) {
    const std::size_t hi = std::min(val.size(), lo + kEvalChunk);
    auto part = head_logits(enc, head, batch_tensor(val, lo, hi));
    logits.insert(logits.end(), part.begin(), part.end());
    for (std::size_t i = lo; i < hi; ++i) labels.push_back(val[i].label());
  }
  return score_logits(logits, labels);
}

inline ClsEval evaluate_action_classifier(const EncoderParams& enc, const nd::ParamSet& head,
                                          const std::vector<ActionSnippet>& val, std::size_t length) {
  std::vector<std::vector<double>> logits;
  std::vector<int> labels;
  for (std::size_t lo = 0; lo < val.size(); lo += kEvalChunk) {
    const std::size_t hi = std::min(val.size(), lo + kEvalChunk);
    auto part = head_logits(enc, head, batch_tensor(val, lo, hi, length));
    logits.insert(logits.end(), part.begin(), part.end());
    for (std::size_t i = lo; i < hi; ++i) labels.push_back(val[i].label);
  }
  return score_logits(logits, labels);
}

inline std::vector<SynthSample> boundary_val_set(const ClipDataset& ds, const SynthesisConfig& synth,
                                                 const TrainConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, streams::boundary_val));
  return sample_batch(ds, synth, rng, cfg.val_size, Split::val);
}

inline std::vector<ActionSnippet> action_val_set(const ClipDataset& ds, std::size_t length, const TrainConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, streams::action_val));
  return sample_action_batch(ds, length, rng, cfg.val_size, Split::val);
}

inline nd::ParamSet merged_params(const EncoderParams& enc, const nd::ParamSet& head) {
  nd::ParamSet all = prefixed(enc.tensors, "enc.");
  for (auto& [k, v] : prefixed(head, "head.")) all.emplace(k, v);
  return all;
}

/// One CE training step for a pooled-feature linear head. Returns the loss.
inline double cls_step(nd::ParamSet& params, nd::SgdState& opt, const EncoderConfig& ecfg, nd::Tensor x,
                       std::vector<int> labels, const TrainConfig& cfg, const char* who, long step) {
  nd::Graph g;
  const auto ids = nd::bind(g, params, true);
  const NodeMap enc = [&] {
    NodeMap m;
    for (const auto& [k, v] : ids)
      if (k.rfind("enc.", 0) == 0) m.emplace(k.substr(4), v);
    return m;
  }();
  const auto xin = g.input(std::move(x));
  const auto out = encode_nodes(g, ecfg, enc, xin);
  const auto logits = linear_nodes(g, ids, "head.", out.pooled);
  const auto loss = g.softmax_cross_entropy(logits, std::move(labels));
  const double lv = g.value(loss).item();
  check_finite_loss(lv, who, step);
  const auto grads = nd::gradients(g, loss);
  apply_update(params, nd::collect(grads, ids, params), opt, cfg);
  return lv;
}

template <typename EvalFn>
void maybe_record(TrainReport& rep, long step, long steps, const TrainConfig& cfg, EvalFn&& eval) {
  if (step % cfg.eval_every != 0 && step != steps) return;
  EvalRecord r;
  r.step = step;
  const std::size_t hi = static_cast<std::size_t>(step);
  const std::size_t lo = rep.records.empty() ? 0 : static_cast<std::size_t>(rep.records.back().step);
  r.loss = hi > lo ? rep.smoothed_loss(lo, hi - lo) : std::numeric_limits<double>::quiet_NaN();
  const auto [vl, metric] = eval();
  r.val_loss = vl;
  r.metric = metric;
  rep.records.push_back(r);
}

inline TrainResult train_boundary_classifier(const ClipDataset& ds, const SynthesisConfig& synth,
                                             const EncoderParams& enc_init, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.loss_kind != LossKind::boundary_cls)
    throw std::invalid_argument("train_boundary_classifier: loss_kind must be boundary_cls");
  check_encoder_params(enc_init);
  const auto val = boundary_val_set(ds, synth, cfg);
  Rng rng(derive_seed(cfg.seed, streams::boundary_batches));
  nd::ParamSet params = merged_params(
      enc_init, init_linear(derive_seed(cfg.seed, streams::boundary_head), enc_init.cfg.D, kNumBoundaryClasses));
  nd::SgdState opt;
  TrainReport rep;
  auto eval = [&] {
    const auto e = evaluate_boundary_classifier(encoder_from(params, enc_init.cfg, "enc."),
                                                strip_prefix(params, "head."), val);
    return std::pair{e.loss, e.accuracy};
  };
  maybe_record(rep, 0, cfg.steps, cfg, eval);
  for (long step = 0; step < cfg.steps; ++step) {
    const auto batch = sample_batch(ds, synth, rng, cfg.batch_size, Split::train);
    std::vector<int> labels;
    for (const auto& s : batch) labels.push_back(s.label());
    rep.step_losses.push_back(cls_step(params, opt, enc_init.cfg, batch_tensor(batch, 0, batch.size()),
                                       std::move(labels), cfg, "train_boundary_classifier", step));
    maybe_record(rep, step + 1, cfg.steps, cfg, eval);
  }
  return {encoder_from(params, enc_init.cfg, "enc."), strip_prefix(params, "head."), std::move(rep)};
}

inline TrainResult train_vanilla_classifier(const ClipDataset& ds, const EncoderParams& enc_init,
                                            const TrainConfig& cfg, std::size_t snippet_length = 16) {
  cfg.validate();
  if (cfg.loss_kind != LossKind::vanilla_cls)
    throw std::invalid_argument("train_vanilla_classifier: loss_kind must be vanilla_cls");
  check_encoder_params(enc_init);
  const auto val = action_val_set(ds, snippet_length, cfg);
  Rng rng(derive_seed(cfg.seed, streams::action_batches));
  nd::ParamSet params = merged_params(
      enc_init, init_linear(derive_seed(cfg.seed, streams::action_head), enc_init.cfg.D, static_cast<std::size_t>(ds.K)));
  nd::SgdState opt;
  TrainReport rep;
  auto eval = [&] {
    const auto e = evaluate_action_classifier(encoder_from(params, enc_init.cfg, "enc."),
                                              strip_prefix(params, "head."), val, snippet_length);
    return std::pair{e.loss, e.accuracy};
  };
  maybe_record(rep, 0, cfg.steps, cfg, eval);
  for (long step = 0; step < cfg.steps; ++step) {
    const auto batch = sample_action_batch(ds, snippet_length, rng, cfg.batch_size, Split::train);
    std::vector<int> labels;
    for (const auto& s : batch) labels.push_back(s.label);
    rep.step_losses.push_back(cls_step(params, opt, enc_init.cfg, batch_tensor(batch, 0, batch.size(), snippet_length),
                                       std::move(labels), cfg, "train_vanilla_classifier", step));
    maybe_record(rep, step + 1, cfg.steps, cfg, eval);
  }
  return {encoder_from(params, enc_init.cfg, "enc."), strip_prefix(params, "head."), std::move(rep)};
}

// ---------------------------------------------------------------------------
// Change-point regression.

struct RegEval {
  double loss = 0.0;
  double mean_error = 0.0;  // mean |argmax r - mu| over boundary-bearing samples
  double hit_rate = 0.0;    // fraction with |argmax r - mu| <= tolerance
};

/// Per-frame regression outputs r, [B,T].
inline nd::Tensor regression_outputs(const EncoderParams& enc, const nd::ParamSet& head, const nd::Tensor& x) {
  nd::Graph g;
  const auto pe = nd::bind(g, enc.tensors, false);
  const auto ph = nd::bind(g, prefixed(head, "head."), false);
  const auto xin = g.input(x);
  const auto out = encode_nodes(g, enc.cfg, pe, xin);
  const auto r = linear_nodes(g, ph, "head.", out.per_frame);
  const auto& R = g.value(r);
  return R.reshaped({R.dim(0), R.dim(1)});
}

inline double smooth_l1_value(const std::vector<double>& r, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double a = std::abs(r[i] - y[i]);
    s += a < 1.0 ? 0.5 * a * a : a - 0.5;
  }
  return s;
}

inline RegEval evaluate_boundary_regressor(const EncoderParams& enc, const nd::ParamSet& head,
                                           const std::vector<SynthSample>& val, int tau, const TrainConfig& cfg,
                                           int tolerance = 2) {
  RegEval e;
  std::size_t counted = 0, bearing = 0;
  for (std::size_t lo = 0; lo < val.size(); lo += kEvalChunk) {
    const std::size_t hi = std::min(val.size(), lo + kEvalChunk);
    const auto R = regression_outputs(enc, head, batch_tensor(val, lo, hi));
    const std::size_t L = R.dim(1);
    for (std::size_t i = lo; i < hi; ++i) {
      std::vector<double> r(R.data().begin() + static_cast<std::ptrdiff_t>((i - lo) * L),
                            R.data().begin() + static_cast<std::ptrdiff_t>((i - lo + 1) * L));
      const auto& s = val[i];
      if (s.change_point || cfg.reg_include_same_speed) {
        double l = smooth_l1_value(r, regression_target(s, tau, cfg.heatmap_variance));
        if (cfg.reg_reduction == Reduction::mean) l /= static_cast<double>(L);
        e.loss += l;
        ++counted;
      }
      if (s.change_point) {
        const auto arg = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()) + 1;
        const int err = std::abs(arg - *s.change_point);
        e.mean_error += err;
        if (err <= tolerance) e.hit_rate += 1.0;
        ++bearing;
      }
    }
  }
  if (counted) e.loss /= static_cast<double>(counted);
  if (bearing) {
    e.mean_error /= static_cast<double>(bearing);
    e.hit_rate /= static_cast<double>(bearing);
  }
  return e;
}

inline TrainResult train_boundary_regressor(const ClipDataset& ds, const SynthesisConfig& synth,
                                            const EncoderParams& enc_init, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.loss_kind != LossKind::boundary_reg)
    throw std::invalid_argument("train_boundary_regressor: loss_kind must be boundary_reg");
  check_encoder_params(enc_init);
  const auto val = boundary_val_set(ds, synth, cfg);
  Rng rng(derive_seed(cfg.seed, streams::boundary_batches));
  nd::ParamSet params =
      merged_params(enc_init, init_linear(derive_seed(cfg.seed, streams::regression_head), enc_init.cfg.E, 1));
  nd::SgdState opt;
  TrainReport rep;
  auto eval = [&] {
    const auto e = evaluate_boundary_regressor(encoder_from(params, enc_init.cfg, "enc."),
                                               strip_prefix(params, "head."), val, synth.tau, cfg);
    return std::pair{e.loss, e.mean_error};
  };
  maybe_record(rep, 0, cfg.steps, cfg, eval);
  for (long step = 0; step < cfg.steps; ++step) {
    auto batch = sample_batch(ds, synth, rng, cfg.batch_size, Split::train);
    if (!cfg.reg_include_same_speed)
      std::erase_if(batch, [](const SynthSample& s) { return !s.change_point.has_value(); });
    const std::size_t B = batch.size(), L = batch.front().T;
    nd::Tensor y({B, L});
    for (std::size_t b = 0; b < B; ++b) {
      const auto target = regression_target(batch[b], synth.tau, cfg.heatmap_variance);
      std::copy(target.begin(), target.end(), y.data().begin() + static_cast<std::ptrdiff_t>(b * L));
    }
    nd::Graph g;
    const auto ids = nd::bind(g, params, true);
    NodeMap enc;
    for (const auto& [k, v] : ids)
      if (k.rfind("enc.", 0) == 0) enc.emplace(k.substr(4), v);
    const auto xin = g.input(batch_tensor(batch, 0, B));
    const auto out = encode_nodes(g, enc_init.cfg, enc, xin);
    auto r = linear_nodes(g, ids, "head.", out.per_frame);
    r = g.reshape(r, {B, L});
    auto loss = g.smooth_l1_sum(g.sub(r, g.input(std::move(y))));
    double norm = static_cast<double>(B);
    if (cfg.reg_reduction == Reduction::mean) norm *= static_cast<double>(L);
    loss = g.scale(loss, 1.0 / norm);
    const double lv = g.value(loss).item();
    check_finite_loss(lv, "train_boundary_regressor", step);
    const auto grads = nd::gradients(g, loss);
    apply_update(params, nd::collect(grads, ids, params), opt, cfg);
    rep.step_losses.push_back(lv);
    maybe_record(rep, step + 1, cfg.steps, cfg, eval);
  }
  return {encoder_from(params, enc_init.cfg, "enc."), strip_prefix(params, "head."), std::move(rep)};
}

}  // namespace bsp
