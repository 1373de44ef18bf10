#pragma once

// Combining action-classification (vanilla) and boundary-sensitive
// representations: frozen two-stream concatenation, a shared two-head
// encoder, and distillation of both teachers into one student.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsp/encoder.hpp"
#include "bsp/pretext.hpp"

namespace bsp {

enum class Role { vanilla, bsp, student, two_stream, two_head, random_init };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::vanilla: return "vanilla";
    case Role::bsp: return "bsp";
    case Role::student: return "student";
    case Role::two_stream: return "two-stream";
    case Role::two_head: return "two-head";
    case Role::random_init: return "random";
  }
  return "?";
}

inline Role role_from_string(const std::string& s) {
  for (Role r : {Role::vanilla, Role::bsp, Role::student, Role::two_stream, Role::two_head, Role::random_init})
    if (s == to_string(r)) return r;
  if (s == "two_stream") return Role::two_stream;
  if (s == "two_head") return Role::two_head;
  throw std::invalid_argument("unknown extractor role '" + s + "'");
}

/// A frozen feature extractor. Single-encoder roles hold one encoder;
/// two-stream holds [vanilla, bsp] in that order.
class FeatureExtractor {
 public:
  FeatureExtractor(Role role, EncoderParams enc) : role_(role), dim_(enc.cfg.D) {
    if (role == Role::two_stream) throw std::invalid_argument("FeatureExtractor: two-stream needs two encoders");
    check_encoder_params(enc);
    encoders_.push_back(std::move(enc));
  }

  static FeatureExtractor two_stream(EncoderParams vanilla, EncoderParams bsp) {
    check_encoder_params(vanilla);
    check_encoder_params(bsp);
    if (vanilla.cfg.frame_size() != bsp.cfg.frame_size())
      throw std::invalid_argument("two-stream: streams expect different frame shapes");
    FeatureExtractor fx;
    fx.role_ = Role::two_stream;
    fx.dim_ = vanilla.cfg.D + bsp.cfg.D;
    fx.encoders_.push_back(std::move(vanilla));
    fx.encoders_.push_back(std::move(bsp));
    return fx;
  }

  Role role() const { return role_; }
  std::size_t output_dim() const { return dim_; }
  const std::vector<EncoderParams>& encoders() const { return encoders_; }
  const EncoderConfig& encoder_config() const { return encoders_.front().cfg; }

  /// [B,T,F] -> [B, output_dim]
  nd::Tensor features(const nd::Tensor& x) const {
    nd::Tensor out;
    if (encoders_.size() == 1) {
      out = encode(encoders_[0], x).pooled;
    } else {
      const auto a = encode(encoders_[0], x).pooled;
      const auto b = encode(encoders_[1], x).pooled;
      nd::Graph g;
      out = g.value(g.concat_last_axis(g.input(a), g.input(b)));
    }
    if (out.shape().back() != dim_)
      throw nd::ShapeError(std::string("extractor ") + to_string(role_) + ": produced " +
                           std::to_string(out.shape().back()) + " features, declared " + std::to_string(dim_));
    return out;
  }

 private:
  FeatureExtractor() = default;
  Role role_ = Role::vanilla;
  std::size_t dim_ = 0;
  std::vector<EncoderParams> encoders_;
};

/// [f_v(x); f_b(x)] from two frozen single-stream extractors.
inline nd::Tensor two_stream_features(const FeatureExtractor& fv, const FeatureExtractor& fb, const nd::Tensor& x) {
  const auto a = fv.features(x);
  const auto b = fb.features(x);
  nd::Graph g;
  return g.value(g.concat_last_axis(g.input(a), g.input(b)));
}

// ---------------------------------------------------------------------------
// Two-head joint training.

struct TwoHeadOptions {
  double lambda = 1.0;
  bool use_action = true;
  bool use_boundary = true;
  std::size_t snippet_length = 16;
};

struct TwoHeadResult {
  EncoderParams encoder;
  nd::ParamSet action_head;
  nd::ParamSet boundary_head;
  TrainReport report;  // metric = val action accuracy
  double action_accuracy = 0.0;
  double boundary_accuracy = 0.0;
};

/// Joint loss CE_action + lambda * CE_boundary per step, one action batch
/// and one synthesized batch, both through the same encoder. The action
/// stream and head init match train_vanilla_classifier for the same seed.
inline TwoHeadResult train_two_head(const ClipDataset& ds, const SynthesisConfig& synth, const EncoderParams& enc_init,
                                    const TrainConfig& cfg, const TwoHeadOptions& opt = {}) {
  cfg.validate();
  if (cfg.loss_kind != LossKind::two_head) throw std::invalid_argument("train_two_head: loss_kind must be two_head");
  if (!opt.use_action && !opt.use_boundary) throw std::invalid_argument("train_two_head: both tasks disabled");
  check_encoder_params(enc_init);
  const auto& ecfg = enc_init.cfg;
  const auto aval = action_val_set(ds, opt.snippet_length, cfg);
  const auto bval = boundary_val_set(ds, synth, cfg);
  Rng arng(derive_seed(cfg.seed, streams::action_batches));
  Rng brng(derive_seed(cfg.seed, streams::boundary_batches));

  nd::ParamSet params = prefixed(enc_init.tensors, "enc.");
  for (auto& [k, v] :
       prefixed(init_linear(derive_seed(cfg.seed, streams::action_head), ecfg.D, static_cast<std::size_t>(ds.K)), "act."))
    params.emplace(k, v);
  for (auto& [k, v] :
       prefixed(init_linear(derive_seed(cfg.seed, streams::boundary_head), ecfg.D, kNumBoundaryClasses), "bnd."))
    params.emplace(k, v);
  nd::SgdState state;
  TrainReport rep;
  auto eval = [&] {
    const auto e = evaluate_action_classifier(encoder_from(params, ecfg, "enc."), strip_prefix(params, "act."), aval,
                                              opt.snippet_length);
    return std::pair{e.loss, e.accuracy};
  };
  maybe_record(rep, 0, cfg.steps, cfg, eval);
  for (long step = 0; step < cfg.steps; ++step) {
    nd::Graph g;
    const auto ids = nd::bind(g, params, true);
    NodeMap enc;
    for (const auto& [k, v] : ids)
      if (k.rfind("enc.", 0) == 0) enc.emplace(k.substr(4), v);
    std::optional<nd::NodeId> loss;
    if (opt.use_action) {
      const auto batch = sample_action_batch(ds, opt.snippet_length, arng, cfg.batch_size, Split::train);
      std::vector<int> labels;
      for (const auto& s : batch) labels.push_back(s.label);
      const auto out = encode_nodes(g, ecfg, enc, g.input(batch_tensor(batch, 0, batch.size(), opt.snippet_length)));
      loss = g.softmax_cross_entropy(linear_nodes(g, ids, "act.", out.pooled), std::move(labels));
    }
    if (opt.use_boundary) {
      const auto batch = sample_batch(ds, synth, brng, cfg.batch_size, Split::train);
      std::vector<int> labels;
      for (const auto& s : batch) labels.push_back(s.label());
      const auto out = encode_nodes(g, ecfg, enc, g.input(batch_tensor(batch, 0, batch.size())));
      const auto ce = g.scale(g.softmax_cross_entropy(linear_nodes(g, ids, "bnd.", out.pooled), std::move(labels)),
                              opt.lambda);
      loss = loss ? g.add(*loss, ce) : ce;
    }
    const double lv = g.value(*loss).item();
    check_finite_loss(lv, "train_two_head", step);
    const auto grads = nd::gradients(g, *loss);
    apply_update(params, nd::collect(grads, ids, params), state, cfg);
    rep.step_losses.push_back(lv);
    maybe_record(rep, step + 1, cfg.steps, cfg, eval);
  }
  TwoHeadResult res{encoder_from(params, ecfg, "enc."), strip_prefix(params, "act."), strip_prefix(params, "bnd."),
                    std::move(rep)};
  res.action_accuracy = evaluate_action_classifier(res.encoder, res.action_head, aval, opt.snippet_length).accuracy;
  res.boundary_accuracy = evaluate_boundary_classifier(res.encoder, res.boundary_head, bval).accuracy;
  return res;
}

// ---------------------------------------------------------------------------
// Feature distillation.

struct ProjectionParams {
  nd::ParamSet h1;  // student D -> vanilla D
  nd::ParamSet h2;  // student D -> bsp D
};

inline nd::ParamSet identity_linear(std::size_t n) {
  nd::ParamSet p;
  p["w"] = nd::Tensor({n, n});
  for (std::size_t i = 0; i < n; ++i) p["w"][i * n + i] = 1.0;
  p["b"] = nd::Tensor({n});
  return p;
}

enum class DistillLabels { boundary, action };

struct DistillOptions {
  DistillLabels ce_labels = DistillLabels::boundary;
  double ce_weight = 1.0;
  bool identity_projections = false;
  std::size_t snippet_length = 16;
};

struct DistillResult {
  EncoderParams student;
  ProjectionParams projections;
  nd::ParamSet ce_head;
  TrainReport report;  // val_loss = val matching loss, metric = CE head accuracy
  double initial_matching_loss = 0.0;
  double final_matching_loss = 0.0;
};

/// (||fv - p1||^2 + ||fb - p2||^2) averaged over the batch rows.
inline double matching_loss_value(const nd::Tensor& fv, const nd::Tensor& p1, const nd::Tensor& fb,
                                  const nd::Tensor& p2) {
  nd::Graph g;
  const auto a = g.squared_l2_distance(g.input(fv), g.input(p1));
  const auto b = g.squared_l2_distance(g.input(fb), g.input(p2));
  const double rows = fv.rank() >= 2 ? static_cast<double>(fv.dim(0)) : 1.0;
  return (g.value(a).item() + g.value(b).item()) / rows;
}

inline nd::Tensor apply_linear(const nd::ParamSet& lin, const nd::Tensor& x) {
  nd::Graph g;
  const auto ids = nd::bind(g, lin, false);
  NodeMap m;
  for (const auto& [k, v] : ids) m.emplace("l." + k, v);
  return g.value(linear_nodes(g, m, "l.", g.input(x)));
}

/// Matching loss of a student and its projections against both teachers.
inline double feature_matching_loss(const EncoderParams& teacher_v, const EncoderParams& teacher_b,
                                    const EncoderParams& student, const ProjectionParams& proj, const nd::Tensor& x) {
  const auto fs = encode(student, x).pooled;
  return matching_loss_value(encode(teacher_v, x).pooled, apply_linear(proj.h1, fs), encode(teacher_b, x).pooled,
                             apply_linear(proj.h2, fs));
}

inline DistillResult distill(const EncoderParams& teacher_v, const EncoderParams& teacher_b,
                             const EncoderParams& student_init, const ClipDataset& ds, const SynthesisConfig& synth,
                             const TrainConfig& cfg, const DistillOptions& opt = {}) {
  cfg.validate();
  check_encoder_params(teacher_v);
  check_encoder_params(teacher_b);
  check_encoder_params(student_init);
  const auto& scfg = student_init.cfg;
  const std::size_t Dv = teacher_v.cfg.D, Db = teacher_b.cfg.D, Ds = scfg.D;
  const bool action = opt.ce_labels == DistillLabels::action;
  const std::size_t classes = action ? static_cast<std::size_t>(ds.K) : kNumBoundaryClasses;
  if (opt.identity_projections && (Dv != Ds || Db != Ds))
    throw std::invalid_argument("distill: identity projections need equal feature dims");

  nd::ParamSet params = prefixed(student_init.tensors, "enc.");
  const auto h1 = opt.identity_projections ? identity_linear(Ds)
                                           : init_linear(derive_seed(cfg.seed, streams::projection_heads), Ds, Dv);
  const auto h2 = opt.identity_projections ? identity_linear(Ds)
                                           : init_linear(derive_seed(cfg.seed, streams::projection_heads + 100), Ds, Db);
  for (auto& [k, v] : prefixed(h1, "h1.")) params.emplace(k, v);
  for (auto& [k, v] : prefixed(h2, "h2.")) params.emplace(k, v);
  for (auto& [k, v] : prefixed(init_linear(derive_seed(cfg.seed, action ? streams::action_head : streams::boundary_head),
                                           Ds, classes),
                               "ce."))
    params.emplace(k, v);

  // Fixed validation inputs for the matching loss and the CE head.
  nd::Tensor val_x;
  std::vector<int> val_labels;
  if (action) {
    const auto v = action_val_set(ds, opt.snippet_length, cfg);
    val_x = batch_tensor(v, 0, v.size(), opt.snippet_length);
    for (const auto& s : v) val_labels.push_back(s.label);
  } else {
    const auto v = boundary_val_set(ds, synth, cfg);
    val_x = batch_tensor(v, 0, v.size());
    for (const auto& s : v) val_labels.push_back(s.label());
  }
  const auto val_fv = encode(teacher_v, val_x).pooled;
  const auto val_fb = encode(teacher_b, val_x).pooled;

  auto val_eval = [&] {
    const auto st = encoder_from(params, scfg, "enc.");
    const auto fs = encode(st, val_x).pooled;
    const double m = matching_loss_value(val_fv, apply_linear(strip_prefix(params, "h1."), fs), val_fb,
                                         apply_linear(strip_prefix(params, "h2."), fs));
    const auto logits_t = apply_linear(strip_prefix(params, "ce."), fs);
    std::vector<std::vector<double>> logits(logits_t.dim(0), std::vector<double>(logits_t.dim(1)));
    for (std::size_t b = 0; b < logits.size(); ++b)
      for (std::size_t k = 0; k < logits[b].size(); ++k) logits[b][k] = logits_t[b * logits[b].size() + k];
    return std::pair{m, score_logits(logits, val_labels).accuracy};
  };

  Rng rng(derive_seed(cfg.seed, action ? streams::action_batches : streams::boundary_batches));
  nd::SgdState state;
  TrainReport rep;
  DistillResult res;
  maybe_record(rep, 0, cfg.steps, cfg, val_eval);
  res.initial_matching_loss = rep.records.front().val_loss;
  for (long step = 0; step < cfg.steps; ++step) {
    nd::Tensor x;
    std::vector<int> labels;
    if (action) {
      const auto batch = sample_action_batch(ds, opt.snippet_length, rng, cfg.batch_size, Split::train);
      x = batch_tensor(batch, 0, batch.size(), opt.snippet_length);
      for (const auto& s : batch) labels.push_back(s.label);
    } else {
      const auto batch = sample_batch(ds, synth, rng, cfg.batch_size, Split::train);
      x = batch_tensor(batch, 0, batch.size());
      for (const auto& s : batch) labels.push_back(s.label());
    }
    const double B = static_cast<double>(x.dim(0));
    nd::Graph g;
    const auto fv = g.input(encode(teacher_v, x).pooled);
    const auto fb = g.input(encode(teacher_b, x).pooled);
    const auto ids = nd::bind(g, params, true);
    NodeMap enc;
    for (const auto& [k, v] : ids)
      if (k.rfind("enc.", 0) == 0) enc.emplace(k.substr(4), v);
    const auto out = encode_nodes(g, scfg, enc, g.input(std::move(x)));
    const auto m1 = g.squared_l2_distance(fv, linear_nodes(g, ids, "h1.", out.pooled));
    const auto m2 = g.squared_l2_distance(fb, linear_nodes(g, ids, "h2.", out.pooled));
    auto loss = g.scale(g.add(m1, m2), 1.0 / B);
    if (opt.ce_weight != 0.0) {
      const auto ce = g.softmax_cross_entropy(linear_nodes(g, ids, "ce.", out.pooled), std::move(labels));
      loss = g.add(loss, g.scale(ce, opt.ce_weight));
    }
    const double lv = g.value(loss).item();
    check_finite_loss(lv, "distill", step);
    const auto grads = nd::gradients(g, loss);
    apply_update(params, nd::collect(grads, ids, params), state, cfg);
    rep.step_losses.push_back(lv);
    maybe_record(rep, step + 1, cfg.steps, cfg, val_eval);
  }
  res.final_matching_loss = rep.records.back().val_loss;
  res.student = encoder_from(params, scfg, "enc.");
  res.projections = {strip_prefix(params, "h1."), strip_prefix(params, "h2.")};
  res.ce_head = strip_prefix(params, "ce.");
  res.report = std::move(rep);
  return res;
}

}  // namespace bsp
