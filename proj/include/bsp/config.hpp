#pragma once

// Run configuration: one flat JSON object with dotted keys. Every key has a
// declared type and default; unknown keys and type errors are rejected.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsp/downstream.hpp"

namespace bsp {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class KeyType { integer, number, boolean, string, number_list, optional_number };

struct KeySpec {
  KeyType type;
  nlohmann::json fallback;
  const char* help;
};

inline const std::map<std::string, KeySpec>& config_schema() {
  using J = nlohmann::json;
  static const std::map<std::string, KeySpec> schema{
      {"seed", {KeyType::integer, 0, "global seed; every stream derives from it"}},

      {"data.K", {KeyType::integer, 8, "action classes"}},
      {"data.clips_per_class", {KeyType::integer, 40, "clips per class"}},
      {"data.len", {KeyType::integer, 64, "frames per clip"}},
      {"data.H", {KeyType::integer, 24, "frame height"}},
      {"data.W", {KeyType::integer, 24, "frame width"}},
      {"data.C", {KeyType::integer, 1, "channels"}},
      {"data.noise_sigma", {KeyType::number, 0.05, "additive pixel noise std"}},
      {"data.fps", {KeyType::number, 25.0, "nominal frame rate"}},

      {"synth.tau", {KeyType::integer, 8, "half length of a synthesized sample"}},
      {"synth.epsilon", {KeyType::integer, 3, "blend half-window"}},
      {"synth.gamma_set", {KeyType::number_list, J::array({1.0 / 3.0, 0.5, 2.0, 3.0}), "speed factors"}},
      {"synth.t_min", {KeyType::integer, 4, "smallest speed change point"}},
      {"synth.t_max", {KeyType::integer, 12, "largest speed change point"}},
      {"synth.two_clip_sampling", {KeyType::string, "window", "window | uniform"}},
      {"synth.num_samples", {KeyType::integer, 64, "samples written by the synth command"}},
      {"synth.split", {KeyType::string, "train", "train | val"}},

      {"model.E", {KeyType::integer, 32, "per-frame channels"}},
      {"model.D", {KeyType::integer, 64, "pooled feature size"}},
      {"model.kernel", {KeyType::integer, 3, "temporal kernel"}},
      {"model.input_shift", {KeyType::number, 0.5, "input centering"}},
      {"model.input_scale", {KeyType::number, 1.0, "input scale"}},

      {"train.lr", {KeyType::number, 0.02, "learning rate"}},
      {"train.momentum", {KeyType::number, 0.9, "momentum"}},
      {"train.batch_size", {KeyType::integer, 32, "batch size"}},
      {"train.steps", {KeyType::integer, 2000, "update steps"}},
      {"train.eval_every", {KeyType::integer, 200, "steps between val records"}},
      {"train.val_size", {KeyType::integer, 512, "val samples"}},
      {"train.snippet_length", {KeyType::integer, 16, "vanilla snippet length"}},
      {"train.lambda", {KeyType::number, 1.0, "two-head boundary weight"}},
      {"train.reg_reduction", {KeyType::string, "sum", "sum | mean over frames"}},
      {"train.reg_include_same_speed", {KeyType::boolean, true, "regress same-speed samples to zero"}},
      {"train.heatmap_variance", {KeyType::optional_number, nullptr, "heatmap variance (null: tau)"}},

      {"distill.lr", {KeyType::number, 3e-4, "learning rate"}},
      {"distill.momentum", {KeyType::number, 0.9, "momentum"}},
      {"distill.batch_size", {KeyType::integer, 32, "batch size"}},
      {"distill.steps", {KeyType::integer, 2000, "update steps"}},
      {"distill.eval_every", {KeyType::integer, 200, "steps between val records"}},
      {"distill.ce_labels", {KeyType::string, "boundary", "boundary | action"}},
      {"distill.ce_weight", {KeyType::number, 1.0, "weight of the CE term"}},

      {"eval.num_videos", {KeyType::integer, 64, "untrimmed videos"}},
      {"eval.length", {KeyType::integer, 256, "frames per untrimmed video"}},
      {"eval.instances", {KeyType::integer, 2, "action instances per video"}},
      {"eval.background", {KeyType::string, "mixed", "freeze | noise | mixed"}},
      {"eval.min_instance", {KeyType::integer, 24, "shortest instance"}},
      {"eval.max_instance", {KeyType::integer, 64, "longest instance"}},
      {"eval.min_gap", {KeyType::integer, 8, "shortest background run"}},
      {"eval.noise_sigma", {KeyType::number, 0.05, "background noise std"}},
      {"eval.window", {KeyType::integer, 8, "snippet length"}},
      {"eval.stride", {KeyType::integer, 4, "snippet stride"}},
      {"eval.tol_frames", {KeyType::number, 4.0, "recall tolerance"}},
      {"eval.detect_k", {KeyType::number, 1.0, "peak threshold = mean + k*std"}},
      {"eval.min_separation", {KeyType::integer, 2, "peak suppression radius, in score steps"}},
      {"eval.znorm", {KeyType::boolean, false, "z-normalize each track before scoring"}},
      {"eval.probe_steps", {KeyType::integer, 300, "probe descent steps"}},
      {"eval.probe_lr", {KeyType::number, 0.5, "probe learning rate"}},
      {"eval.probe_context", {KeyType::string, "absdiff", "none | absdiff"}},
      {"eval.train_fraction", {KeyType::number, 0.5, "videos used to fit the probe"}},
      {"eval.extractors", {KeyType::string, "vanilla,bsp,two-stream", "comma list for the eval command"}},

      {"io.data", {KeyType::string, "", "dataset directory"}},
      {"io.vanilla", {KeyType::string, "", "vanilla checkpoint"}},
      {"io.bsp", {KeyType::string, "", "bsp checkpoint"}},
      {"io.student", {KeyType::string, "", "distilled checkpoint"}},
      {"io.two_head", {KeyType::string, "", "two-head checkpoint"}},
  };
  return schema;
}

namespace detail {

inline bool type_ok(KeyType t, const nlohmann::json& v) {
  switch (t) {
    case KeyType::integer: return v.is_number_integer();
    case KeyType::number: return v.is_number();
    case KeyType::boolean: return v.is_boolean();
    case KeyType::string: return v.is_string();
    case KeyType::optional_number: return v.is_null() || v.is_number();
    case KeyType::number_list:
      if (!v.is_array()) return false;
      for (const auto& e : v)
        if (!e.is_number()) return false;
      return true;
  }
  return false;
}

inline const char* type_name(KeyType t) {
  switch (t) {
    case KeyType::integer: return "integer";
    case KeyType::number: return "number";
    case KeyType::boolean: return "boolean";
    case KeyType::string: return "string";
    case KeyType::optional_number: return "number or null";
    case KeyType::number_list: return "list of numbers";
  }
  return "?";
}

}  // namespace detail

class RunConfig {
 public:
  RunConfig() {
    for (const auto& [k, spec] : config_schema()) values_[k] = spec.fallback;
  }

  /// Merges a flat object; every key must be in the schema.
  void merge(const nlohmann::json& obj) {
    if (!obj.is_object()) throw ConfigError("config: top level must be a JSON object");
    std::vector<std::string> bad;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      const auto s = config_schema().find(it.key());
      if (s == config_schema().end()) {
        bad.push_back(it.key() + " (unknown key)");
        continue;
      }
      if (!detail::type_ok(s->second.type, it.value())) {
        bad.push_back(it.key() + " (expected " + detail::type_name(s->second.type) + ")");
        continue;
      }
      values_[it.key()] = it.value();
    }
    if (!bad.empty()) {
      std::string msg = "config: invalid keys:";
      for (const auto& b : bad) msg += " " + b + ";";
      msg.pop_back();
      throw ConfigError(msg);
    }
  }

  void merge_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }
    merge(j);
  }

  /// "key=value"; the value is parsed as JSON when possible, else taken as a
  /// string.
  void set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("config: --set expects KEY=VALUE, got '" + assignment + "'");
    const auto key = assignment.substr(0, eq);
    const auto raw = assignment.substr(eq + 1);
    nlohmann::json v = nlohmann::json::parse(raw, nullptr, false);
    if (v.is_discarded()) v = raw;
    const auto s = config_schema().find(key);
    if (s != config_schema().end() && s->second.type == KeyType::string && !v.is_string()) v = raw;
    merge(nlohmann::json{{key, v}});
  }

  const nlohmann::json& json(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: no key " + key);
    return it->second;
  }
  long integer(const std::string& k) const { return json(k).get<long>(); }
  double number(const std::string& k) const { return json(k).get<double>(); }
  bool boolean(const std::string& k) const { return json(k).get<bool>(); }
  std::string str(const std::string& k) const { return json(k).get<std::string>(); }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
  }

  /// FNV-1a 64 over the canonical dump of every key, as 16 hex digits.
  std::string hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : to_json().dump()) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  // -- typed views -----------------------------------------------------------

  SourceConfig source() const {
    SourceConfig c;
    c.K = static_cast<int>(integer("data.K"));
    c.clips_per_class = static_cast<int>(integer("data.clips_per_class"));
    c.len = static_cast<int>(integer("data.len"));
    c.H = static_cast<int>(integer("data.H"));
    c.W = static_cast<int>(integer("data.W"));
    c.C = static_cast<int>(integer("data.C"));
    c.noise_sigma = number("data.noise_sigma");
    c.fps = number("data.fps");
    return c;
  }

  SynthesisConfig synthesis() const {
    SynthesisConfig c;
    c.tau = static_cast<int>(integer("synth.tau"));
    c.epsilon = static_cast<int>(integer("synth.epsilon"));
    c.gamma_set = json("synth.gamma_set").get<std::vector<double>>();
    c.t_min = static_cast<int>(integer("synth.t_min"));
    c.t_max = static_cast<int>(integer("synth.t_max"));
    const auto mode = str("synth.two_clip_sampling");
    if (mode == "window")
      c.two_clip_sampling = FrameSampling::window;
    else if (mode == "uniform")
      c.two_clip_sampling = FrameSampling::uniform;
    else
      throw ConfigError("config: synth.two_clip_sampling must be window or uniform");
    c.validate();
    return c;
  }

  Split synth_split() const { return split_from(str("synth.split"), "synth.split"); }

  EncoderConfig encoder(std::size_t H, std::size_t W, std::size_t C) const {
    EncoderConfig c;
    c.H = H;
    c.W = W;
    c.C = C;
    c.E = positive("model.E");
    c.D = positive("model.D");
    c.kernel = positive("model.kernel");
    c.input_shift = number("model.input_shift");
    c.input_scale = number("model.input_scale");
    if (c.kernel % 2 == 0) throw ConfigError("config: model.kernel must be odd");
    return c;
  }

  TrainConfig train(LossKind kind, std::uint64_t stream_seed) const {
    TrainConfig c;
    c.lr = number("train.lr");
    c.momentum = number("train.momentum");
    c.batch_size = positive("train.batch_size");
    c.steps = integer("train.steps");
    c.eval_every = integer("train.eval_every");
    c.val_size = positive("train.val_size");
    c.seed = stream_seed;
    c.loss_kind = kind;
    const auto red = str("train.reg_reduction");
    if (red != "sum" && red != "mean") throw ConfigError("config: train.reg_reduction must be sum or mean");
    c.reg_reduction = red == "sum" ? Reduction::sum : Reduction::mean;
    c.reg_include_same_speed = boolean("train.reg_include_same_speed");
    if (!json("train.heatmap_variance").is_null()) c.heatmap_variance = number("train.heatmap_variance");
    c.validate();
    return c;
  }

  TrainConfig distill_train(std::uint64_t stream_seed) const {
    TrainConfig c = train(LossKind::boundary_cls, stream_seed);
    c.lr = number("distill.lr");
    c.momentum = number("distill.momentum");
    c.batch_size = positive("distill.batch_size");
    c.steps = integer("distill.steps");
    c.eval_every = integer("distill.eval_every");
    c.validate();
    return c;
  }

  DistillOptions distill_options() const {
    DistillOptions o;
    const auto labels = str("distill.ce_labels");
    if (labels == "boundary")
      o.ce_labels = DistillLabels::boundary;
    else if (labels == "action")
      o.ce_labels = DistillLabels::action;
    else
      throw ConfigError("config: distill.ce_labels must be boundary or action");
    o.ce_weight = number("distill.ce_weight");
    o.snippet_length = positive("train.snippet_length");
    return o;
  }

  EvalConfig evaluation() const {
    EvalConfig e;
    e.videos.num_videos = static_cast<int>(integer("eval.num_videos"));
    e.videos.length = static_cast<int>(integer("eval.length"));
    e.videos.instances = static_cast<int>(integer("eval.instances"));
    e.videos.background = background_from_string(str("eval.background"));
    e.videos.min_instance = static_cast<int>(integer("eval.min_instance"));
    e.videos.max_instance = static_cast<int>(integer("eval.max_instance"));
    e.videos.min_gap = static_cast<int>(integer("eval.min_gap"));
    e.videos.noise_sigma = number("eval.noise_sigma");
    e.snippets.window = positive("eval.window");
    e.snippets.stride = positive("eval.stride");
    e.tol_frames = number("eval.tol_frames");
    e.detect_k = number("eval.detect_k");
    e.min_separation = positive("eval.min_separation");
    e.znorm = boolean("eval.znorm");
    e.probe.steps = integer("eval.probe_steps");
    e.probe.lr = number("eval.probe_lr");
    const auto ctx = str("eval.probe_context");
    if (ctx == "none")
      e.probe.context = ProbeContext::none;
    else if (ctx == "absdiff")
      e.probe.context = ProbeContext::absdiff;
    else
      throw ConfigError("config: eval.probe_context must be none or absdiff");
    e.train_fraction = number("eval.train_fraction");
    if (!(e.train_fraction > 0.0 && e.train_fraction < 1.0)) throw ConfigError("config: eval.train_fraction must be in (0,1)");
    if (e.probe.steps <= 0 || !(e.probe.lr > 0.0)) throw ConfigError("config: probe steps and lr must be positive");
    return e;
  }

 private:
  std::size_t positive(const std::string& k) const {
    const long v = integer(k);
    if (v <= 0) throw ConfigError("config: " + k + " must be > 0");
    return static_cast<std::size_t>(v);
  }

  static Split split_from(const std::string& s, const char* key) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    throw ConfigError(std::string("config: ") + key + " must be train or val");
  }

  std::map<std::string, nlohmann::json> values_;
};

}  // namespace bsp
