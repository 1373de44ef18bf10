#pragma once

// Pipeline commands behind the command-line front end. Each takes the
// merged RunConfig and an output directory, writes its artifacts there and
// returns a one-line summary.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bsp/checkpoint.hpp"
#include "bsp/config.hpp"

namespace bsp::cmd {

namespace fs = std::filesystem;

// Seed streams under RunConfig::seed.
namespace seeds {
inline constexpr std::uint64_t encoder_init = 1000;
inline constexpr std::uint64_t train = 2000;
inline constexpr std::uint64_t videos = 3000;
inline constexpr std::uint64_t probe = 3001;
}  // namespace seeds

enum class Task { vanilla = 0, bsp_cls = 1, bsp_reg = 2, two_head = 3, distill = 4, random = 5 };

inline const char* task_name(Task t) {
  switch (t) {
    case Task::vanilla: return "vanilla";
    case Task::bsp_cls: return "bsp-cls";
    case Task::bsp_reg: return "bsp-reg";
    case Task::two_head: return "two-head";
    case Task::distill: return "distill";
    case Task::random: return "random";
  }
  return "?";
}

inline Task task_from_string(const std::string& s) {
  for (Task t : {Task::vanilla, Task::bsp_cls, Task::bsp_reg, Task::two_head})
    if (s == task_name(t)) return t;
  if (s == "bsp") return Task::bsp_cls;
  throw ConfigError("pretrain: unknown task '" + s + "' (expected vanilla, bsp-cls, bsp-reg or two-head)");
}

inline std::uint64_t init_seed(const RunConfig& cfg, Task t) {
  return derive_seed(cfg.seed(), seeds::encoder_init + static_cast<std::uint64_t>(t));
}
inline std::uint64_t train_seed(const RunConfig& cfg, Task t) {
  return derive_seed(cfg.seed(), seeds::train + static_cast<std::uint64_t>(t));
}

inline std::string require_path(const RunConfig& cfg, const std::string& key) {
  const auto p = cfg.str(key);
  if (p.empty()) throw ConfigError("missing input: set " + key);
  if (!fs::exists(p)) throw FormatError(FormatErrc::io, key + ": no such file or directory: " + p);
  return p;
}

inline ClipDataset load_data(const RunConfig& cfg) { return load_dataset(require_path(cfg, "io.data")); }

inline EncoderConfig encoder_config_for(const RunConfig& cfg, const ClipDataset& ds) {
  return cfg.encoder(ds.H, ds.W, ds.C);
}

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------

inline std::string gen_source(const RunConfig& cfg, const fs::path& out) {
  const auto ds = generate_source(cfg.seed(), cfg.source(), cfg.synthesis());
  save_dataset(ds, out);
  return "gen-source: " + std::to_string(ds.clips.size()) + " clips, K=" + std::to_string(ds.K) + " -> " + out.string();
}

inline std::string synth(const RunConfig& cfg, const fs::path& out) {
  const auto ds = load_data(cfg);
  const auto n = cfg.integer("synth.num_samples");
  if (n <= 0 || n % 4 != 0) throw ConfigError("config: synth.num_samples must be a positive multiple of 4");
  Rng rng(derive_seed(cfg.seed(), 4000));
  const auto samples = sample_batch(ds, cfg.synthesis(), rng, static_cast<std::size_t>(n), cfg.synth_split());
  dump_samples(samples, out);
  return "synth: " + std::to_string(samples.size()) + " samples -> " + out.string();
}

inline Checkpoint base_checkpoint(const RunConfig& cfg, const std::string& role, const std::string& task, long step) {
  Checkpoint ck;
  ck.role = role;
  ck.config_hash = cfg.hash();
  ck.step = step;
  ck.meta["task"] = task;
  ck.meta["seed"] = cfg.seed();
  return ck;
}

inline std::string pretrain(const RunConfig& cfg, Task task, const fs::path& out) {
  const auto ds = load_data(cfg);
  const auto synth_cfg = cfg.synthesis();
  const auto ecfg = encoder_config_for(cfg, ds);
  const auto enc0 = init_params(init_seed(cfg, task), ecfg);
  const auto seed = train_seed(cfg, task);
  const auto snippet = static_cast<std::size_t>(cfg.integer("train.snippet_length"));
  fs::create_directories(out);
  Checkpoint ck;
  std::string summary;
  TrainReport report;
  switch (task) {
    case Task::vanilla: {
      auto r = train_vanilla_classifier(ds, enc0, cfg.train(LossKind::vanilla_cls, seed), snippet);
      ck = base_checkpoint(cfg, to_string(Role::vanilla), task_name(task), r.report.records.back().step);
      put_encoder(ck, r.encoder);
      for (const auto& [k, v] : prefixed(r.head, "head.")) ck.tensors.emplace(k, v);
      summary = "val action accuracy " + fmt("%.4f", r.report.records.back().metric);
      report = std::move(r.report);
      break;
    }
    case Task::bsp_cls: {
      auto r = train_boundary_classifier(ds, synth_cfg, enc0, cfg.train(LossKind::boundary_cls, seed));
      ck = base_checkpoint(cfg, to_string(Role::bsp), task_name(task), r.report.records.back().step);
      put_encoder(ck, r.encoder);
      for (const auto& [k, v] : prefixed(r.head, "head.")) ck.tensors.emplace(k, v);
      summary = "val boundary accuracy " + fmt("%.4f", r.report.records.back().metric);
      report = std::move(r.report);
      break;
    }
    case Task::bsp_reg: {
      const auto tc = cfg.train(LossKind::boundary_reg, seed);
      auto r = train_boundary_regressor(ds, synth_cfg, enc0, tc);
      ck = base_checkpoint(cfg, to_string(Role::bsp), task_name(task), r.report.records.back().step);
      put_encoder(ck, r.encoder);
      for (const auto& [k, v] : prefixed(r.head, "head.")) ck.tensors.emplace(k, v);
      const auto e = evaluate_boundary_regressor(r.encoder, r.head, boundary_val_set(ds, synth_cfg, tc), synth_cfg.tau, tc);
      summary = "val localization error " + fmt("%.3f", e.mean_error) + ", within 2 frames " + fmt("%.4f", e.hit_rate);
      report = std::move(r.report);
      break;
    }
    case Task::two_head: {
      TwoHeadOptions opt;
      opt.lambda = cfg.number("train.lambda");
      opt.snippet_length = snippet;
      auto r = train_two_head(ds, synth_cfg, enc0, cfg.train(LossKind::two_head, seed), opt);
      ck = base_checkpoint(cfg, to_string(Role::two_head), task_name(task), r.report.records.back().step);
      put_encoder(ck, r.encoder);
      for (const auto& [k, v] : prefixed(r.action_head, "act.")) ck.tensors.emplace(k, v);
      for (const auto& [k, v] : prefixed(r.boundary_head, "bnd.")) ck.tensors.emplace(k, v);
      summary = "val action accuracy " + fmt("%.4f", r.action_accuracy) + ", boundary accuracy " +
                fmt("%.4f", r.boundary_accuracy);
      report = std::move(r.report);
      break;
    }
    default: throw ConfigError("pretrain: unsupported task");
  }
  save_checkpoint(ck, (out / "checkpoint.bspw").string());
  report.write_csv((out / "report.csv").string());
  return std::string("pretrain ") + task_name(task) + ": " + summary + " -> " + (out / "checkpoint.bspw").string();
}

inline Checkpoint load_role(const std::string& path, Role role) {
  auto ck = load_checkpoint(path);
  if (ck.role != to_string(role))
    throw FormatError(FormatErrc::bad_manifest,
                      path + ": checkpoint role is '" + ck.role + "', expected '" + to_string(role) + "'");
  return ck;
}

inline std::string distill(const RunConfig& cfg, const fs::path& out) {
  const auto ds = load_data(cfg);
  const auto tv = encoder_from_checkpoint(load_role(require_path(cfg, "io.vanilla"), Role::vanilla));
  const auto tb = encoder_from_checkpoint(load_role(require_path(cfg, "io.bsp"), Role::bsp));
  const auto ecfg = encoder_config_for(cfg, ds);
  if (tv.cfg.frame_size() != ecfg.frame_size() || tb.cfg.frame_size() != ecfg.frame_size())
    throw ConfigError("distill: teacher frame shape does not match the dataset");
  const auto student0 = init_params(init_seed(cfg, Task::distill), ecfg);
  auto r = distill(tv, tb, student0, ds, cfg.synthesis(), cfg.distill_train(train_seed(cfg, Task::distill)),
                   cfg.distill_options());
  fs::create_directories(out);
  auto ck = base_checkpoint(cfg, to_string(Role::student), "distill", r.report.records.back().step);
  put_encoder(ck, r.student);
  for (const auto& [k, v] : prefixed(r.projections.h1, "h1.")) ck.tensors.emplace(k, v);
  for (const auto& [k, v] : prefixed(r.projections.h2, "h2.")) ck.tensors.emplace(k, v);
  for (const auto& [k, v] : prefixed(r.ce_head, "ce.")) ck.tensors.emplace(k, v);
  ck.meta["initial_matching_loss"] = r.initial_matching_loss;
  ck.meta["final_matching_loss"] = r.final_matching_loss;
  save_checkpoint(ck, (out / "checkpoint.bspw").string());
  r.report.write_csv((out / "report.csv").string());
  return "distill: matching loss " + fmt("%.4g", r.initial_matching_loss) + " -> " +
         fmt("%.4g", r.final_matching_loss) + " -> " + (out / "checkpoint.bspw").string();
}

/// Rebuilds a named extractor from the checkpoints in io.*.
inline FeatureExtractor build_extractor(const RunConfig& cfg, const std::string& name, const ClipDataset& ds) {
  const Role role = role_from_string(name);
  auto from = [&](const char* key, Role r) { return encoder_from_checkpoint(load_role(require_path(cfg, key), r)); };
  switch (role) {
    case Role::vanilla: return FeatureExtractor(role, from("io.vanilla", Role::vanilla));
    case Role::bsp: return FeatureExtractor(role, from("io.bsp", Role::bsp));
    case Role::student: return FeatureExtractor(role, from("io.student", Role::student));
    case Role::two_head: return FeatureExtractor(role, from("io.two_head", Role::two_head));
    case Role::two_stream:
      return FeatureExtractor::two_stream(from("io.vanilla", Role::vanilla), from("io.bsp", Role::bsp));
    case Role::random_init:
      return FeatureExtractor(role, init_params(init_seed(cfg, Task::random), encoder_config_for(cfg, ds)));
  }
  throw ConfigError("unknown extractor " + name);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline std::vector<UntrimmedVideo> benchmark_videos(const RunConfig& cfg, const ClipDataset& ds, const EvalConfig& ec) {
  return gen_untrimmed(ds, derive_seed(cfg.seed(), seeds::videos), ec.videos);
}

inline EvalConfig eval_config(const RunConfig& cfg) {
  auto ec = cfg.evaluation();
  ec.probe.seed = derive_seed(cfg.seed(), seeds::probe);
  return ec;
}

/// features/<video>.bspc holds the [N, D] track as T=N, H=W=1, C=D;
/// tracks.json holds labels, centres and ground truth.
inline std::string extract(const RunConfig& cfg, const std::string& name, const fs::path& out) {
  const auto ds = load_data(cfg);
  const auto fx = build_extractor(cfg, name, ds);
  const auto ec = eval_config(cfg);
  const auto videos = benchmark_videos(cfg, ds, ec);
  const auto tracks = extract_tracks(fx, videos, ec.snippets);
  fs::create_directories(out / "features");
  nlohmann::json meta;
  meta["extractor"] = name;
  meta["dim"] = fx.output_dim();
  meta["window"] = ec.snippets.window;
  meta["stride"] = ec.snippets.stride;
  meta["videos"] = nlohmann::json::array();
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const auto& t = tracks[v];
    std::vector<float> f(t.features.data().begin(), t.features.data().end());
    const auto file = "features/" + std::to_string(videos[v].video_id) + ".bspc";
    write_bspc((out / file).string(), t.size(), 1, 1, fx.output_dim(), f);
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : videos[v].segments) segs.push_back({{"start", s.start}, {"end", s.end}, {"class", s.class_id}});
    meta["videos"].push_back({{"id", videos[v].video_id},
                              {"file", file},
                              {"labels", t.labels},
                              {"centers", t.centers},
                              {"segments", segs},
                              {"boundaries", videos[v].boundary_positions}});
  }
  std::ofstream(out / "tracks.json") << meta.dump(1) << '\n';
  return "extract " + name + ": " + std::to_string(videos.size()) + " tracks of dim " +
         std::to_string(fx.output_dim()) + " -> " + out.string();
}

inline std::string evaluate(const RunConfig& cfg, std::vector<std::string> names, const fs::path& out) {
  if (names.empty()) names = split_list(cfg.str("eval.extractors"));
  if (names.empty()) throw ConfigError("eval: no extractors given");
  const auto ds = load_data(cfg);
  const auto ec = eval_config(cfg);
  const auto videos = benchmark_videos(cfg, ds, ec);
  std::vector<ExtractorEval> rows;
  std::vector<SnippetTrack> first;
  for (const auto& n : names) {
    const auto fx = build_extractor(cfg, n, ds);
    auto tracks = extract_tracks(fx, videos, ec.snippets);
    rows.push_back(evaluate_tracks(n, tracks, videos, ec));
    if (first.empty()) first = std::move(tracks);
  }
  fs::create_directories(out);
  write_eval_csv((out / "eval.csv").string(), rows);
  write_score_traces(out / "scores", videos, first, rows, ec.snippets);
  std::string s = "eval:";
  for (const auto& r : rows) s += " " + r.extractor + " ap=" + fmt("%.4f", r.ap);
  return s + " -> " + (out / "eval.csv").string();
}

/// Summarizes report.csv / eval.csv files into out/summary.csv.
inline std::string report(const std::vector<std::string>& files, const fs::path& out) {
  if (files.empty()) throw ConfigError("report: give at least one report.csv or eval.csv");
  fs::create_directories(out);
  std::ofstream sum(out / "summary.csv");
  if (!sum) throw FormatError(FormatErrc::io, "cannot write " + (out / "summary.csv").string());
  sum << "file,kind,key,value\n";
  std::size_t rows = 0;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw FormatError(FormatErrc::io, "report: cannot open " + f);
    std::string header, line, last;
    std::getline(in, header);
    if (header == "step,loss,val_loss,metric") {
      while (std::getline(in, line))
        if (!line.empty()) last = line;
      if (last.empty()) throw FormatError(FormatErrc::truncated, f + ": no records");
      const auto v = split_list(last);
      sum << f << ",train,final_step," << v.at(0) << '\n'
          << f << ",train,final_val_loss," << v.at(2) << '\n'
          << f << ",train,final_metric," << v.at(3) << '\n';
      ++rows;
    } else if (header == "extractor,ap,recall,ratio") {
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto v = split_list(line);
        sum << f << ",eval," << v.at(0) << ".ap," << v.at(1) << '\n'
            << f << ",eval," << v.at(0) << ".recall," << v.at(2) << '\n'
            << f << ",eval," << v.at(0) << ".ratio," << v.at(3) << '\n';
        ++rows;
      }
    } else {
      throw FormatError(FormatErrc::bad_manifest, f + ": unrecognized CSV header '" + header + "'");
    }
  }
  return "report: " + std::to_string(rows) + " rows from " + std::to_string(files.size()) + " files -> " +
         (out / "summary.csv").string();
}

}  // namespace bsp::cmd
