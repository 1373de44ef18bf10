#pragma once

// Small temporal video encoder:
//
//   frames [B,T,H*W*C] -> linear embed -> [B,T,E]
//     -> conv1d(k) + bias -> relu -> conv1d(k) + bias -> relu   (per-frame map)
//     -> mean over T -> linear proj -> [B,D]                    (pooled feature)

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsp/ndgrad.hpp"
#include "bsp/rng.hpp"

namespace bsp {

struct EncoderConfig {
  std::size_t H = 24, W = 24, C = 1;
  std::size_t E = 32;
  std::size_t D = 64;
  std::size_t kernel = 3;
  // Fixed input normalization: x' = (x - input_shift) * input_scale.
  double input_shift = 0.5;
  double input_scale = 1.0;

  std::size_t frame_size() const { return H * W * C; }
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct EncoderParams {
  EncoderConfig cfg;
  nd::ParamSet tensors;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors) n += t.size();
    return n;
  }
  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

/// Glorot-uniform init, U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
inline nd::Tensor glorot_uniform(nd::Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  nd::Tensor t(std::move(shape));
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-a, a);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline EncoderParams init_params(std::uint64_t seed, const EncoderConfig& cfg) {
  if (cfg.kernel % 2 == 0) throw std::invalid_argument("encoder: kernel must be odd");
  Rng rng(seed);
  EncoderParams p;
  p.cfg = cfg;
  const std::size_t F = cfg.frame_size(), E = cfg.E, D = cfg.D, k = cfg.kernel;
  p.tensors["embed.w"] = glorot_uniform({F, E}, F, E, rng);
  p.tensors["embed.b"] = nd::Tensor({E});
  p.tensors["conv1.w"] = glorot_uniform({k, E, E}, k * E, k * E, rng);
  p.tensors["conv1.b"] = nd::Tensor({E});
  p.tensors["conv2.w"] = glorot_uniform({k, E, E}, k * E, k * E, rng);
  p.tensors["conv2.b"] = nd::Tensor({E});
  p.tensors["proj.w"] = glorot_uniform({E, D}, E, D, rng);
  p.tensors["proj.b"] = nd::Tensor({D});
  return p;
}

/// Linear layer "w" [in,out], "b" [out].
inline nd::ParamSet init_linear(std::uint64_t seed, std::size_t in, std::size_t out) {
  Rng rng(seed);
  nd::ParamSet p;
  p["w"] = glorot_uniform({in, out}, in, out, rng);
  p["b"] = nd::Tensor({out});
  return p;
}

/// Prefixes every name, for merging several ParamSets into one optimizer.
inline nd::ParamSet prefixed(const nd::ParamSet& p, const std::string& prefix) {
  nd::ParamSet out;
  for (const auto& [name, t] : p) out.emplace(prefix + name, t);
  return out;
}

inline nd::ParamSet strip_prefix(const nd::ParamSet& p, const std::string& prefix) {
  nd::ParamSet out;
  for (const auto& [name, t] : p)
    if (name.rfind(prefix, 0) == 0) out.emplace(name.substr(prefix.size()), t);
  return out;
}

using NodeMap = std::map<std::string, nd::NodeId>;

struct EncoderNodes {
  nd::NodeId per_frame;  // [B,T,E]
  nd::NodeId pooled;     // [B,D]
};

inline void check_encoder_params(const EncoderParams& p) {
  const auto& c = p.cfg;
  const std::size_t F = c.frame_size(), E = c.E, D = c.D, k = c.kernel;
  const std::map<std::string, nd::Shape> want{
      {"embed.w", {F, E}}, {"embed.b", {E}},    {"conv1.w", {k, E, E}}, {"conv1.b", {E}},
      {"conv2.w", {k, E, E}}, {"conv2.b", {E}}, {"proj.w", {E, D}},     {"proj.b", {D}},
  };
  for (const auto& [name, shape] : want) {
    auto it = p.tensors.find(name);
    if (it == p.tensors.end()) throw std::invalid_argument("encoder: missing parameter " + name);
    if (it->second.shape() != shape) nd::shape_fail(("encoder parameter " + name).c_str(), it->second.shape(), shape);
  }
}

/// Records the encoder on `g`; `x` is [B,T,H*W*C], `p` maps every encoder
/// parameter name to a bound node.
inline EncoderNodes encode_nodes(nd::Graph& g, const EncoderConfig& cfg, const NodeMap& p, nd::NodeId x) {
  const auto& xs = g.value(x).shape();
  if (xs.size() != 3 || xs[2] != cfg.frame_size())
    nd::shape_fail("encode", xs, nd::Shape{0, 0, cfg.frame_size()});
  const std::size_t B = xs[0], T = xs[1];
  auto h = g.reshape(x, {B * T, cfg.frame_size()});
  if (cfg.input_shift != 0.0) h = g.add(h, g.input(nd::Tensor({cfg.frame_size()}, -cfg.input_shift)));
  if (cfg.input_scale != 1.0) h = g.scale(h, cfg.input_scale);
  h = g.add(g.matmul(h, p.at("embed.w")), p.at("embed.b"));
  h = g.reshape(h, {B, T, cfg.E});
  h = g.relu(g.add(g.temporal_conv1d(h, p.at("conv1.w")), p.at("conv1.b")));
  h = g.relu(g.add(g.temporal_conv1d(h, p.at("conv2.w")), p.at("conv2.b")));
  const auto pooled = g.add(g.matmul(g.mean_over_axis(h, 1), p.at("proj.w")), p.at("proj.b"));
  return {h, pooled};
}

/// Applies a linear layer bound under `prefix` ("w","b") to the last axis.
inline nd::NodeId linear_nodes(nd::Graph& g, const NodeMap& p, const std::string& prefix, nd::NodeId x) {
  const auto shape = g.value(x).shape();
  const auto in = shape.back();
  const auto out = g.value(p.at(prefix + "w")).dim(1);
  auto flat = shape.size() == 2 ? x : g.reshape(x, {g.value(x).size() / in, in});
  auto y = g.add(g.matmul(flat, p.at(prefix + "w")), p.at(prefix + "b"));
  if (shape.size() == 2) return y;
  nd::Shape os = shape;
  os.back() = out;
  return g.reshape(y, os);
}

/// Packs float32 frame stacks into a [B,T,F] double tensor.
inline nd::Tensor frames_tensor(const std::vector<std::span<const float>>& snippets, std::size_t T, std::size_t F) {
  if (snippets.empty()) throw std::invalid_argument("frames_tensor: empty batch");
  nd::Tensor x({snippets.size(), T, F});
  auto d = x.data();
  for (std::size_t b = 0; b < snippets.size(); ++b) {
    if (snippets[b].size() != T * F)
      throw nd::ShapeError("frames_tensor: snippet " + std::to_string(b) + " has " +
                           std::to_string(snippets[b].size()) + " values, expected " + std::to_string(T * F));
    std::copy(snippets[b].begin(), snippets[b].end(), d.begin() + static_cast<std::ptrdiff_t>(b * T * F));
  }
  return x;
}

struct FeatureMap {
  nd::Tensor per_frame;  // [B,T,E]
  nd::Tensor pooled;     // [B,D]
};

/// Forward pass with frozen parameters. Accepts [T,H,W,C], [B,T,H,W,C] or
/// [B,T,H*W*C].
inline FeatureMap encode(const EncoderParams& params, const nd::Tensor& snippets) {
  check_encoder_params(params);
  const auto& c = params.cfg;
  const auto& s = snippets.shape();
  nd::Tensor x;
  if (s.size() == 4 && s[1] == c.H && s[2] == c.W && s[3] == c.C)
    x = snippets.reshaped({1, s[0], c.frame_size()});
  else if (s.size() == 5 && s[2] == c.H && s[3] == c.W && s[4] == c.C)
    x = snippets.reshaped({s[0], s[1], c.frame_size()});
  else if (s.size() == 3 && s[2] == c.frame_size())
    x = snippets;
  else
    nd::shape_fail("encode", s, nd::Shape{0, c.H, c.W, c.C});
  nd::Graph g;
  const auto p = nd::bind(g, params.tensors, false);
  const auto xin = g.input(std::move(x));
  const auto out = encode_nodes(g, c, p, xin);
  return {g.value(out.per_frame), g.value(out.pooled)};
}

}  // namespace bsp
