#pragma once

// "BSPW" weight files:
//   magic "BSPW" | u32 version | str metadata (JSON) | u32 tensor count |
//   per tensor: str name | u32 ndim | u32 dims[ndim] | float32 data
// All integers little-endian; str = u32 byte length + bytes.

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "bsp/binio.hpp"
#include "bsp/encoder.hpp"
#include "bsp/error.hpp"

namespace bsp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string role;
  std::string config_hash;
  long step = 0;
  nlohmann::json meta = nlohmann::json::object();  // free-form extras
  nd::ParamSet tensors;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline nlohmann::json to_json(const EncoderConfig& c) {
  return {{"H", c.H},           {"W", c.W},           {"C", c.C},
          {"E", c.E},           {"D", c.D},           {"kernel", c.kernel},
          {"input_shift", c.input_shift}, {"input_scale", c.input_scale}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.H = j.at("H").get<std::size_t>();
  c.W = j.at("W").get<std::size_t>();
  c.C = j.at("C").get<std::size_t>();
  c.E = j.at("E").get<std::size_t>();
  c.D = j.at("D").get<std::size_t>();
  c.kernel = j.at("kernel").get<std::size_t>();
  c.input_shift = j.at("input_shift").get<double>();
  c.input_scale = j.at("input_scale").get<double>();
  return c;
}

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  binio::Writer w;
  w.bytes("BSPW", 4);
  w.u32(kCheckpointVersion);
  nlohmann::json m = ck.meta;
  m["role"] = ck.role;
  m["config_hash"] = ck.config_hash;
  m["step"] = ck.step;
  w.str(m.dump());
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) w.f32(static_cast<float>(v));
  }
  return w.buffer();
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  binio::Writer w;
  const auto bytes = serialize_checkpoint(ck);
  w.bytes(bytes.data(), bytes.size());
  w.save(path);
}

inline Checkpoint parse_checkpoint(binio::Reader& r, const std::string& what) {
  r.magic("BSPW");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(FormatErrc::version_mismatch,
                      what + ": checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  Checkpoint ck;
  try {
    auto m = nlohmann::json::parse(r.str());
    ck.role = m.at("role").get<std::string>();
    ck.config_hash = m.at("config_hash").get<std::string>();
    ck.step = m.at("step").get<long>();
    m.erase("role");
    m.erase("config_hash");
    m.erase("step");
    ck.meta = std::move(m);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrc::bad_manifest, what + ": bad checkpoint metadata: " + e.what());
  }
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = r.str();
    const auto ndim = r.u32();
    nd::Shape shape;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape.push_back(r.u32());
      if (shape.back() == 0) throw FormatError(FormatErrc::shape_mismatch, what + ": zero extent in " + name);
      n *= shape.back();
    }
    if (n * 4 > r.remaining()) throw FormatError(FormatErrc::truncated, what + ": tensor " + name + " cut short");
    std::vector<float> buf(n);
    r.f32_array(buf);
    ck.tensors.emplace(std::move(name), nd::Tensor(std::move(shape), std::vector<double>(buf.begin(), buf.end())));
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  auto r = binio::Reader::open(path);
  return parse_checkpoint(r, path);
}

/// Encoder stored under `prefix` with its config in meta["encoder"] (or
/// meta[key] when given).
inline EncoderParams encoder_from_checkpoint(const Checkpoint& ck, const std::string& prefix = "enc.",
                                             const std::string& key = "encoder") {
  if (!ck.meta.contains(key)) throw FormatError(FormatErrc::bad_manifest, "checkpoint has no " + key + " config");
  EncoderParams p{encoder_config_from_json(ck.meta.at(key)), strip_prefix(ck.tensors, prefix)};
  check_encoder_params(p);
  return p;
}

inline void put_encoder(Checkpoint& ck, const EncoderParams& enc, const std::string& prefix = "enc.",
                        const std::string& key = "encoder") {
  ck.meta[key] = to_json(enc.cfg);
  for (const auto& [k, v] : prefixed(enc.tensors, prefix)) ck.tensors.insert_or_assign(k, v);
}

}  // namespace bsp
