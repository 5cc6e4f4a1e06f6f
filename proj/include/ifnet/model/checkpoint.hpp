#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ifnet/autodiff/tensor_io.hpp"
#include "ifnet/core/binary_io.hpp"
#include "ifnet/model/ifnet.hpp"

namespace ifnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void put_config(BinaryWriter& w, const ModelConfig& c) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.encoder.resolution));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.encoder.scales));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.encoder.channels.size()));
  for (int ch : c.encoder.channels) w.put<std::uint32_t>(static_cast<std::uint32_t>(ch));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.encoder.convs_per_scale));
  w.put<double>(c.query.distance);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.decoder.hidden.size()));
  for (int h : c.decoder.hidden) w.put<std::uint32_t>(static_cast<std::uint32_t>(h));
}

inline ModelConfig get_config(BinaryReader& r) {
  ModelConfig c;
  auto small = [&](const char* what) {
    const auto v = r.get<std::uint32_t>(what);
    if (v > 1u << 16) r.fail(std::string("implausible ") + what + " " + std::to_string(v));
    return static_cast<int>(v);
  };
  c.encoder.resolution = small("resolution");
  c.encoder.scales = small("scale count");
  c.encoder.channels.resize(static_cast<std::size_t>(small("channel count")));
  for (auto& ch : c.encoder.channels) ch = small("channel width");
  c.encoder.convs_per_scale = small("convs per scale");
  c.query.distance = r.get<double>("query distance");
  c.decoder.hidden.resize(static_cast<std::size_t>(small("hidden layer count")));
  for (auto& h : c.decoder.hidden) h = small("hidden width");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    r.fail(std::string("invalid embedded configuration: ") + e.what());
  }
  return c;
}

/// "IFCK", u32 version, u32 model kind, configuration, u32 tensor count, (name, tensor) table.
template <class T>
void put_model(BinaryWriter& w, const Model<T>& m) {
  w.magic("IFCK");
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.kind));
  put_config(w, m.config);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.params.size()));
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    w.put_string(m.params.name(i));
    put_tensor(w, m.params.tensor(i));
  }
}

template <class T>
Model<T> get_model(BinaryReader& r) {
  r.expect_magic("IFCK");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    r.fail("checkpoint version " + std::to_string(version) + " is not supported (this build reads version " +
           std::to_string(kCheckpointVersion) + ")");
  const auto kind = r.get<std::uint32_t>("model kind");
  if (kind != static_cast<std::uint32_t>(ModelKind::ifnet) && kind != static_cast<std::uint32_t>(ModelKind::baseline))
    r.fail("unknown model kind " + std::to_string(kind));
  Model<T> m;
  m.kind = static_cast<ModelKind>(kind);
  m.config = get_config(r);
  // the stored table must match the architecture exactly
  const Model<T> expected = init_model<T>(m.config, m.kind, 0);
  const auto count = r.get<std::uint32_t>("tensor count");
  if (count != expected.params.size())
    r.fail("checkpoint holds " + std::to_string(count) + " tensors, architecture needs " + std::to_string(expected.params.size()));
  for (std::size_t i = 0; i < count; ++i) {
    auto name = r.get_string("tensor name");
    if (name != expected.params.name(i)) r.fail("expected tensor " + expected.params.name(i) + ", found " + name);
    auto t = get_tensor<T>(r);
    if (t.shape() != expected.params.tensor(i).shape())
      r.fail("tensor " + name + " has shape " + shape_string(t.shape()) + ", expected " + shape_string(expected.params.tensor(i).shape()));
    m.params.add(std::move(name), std::move(t));
  }
  return m;
}

template <class T>
void save_model(const std::filesystem::path& path, const Model<T>& m) {
  BinaryWriter w;
  put_model(w, m);
  w.write_file(path);
}

/// Reads the model; a trailing optimizer appendix ("IFOP") is allowed and ignored.
template <class T>
Model<T> load_model(const std::filesystem::path& path) {
  auto r = BinaryReader::from_file(path);
  auto m = get_model<T>(r);
  if (!r.at_end() && !r.peek_magic("IFOP")) r.fail("unexpected trailing data");
  return m;
}

}  // namespace ifnet
