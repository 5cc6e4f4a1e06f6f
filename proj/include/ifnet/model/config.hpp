#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ifnet/core/error.hpp"

namespace ifnet {

struct EncoderConfig {
  int resolution = 32;  // N
  int scales = 4;       // n
  std::vector<int> channels{16, 32, 64, 128};
  int convs_per_scale = 2;
};

struct QueryConfig {
  double distance = 1.0 / 32;  // d, canonical units
};

struct DecoderConfig {
  std::vector<int> hidden{256, 256};
};

struct ModelConfig {
  EncoderConfig encoder;
  QueryConfig query;
  DecoderConfig decoder;

  /// Defaults for an input resolution, with d = one input voxel.
  static ModelConfig for_resolution(int n) {
    ModelConfig c;
    c.encoder.resolution = n;
    c.query.distance = 1.0 / n;
    return c;
  }

  int grid_resolution(int scale) const { return encoder.resolution >> scale; }  // scale is 0-based

  int feature_sum() const {
    int s = 0;
    for (int c : encoder.channels) s += c;
    return s;
  }

  /// Decoder input width: 7 query positions per scale.
  int feature_width() const { return 7 * feature_sum(); }

  /// Input cells a single output can depend on around its query point: the offset d, one cell of
  /// the coarsest grid for the trilinear stencil, and the conv receptive radius c * (2^n - 1).
  int receptive_radius() const {
    const int n = encoder.scales, c = encoder.convs_per_scale;
    return static_cast<int>(std::ceil(query.distance * encoder.resolution)) + (1 << (n - 1)) + c * ((1 << n) - 1) + 1;
  }

  void validate() const {
    const auto& e = encoder;
    if (e.scales < 2) throw ConfigError("encoder: scales must be >= 2, got " + std::to_string(e.scales));
    if (e.scales > 10) throw ConfigError("encoder: scales must be <= 10");
    if (static_cast<int>(e.channels.size()) != e.scales)
      throw ConfigError("encoder: " + std::to_string(e.channels.size()) + " channel widths for " + std::to_string(e.scales) + " scales");
    for (int c : e.channels)
      if (c < 1) throw ConfigError("encoder: channel widths must be >= 1");
    if (e.convs_per_scale < 1) throw ConfigError("encoder: convs_per_scale must be >= 1");
    if (e.resolution < 2 || e.resolution % (1 << (e.scales - 1)) != 0)
      throw ConfigError("encoder: resolution " + std::to_string(e.resolution) + " must be divisible by 2^(scales-1) = " +
                        std::to_string(1 << (e.scales - 1)));
    if (!(query.distance > 0.0 && query.distance < 0.5))
      throw ConfigError("query: distance must lie in (0, 0.5), got " + std::to_string(query.distance));
    for (int h : decoder.hidden)
      if (h < 1) throw ConfigError("decoder: hidden widths must be >= 1");
  }

  bool operator==(const ModelConfig& o) const {
    return encoder.resolution == o.encoder.resolution && encoder.scales == o.encoder.scales &&
           encoder.channels == o.encoder.channels && encoder.convs_per_scale == o.encoder.convs_per_scale &&
           query.distance == o.query.distance && decoder.hidden == o.decoder.hidden;
  }
};

}  // namespace ifnet
