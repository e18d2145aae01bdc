#pragma once

#include <cstdint>
#include <string_view>

#include "mtal/transport/shard.hpp"

namespace mtal {

enum class PrivacyMechanism { kNone, kGaussian, kInterval };

PrivacyMechanism parse_privacy_mechanism(std::string_view name);
std::string_view to_string(PrivacyMechanism mechanism);

struct PrivacyConfig {
  PrivacyMechanism mechanism = PrivacyMechanism::kNone;
  double clip = 1.0;
  double sigma = 0.1;
  double width = 0.5;
  std::uint64_t seed = 0;

  /// Throws ConfigError on parameters the active mechanism cannot use.
  void validate() const;
};

/// Clamps each value to [-clip, clip] and adds N(0, sigma^2) noise.
Shard gaussian_mechanism(Shard shard, const PrivacyConfig& cfg);

/// Midpoint of the grid cell [offset + k w, offset + (k + 1) w) holding x.
double interval_midpoint(double x, double offset, double width);

/// Clamps each value, then reports the midpoint of its cell in a grid of
/// width `width` shifted by one uniform offset per message.
Shard interval_mechanism(Shard shard, const PrivacyConfig& cfg);

/// Dispatches on cfg.mechanism; kNone returns the shard untouched. Noise is a
/// function of (seed, round, sender, receiver) and the cell position.
Shard apply_privacy(Shard shard, const PrivacyConfig& cfg);

}  // namespace mtal
