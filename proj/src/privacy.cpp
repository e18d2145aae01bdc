#include "mtal/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mtal {
namespace {

std::mt19937_64 message_rng(const Shard& s, const PrivacyConfig& cfg) {
  return std::mt19937_64(derive_seed(cfg.seed, s.round, s.sender, s.receiver));
}

}  // namespace

PrivacyMechanism parse_privacy_mechanism(std::string_view name) {
  if (name == "none") return PrivacyMechanism::kNone;
  if (name == "gaussian" || name == "dp") return PrivacyMechanism::kGaussian;
  if (name == "interval" || name == "ip") return PrivacyMechanism::kInterval;
  throw ConfigError("unknown privacy mechanism '" + std::string(name) + "'");
}

std::string_view to_string(PrivacyMechanism mechanism) {
  switch (mechanism) {
    case PrivacyMechanism::kGaussian: return "gaussian";
    case PrivacyMechanism::kInterval: return "interval";
    default: return "none";
  }
}

void PrivacyConfig::validate() const {
  if (mechanism == PrivacyMechanism::kNone) return;
  if (!(clip > 0.0)) throw ConfigError("privacy.clip must be positive");
  if (mechanism == PrivacyMechanism::kGaussian && !(sigma >= 0.0)) {
    throw ConfigError("privacy.sigma must be non-negative");
  }
  if (mechanism == PrivacyMechanism::kInterval && !(width > 0.0)) {
    throw ConfigError("privacy.width must be positive");
  }
}

Shard gaussian_mechanism(Shard shard, const PrivacyConfig& cfg) {
  if (!(cfg.sigma >= 0.0)) throw ConfigError("privacy.sigma must be non-negative");
  if (!(cfg.clip > 0.0)) throw ConfigError("privacy.clip must be positive");
  auto rng = message_rng(shard, cfg);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (auto& v : shard.values) {
    const double clamped = std::clamp(static_cast<double>(v), -cfg.clip, cfg.clip);
    v = static_cast<float>(clamped + cfg.sigma * noise(rng));
  }
  return shard;
}

double interval_midpoint(double x, double offset, double width) {
  return offset + (std::floor((x - offset) / width) + 0.5) * width;
}

Shard interval_mechanism(Shard shard, const PrivacyConfig& cfg) {
  if (!(cfg.width > 0.0)) throw ConfigError("privacy.width must be positive");
  if (!(cfg.clip > 0.0)) throw ConfigError("privacy.clip must be positive");
  auto rng = message_rng(shard, cfg);
  const double offset = std::uniform_real_distribution<double>(0.0, cfg.width)(rng);
  for (auto& v : shard.values) {
    const double clamped = std::clamp(static_cast<double>(v), -cfg.clip, cfg.clip);
    v = static_cast<float>(interval_midpoint(clamped, offset, cfg.width));
  }
  return shard;
}

Shard apply_privacy(Shard shard, const PrivacyConfig& cfg) {
  switch (cfg.mechanism) {
    case PrivacyMechanism::kGaussian: return gaussian_mechanism(std::move(shard), cfg);
    case PrivacyMechanism::kInterval: return interval_mechanism(std::move(shard), cfg);
    default: return shard;
  }
}

}  // namespace mtal
