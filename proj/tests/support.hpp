#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "mtal/experiment.hpp"

namespace mtal::test {

inline std::filesystem::path ml100k_dir() {
  if (const char* env = std::getenv("MTAL_ML100K_DIR")) return env;
  return MTAL_ML100K_DEFAULT;
}

inline bool have_ml100k() { return std::filesystem::exists(ml100k_dir() / "u.data"); }

/// Small synthetic config that trains in well under a second.
inline ExperimentConfig toy_config() {
  ExperimentConfig c;
  c.source = DataSource::kSynthetic;
  c.synthetic.users = 30;
  c.synthetic.items = 24;
  c.synthetic.genres = 3;
  c.synthetic.density = 0.4;
  c.local.hidden0 = 8;
  c.local.hidden1 = 4;
  c.local.fit.epochs = 3;
  c.local.fit.batch_size = 10;
  c.assist.rounds = 3;
  c.assist.fit_slots = 1;
  return c;
}

}  // namespace mtal::test
