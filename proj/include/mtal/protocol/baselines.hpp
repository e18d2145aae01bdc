#pragma once

#include <cstdint>
#include <vector>

#include "mtal/protocol/learning.hpp"

namespace mtal {

/// Plain autoencoder on one domain's own cells (output width = own columns),
/// trained on the overarching loss. Scores are taken after every
/// `config.fit.epochs` epochs, `checkpoints` times in one continuous run.
std::vector<DomainScores> train_alone(const DomainView& view, const AaeModelConfig& config,
                                      std::uint32_t checkpoints, std::uint64_t seed);

/// train_alone for every domain, concurrently up to `fit_slots`. Result is
/// indexed [checkpoint][domain].
std::vector<std::vector<DomainScores>> run_alone(const std::vector<DomainView>& views, const AaeModelConfig& config,
                                                 std::uint32_t checkpoints, std::uint64_t seed,
                                                 unsigned fit_slots = 0);

}  // namespace mtal
