#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtal/protocol/learning.hpp"

namespace mtal {

struct MetricRow {
  std::uint32_t round = 0;
  std::string domain;  // domain index or "all"
  std::string split;   // "train" or "test"
  std::string metric;  // "rmse", "map" or "loss"
  double value = 0.0;
  std::uint64_t seed = 0;
};

/// Ranking candidates of one domain keyed by dataset user and item ids. With
/// a dense universe the candidates are the train cells labelled 0 and
/// relevance comes from the test cells; otherwise the candidates are the test
/// cells themselves.
std::vector<RankedCell> ranking_cells(const DomainView& view, const DomainScores& scores);

/// Per-domain and pooled ("all") rows: overarching loss on train, RMSE
/// (explicit) or MAP (implicit) on test.
std::vector<MetricRow> evaluate(const std::vector<DomainView>& views, const std::vector<DomainScores>& scores,
                                std::uint32_t round, std::uint64_t seed);

/// F of every domain as recorded after `round`.
std::vector<DomainScores> scores_at(const LearningResult& result, std::uint32_t round);

}  // namespace mtal
