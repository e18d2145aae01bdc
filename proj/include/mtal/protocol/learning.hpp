#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "mtal/nn/quasi_newton.hpp"
#include "mtal/privacy.hpp"
#include "mtal/protocol/domain.hpp"
#include "mtal/transport/bus.hpp"

namespace mtal {

enum class EtaMode { kConstant, kOptimized };
EtaMode parse_eta_mode(std::string_view name);
std::string_view to_string(EtaMode mode);

struct LearningConfig {
  std::uint32_t rounds = 10;
  EtaMode eta_mode = EtaMode::kConstant;
  double eta = 0.3;   // constant step
  double eta0 = 0.1;  // search start when optimized
  bool optimize_weights = false;
  nn::QuasiNewtonOptions qn;
  PrivacyConfig privacy;
  std::uint64_t seed = 0;
  std::chrono::milliseconds timeout{std::chrono::hours(1)};
  /// Concurrent local fits; 0 reads MTAL_THREADS, then the hardware count.
  unsigned fit_slots = 0;
};

struct RoundRecord {
  std::uint32_t round = 0;
  std::shared_ptr<const LocalModel> model;
  Eigen::VectorXd w;
  double eta = 0.0;
};

/// Everything one domain keeps to predict after the learning stage.
struct EnsemblePredictor {
  std::uint32_t domain = 0;
  Eigen::VectorXd base;
  std::vector<char> cold;       // rows no model was trained on; they keep the base prediction
  std::vector<char> cold_cols;  // own columns without a training cell; same treatment
  std::vector<RoundRecord> rounds;
};

/// F on both supports after a round (round 0 is the base model).
struct RoundSnapshot {
  std::uint32_t round = 0;
  Eigen::VectorXd f_train, f_test;
  double eta = 0.0;
  Eigen::VectorXd w;
};

struct LearningResult {
  std::vector<EnsemblePredictor> ensembles;
  std::vector<std::vector<RoundSnapshot>> history;  // [domain][round]
};

/// Runs the assistance rounds with one worker per domain, all talking only
/// through `bus`. Updates every view's F in place. The returned models keep
/// pointers to the views. Throws the first worker failure with its round.
LearningResult run_learning(std::vector<DomainView>& views, const AlignmentMap& map, const GlobalIndex& index,
                            Bus& bus, const ModelFactory& factory, const LearningConfig& config);

struct DomainScores {
  Eigen::VectorXd train, test;
};

/// Prediction stage: every domain evaluates its T models once, ships all T
/// outputs to each peer in one multi-plane shard and replays the ensemble
/// from its base model. Reproduces the learning-stage F bit for bit.
std::vector<DomainScores> predict(const std::vector<EnsemblePredictor>& ensembles,
                                  const std::vector<DomainView>& views, const AlignmentMap& map,
                                  const GlobalIndex& index, Bus& bus, std::chrono::milliseconds timeout);

/// Header "MTALEN2", u64 domain, u64 T, u64 K, base, cold rows, cold columns, then per
/// round u64 round, f64 eta, K x f64 w and the model.
void write_ensemble(std::ostream& out, const EnsemblePredictor& ensemble);
EnsemblePredictor read_ensemble(std::istream& in, const DomainView& view);

/// `requested` if nonzero, else MTAL_THREADS, else the hardware thread count.
unsigned resolve_fit_slots(unsigned requested);

}  // namespace mtal
