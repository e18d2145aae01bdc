#include "mtal/protocol/learning.hpp"

#include <cstdlib>
#include <exception>
#include <istream>
#include <mutex>
#include <ostream>
#include <semaphore>
#include <thread>

#include "mtal/binary_io.hpp"
#include "mtal/nn/checkpoint.hpp"
#include "mtal/protocol/round.hpp"

namespace mtal {

EtaMode parse_eta_mode(std::string_view name) {
  if (name == "constant") return EtaMode::kConstant;
  if (name == "optimized") return EtaMode::kOptimized;
  throw ConfigError("unknown eta mode '" + std::string(name) + "' (expected constant or optimized)");
}

std::string_view to_string(EtaMode mode) { return mode == EtaMode::kConstant ? "constant" : "optimized"; }

unsigned resolve_fit_slots(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MTAL_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
    logger()->warn("ignoring MTAL_THREADS={}", env);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

std::vector<std::uint32_t> peers_of(std::uint32_t k, std::size_t domains) {
  std::vector<std::uint32_t> peers;
  for (std::uint32_t j = 0; j < domains; ++j) {
    if (j != k) peers.push_back(j);
  }
  return peers;
}

/// Collects the first failure among workers; later aborts are echoes of it.
class FailureSlot {
 public:
  void record(std::uint32_t domain, std::uint32_t round, std::exception_ptr error, bool echo) {
    std::lock_guard lock(mutex_);
    if (error_ && (echo || !echo_)) return;
    error_ = error;
    domain_ = domain;
    round_ = round;
    echo_ = echo;
  }

  void rethrow(const char* stage) const {
    if (!error_) return;
    try {
      std::rethrow_exception(error_);
    } catch (const std::exception& e) {
      throw AbortError(std::string(stage) + " aborted: domain " + std::to_string(domain_) + " failed in round " +
                           std::to_string(round_) + ": " + e.what(),
                       round_);
    }
  }

 private:
  mutable std::mutex mutex_;
  std::exception_ptr error_;
  std::uint32_t domain_ = 0, round_ = 0;
  bool echo_ = false;
};

template <class Body>
void run_workers(std::size_t domains, Bus& bus, const char* stage, Body body) {
  FailureSlot failure;
  std::vector<std::thread> workers;
  workers.reserve(domains);
  for (std::uint32_t k = 0; k < domains; ++k) {
    workers.emplace_back([&, k] {
      std::uint32_t round = 0;
      try {
        body(k, round);
      } catch (const AbortError& e) {
        failure.record(k, e.round(), std::current_exception(), true);
      } catch (const std::exception& e) {
        failure.record(k, round, std::current_exception(), false);
        bus.abort(k, round, e.what());
      }
    });
  }
  for (auto& w : workers) w.join();
  failure.rethrow(stage);
}

void check_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw Error(std::string("non-finite ") + what);
}

}  // namespace

LearningResult run_learning(std::vector<DomainView>& views, const AlignmentMap& map, const GlobalIndex& index,
                            Bus& bus, const ModelFactory& factory, const LearningConfig& config) {
  const std::size_t K = views.size();
  if (K == 0) throw ConfigError("no domains to train");
  if (map.num_domains() != K || index.num_domains() != K || bus.num_endpoints() != K) {
    throw DimensionError("run_learning: domain count differs between views, alignment, index and bus");
  }
  for (std::uint32_t k = 0; k < K; ++k) {
    if (views[k].id != k || views[k].col_offset != index.offset(k) || views[k].cols() != index.columns_of(k)) {
      throw DimensionError("run_learning: view " + std::to_string(k) + " does not match the global index");
    }
  }
  config.privacy.validate();
  const unsigned slots = resolve_fit_slots(config.fit_slots);
  std::counting_semaphore<> fit_gate(static_cast<std::ptrdiff_t>(slots));
  logger()->info("learning: {} domains, {} rounds, {} fit slot(s)", K, config.rounds, slots);

  LearningResult result;
  result.ensembles.resize(K);
  result.history.resize(K);

  run_workers(K, bus, "learning", [&](std::uint32_t k, std::uint32_t& round) {
    auto& v = views[k];
    auto& ens = result.ensembles[k];
    auto& history = result.history[k];
    const auto peers = peers_of(k, K);
    ens.domain = k;
    ens.base = v.base;
    history.push_back({0, v.f_train, v.f_test, 0.0, Eigen::VectorXd()});

    for (round = 1; round <= config.rounds; ++round) {
      const Eigen::VectorXd residual = round_residuals(v);
      check_finite(residual, "residual");
      std::vector<Shard> outgoing;
      for (auto l : peers) {
        outgoing.push_back(apply_privacy(residual_shard(v, residual, map.pair(k, l), l, round), config.privacy));
      }
      bus.broadcast(outgoing);
      const auto received = bus.collect(k, round, MessageKind::kResidual, peers, config.timeout);
      const RowSparse targets = assemble_pseudo_targets(v, residual, received, map, index);
      if (round == 1) {
        ens.cold = empty_rows(targets);
        ens.cold_cols = empty_cols(v.train);
      }

      std::shared_ptr<LocalModel> model = factory(v, index.width);
      Eigen::MatrixXd output;
      {
        fit_gate.acquire();
        struct Release {
          std::counting_semaphore<>& gate;
          ~Release() { gate.release(); }
        } release{fit_gate};
        model->fit(targets, derive_seed(config.seed, k, round));
        output = model->predict();
      }
      if (!output.allFinite()) throw Error("non-finite local model output");

      outgoing.clear();
      for (auto l : peers) outgoing.push_back(prediction_shard(v, output, map.pair(k, l), index, l, round));
      bus.broadcast(outgoing);
      const auto predictions = bus.collect(k, round, MessageKind::kPrediction, peers, config.timeout);

      auto assisted = empty_predictions(v, K);
      scatter_output(v, output, assisted);
      for (const auto& s : predictions) scatter_shard(v, s, 0, map.pair(k, s.sender), assisted);

      const Eigen::VectorXd w = config.optimize_weights
                                    ? optimize_assistance_weights(assisted.train, residual, config.qn)
                                    : Eigen::VectorXd::Constant(static_cast<Index>(K), 1.0 / static_cast<double>(K));
      Eigen::VectorXd step_train = combine(assisted.train, w);
      Eigen::VectorXd step_test = combine(assisted.test, w);
      zero_cold(step_train, v.train, ens.cold, ens.cold_cols);
      zero_cold(step_test, v.test, ens.cold, ens.cold_cols);
      const double eta = config.eta_mode == EtaMode::kOptimized
                             ? optimize_learning_rate(v.f_train, step_train, values_of(v.train), v.kind,
                                                      config.eta0, config.qn)
                             : config.eta;
      apply_step(v.f_train, eta, step_train);
      apply_step(v.f_test, eta, step_test);
      check_finite(v.f_train, "ensemble prediction");

      ens.rounds.push_back({round, std::move(model), w, eta});
      history.push_back({round, v.f_train, v.f_test, eta, w});
      if (v.f_train.size() > 0) {
        logger()->debug("domain {} round {}: eta {:.4g}, train loss {:.6g}", k, round, eta,
                        overarching_loss(v.f_train, values_of(v.train), v.kind));
      }
    }
  });
  return result;
}

std::vector<DomainScores> predict(const std::vector<EnsemblePredictor>& ensembles,
                                  const std::vector<DomainView>& views, const AlignmentMap& map,
                                  const GlobalIndex& index, Bus& bus, std::chrono::milliseconds timeout) {
  const std::size_t K = views.size();
  if (ensembles.size() != K || bus.num_endpoints() != K) throw DimensionError("predict: domain count mismatch");
  std::size_t T = ensembles.empty() ? 0 : ensembles[0].rounds.size();
  for (const auto& e : ensembles) {
    if (e.rounds.size() != T) throw DimensionError("predict: ensembles have different round counts");
  }
  std::vector<DomainScores> scores(K);

  run_workers(K, bus, "prediction", [&](std::uint32_t k, std::uint32_t&) {
    const auto& v = views[k];
    const auto& ens = ensembles[k];
    const auto peers = peers_of(k, K);
    std::vector<AssistedPredictions> own(T);
    std::vector<Shard> outgoing(peers.size());
    for (std::size_t t = 0; t < T; ++t) {
      const Eigen::MatrixXd output = ens.rounds[t].model->predict();
      own[t] = empty_predictions(v, K);
      scatter_output(v, output, own[t]);
      for (std::size_t i = 0; i < peers.size(); ++i) {
        if (t == 0) {
          outgoing[i] = prediction_shard(v, output, map.pair(k, peers[i]), index, peers[i], 0);
        } else {
          append_plane(outgoing[i], v, output, map.pair(k, peers[i]), index);
        }
      }
    }
    if (T > 0) bus.broadcast(outgoing);
    const auto received = T > 0 ? bus.collect(k, 0, MessageKind::kPrediction, peers, timeout) : std::vector<Shard>{};
    for (const auto& s : received) {
      if (s.planes != T) throw ProtocolError("protocol error: prediction shard has the wrong number of planes");
    }

    auto& out = scores[k];
    out.train = broadcast_base(ens.base, v.train);
    out.test = broadcast_base(ens.base, v.test);
    for (std::size_t t = 0; t < T; ++t) {
      auto& assisted = own[t];
      for (const auto& s : received) scatter_shard(v, s, t, map.pair(k, s.sender), assisted);
      const auto& rec = ens.rounds[t];
      Eigen::VectorXd step_train = combine(assisted.train, rec.w);
      Eigen::VectorXd step_test = combine(assisted.test, rec.w);
      zero_cold(step_train, v.train, ens.cold, ens.cold_cols);
      zero_cold(step_test, v.test, ens.cold, ens.cold_cols);
      apply_step(out.train, rec.eta, step_train);
      apply_step(out.test, rec.eta, step_test);
      assisted = {};
    }
  });
  return scores;
}

namespace {
constexpr char kEnsembleMagic[9] = "MTALEN2";
}

void write_ensemble(std::ostream& out, const EnsemblePredictor& e) {
  io::write_magic(out, kEnsembleMagic);
  io::write<std::uint64_t>(out, e.domain);
  io::write<std::uint64_t>(out, e.rounds.size());
  io::write<std::uint64_t>(out, e.rounds.empty() ? 0 : e.rounds[0].w.size());
  io::write<std::uint64_t>(out, e.base.size());
  for (Index j = 0; j < e.base.size(); ++j) io::write(out, e.base[j]);
  io::write<std::uint64_t>(out, e.cold.size());
  for (char c : e.cold) io::write<std::uint8_t>(out, c ? 1 : 0);
  io::write<std::uint64_t>(out, e.cold_cols.size());
  for (char c : e.cold_cols) io::write<std::uint8_t>(out, c ? 1 : 0);
  for (const auto& r : e.rounds) {
    io::write<std::uint64_t>(out, r.round);
    io::write(out, r.eta);
    for (Index j = 0; j < r.w.size(); ++j) io::write(out, r.w[j]);
    r.model->write(out);
  }
  if (!out) throw Error("failed writing ensemble checkpoint");
}

EnsemblePredictor read_ensemble(std::istream& in, const DomainView& view) {
  io::expect_magic(in, kEnsembleMagic, "ensemble checkpoint");
  EnsemblePredictor e;
  e.domain = static_cast<std::uint32_t>(io::read<std::uint64_t>(in, "domain"));
  if (e.domain != view.id) throw Error("ensemble checkpoint belongs to domain " + std::to_string(e.domain));
  const auto T = io::read<std::uint64_t>(in, "rounds");
  const auto K = io::read<std::uint64_t>(in, "domains");
  const auto n = io::read<std::uint64_t>(in, "base size");
  if (static_cast<Index>(n) != view.cols()) throw DimensionError("ensemble base width differs from the domain");
  e.base.resize(static_cast<Index>(n));
  for (Index j = 0; j < e.base.size(); ++j) e.base[j] = io::read<double>(in, "base");
  const auto m = io::read<std::uint64_t>(in, "cold size");
  if (m != 0 && static_cast<Index>(m) != view.rows()) throw DimensionError("ensemble row count differs");
  e.cold.resize(m);
  for (auto& c : e.cold) c = static_cast<char>(io::read<std::uint8_t>(in, "cold"));
  const auto nc = io::read<std::uint64_t>(in, "cold column count");
  if (nc != 0 && static_cast<Index>(nc) != view.cols()) throw DimensionError("ensemble column count differs");
  e.cold_cols.resize(nc);
  for (auto& c : e.cold_cols) c = static_cast<char>(io::read<std::uint8_t>(in, "cold column"));
  for (std::uint64_t t = 0; t < T; ++t) {
    RoundRecord r;
    r.round = static_cast<std::uint32_t>(io::read<std::uint64_t>(in, "round"));
    r.eta = io::read<double>(in, "eta");
    r.w.resize(static_cast<Index>(K));
    for (Index j = 0; j < r.w.size(); ++j) r.w[j] = io::read<double>(in, "w");
    r.model = std::make_shared<AaeModel>(view, nn::read_params(in));
    e.rounds.push_back(std::move(r));
  }
  return e;
}

}  // namespace mtal
