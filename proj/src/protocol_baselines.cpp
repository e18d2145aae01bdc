#include "mtal/protocol/baselines.hpp"

#include <exception>
#include <semaphore>
#include <thread>

namespace mtal {

std::vector<DomainScores> train_alone(const DomainView& view, const AaeModelConfig& config,
                                      std::uint32_t checkpoints, std::uint64_t seed) {
  nn::AaeShape shape;
  shape.d_in = view.cols();
  shape.d_out = view.cols();
  shape.hidden0 = config.hidden0;
  shape.hidden1 = config.hidden1;
  shape.side_row = view.side.row ? view.side.row->cols() : 0;
  shape.side_col = view.side.col_sum ? view.side.col_sum->cols() : 0;
  auto params = nn::aae_init<double>(shape, config.dropout, derive_seed(seed, 0));

  std::vector<DomainScores> out;
  auto options = config.fit;
  const int every = std::max(1, options.epochs);
  options.epochs = every * static_cast<int>(checkpoints);
  options.seed = derive_seed(seed, 1);
  options.loss = view.kind == FeedbackKind::kExplicit ? nn::TargetLoss::kSquared : nn::TargetLoss::kLogistic;
  options.on_epoch = [&](int epoch, double) {
    if ((epoch + 1) % every != 0) return;
    out.push_back({nn::predict_cells(params, view.input, view.side, view.train),
                   nn::predict_cells(params, view.input, view.side, view.test)});
  };
  nn::fit_pseudo_targets(params, view.input, view.side, view.train, options);
  // an empty target matrix skips training; report the untrained network
  while (out.size() < checkpoints) {
    out.push_back({nn::predict_cells(params, view.input, view.side, view.train),
                   nn::predict_cells(params, view.input, view.side, view.test)});
  }
  return out;
}

std::vector<std::vector<DomainScores>> run_alone(const std::vector<DomainView>& views, const AaeModelConfig& config,
                                                 std::uint32_t checkpoints, std::uint64_t seed,
                                                 unsigned fit_slots) {
  const std::size_t K = views.size();
  std::vector<std::vector<DomainScores>> per_domain(K);
  std::vector<std::exception_ptr> errors(K);
  std::counting_semaphore<> gate(static_cast<std::ptrdiff_t>(resolve_fit_slots(fit_slots)));
  std::vector<std::thread> workers;
  for (std::size_t k = 0; k < K; ++k) {
    workers.emplace_back([&, k] {
      gate.acquire();
      try {
        per_domain[k] = train_alone(views[k], config, checkpoints, derive_seed(seed, k));
      } catch (...) {
        errors[k] = std::current_exception();
      }
      gate.release();
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<std::vector<DomainScores>> out(checkpoints, std::vector<DomainScores>(K));
  for (std::size_t k = 0; k < K; ++k) {
    for (std::uint32_t c = 0; c < checkpoints; ++c) out[c][k] = std::move(per_domain[k][c]);
  }
  return out;
}

}  // namespace mtal
