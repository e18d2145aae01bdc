#include "mtal/protocol/round.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mtal/transport/bus.hpp"

namespace mtal {
namespace {

Index local_row(const SharedEntities& shared, std::uint32_t id, std::uint32_t sender) {
  const auto it = std::lower_bound(shared.ids.begin(), shared.ids.end(), id);
  if (it == shared.ids.end() || *it != id) {
    throw ProtocolError("protocol error: domain " + std::to_string(sender) + " sent entity " + std::to_string(id) +
                        " outside the shared set");
  }
  return shared.rows_a[static_cast<std::size_t>(it - shared.ids.begin())];
}

/// Calls fn(cell index in pattern, shard index) for every cell of pattern row
/// `row` matched by the shard run [begin, end), whose columns are global.
template <class Fn>
void match_run(const RowSparse& pattern, Index row, Index offset, const Shard& s, std::size_t begin,
               std::size_t end, Fn&& fn) {
  const int* cols = pattern.innerIndexPtr();
  Index i = pattern.outerIndexPtr()[row];
  const Index stop = pattern.outerIndexPtr()[row + 1];
  std::size_t q = begin;
  while (i < stop && q < end) {
    const Index g = offset + cols[i];
    if (g < s.cols[q]) {
      ++i;
    } else if (g > s.cols[q]) {
      ++q;
    } else {
      fn(i, q);
      ++i;
      ++q;
    }
  }
}

Eigen::VectorXd softmax(const Eigen::VectorXd& theta) {
  const Eigen::VectorXd e = (theta.array() - theta.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

Eigen::VectorXd round_residuals(const DomainView& view) {
  return pseudo_residual(view.f_train, values_of(view.train), view.kind);
}

Shard residual_shard(const DomainView& view, const Eigen::VectorXd& residual, const SharedEntities& shared,
                     std::uint32_t peer, std::uint32_t round) {
  if (residual.size() != view.train.nonZeros()) throw DimensionError("residual_shard: residual size mismatch");
  Shard s;
  s.kind = MessageKind::kResidual;
  s.round = round;
  s.sender = view.id;
  s.receiver = peer;
  const auto* outer = view.train.outerIndexPtr();
  const int* cols = view.train.innerIndexPtr();
  for (std::size_t p = 0; p < shared.size(); ++p) {
    const auto r = shared.rows_a[p];
    for (Index i = outer[r]; i < outer[r + 1]; ++i) {
      s.rows.push_back(shared.ids[p]);
      s.cols.push_back(static_cast<std::uint32_t>(view.col_offset + cols[i]));
      s.values.push_back(static_cast<float>(residual[i]));
    }
  }
  return s;
}

RowSparse assemble_pseudo_targets(const DomainView& view, const Eigen::VectorXd& own_residual,
                                  const std::vector<Shard>& received, const AlignmentMap& map,
                                  const GlobalIndex& index) {
  if (own_residual.size() != view.train.nonZeros()) throw DimensionError("pseudo-targets: residual size mismatch");
  std::vector<Eigen::Triplet<double, Index>> cells;
  std::size_t total = static_cast<std::size_t>(own_residual.size());
  for (const auto& s : received) total += s.cells();
  cells.reserve(total);

  const auto* outer = view.train.outerIndexPtr();
  const int* cols = view.train.innerIndexPtr();
  for (Index r = 0; r < view.rows(); ++r) {
    for (Index i = outer[r]; i < outer[r + 1]; ++i) cells.emplace_back(r, view.col_offset + cols[i], own_residual[i]);
  }
  for (const auto& s : received) {
    if (s.kind != MessageKind::kResidual || s.receiver != view.id || s.sender == view.id ||
        s.sender >= index.num_domains()) {
      throw ProtocolError("protocol error: misaddressed residual shard from domain " + std::to_string(s.sender));
    }
    const auto& shared = map.pair(view.id, s.sender);
    const Index lo = index.offset(s.sender), hi = index.offset(s.sender + 1);
    for (std::size_t q = 0; q < s.cells(); ++q) {
      if (s.cols[q] < lo || s.cols[q] >= hi) {
        throw ProtocolError("protocol error: domain " + std::to_string(s.sender) + " sent column " +
                            std::to_string(s.cols[q]) + " outside its block");
      }
      cells.emplace_back(local_row(shared, s.rows[q], s.sender), s.cols[q], static_cast<double>(s.values[q]));
    }
  }
  std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
    return a.row() != b.row() ? a.row() < b.row() : a.col() < b.col();
  });
  for (std::size_t i = 1; i < cells.size(); ++i) {
    if (cells[i].row() == cells[i - 1].row() && cells[i].col() == cells[i - 1].col()) {
      throw ProtocolError("protocol error: duplicate pseudo-target cell (" + std::to_string(cells[i].row()) + ", " +
                          std::to_string(cells[i].col()) + ")");
    }
  }
  RowSparse targets(view.rows(), index.width);
  targets.setFromTriplets(cells.begin(), cells.end());
  return targets;
}

std::vector<char> empty_cols(const RowSparse& m) {
  std::vector<char> empty(static_cast<std::size_t>(m.cols()), 1);
  for (Index r = 0; r < m.outerSize(); ++r) {
    for (RowSparse::InnerIterator it(m, r); it; ++it) empty[it.col()] = 0;
  }
  return empty;
}

std::vector<char> empty_rows(const RowSparse& m) {
  std::vector<char> empty(static_cast<std::size_t>(m.rows()));
  for (Index r = 0; r < m.rows(); ++r) empty[r] = m.outerIndexPtr()[r] == m.outerIndexPtr()[r + 1];
  return empty;
}

Shard prediction_shard(const DomainView& view, const Eigen::MatrixXd& output, const SharedEntities& shared,
                       const GlobalIndex& index, std::uint32_t peer, std::uint32_t round) {
  const Index lo = index.offset(peer), n = index.columns_of(peer);
  Shard s;
  s.kind = MessageKind::kPrediction;
  s.round = round;
  s.sender = view.id;
  s.receiver = peer;
  s.planes = 0;
  const std::size_t cells = shared.size() * static_cast<std::size_t>(n);
  s.rows.reserve(cells);
  s.cols.reserve(cells);
  for (std::size_t p = 0; p < shared.size(); ++p) {
    for (Index c = 0; c < n; ++c) {
      s.rows.push_back(shared.ids[p]);
      s.cols.push_back(static_cast<std::uint32_t>(lo + c));
    }
  }
  append_plane(s, view, output, shared, index);
  return s;
}

void append_plane(Shard& shard, const DomainView& view, const Eigen::MatrixXd& output,
                  const SharedEntities& shared, const GlobalIndex& index) {
  if (output.rows() != view.rows() || output.cols() != index.width) {
    throw DimensionError("prediction shard: output is not rows x width");
  }
  const Index lo = index.offset(shard.receiver), n = index.columns_of(shard.receiver);
  if (shard.cells() != shared.size() * static_cast<std::size_t>(n)) {
    throw DimensionError("prediction shard: cell layout differs from the shared block");
  }
  shard.values.reserve(shard.values.size() + shard.cells());
  for (std::size_t p = 0; p < shared.size(); ++p) {
    const auto r = shared.rows_a[p];
    for (Index c = 0; c < n; ++c) shard.values.push_back(static_cast<float>(output(r, lo + c)));
  }
  ++shard.planes;
}

AssistedPredictions empty_predictions(const DomainView& view, std::size_t domains) {
  const auto k = static_cast<Index>(domains);
  return {Eigen::MatrixXd::Zero(view.train.nonZeros(), k), Eigen::MatrixXd::Zero(view.test.nonZeros(), k)};
}

void scatter_output(const DomainView& view, const Eigen::MatrixXd& output, AssistedPredictions& out) {
  if (output.rows() != view.rows()) throw DimensionError("scatter_output: output row count mismatch");
  auto fill = [&](const RowSparse& pattern, Eigen::MatrixXd& dst) {
    const int* cols = pattern.innerIndexPtr();
    for (Index r = 0; r < pattern.rows(); ++r) {
      for (Index i = pattern.outerIndexPtr()[r]; i < pattern.outerIndexPtr()[r + 1]; ++i) {
        dst(i, view.id) = output(r, view.col_offset + cols[i]);
      }
    }
  };
  fill(view.train, out.train);
  fill(view.test, out.test);
}

void scatter_shard(const DomainView& view, const Shard& shard, std::size_t plane, const SharedEntities& shared,
                   AssistedPredictions& out) {
  if (shard.kind != MessageKind::kPrediction || shard.receiver != view.id || shard.sender == view.id ||
      shard.sender >= static_cast<std::uint32_t>(out.train.cols()) || plane >= shard.planes) {
    throw ProtocolError("protocol error: misaddressed prediction shard from domain " + std::to_string(shard.sender));
  }
  const auto values = shard.plane(plane);
  const Index lo = view.col_offset, hi = view.col_offset + view.cols();
  std::size_t begin = 0;
  while (begin < shard.cells()) {
    std::size_t end = begin;
    while (end < shard.cells() && shard.rows[end] == shard.rows[begin]) {
      if (shard.cols[end] < lo || shard.cols[end] >= hi) {
        throw ProtocolError("protocol error: prediction for column " + std::to_string(shard.cols[end]) +
                            " outside the receiver's block");
      }
      ++end;
    }
    const Index r = local_row(shared, shard.rows[begin], shard.sender);
    match_run(view.train, r, lo, shard, begin, end,
              [&](Index i, std::size_t q) { out.train(i, shard.sender) = values[q]; });
    match_run(view.test, r, lo, shard, begin, end,
              [&](Index i, std::size_t q) { out.test(i, shard.sender) = values[q]; });
    begin = end;
  }
}

Eigen::VectorXd combine(const Eigen::MatrixXd& predictions, const Eigen::VectorXd& w) {
  if (predictions.cols() != w.size()) throw DimensionError("combine: weight count differs from model count");
  Eigen::VectorXd out(predictions.rows());
  for (Index i = 0; i < predictions.rows(); ++i) {
    double acc = 0.0;
    for (Index j = 0; j < w.size(); ++j) acc += w[j] * predictions(i, j);
    out[i] = acc;
  }
  return out;
}

void apply_step(Eigen::VectorXd& f, double eta, const Eigen::VectorXd& step) {
  if (f.size() != step.size()) throw DimensionError("apply_step: size mismatch");
  for (Index i = 0; i < f.size(); ++i) f[i] += eta * step[i];
}

void zero_cold(Eigen::VectorXd& values, const RowSparse& pattern, const std::vector<char>& cold_rows,
               const std::vector<char>& cold_cols) {
  if (cold_rows.empty() && cold_cols.empty()) return;
  for (Index r = 0; r < pattern.rows(); ++r) {
    const bool row = !cold_rows.empty() && cold_rows[r];
    for (Index i = pattern.outerIndexPtr()[r]; i < pattern.outerIndexPtr()[r + 1]; ++i) {
      if (row || (!cold_cols.empty() && cold_cols[pattern.innerIndexPtr()[i]])) values[i] = 0.0;
    }
  }
}

Eigen::VectorXd optimize_assistance_weights(const Eigen::MatrixXd& predictions, const Eigen::VectorXd& residual,
                                            const nn::QuasiNewtonOptions& options) {
  const Index k = predictions.cols();
  if (residual.size() != predictions.rows()) throw DimensionError("weights: residual size mismatch");
  if (k == 1) return Eigen::VectorXd::Ones(1);
  if (predictions.rows() == 0) return Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  const double n = static_cast<double>(predictions.rows());
  const Eigen::MatrixXd gram = predictions.transpose() * predictions / n;
  const Eigen::VectorXd cross = predictions.transpose() * residual / n;
  const double rr = residual.squaredNorm() / n;

  nn::Objective objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
    const Eigen::VectorXd w = softmax(theta);
    const Eigen::VectorXd gw = gram * w - cross;
    if (grad) *grad = w.cwiseProduct(gw.array().matrix() - Eigen::VectorXd::Constant(k, w.dot(gw)));
    return 0.5 * (w.dot(gram * w) - 2.0 * cross.dot(w) + rr);
  };
  const auto result = nn::quasi_newton_minimize(objective, Eigen::VectorXd::Zero(k), options);
  return softmax(result.x);
}

double optimize_learning_rate(const Eigen::VectorXd& f, const Eigen::VectorXd& direction,
                              const Eigen::VectorXd& target, FeedbackKind kind, double eta0,
                              const nn::QuasiNewtonOptions& options) {
  if (f.size() != direction.size() || f.size() != target.size()) {
    throw DimensionError("learning rate: vector sizes differ");
  }
  if (f.size() == 0) return 0.0;
  const double n = static_cast<double>(f.size());
  auto loss_at = [&](double eta) {
    return overarching_loss(Eigen::VectorXd(f + eta * direction), target, kind);
  };
  nn::Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const Eigen::VectorXd p = f + x[0] * direction;
    if (grad) {
      const Eigen::VectorXd r = pseudo_residual(p, target, kind);
      *grad = Eigen::VectorXd::Constant(1, -r.dot(direction) / n);
    }
    return overarching_loss(p, target, kind);
  };
  try {
    const auto result = nn::quasi_newton_minimize(objective, Eigen::VectorXd::Constant(1, eta0), options);
    const double eta = result.x[0];
    if (!std::isfinite(eta) || !std::isfinite(result.value)) {
      logger()->warn("learning rate search diverged; using eta = 0");
      return 0.0;
    }
    return eta <= 0.0 || loss_at(0.0) <= result.value ? 0.0 : eta;
  } catch (const Error& e) {
    logger()->warn("learning rate search failed ({}); using eta = 0", e.what());
    return 0.0;
  }
}

}  // namespace mtal
