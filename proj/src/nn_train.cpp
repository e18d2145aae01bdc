#include "mtal/nn/train.hpp"

#include <algorithm>
#include <numeric>

#include "mtal/objectives.hpp"

namespace mtal::nn {
namespace {

constexpr Index kPredictChunk = 256;

// Turns raw outputs into dL/dy (before the 1/N scale) and returns the summed loss.
template <class M>
double loss_and_residual(M& out, const M& target, TargetLoss loss) {
  if (loss == TargetLoss::kSquared) {
    out -= target;
    return 0.5 * out.squaredNorm();
  }
  double total = 0.0;
  for (Index j = 0; j < out.cols(); ++j) {
    for (Index i = 0; i < out.rows(); ++i) {
      const double y = out(i, j), t = target(i, j);
      total += softplus(y) - t * y;
      out(i, j) = sigmoid(y) - t;
    }
  }
  return total;
}

std::vector<Index> iota_rows(Index begin, Index end) {
  std::vector<Index> rows(static_cast<std::size_t>(end - begin));
  std::iota(rows.begin(), rows.end(), begin);
  return rows;
}

}  // namespace

RowSparse select_rows(const RowSparse& m, std::span<const Index> rows) {
  RowSparse out(static_cast<Index>(rows.size()), m.cols());
  Index nnz = 0;
  for (auto r : rows) nnz += m.outerIndexPtr()[r + 1] - m.outerIndexPtr()[r];
  out.resizeNonZeros(nnz);
  auto* outer = out.outerIndexPtr();
  outer[0] = 0;
  Index k = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto begin = m.outerIndexPtr()[rows[i]];
    const auto end = m.outerIndexPtr()[rows[i] + 1];
    std::copy(m.innerIndexPtr() + begin, m.innerIndexPtr() + end, out.innerIndexPtr() + k);
    std::copy(m.valuePtr() + begin, m.valuePtr() + end, out.valuePtr() + k);
    k += end - begin;
    outer[i + 1] = static_cast<int>(k);
  }
  return out;
}

SideBatch<double> select_side(const RowSide& side, std::span<const Index> rows) {
  SideBatch<double> b;
  auto pick = [&](const Eigen::MatrixXd& full) {
    Eigen::MatrixXd s(static_cast<Index>(rows.size()), full.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) s.row(static_cast<Index>(i)) = full.row(rows[i]);
    return s;
  };
  if (side.row) b.row = pick(*side.row);
  if (side.col_sum) b.col_sum = pick(*side.col_sum);
  return b;
}

FitReport fit_pseudo_targets(Params& params, const RowSparse& inputs, const RowSide& side,
                             const RowSparse& targets, const FitOptions& options) {
  if (targets.rows() != inputs.rows()) throw DimensionError("fit: target and input row counts differ");
  if (targets.cols() != params.dec2.out()) throw DimensionError("fit: target width differs from d_out");
  FitReport report;
  if (targets.nonZeros() == 0) {
    logger()->warn("fit: empty target matrix; parameters left unchanged");
    return report;
  }
  if (options.batch_size < 1) throw ConfigError("batch size must be positive");
  const bool dense_targets = targets.nonZeros() == targets.rows() * targets.cols();

  std::mt19937_64 rng(options.seed);
  auto state = AdamState<double>::for_params(params, options.adam);
  auto grads = Params::zeros(params.shape());
  AaeCache<double> cache;
  std::vector<Index> order = iota_rows(0, inputs.rows());

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sse = 0.0;  // summed loss
    Index cells = 0;
    for (Index start = 0; start < inputs.rows(); start += options.batch_size) {
      const auto rows = std::span<const Index>(order).subspan(
          static_cast<std::size_t>(start),
          static_cast<std::size_t>(std::min(options.batch_size, inputs.rows() - start)));
      const RowSparse t = select_rows(targets, rows);
      if (t.nonZeros() == 0) continue;
      forward_hidden(params, select_rows(inputs, rows), select_side(side, rows), true, rng, cache);
      set_zero(grads);
      const double n = static_cast<double>(t.nonZeros());
      if (dense_targets) {
        Eigen::MatrixXd diff = output_dense(params, cache);
        sse += loss_and_residual(diff, Eigen::MatrixXd(Eigen::MatrixXd(t).transpose()), options.loss);
        diff /= n;
        backward_dense(params, cache, diff, grads);
      } else {
        Eigen::VectorXd diff = output_cells(params, cache, t);
        sse += loss_and_residual(diff, Eigen::VectorXd(values_of(t)), options.loss);
        diff /= n;
        backward_cells(params, cache, t, diff, grads);
      }
      cells += t.nonZeros();
      adam_step(state, params, grads);
    }
    const double loss = cells > 0 ? sse / static_cast<double>(cells) : 0.0;
    report.epoch_loss.push_back(loss);
    if (options.on_epoch) options.on_epoch(epoch, loss);
  }
  return report;
}

Eigen::MatrixXd predict_dense(const Params& params, const RowSparse& inputs, const RowSide& side) {
  Eigen::MatrixXd out(inputs.rows(), params.dec2.out());
  AaeCache<double> cache;
  std::mt19937_64 unused(0);
  for (Index start = 0; start < inputs.rows(); start += kPredictChunk) {
    const auto rows = iota_rows(start, std::min(inputs.rows(), start + kPredictChunk));
    forward_hidden(params, select_rows(inputs, rows), select_side(side, rows), false, unused, cache);
    out.middleRows(start, static_cast<Index>(rows.size())) = output_dense(params, cache).transpose();
  }
  return out;
}

Eigen::VectorXd predict_cells(const Params& params, const RowSparse& inputs, const RowSide& side,
                              const RowSparse& pattern) {
  if (pattern.rows() != inputs.rows()) throw DimensionError("predict: pattern and input row counts differ");
  Eigen::VectorXd out(pattern.nonZeros());
  AaeCache<double> cache;
  std::mt19937_64 unused(0);
  for (Index start = 0; start < inputs.rows(); start += kPredictChunk) {
    const auto rows = iota_rows(start, std::min(inputs.rows(), start + kPredictChunk));
    forward_hidden(params, select_rows(inputs, rows), select_side(side, rows), false, unused, cache);
    const RowSparse p = select_rows(pattern, rows);
    out.segment(pattern.outerIndexPtr()[start], p.nonZeros()) = output_cells(params, cache, p);
  }
  return out;
}

void round_to_float(Params& params) {
  zip_tensors([](const char*, auto& t) { t = t.template cast<float>().template cast<double>(); }, params);
  ++params.version;
}

}  // namespace mtal::nn
