#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mtal/nn/aae.hpp"
#include "mtal/nn/adam.hpp"

namespace mtal::nn {

using Params = AaeParams<double>;

/// Side inputs for every input row (rows x d); absent when unused.
struct RowSide {
  std::optional<Eigen::MatrixXd> row;
  std::optional<Eigen::MatrixXd> col_sum;

  bool empty() const { return !row && !col_sum; }
};

/// Squared: 0.5 (y - t)^2. Logistic: softplus(y) - t y on logits.
enum class TargetLoss { kSquared, kLogistic };

struct FitOptions {
  int epochs = 20;
  TargetLoss loss = TargetLoss::kSquared;
  Index batch_size = 100;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::function<void(int epoch, double loss)> on_epoch;
};

struct FitReport {
  std::vector<double> epoch_loss;  // mean local loss over the cells seen in each epoch
};

/// Copies the listed rows into a new row-major matrix.
RowSparse select_rows(const RowSparse& m, std::span<const Index> rows);
SideBatch<double> select_side(const RowSide& side, std::span<const Index> rows);

/// Minimizes the masked loss between the network output and the stored cells
/// of `targets` with Adam over shuffled mini-batches.
FitReport fit_pseudo_targets(Params& params, const RowSparse& inputs, const RowSide& side,
                             const RowSparse& targets, const FitOptions& options);

/// Evaluation-mode outputs, rows x d_out.
Eigen::MatrixXd predict_dense(const Params& params, const RowSparse& inputs, const RowSide& side);

/// Evaluation-mode outputs at the stored cells of `pattern` (rows x d_out),
/// in storage order.
Eigen::VectorXd predict_cells(const Params& params, const RowSparse& inputs, const RowSide& side,
                              const RowSparse& pattern);

/// Rounds every parameter to the nearest 32-bit float.
void round_to_float(Params& params);

}  // namespace mtal::nn
