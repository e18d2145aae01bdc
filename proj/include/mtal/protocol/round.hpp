#pragma once

#include <cstdint>
#include <vector>

#include "mtal/nn/quasi_newton.hpp"
#include "mtal/protocol/domain.hpp"
#include "mtal/transport/shard.hpp"

namespace mtal {

/// Pseudo-residuals of the current F on the train support.
Eigen::VectorXd round_residuals(const DomainView& view);

/// Residuals on the rows `view` shares with a peer, keyed by (aligned entity
/// id, global column). `shared` is pair(view.id, peer).
Shard residual_shard(const DomainView& view, const Eigen::VectorXd& residual, const SharedEntities& shared,
                     std::uint32_t peer, std::uint32_t round);

/// rows x width matrix holding the own residuals plus every received shard,
/// each placed in the sender's column block. Throws ProtocolError on unknown
/// rows, columns outside the sender's block or duplicate cells.
RowSparse assemble_pseudo_targets(const DomainView& view, const Eigen::VectorXd& own_residual,
                                  const std::vector<Shard>& received, const AlignmentMap& map,
                                  const GlobalIndex& index);

/// 1 for rows (columns) without any stored cell.
std::vector<char> empty_rows(const RowSparse& m);
std::vector<char> empty_cols(const RowSparse& m);

/// Dense block of a model output on the rows shared with `peer`, restricted
/// to the peer's global columns.
Shard prediction_shard(const DomainView& view, const Eigen::MatrixXd& output, const SharedEntities& shared,
                       const GlobalIndex& index, std::uint32_t peer, std::uint32_t round);

/// Appends another output as the next plane of a prediction shard.
void append_plane(Shard& shard, const DomainView& view, const Eigen::MatrixXd& output,
                  const SharedEntities& shared, const GlobalIndex& index);

/// Per-cell predictions of every domain's model on one domain's cells; column
/// j holds model j, zero where j has no prediction.
struct AssistedPredictions {
  Eigen::MatrixXd train;  // train cells x K
  Eigen::MatrixXd test;   // test cells x K
};

AssistedPredictions empty_predictions(const DomainView& view, std::size_t domains);

/// Copies the own model output at the own cells into column view.id.
void scatter_output(const DomainView& view, const Eigen::MatrixXd& output, AssistedPredictions& out);

/// Copies one plane of a received prediction shard into column shard.sender.
/// `shared` is pair(view.id, shard.sender).
void scatter_shard(const DomainView& view, const Shard& shard, std::size_t plane, const SharedEntities& shared,
                   AssistedPredictions& out);

/// Per-cell sum_j w_j y_j, accumulated in column order.
Eigen::VectorXd combine(const Eigen::MatrixXd& predictions, const Eigen::VectorXd& w);

/// f += eta * step, cell by cell.
void apply_step(Eigen::VectorXd& f, double eta, const Eigen::VectorXd& step);

/// Zeroes the cells of `pattern` lying in a row flagged by `cold_rows` or a
/// column flagged by `cold_cols`. Empty flag vectors flag nothing.
void zero_cold(Eigen::VectorXd& values, const RowSparse& pattern, const std::vector<char>& cold_rows,
               const std::vector<char>& cold_cols);

/// Softmax-parameterized weights minimizing 0.5 mean (Y w - r)^2, starting
/// from uniform.
Eigen::VectorXd optimize_assistance_weights(const Eigen::MatrixXd& predictions, const Eigen::VectorXd& residual,
                                            const nn::QuasiNewtonOptions& options = {});

/// Step along `direction` minimizing the overarching loss of f + eta d from
/// eta0. Returns 0 when the minimizer is not a positive step that beats
/// eta = 0, or when the search fails.
double optimize_learning_rate(const Eigen::VectorXd& f, const Eigen::VectorXd& direction,
                              const Eigen::VectorXd& target, FeedbackKind kind, double eta0,
                              const nn::QuasiNewtonOptions& options = {});

}  // namespace mtal
