#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include "mtal/align.hpp"
#include "mtal/nn/train.hpp"
#include "mtal/objectives.hpp"

namespace mtal {

/// One organization's private state, in the oriented frame (rows = aligned
/// entities, columns = the domain's own entities).
struct DomainView {
  std::uint32_t id = 0;
  FeedbackKind kind = FeedbackKind::kExplicit;
  AlignmentMode mode = AlignmentMode::kUserAligned;
  /// Implicit only: every cell of the local universe is a target (unobserved
  /// = 0) and evaluation ranks over that universe.
  bool dense_universe = false;

  RowSparse input;  // local model input rows
  RowSparse train;  // support of F and its targets
  RowSparse test;   // held-out cells and their truth
  std::vector<std::uint32_t> row_ids, col_ids;  // dataset ids
  nn::RowSide side;
  Index col_offset = 0;  // first global column owned by this domain

  // Ensemble prediction on the train and test supports.
  Eigen::VectorXd base;
  Eigen::VectorXd f_train, f_test;

  Index rows() const { return train.rows(); }
  Index cols() const { return train.cols(); }
};

/// Explicit: per-column mean of the stored ratings, the global mean for empty
/// columns. Implicit: per-column count of positive cells over the row count.
Eigen::VectorXd base_model(const RowSparse& train, FeedbackKind kind);

/// Base prediction broadcast over the stored cells of `pattern`.
Eigen::VectorXd broadcast_base(const Eigen::VectorXd& base, const RowSparse& pattern);

struct ViewOptions {
  FeedbackKind kind = FeedbackKind::kExplicit;
  bool dense_universe = false;
  bool side_info = false;
};

/// Builds the view from the train and test slices of one domain and resets F
/// to the base model.
DomainView make_view(const OrientedDomain& train, const OrientedDomain& test, AlignmentMode mode,
                     const ViewOptions& options, Index col_offset);

/// A domain's learner for one assistance round.
class LocalModel {
 public:
  virtual ~LocalModel() = default;
  /// Fits the pseudo-targets (rows x global width).
  virtual void fit(const RowSparse& pseudo_targets, std::uint64_t seed) = 0;
  /// Outputs for every input row over all global columns.
  virtual Eigen::MatrixXd predict() const = 0;
  virtual void write(std::ostream& out) const;
};

using ModelFactory = std::function<std::unique_ptr<LocalModel>(const DomainView& view, Index width)>;

struct AaeModelConfig {
  Index hidden0 = 256;
  Index hidden1 = 128;
  double dropout = 0.5;
  nn::FitOptions fit;
};

/// Assisted autoencoder: input width = the domain's column count, output
/// width = the global width. Weights are rounded to f32 after fitting so the
/// checkpointed model reproduces the same outputs.
class AaeModel final : public LocalModel {
 public:
  AaeModel(const DomainView& view, Index width, AaeModelConfig config);
  AaeModel(const DomainView& view, nn::Params params);

  void fit(const RowSparse& pseudo_targets, std::uint64_t seed) override;
  Eigen::MatrixXd predict() const override;
  void write(std::ostream& out) const override;

  const nn::Params& params() const { return params_; }
  const nn::FitReport& report() const { return report_; }

 private:
  const DomainView* view_;
  AaeModelConfig config_;
  nn::Params params_;
  nn::FitReport report_;
};

ModelFactory aae_factory(AaeModelConfig config);

}  // namespace mtal
