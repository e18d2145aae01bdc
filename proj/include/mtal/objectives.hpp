#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "mtal/common.hpp"

namespace mtal {

enum class FeedbackKind { kExplicit, kImplicit };

FeedbackKind parse_feedback_kind(std::string_view name);
std::string_view to_string(FeedbackKind kind);

// Losses and residuals act on the stored cells of a MaskedMatrix. Value-vector
// overloads take the stored values of two matrices sharing one pattern.

/// Explicit: mean of 0.5 (pred - target)^2. Implicit: mean binary
/// cross-entropy with `pred` as a logit.
double overarching_loss(const Eigen::Ref<const Eigen::VectorXd>& pred,
                        const Eigen::Ref<const Eigen::VectorXd>& target, FeedbackKind kind);
double overarching_loss(const MaskedMatrix& pred, const MaskedMatrix& target, FeedbackKind kind);

/// Per-cell negative derivative of the per-cell loss (not divided by the
/// number of cells).
Eigen::VectorXd pseudo_residual(const Eigen::Ref<const Eigen::VectorXd>& pred,
                                const Eigen::Ref<const Eigen::VectorXd>& target, FeedbackKind kind);
MaskedMatrix pseudo_residual(const MaskedMatrix& pred, const MaskedMatrix& target, FeedbackKind kind);

struct LossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;  // d loss / d pred, per stored cell
};

/// Mean of 0.5 (pred - target)^2 over the stored cells and its gradient.
LossAndGradient local_loss(const Eigen::Ref<const Eigen::VectorXd>& pred,
                           const Eigen::Ref<const Eigen::VectorXd>& target);

double rmse(const Eigen::Ref<const Eigen::VectorXd>& pred, const Eigen::Ref<const Eigen::VectorXd>& truth);
double rmse(const MaskedMatrix& pred, const MaskedMatrix& truth);

double sigmoid(double x);
/// log(1 + exp(x)) without overflow.
double softplus(double x);

// ---------------------------------------------------------------------------
// Ranking

/// Mean of precision@rank over the relevant positions of a ranked list; 0 when
/// nothing is relevant.
double average_precision(const std::vector<bool>& ranked_relevance);

struct RankedCell {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double score = 0.0;
  bool relevant = false;
};

enum class EmptyUserPolicy {
  kSkip,  // users without a relevant candidate are left out of the mean
  kZero,  // they count with AP = 0
};

/// Groups candidates by user, ranks each group by descending score (ties by
/// ascending item) and averages per-user AP.
double mean_average_precision(std::vector<RankedCell> cells, EmptyUserPolicy policy);

/// Full-ranking MAP. `scores` is users x items. For each user every item that
/// is not a train positive is a candidate; test positives are the relevant
/// ones. Users without test positives are skipped; throws if none has any.
double map_metric(const Eigen::MatrixXd& scores, const RowSparse& train_positives,
                  const RowSparse& test_positives);

}  // namespace mtal
