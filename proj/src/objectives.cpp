#include "mtal/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace mtal {
namespace {

void require_same_size(Index a, Index b, const char* what) {
  if (a != b) throw DimensionError(std::string(what) + ": prediction and target sizes differ");
}

void require_nonempty(Index n, const char* what) {
  if (n == 0) throw Error(std::string(what) + ": empty mask");
}

void require_same_pattern(const MaskedMatrix& a, const MaskedMatrix& b, const char* what) {
  if (!same_pattern(a, b)) throw DimensionError(std::string(what) + ": masks differ");
}

}  // namespace

FeedbackKind parse_feedback_kind(std::string_view name) {
  if (name == "explicit") return FeedbackKind::kExplicit;
  if (name == "implicit") return FeedbackKind::kImplicit;
  throw ConfigError("unknown feedback kind '" + std::string(name) + "'");
}

std::string_view to_string(FeedbackKind kind) {
  return kind == FeedbackKind::kExplicit ? "explicit" : "implicit";
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double overarching_loss(const Eigen::Ref<const Eigen::VectorXd>& pred,
                        const Eigen::Ref<const Eigen::VectorXd>& target, FeedbackKind kind) {
  require_same_size(pred.size(), target.size(), "overarching_loss");
  require_nonempty(pred.size(), "overarching_loss");
  double sum = 0.0;
  if (kind == FeedbackKind::kExplicit) {
    sum = 0.5 * (pred - target).squaredNorm();
  } else {
    for (Index i = 0; i < pred.size(); ++i) sum += softplus(pred[i]) - target[i] * pred[i];
  }
  return sum / static_cast<double>(pred.size());
}

double overarching_loss(const MaskedMatrix& pred, const MaskedMatrix& target, FeedbackKind kind) {
  require_same_pattern(pred, target, "overarching_loss");
  return overarching_loss(values_of(pred), values_of(target), kind);
}

Eigen::VectorXd pseudo_residual(const Eigen::Ref<const Eigen::VectorXd>& pred,
                                const Eigen::Ref<const Eigen::VectorXd>& target, FeedbackKind kind) {
  require_same_size(pred.size(), target.size(), "pseudo_residual");
  if (kind == FeedbackKind::kExplicit) return target - pred;
  Eigen::VectorXd r(pred.size());
  for (Index i = 0; i < pred.size(); ++i) r[i] = target[i] - sigmoid(pred[i]);
  return r;
}

MaskedMatrix pseudo_residual(const MaskedMatrix& pred, const MaskedMatrix& target, FeedbackKind kind) {
  require_same_pattern(pred, target, "pseudo_residual");
  return with_values(target, pseudo_residual(values_of(pred), values_of(target), kind));
}

LossAndGradient local_loss(const Eigen::Ref<const Eigen::VectorXd>& pred,
                           const Eigen::Ref<const Eigen::VectorXd>& target) {
  require_same_size(pred.size(), target.size(), "local_loss");
  require_nonempty(pred.size(), "local_loss");
  const double n = static_cast<double>(pred.size());
  LossAndGradient out;
  out.gradient = (pred - target) / n;
  out.loss = 0.5 * (pred - target).squaredNorm() / n;
  return out;
}

double rmse(const Eigen::Ref<const Eigen::VectorXd>& pred, const Eigen::Ref<const Eigen::VectorXd>& truth) {
  require_same_size(pred.size(), truth.size(), "rmse");
  require_nonempty(pred.size(), "rmse");
  return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(pred.size()));
}

double rmse(const MaskedMatrix& pred, const MaskedMatrix& truth) {
  require_same_pattern(pred, truth, "rmse");
  return rmse(values_of(pred), values_of(truth));
}

double average_precision(const std::vector<bool>& ranked_relevance) {
  double hits = 0.0, sum = 0.0;
  for (std::size_t r = 0; r < ranked_relevance.size(); ++r) {
    if (ranked_relevance[r]) {
      hits += 1.0;
      sum += hits / static_cast<double>(r + 1);
    }
  }
  return hits > 0.0 ? sum / hits : 0.0;
}

double mean_average_precision(std::vector<RankedCell> cells, EmptyUserPolicy policy) {
  std::sort(cells.begin(), cells.end(), [](const RankedCell& a, const RankedCell& b) {
    if (a.user != b.user) return a.user < b.user;
    if (a.score != b.score) return a.score > b.score;
    return a.item < b.item;
  });
  double total = 0.0;
  std::size_t users = 0;
  std::vector<bool> ranked;
  for (std::size_t begin = 0; begin < cells.size();) {
    std::size_t end = begin;
    ranked.clear();
    bool any = false;
    while (end < cells.size() && cells[end].user == cells[begin].user) {
      ranked.push_back(cells[end].relevant);
      any = any || cells[end].relevant;
      ++end;
    }
    if (any || policy == EmptyUserPolicy::kZero) {
      total += average_precision(ranked);
      ++users;
    }
    begin = end;
  }
  if (users == 0) throw Error("MAP: no user has a relevant candidate");
  return total / static_cast<double>(users);
}

double map_metric(const Eigen::MatrixXd& scores, const RowSparse& train_positives,
                  const RowSparse& test_positives) {
  if (train_positives.rows() != scores.rows() || train_positives.cols() != scores.cols() ||
      test_positives.rows() != scores.rows() || test_positives.cols() != scores.cols()) {
    throw DimensionError("map_metric: shape mismatch");
  }
  std::vector<RankedCell> cells;
  std::vector<char> excluded(static_cast<std::size_t>(scores.cols()));
  std::vector<char> relevant(static_cast<std::size_t>(scores.cols()));
  for (Index u = 0; u < scores.rows(); ++u) {
    if (test_positives.outerIndexPtr()[u + 1] == test_positives.outerIndexPtr()[u]) continue;
    std::fill(excluded.begin(), excluded.end(), 0);
    std::fill(relevant.begin(), relevant.end(), 0);
    for (RowSparse::InnerIterator it(train_positives, u); it; ++it) excluded[it.col()] = 1;
    for (RowSparse::InnerIterator it(test_positives, u); it; ++it) {
      if (excluded[it.col()]) throw Error("map_metric: a test positive is also a train positive");
      relevant[it.col()] = 1;
    }
    for (Index i = 0; i < scores.cols(); ++i) {
      if (!excluded[i]) {
        cells.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(i), scores(u, i),
                         relevant[i] != 0});
      }
    }
  }
  return mean_average_precision(std::move(cells), EmptyUserPolicy::kSkip);
}

}  // namespace mtal
