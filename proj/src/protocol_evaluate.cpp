#include "mtal/protocol/evaluate.hpp"

#include <limits>

namespace mtal {
namespace {

EmptyUserPolicy policy_for(const DomainView& view) {
  return view.dense_universe ? EmptyUserPolicy::kSkip : EmptyUserPolicy::kZero;
}

double safe_map(std::vector<RankedCell> cells, EmptyUserPolicy policy, const std::string& where) {
  try {
    return mean_average_precision(std::move(cells), policy);
  } catch (const Error& e) {
    logger()->warn("MAP undefined for {}: {}", where, e.what());
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

std::vector<RankedCell> ranking_cells(const DomainView& view, const DomainScores& scores) {
  const bool user_rows = view.mode == AlignmentMode::kUserAligned;
  auto cell = [&](Index r, Index c, double score, bool relevant) {
    RankedCell rc;
    rc.user = user_rows ? view.row_ids[r] : view.col_ids[c];
    rc.item = user_rows ? view.col_ids[c] : view.row_ids[r];
    rc.score = score;
    rc.relevant = relevant;
    return rc;
  };
  std::vector<RankedCell> cells;
  const int* tcols = view.test.innerIndexPtr();
  const double* tvals = view.test.valuePtr();
  if (!view.dense_universe) {
    cells.reserve(static_cast<std::size_t>(view.test.nonZeros()));
    for (Index r = 0; r < view.rows(); ++r) {
      for (Index i = view.test.outerIndexPtr()[r]; i < view.test.outerIndexPtr()[r + 1]; ++i) {
        cells.push_back(cell(r, tcols[i], scores.test[i], tvals[i] > 0.5));
      }
    }
    return cells;
  }
  const int* cols = view.train.innerIndexPtr();
  const double* vals = view.train.valuePtr();
  for (Index r = 0; r < view.rows(); ++r) {
    Index j = view.test.outerIndexPtr()[r];
    const Index jend = view.test.outerIndexPtr()[r + 1];
    for (Index i = view.train.outerIndexPtr()[r]; i < view.train.outerIndexPtr()[r + 1]; ++i) {
      if (vals[i] > 0.5) continue;
      while (j < jend && tcols[j] < cols[i]) ++j;
      const bool relevant = j < jend && tcols[j] == cols[i] && tvals[j] > 0.5;
      cells.push_back(cell(r, cols[i], scores.train[i], relevant));
    }
  }
  return cells;
}

std::vector<MetricRow> evaluate(const std::vector<DomainView>& views, const std::vector<DomainScores>& scores,
                                std::uint32_t round, std::uint64_t seed) {
  if (views.size() != scores.size()) throw DimensionError("evaluate: one score set per domain expected");
  std::vector<MetricRow> rows;
  auto emit = [&](const std::string& domain, const char* split, const char* metric, double value) {
    rows.push_back({round, domain, split, metric, value, seed});
  };
  if (views.empty()) return rows;
  const FeedbackKind kind = views[0].kind;

  std::vector<double> all_pred, all_truth, loss_pred, loss_truth;
  std::vector<RankedCell> all_cells;
  for (std::size_t k = 0; k < views.size(); ++k) {
    const auto& v = views[k];
    const auto& s = scores[k];
    if (v.kind != kind) throw ConfigError("evaluate: domains disagree on the feedback kind");
    if (s.train.size() != v.train.nonZeros() || s.test.size() != v.test.nonZeros()) {
      throw DimensionError("evaluate: scores do not match the domain's cells");
    }
    const std::string name = std::to_string(k);
    // a domain can end up with no training cells at all (a one-rating genre)
    emit(name, "train", "loss",
         v.train.nonZeros() > 0 ? overarching_loss(s.train, values_of(v.train), kind) : std::nan(""));
    loss_pred.insert(loss_pred.end(), s.train.data(), s.train.data() + s.train.size());
    loss_truth.insert(loss_truth.end(), v.train.valuePtr(), v.train.valuePtr() + v.train.nonZeros());
    if (kind == FeedbackKind::kExplicit) {
      if (v.test.nonZeros() > 0) emit(name, "test", "rmse", rmse(s.test, values_of(v.test)));
      all_pred.insert(all_pred.end(), s.test.data(), s.test.data() + s.test.size());
      all_truth.insert(all_truth.end(), v.test.valuePtr(), v.test.valuePtr() + v.test.nonZeros());
    } else {
      auto cells = ranking_cells(v, s);
      all_cells.insert(all_cells.end(), cells.begin(), cells.end());
      emit(name, "test", "map", safe_map(std::move(cells), policy_for(v), "domain " + name));
    }
  }
  auto as_vec = [](const std::vector<double>& x) {
    return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Index>(x.size()));
  };
  emit("all", "train", "loss", overarching_loss(as_vec(loss_pred), as_vec(loss_truth), kind));
  if (kind == FeedbackKind::kExplicit) {
    if (!all_truth.empty()) emit("all", "test", "rmse", rmse(as_vec(all_pred), as_vec(all_truth)));
  } else {
    emit("all", "test", "map", safe_map(std::move(all_cells), policy_for(views[0]), "all domains"));
  }
  return rows;
}

std::vector<DomainScores> scores_at(const LearningResult& result, std::uint32_t round) {
  std::vector<DomainScores> out;
  for (const auto& h : result.history) {
    if (round >= h.size()) throw Error("no snapshot for round " + std::to_string(round));
    out.push_back({h[round].f_train, h[round].f_test});
  }
  return out;
}

}  // namespace mtal
