#include "mtal/protocol/domain.hpp"

#include <ostream>

#include "mtal/nn/checkpoint.hpp"

namespace mtal {

Eigen::VectorXd base_model(const RowSparse& train, FeedbackKind kind) {
  const Index n = train.cols();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n), count = Eigen::VectorXd::Zero(n);
  for (Index r = 0; r < train.outerSize(); ++r) {
    for (RowSparse::InnerIterator it(train, r); it; ++it) {
      if (kind == FeedbackKind::kExplicit) {
        sum[it.col()] += it.value();
        count[it.col()] += 1.0;
      } else if (it.value() > 0.5) {
        sum[it.col()] += 1.0;
      }
    }
  }
  if (kind == FeedbackKind::kImplicit) {
    return train.rows() > 0 ? Eigen::VectorXd(sum / static_cast<double>(train.rows())) : sum;
  }
  const double total = count.sum();
  const double global = total > 0 ? sum.sum() / total : 0.0;
  Eigen::VectorXd base(n);
  for (Index j = 0; j < n; ++j) base[j] = count[j] > 0 ? sum[j] / count[j] : global;
  return base;
}

Eigen::VectorXd broadcast_base(const Eigen::VectorXd& base, const RowSparse& pattern) {
  Eigen::VectorXd f(pattern.nonZeros());
  const int* cols = pattern.innerIndexPtr();
  for (Index i = 0; i < f.size(); ++i) f[i] = base[cols[i]];
  return f;
}

namespace {

RowSparse dense_labels(const RowSparse& positives) {
  const Index m = positives.rows(), n = positives.cols();
  RowSparse full(m, n);
  full.resizeNonZeros(m * n);
  for (Index r = 0; r <= m; ++r) full.outerIndexPtr()[r] = static_cast<int>(r * n);
  for (Index r = 0; r < m; ++r) {
    for (Index c = 0; c < n; ++c) {
      full.innerIndexPtr()[r * n + c] = static_cast<int>(c);
      full.valuePtr()[r * n + c] = 0.0;
    }
    for (RowSparse::InnerIterator it(positives, r); it; ++it) full.valuePtr()[r * n + it.col()] = it.value();
  }
  return full;
}

}  // namespace

DomainView make_view(const OrientedDomain& train, const OrientedDomain& test, AlignmentMode mode,
                     const ViewOptions& options, Index col_offset) {
  if (train.rows() != test.rows() || train.cols() != test.cols() || train.row_ids != test.row_ids ||
      train.col_ids != test.col_ids) {
    throw DimensionError("make_view: train and test slices describe different entities");
  }
  DomainView v;
  v.id = train.domain_id;
  v.kind = options.kind;
  v.mode = mode;
  v.dense_universe = options.kind == FeedbackKind::kImplicit && options.dense_universe;
  v.input = train.ratings;
  v.train = v.dense_universe ? dense_labels(train.ratings) : train.ratings;
  v.test = test.ratings;
  v.row_ids = train.row_ids;
  v.col_ids = train.col_ids;
  v.col_offset = col_offset;
  if (options.side_info) {
    if (train.row_features) v.side.row = *train.row_features;
    if (train.col_features) {
      RowSparse observed = train.ratings;
      for (Index i = 0; i < observed.nonZeros(); ++i) observed.valuePtr()[i] = 1.0;
      v.side.col_sum = Eigen::MatrixXd(observed * *train.col_features);
    }
  }
  v.base = base_model(v.train, v.kind);
  v.f_train = broadcast_base(v.base, v.train);
  v.f_test = broadcast_base(v.base, v.test);
  return v;
}

void LocalModel::write(std::ostream&) const { throw Error("this local model cannot be checkpointed"); }

AaeModel::AaeModel(const DomainView& view, Index width, AaeModelConfig config)
    : view_(&view), config_(std::move(config)) {
  nn::AaeShape shape;
  shape.d_in = view.cols();
  shape.d_out = width;
  shape.hidden0 = config_.hidden0;
  shape.hidden1 = config_.hidden1;
  shape.side_row = view.side.row ? view.side.row->cols() : 0;
  shape.side_col = view.side.col_sum ? view.side.col_sum->cols() : 0;
  params_ = nn::Params::zeros(shape, config_.dropout);
}

AaeModel::AaeModel(const DomainView& view, nn::Params params) : view_(&view), params_(std::move(params)) {
  if (params_.enc1.in() != view.cols()) throw DimensionError("checkpoint input width differs from the domain");
}

void AaeModel::fit(const RowSparse& pseudo_targets, std::uint64_t seed) {
  params_ = nn::aae_init<double>(params_.shape(), config_.dropout, derive_seed(seed, 0));
  auto options = config_.fit;
  options.seed = derive_seed(seed, 1);
  report_ = nn::fit_pseudo_targets(params_, view_->input, view_->side, pseudo_targets, options);
  nn::round_to_float(params_);
}

Eigen::MatrixXd AaeModel::predict() const { return nn::predict_dense(params_, view_->input, view_->side); }

void AaeModel::write(std::ostream& out) const { nn::write_params(out, params_); }

ModelFactory aae_factory(AaeModelConfig config) {
  return [config](const DomainView& view, Index width) -> std::unique_ptr<LocalModel> {
    return std::make_unique<AaeModel>(view, width, config);
  };
}

}  // namespace mtal
