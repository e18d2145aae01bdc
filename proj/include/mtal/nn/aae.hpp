#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "mtal/common.hpp"

namespace mtal::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using SparseRows = Eigen::SparseMatrix<Scalar, Eigen::RowMajor, int>;

/// Affine map y = W x + b with W stored out x in.
template <typename Scalar, int Order = Eigen::ColMajor>
struct Dense {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Order> W;
  Vec<Scalar> b;

  Index in() const { return W.cols(); }
  Index out() const { return W.rows(); }

  static Dense zeros(Index out, Index in) {
    Dense d;
    d.W.setZero(out, in);
    d.b.setZero(out);
    return d;
  }
};

struct AaeShape {
  Index d_in = 0;
  Index d_out = 0;
  Index hidden0 = 256;
  Index hidden1 = 128;  // code width
  Index side_row = 0;   // 0 = no side encoder
  Index side_col = 0;

  bool operator==(const AaeShape&) const = default;
};

/// Encoder d_in -> hidden0 -> hidden1, optional side encoders -> hidden1, decoder
/// hidden1 -> hidden0 -> d_out. The last decoder layer is row-major so a single
/// output unit's weights are contiguous for per-cell evaluation.
template <typename Scalar>
struct AaeParams {
  Dense<Scalar> enc1, enc2;
  std::optional<Dense<Scalar>> side_row, side_col;
  Dense<Scalar> dec1;
  Dense<Scalar, Eigen::RowMajor> dec2;
  double dropout_rate = 0.5;
  std::uint64_t version = 0;  // bumped on every update; guards cached forward passes

  AaeShape shape() const {
    return {enc1.in(), dec2.out(), enc1.out(), enc2.out(), side_row ? side_row->in() : 0,
            side_col ? side_col->in() : 0};
  }

  static AaeParams zeros(const AaeShape& s, double dropout = 0.5) {
    AaeParams p;
    p.enc1 = Dense<Scalar>::zeros(s.hidden0, s.d_in);
    p.enc2 = Dense<Scalar>::zeros(s.hidden1, s.hidden0);
    if (s.side_row > 0) p.side_row = Dense<Scalar>::zeros(s.hidden1, s.side_row);
    if (s.side_col > 0) p.side_col = Dense<Scalar>::zeros(s.hidden1, s.side_col);
    p.dec1 = Dense<Scalar>::zeros(s.hidden0, s.hidden1);
    p.dec2 = Dense<Scalar, Eigen::RowMajor>::zeros(s.d_out, s.hidden0);
    p.dropout_rate = dropout;
    return p;
  }
};

/// Calls fn(name, t0, t1, ...) for every tensor, in declaration order, of
/// several identically shaped parameter sets.
template <typename Fn, typename First, typename... Rest>
void zip_tensors(Fn&& fn, First& first, Rest&... rest) {
  fn("enc1.W", first.enc1.W, rest.enc1.W...);
  fn("enc1.b", first.enc1.b, rest.enc1.b...);
  fn("enc2.W", first.enc2.W, rest.enc2.W...);
  fn("enc2.b", first.enc2.b, rest.enc2.b...);
  if (first.side_row) {
    fn("side_row.W", first.side_row->W, rest.side_row->W...);
    fn("side_row.b", first.side_row->b, rest.side_row->b...);
  }
  if (first.side_col) {
    fn("side_col.W", first.side_col->W, rest.side_col->W...);
    fn("side_col.b", first.side_col->b, rest.side_col->b...);
  }
  fn("dec1.W", first.dec1.W, rest.dec1.W...);
  fn("dec1.b", first.dec1.b, rest.dec1.b...);
  fn("dec2.W", first.dec2.W, rest.dec2.W...);
  fn("dec2.b", first.dec2.b, rest.dec2.b...);
}

template <typename Scalar>
Index parameter_count(const AaeParams<Scalar>& p) {
  Index n = 0;
  zip_tensors([&](const char*, const auto& t) { n += t.size(); }, p);
  return n;
}

/// Symmetric uniform init with bound sqrt(6 / (fan_in + fan_out)); zero biases.
template <typename Scalar>
AaeParams<Scalar> aae_init(const AaeShape& shape, double dropout_rate, std::uint64_t seed) {
  if (shape.d_in < 1 || shape.d_out < 1 || shape.hidden0 < 1 || shape.hidden1 < 1) {
    throw DimensionError("aae_init: dimensions must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  auto p = AaeParams<Scalar>::zeros(shape, dropout_rate);
  std::mt19937_64 rng(seed);
  zip_tensors(
      [&](const char*, auto& t) {
        if (t.cols() == 1) return;  // bias
        const double bound = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Index r = 0; r < t.rows(); ++r)
          for (Index c = 0; c < t.cols(); ++c) t(r, c) = static_cast<Scalar>(dist(rng));
      },
      p);
  return p;
}

/// Per-row side inputs of a batch (batch x d); empty when the encoder is absent.
template <typename Scalar>
struct SideBatch {
  Mat<Scalar> row;
  Mat<Scalar> col_sum;
};

/// Intermediates of one forward pass, column-per-sample. Consumed by backward.
template <typename Scalar>
struct AaeCache {
  const void* owner = nullptr;
  std::uint64_t version = 0;
  SparseRows<Scalar> input;           // batch x d_in
  Mat<Scalar> side_row_t, side_col_t;  // d x batch
  Mat<Scalar> h1, c_rating, c_row, c_col;  // post-tanh
  Mat<Scalar> keep;                   // dropout mask scaled by 1/(1-p); empty = none
  Mat<Scalar> code;                   // after dropout
  Mat<Scalar> h3;

  Index batch() const { return input.rows(); }
};

namespace detail {

/// tanh(x) = 1 - 2 / (exp(2x) + 1), which vectorizes where std::tanh does not.
template <typename Scalar>
void add_bias_tanh(Mat<Scalar>& a, const Vec<Scalar>& b) {
  a.colwise() += b;
  a = Scalar(1) - Scalar(2) / ((Scalar(2) * a.array()).exp() + Scalar(1));
}

template <typename Scalar>
void accumulate_dense_grad(Dense<Scalar>& g, const Mat<Scalar>& delta, const Mat<Scalar>& input_t) {
  g.W.noalias() += delta * input_t.transpose();
  g.b += delta.rowwise().sum();
}

}  // namespace detail

/// Runs the network up to the last hidden layer and fills `cache`.
template <typename Scalar, typename Rng>
void forward_hidden(const AaeParams<Scalar>& p, const SparseRows<Scalar>& input, const SideBatch<Scalar>& side,
                    bool training, Rng& rng, AaeCache<Scalar>& cache) {
  if (input.cols() != p.enc1.in()) throw DimensionError("aae_forward: input width differs from d_in");
  const Index B = input.rows();
  auto check_side = [&](const auto& enc, const Mat<Scalar>& m, const char* what) {
    if (enc && (m.rows() != B || m.cols() != enc->in())) {
      throw DimensionError(std::string("aae_forward: ") + what + " side input has the wrong shape");
    }
    if (!enc && m.size() != 0) throw DimensionError(std::string("aae_forward: no ") + what + " side encoder");
  };
  check_side(p.side_row, side.row, "row");
  check_side(p.side_col, side.col_sum, "column");

  cache.owner = &p;
  cache.version = p.version;
  cache.input = input;
  cache.h1.noalias() = p.enc1.W * input.transpose();
  detail::add_bias_tanh(cache.h1, p.enc1.b);
  cache.c_rating.noalias() = p.enc2.W * cache.h1;
  detail::add_bias_tanh(cache.c_rating, p.enc2.b);
  Mat<Scalar> z = cache.c_rating;
  if (p.side_row) {
    cache.side_row_t = side.row.transpose();
    cache.c_row.noalias() = p.side_row->W * cache.side_row_t;
    detail::add_bias_tanh(cache.c_row, p.side_row->b);
    z += cache.c_row;
  }
  if (p.side_col) {
    cache.side_col_t = side.col_sum.transpose();
    cache.c_col.noalias() = p.side_col->W * cache.side_col_t;
    detail::add_bias_tanh(cache.c_col, p.side_col->b);
    z += cache.c_col;
  }
  cache.keep.resize(0, 0);
  if (training && p.dropout_rate > 0.0) {
    std::bernoulli_distribution alive(1.0 - p.dropout_rate);
    const Scalar scale = Scalar(1) / static_cast<Scalar>(1.0 - p.dropout_rate);
    cache.keep.resize(z.rows(), z.cols());
    for (Index i = 0; i < cache.keep.size(); ++i) cache.keep.data()[i] = alive(rng) ? scale : Scalar(0);
    z.array() *= cache.keep.array();
  }
  cache.code = std::move(z);
  cache.h3.noalias() = p.dec1.W * cache.code;
  detail::add_bias_tanh(cache.h3, p.dec1.b);
}

/// Dense output, d_out x batch.
template <typename Scalar>
Mat<Scalar> output_dense(const AaeParams<Scalar>& p, const AaeCache<Scalar>& cache) {
  Mat<Scalar> out = p.dec2.W * cache.h3;
  out.colwise() += p.dec2.b;
  return out;
}

/// Outputs at the stored cells of `pattern` (batch x d_out), in storage order.
template <typename Scalar>
Vec<Scalar> output_cells(const AaeParams<Scalar>& p, const AaeCache<Scalar>& cache,
                         const SparseRows<Scalar>& pattern) {
  if (pattern.rows() != cache.batch() || pattern.cols() != p.dec2.out()) {
    throw DimensionError("output_cells: pattern shape differs from batch x d_out");
  }
  Vec<Scalar> out(pattern.nonZeros());
  Index k = 0;
  for (Index r = 0; r < pattern.outerSize(); ++r) {
    const auto h = cache.h3.col(r);
    for (typename SparseRows<Scalar>::InnerIterator it(pattern, r); it; ++it, ++k) {
      out[k] = p.dec2.W.row(it.col()).dot(h.transpose()) + p.dec2.b[it.col()];
    }
  }
  return out;
}

/// Evaluation-mode forward pass returning batch x d_out.
template <typename Scalar>
Mat<Scalar> aae_forward(const AaeParams<Scalar>& p, const SparseRows<Scalar>& input,
                        const SideBatch<Scalar>& side = {}) {
  AaeCache<Scalar> cache;
  std::mt19937_64 unused(0);
  forward_hidden(p, input, side, false, unused, cache);
  return output_dense(p, cache).transpose();
}

namespace detail {

template <typename Scalar>
void check_cache(const AaeParams<Scalar>& p, const AaeCache<Scalar>& cache) {
  if (cache.owner != &p || cache.version != p.version) {
    throw Error("aae_backward: cached forward pass is stale");
  }
}

/// Backpropagates d loss / d h3 (hidden0 x batch) through the rest of the net.
template <typename Scalar>
void backward_from_h3(const AaeParams<Scalar>& p, const AaeCache<Scalar>& c, Mat<Scalar> d_h3,
                      AaeParams<Scalar>& g) {
  Mat<Scalar> d_a3 = d_h3.array() * (Scalar(1) - c.h3.array().square());
  accumulate_dense_grad(g.dec1, d_a3, c.code);
  Mat<Scalar> d_z = p.dec1.W.transpose() * d_a3;
  if (c.keep.size() != 0) d_z.array() *= c.keep.array();

  if (p.side_row) {
    Mat<Scalar> d = d_z.array() * (Scalar(1) - c.c_row.array().square());
    accumulate_dense_grad(*g.side_row, d, c.side_row_t);
  }
  if (p.side_col) {
    Mat<Scalar> d = d_z.array() * (Scalar(1) - c.c_col.array().square());
    accumulate_dense_grad(*g.side_col, d, c.side_col_t);
  }
  Mat<Scalar> d_a2 = d_z.array() * (Scalar(1) - c.c_rating.array().square());
  accumulate_dense_grad(g.enc2, d_a2, c.h1);
  Mat<Scalar> d_a1 = (p.enc2.W.transpose() * d_a2).array() * (Scalar(1) - c.h1.array().square());
  g.enc1.W.noalias() += d_a1 * c.input;
  g.enc1.b += d_a1.rowwise().sum();
}

}  // namespace detail

/// Accumulates parameter gradients into `g` given d loss / d output
/// (d_out x batch).
template <typename Scalar>
void backward_dense(const AaeParams<Scalar>& p, const AaeCache<Scalar>& cache, const Mat<Scalar>& d_out,
                    AaeParams<Scalar>& g) {
  detail::check_cache(p, cache);
  if (d_out.rows() != p.dec2.out() || d_out.cols() != cache.batch()) {
    throw DimensionError("aae_backward: output gradient shape differs from d_out x batch");
  }
  g.dec2.W.noalias() += d_out * cache.h3.transpose();
  g.dec2.b += d_out.rowwise().sum();
  detail::backward_from_h3(p, cache, Mat<Scalar>(p.dec2.W.transpose() * d_out), g);
}

/// As backward_dense, with the output gradient given only at the stored cells
/// of `pattern` (zero elsewhere).
template <typename Scalar>
void backward_cells(const AaeParams<Scalar>& p, const AaeCache<Scalar>& cache,
                    const SparseRows<Scalar>& pattern, const Vec<Scalar>& d_cells, AaeParams<Scalar>& g) {
  detail::check_cache(p, cache);
  if (pattern.rows() != cache.batch() || pattern.cols() != p.dec2.out() || d_cells.size() != pattern.nonZeros()) {
    throw DimensionError("aae_backward: cell gradient does not match the pattern");
  }
  Mat<Scalar> d_h3 = Mat<Scalar>::Zero(cache.h3.rows(), cache.h3.cols());
  Index k = 0;
  for (Index r = 0; r < pattern.outerSize(); ++r) {
    const auto h = cache.h3.col(r);
    auto dh = d_h3.col(r);
    for (typename SparseRows<Scalar>::InnerIterator it(pattern, r); it; ++it, ++k) {
      const Scalar d = d_cells[k];
      if (d == Scalar(0)) continue;
      const Index j = it.col();
      g.dec2.W.row(j) += d * h.transpose();
      g.dec2.b[j] += d;
      dh += d * p.dec2.W.row(j).transpose();
    }
  }
  detail::backward_from_h3(p, cache, std::move(d_h3), g);
}

template <typename Scalar>
void set_zero(AaeParams<Scalar>& g) {
  zip_tensors([](const char*, auto& t) { t.setZero(); }, g);
}

}  // namespace mtal::nn
