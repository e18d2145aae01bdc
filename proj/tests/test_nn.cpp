#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <gtest/gtest.h>

#include "mtal/nn/checkpoint.hpp"
#include "mtal/nn/quasi_newton.hpp"
#include "mtal/nn/train.hpp"

namespace mtal::nn {
namespace {

std::vector<std::pair<double*, std::string>> elements(Params& p) {
  std::vector<std::pair<double*, std::string>> out;
  zip_tensors(
      [&](const char* name, auto& t) {
        for (Index i = 0; i < t.size(); ++i) out.emplace_back(t.data() + i, name);
      },
      p);
  return out;
}

RowSparse random_sparse(Index rows, Index cols, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(density);
  std::normal_distribution<double> val(0.0, 1.0);
  std::vector<Eigen::Triplet<double>> t;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      if (keep(rng)) t.emplace_back(r, c, val(rng));
    }
  }
  RowSparse m(rows, cols);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

struct GradCase {
  bool dense;
  bool side;
  double dropout;
};

class AaeGradient : public ::testing::TestWithParam<GradCase> {};

TEST_P(AaeGradient, MatchesCentralDifferences) {
  const auto gc = GetParam();
  AaeShape shape{5, 7, 6, 4, gc.side ? 3 : 0, gc.side ? 2 : 0};
  auto p = aae_init<double>(shape, gc.dropout, 17);
  // nonzero biases so their gradients are exercised too
  std::mt19937_64 brng(5);
  std::normal_distribution<double> bn(0.0, 0.3);
  zip_tensors([&](const char*, auto& t) { if (t.cols() == 1) for (Index i = 0; i < t.size(); ++i) t.data()[i] = bn(brng); }, p);

  const Index B = 4;
  const RowSparse input = random_sparse(B, shape.d_in, 0.6, 1);
  const RowSparse targets = gc.dense ? RowSparse(Eigen::MatrixXd::Random(B, shape.d_out).sparseView(0.0, 0.0))
                                     : random_sparse(B, shape.d_out, 0.5, 2);
  SideBatch<double> side;
  if (gc.side) {
    side.row = Eigen::MatrixXd::Random(B, 3);
    side.col_sum = Eigen::MatrixXd::Random(B, 2);
  }

  auto loss = [&](const Params& q, Params* grad) {
    AaeCache<double> cache;
    std::mt19937_64 rng(99);  // same dropout mask on every call
    forward_hidden(q, input, side, true, rng, cache);
    if (gc.dense) {
      const Eigen::MatrixXd diff = output_dense(q, cache) - Eigen::MatrixXd(targets).transpose();
      if (grad) backward_dense(q, cache, diff, *grad);
      return 0.5 * diff.squaredNorm();
    }
    const Eigen::VectorXd diff = output_cells(q, cache, targets) - values_of(targets);
    if (grad) backward_cells(q, cache, targets, diff, *grad);
    return 0.5 * diff.squaredNorm();
  };

  auto g = Params::zeros(shape);
  loss(p, &g);
  auto pe = elements(p);
  auto ge = elements(g);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < pe.size(); ++i) {
    const double saved = *pe[i].first;
    *pe[i].first = saved + h;
    const double up = loss(p, nullptr);
    *pe[i].first = saved - h;
    const double down = loss(p, nullptr);
    *pe[i].first = saved;
    const double fd = (up - down) / (2 * h);
    const double an = *ge[i].first;
    const double scale = std::max({std::abs(fd), std::abs(an), 1e-4});
    const double rel = std::abs(fd - an) / scale;
    worst = std::max(worst, rel);
    EXPECT_LT(rel, 1e-4) << pe[i].second << " element " << i << ": analytic " << an << " numeric " << fd;
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

INSTANTIATE_TEST_SUITE_P(Paths, AaeGradient,
                         ::testing::Values(GradCase{false, false, 0.0}, GradCase{true, false, 0.0},
                                           GradCase{false, true, 0.5}, GradCase{true, true, 0.5}));

TEST(Aae, ScalarNetworkWithUnitWeights) {
  auto p = Params::zeros({1, 1, 1, 1, 0, 0}, 0.5);
  p.enc1.W.setOnes();
  p.enc2.W.setOnes();
  p.dec1.W.setOnes();
  p.dec2.W.setOnes();
  RowSparse x(1, 1);
  x.insert(0, 0) = 1.0;
  const Eigen::MatrixXd y = aae_forward(p, x);
  EXPECT_NEAR(y(0, 0), std::tanh(std::tanh(std::tanh(1.0))), 1e-15);
}

TEST(Aae, DropoutKeepsTheExpectedCode) {
  auto p = aae_init<double>({6, 3, 8, 200, 0, 0}, 0.5, 1);
  const RowSparse x = random_sparse(3, 6, 1.0, 4);
  AaeCache<double> eval, train;
  std::mt19937_64 rng(0);
  forward_hidden(p, x, {}, false, rng, eval);
  EXPECT_EQ(eval.keep.size(), 0);
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(eval.code.rows(), eval.code.cols());
  const int draws = 400;
  for (int i = 0; i < draws; ++i) {
    forward_hidden(p, x, {}, true, rng, train);
    mean += train.code;
    for (Index k = 0; k < train.keep.size(); ++k) {
      ASSERT_TRUE(train.keep.data()[k] == 0.0 || train.keep.data()[k] == 2.0);
    }
  }
  mean /= draws;
  EXPECT_LT((mean - eval.code).cwiseAbs().maxCoeff(), 0.15);
  EXPECT_NEAR((mean - eval.code).mean(), 0.0, 0.01);
}

TEST(Aae, InitIsSeededAndBounded) {
  const AaeShape s{10, 12, 8, 4, 0, 0};
  const auto a = aae_init<double>(s, 0.5, 3), b = aae_init<double>(s, 0.5, 3), c = aae_init<double>(s, 0.5, 4);
  EXPECT_EQ(a.enc1.W, b.enc1.W);
  EXPECT_NE(a.enc1.W, c.enc1.W);
  EXPECT_LE(a.enc1.W.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 18.0));
  EXPECT_EQ(a.dec2.b.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Aae, StaleCacheIsRejected) {
  auto p = aae_init<double>({4, 4, 3, 2, 0, 0}, 0.0, 1);
  AaeCache<double> cache;
  std::mt19937_64 rng(0);
  const RowSparse x = random_sparse(2, 4, 1.0, 1);
  forward_hidden(p, x, {}, false, rng, cache);
  ++p.version;
  auto g = Params::zeros(p.shape());
  EXPECT_THROW(backward_dense(p, cache, Eigen::MatrixXd(Eigen::MatrixXd::Zero(4, 2)), g), Error);
}

TEST(Adam, FirstStepMatchesHandComputation) {
  auto p = Params::zeros({1, 1, 1, 1, 0, 0});
  p.enc1.W(0, 0) = 2.0;
  auto g = Params::zeros(p.shape());
  g.enc1.W(0, 0) = 0.5;
  g.dec2.b(0) = -3.0;
  AdamConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.1;
  auto state = AdamState<double>::for_params(p, cfg);
  adam_step(state, p, g);
  // m_hat = g, v_hat = g^2 after one step
  EXPECT_NEAR(p.enc1.W(0, 0), 2.0 * (1 - 0.001) - 0.01 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p.dec2.b(0), 0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_EQ(p.enc2.W(0, 0), 0.0);
  EXPECT_EQ(p.version, 1u);
  g.enc2.b(0) = std::nan("");
  EXPECT_THROW(adam_step(state, p, g), Error);
}

TEST(Adam, CoupledDecayJoinsTheGradient) {
  auto p = Params::zeros({1, 1, 1, 1, 0, 0});
  p.enc1.W(0, 0) = 2.0;
  auto g = Params::zeros(p.shape());
  g.enc1.W(0, 0) = 0.5;
  AdamConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.1;
  cfg.coupled_decay = true;
  auto state = AdamState<double>::for_params(p, cfg);
  adam_step(state, p, g);
  // effective gradient 0.5 + 0.1 * 2 = 0.7; the first step is lr * sign
  EXPECT_NEAR(p.enc1.W(0, 0), 2.0 - 0.01 * 0.7 / (0.7 + 1e-8), 1e-15);
  adam_step(state, p, g);
  const double w1 = 2.0 - 0.01 * 0.7 / (0.7 + 1e-8);
  const double g2 = 0.5 + 0.1 * w1;
  const double m = (0.9 * 0.1 * 0.7 + 0.1 * g2) / (1 - 0.81);
  const double v = (0.999 * 0.001 * 0.49 + 0.001 * g2 * g2) / (1 - 0.998001);
  EXPECT_NEAR(p.enc1.W(0, 0), w1 - 0.01 * m / (std::sqrt(v) + 1e-8), 1e-14);
}

TEST(QuasiNewton, SolvesAQuadraticWithinTenIterations) {
  Eigen::Matrix2d A;
  A << 3, 1, 1, 2;
  const Eigen::Vector2d b(1, -1);
  Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) *g = A * x - b;
    return 0.5 * x.dot(A * x) - b.dot(x);
  };
  const auto r = quasi_newton_minimize(f, Eigen::VectorXd::Zero(2));
  const Eigen::Vector2d xstar = A.ldlt().solve(b);
  EXPECT_LT((r.x - xstar).norm(), 1e-8);
  EXPECT_LE(r.iterations, 10);
}

TEST(QuasiNewton, BeatsGradientDescentOnRosenbrock) {
  Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    if (g) {
      g->resize(2);
      (*g)[0] = -2 * a - 400 * x[0] * b;
      (*g)[1] = 200 * b;
    }
    return a * a + 100 * b * b;
  };
  Eigen::VectorXd x0(2);
  x0 << -1.2, 1.0;
  QuasiNewtonOptions opt;
  opt.iterations = 50;
  const auto r = quasi_newton_minimize(f, x0, opt);
  Eigen::VectorXd x = x0, g;
  for (int i = 0; i < 50; ++i) {
    f(x, &g);
    x -= 1e-3 * g;
  }
  EXPECT_LT(r.value, f(x, nullptr));
  EXPECT_LT(r.value, f(x0, nullptr));
}

TEST(QuasiNewton, NonFiniteStartThrows) {
  Objective f = [](const Eigen::VectorXd&, Eigen::VectorXd* g) {
    if (g) *g = Eigen::VectorXd::Zero(1);
    return std::nan("");
  };
  EXPECT_THROW(quasi_newton_minimize(f, Eigen::VectorXd::Zero(1)), Error);
}

TEST(Fit, ReducesLossAndIsDeterministic) {
  const RowSparse input = random_sparse(40, 12, 0.5, 7);
  const RowSparse targets = random_sparse(40, 15, 0.3, 8);
  FitOptions opt;
  opt.epochs = 15;
  opt.batch_size = 8;
  opt.adam.lr = 1e-2;
  opt.seed = 5;
  auto a = aae_init<double>({12, 15, 16, 8, 0, 0}, 0.0, 1);
  auto b = a;
  const auto ra = fit_pseudo_targets(a, input, {}, targets, opt);
  const auto rb = fit_pseudo_targets(b, input, {}, targets, opt);
  ASSERT_EQ(ra.epoch_loss.size(), 15u);
  EXPECT_LT(ra.epoch_loss.back(), 0.7 * ra.epoch_loss.front());
  EXPECT_EQ(ra.epoch_loss, rb.epoch_loss);
  EXPECT_EQ(a.dec2.W, b.dec2.W);
}

TEST(Fit, LogisticLossLearnsBinaryTargets) {
  const RowSparse input = random_sparse(30, 10, 0.5, 3);
  RowSparse targets = random_sparse(30, 6, 0.6, 4);
  for (auto& v : values_of(targets)) v = v > 0 ? 1.0 : 0.0;
  FitOptions opt;
  opt.loss = TargetLoss::kLogistic;
  opt.epochs = 30;
  opt.batch_size = 10;
  opt.adam.lr = 1e-2;
  auto p = aae_init<double>({10, 6, 16, 8, 0, 0}, 0.0, 2);
  const auto r = fit_pseudo_targets(p, input, {}, targets, opt);
  EXPECT_NEAR(r.epoch_loss.front(), std::log(2.0), 0.3);  // logits start near zero
  EXPECT_LT(r.epoch_loss.back(), 0.8 * r.epoch_loss.front());
  const Eigen::VectorXd logits = predict_cells(p, input, {}, targets);
  int agree = 0;
  for (Index i = 0; i < logits.size(); ++i) agree += (logits[i] > 0) == (values_of(targets)[i] > 0.5);
  EXPECT_GT(agree, 0.8 * logits.size());
}

TEST(Fit, EmptyTargetsLeaveParametersUnchanged) {
  auto p = aae_init<double>({3, 3, 4, 2, 0, 0}, 0.0, 1);
  const auto before = p.enc1.W;
  const auto r = fit_pseudo_targets(p, random_sparse(5, 3, 1.0, 1), {}, RowSparse(5, 3), {});
  EXPECT_TRUE(r.epoch_loss.empty());
  EXPECT_EQ(p.enc1.W, before);
}

TEST(Checkpoint, FloatRoundedParamsRoundTripExactly) {
  auto p = aae_init<double>({6, 5, 4, 3, 2, 0}, 0.25, 9);
  p.enc1.b.setRandom();
  round_to_float(p);
  std::stringstream buf;
  write_params(buf, p);
  const auto q = read_params(buf);
  EXPECT_EQ(q.shape(), p.shape());
  EXPECT_EQ(q.dropout_rate, 0.25);
  zip_tensors([](const char* name, const auto& a, const auto& b) { EXPECT_EQ(a, b) << name; }, p, q);
  std::stringstream again;
  write_params(again, p);
  std::stringstream cut(again.str().substr(0, again.str().size() - 5));
  EXPECT_THROW(read_params(cut), Error);
}

}  // namespace
}  // namespace mtal::nn
