#include <atomic>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "mtal/protocol/evaluate.hpp"
#include "mtal/protocol/learning.hpp"
#include "mtal/protocol/round.hpp"
#include "support.hpp"

namespace mtal {
namespace {

using namespace std::chrono_literals;

Federation toy_federation(const ExperimentConfig& c, std::uint64_t seed = 0) {
  return prepare_federation(c, load_data(c), seed);
}

/// Predicts half the mean pseudo-target of each row in every column.
class HalfRowMean final : public LocalModel {
 public:
  HalfRowMean(const DomainView& v, Index width) : rows_(v.rows()), width_(width) {}
  void fit(const RowSparse& t, std::uint64_t) override {
    mean_ = Eigen::VectorXd::Zero(rows_);
    for (Index r = 0; r < t.outerSize(); ++r) {
      double s = 0.0;
      int n = 0;
      for (RowSparse::InnerIterator it(t, r); it; ++it, ++n) s += it.value();
      if (n > 0) mean_[r] = s / n;
    }
  }
  Eigen::MatrixXd predict() const override {
    Eigen::MatrixXd out(rows_, width_);
    for (Index r = 0; r < rows_; ++r) out.row(r).setConstant(0.5 * mean_[r]);
    return out;
  }

 private:
  Index rows_, width_;
  Eigen::VectorXd mean_;
};

ModelFactory half_row_mean() {
  return [](const DomainView& v, Index w) { return std::make_unique<HalfRowMean>(v, w); };
}

OrientedDomain block(std::uint32_t id, std::vector<std::uint32_t> cols, bool filled) {
  OrientedDomain o;
  o.domain_id = id;
  o.row_ids = {0, 1};
  o.col_ids = std::move(cols);
  o.ratings = RowSparse(2, static_cast<Index>(o.col_ids.size()));
  if (filled) {
    for (Index c = 0; c < o.cols(); ++c) o.ratings.insert(c % 2, c) = 1.0 + c;
  }
  o.ratings.makeCompressed();
  return o;
}

TEST(Evaluate, DomainWithoutTrainingCellsReportsNaNLoss) {
  DomainView a, b;
  a.train.resize(2, 2);
  a.test.resize(2, 2);
  a.test.insert(1, 0) = 4.0;
  a.test.makeCompressed();
  b.train.resize(1, 1);
  b.train.insert(0, 0) = 3.0;
  b.train.makeCompressed();
  b.test.resize(1, 1);
  const std::vector<DomainScores> scores{{Eigen::VectorXd(0), Eigen::VectorXd::Constant(1, 3.0)},
                                         {Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd(0)}};
  std::map<std::string, double> got;
  for (const auto& r : evaluate({a, b}, scores, 0, 0)) got[r.domain + "/" + r.metric] = r.value;
  EXPECT_TRUE(std::isnan(got.at("0/loss")));
  EXPECT_DOUBLE_EQ(got.at("0/rmse"), 1.0);
  EXPECT_EQ(got.count("1/rmse"), 0u);
  EXPECT_DOUBLE_EQ(got.at("all/loss"), overarching_loss(Eigen::VectorXd::Constant(1, 2.0),
                                                        Eigen::VectorXd::Constant(1, 3.0), FeedbackKind::kExplicit));
  EXPECT_DOUBLE_EQ(got.at("all/rmse"), 1.0);
}

TEST(ColdCells, RowsAndColumnsWithoutTrainingCellsGetNoStep) {
  RowSparse train(3, 3), test(3, 3);
  train.insert(0, 0) = 1.0;
  train.insert(0, 1) = 1.0;
  train.insert(1, 0) = 1.0;
  train.makeCompressed();
  test.insert(0, 2) = 1.0;
  test.insert(1, 1) = 1.0;
  test.insert(2, 0) = 1.0;
  test.makeCompressed();
  const auto rows = empty_rows(train), cols = empty_cols(train);
  EXPECT_EQ(rows, (std::vector<char>{0, 0, 1}));
  EXPECT_EQ(cols, (std::vector<char>{0, 0, 1}));
  Eigen::VectorXd step = Eigen::VectorXd::Constant(3, 2.0);
  zero_cold(step, test, rows, cols);
  // (0,2) sits in a cold column, (2,0) in a cold row
  EXPECT_EQ(step, Eigen::Vector3d(0.0, 2.0, 0.0));
  Eigen::VectorXd untouched = Eigen::VectorXd::Constant(3, 2.0);
  zero_cold(untouched, test, {}, {});
  EXPECT_EQ(untouched, Eigen::VectorXd::Constant(3, 2.0));
}

TEST(Assembly, WidthIsTheSumOfDomainBlocks) {
  const std::vector<OrientedDomain> train{block(0, {0, 1}, true), block(1, {2, 3, 4}, true)};
  const auto index = build_global_index(train);
  const auto map = build_alignment(train);
  std::vector<DomainView> views;
  for (std::uint32_t k = 0; k < 2; ++k) {
    views.push_back(make_view(train[k], block(k, train[k].col_ids, false), AlignmentMode::kUserAligned, {},
                              index.offset(k)));
  }
  EXPECT_EQ(index.width, 5);
  const auto r1 = round_residuals(views[1]);
  const auto shard = residual_shard(views[1], r1, map.pair(1, 0), 0, 1);
  const auto t = assemble_pseudo_targets(views[0], round_residuals(views[0]), {shard}, map, index);
  EXPECT_EQ(t.rows(), 2);
  EXPECT_EQ(t.cols(), 5);
  EXPECT_EQ(t.nonZeros(), 5);
  // the peer's residuals land in its own column block
  const Eigen::MatrixXd dense(t);
  EXPECT_DOUBLE_EQ(dense(0, 2), static_cast<float>(r1[0]));
}

class AssemblyErrors : public ::testing::Test {
 protected:
  void SetUp() override {
    fed = toy_federation(test::toy_config());
    residual = round_residuals(fed.views[0]);
  }
  Shard single(std::uint32_t id, Index col, std::uint32_t receiver = 0) const {
    Shard s;
    s.round = 1;
    s.sender = 1;
    s.receiver = receiver;
    s.rows = {id};
    s.cols = {static_cast<std::uint32_t>(col)};
    s.values = {0.5f};
    return s;
  }
  RowSparse assemble(const std::vector<Shard>& in) const {
    return assemble_pseudo_targets(fed.views[0], residual, in, fed.map, fed.index);
  }
  Federation fed;
  Eigen::VectorXd residual;
};

TEST_F(AssemblyErrors, ValidShardIsAccepted) {
  const auto id = fed.map.pair(0, 1).ids.front();
  EXPECT_NO_THROW(assemble({single(id, fed.index.offset(1))}));
}

TEST_F(AssemblyErrors, UnknownEntity) {
  EXPECT_THROW(assemble({single(99999, fed.index.offset(1))}), ProtocolError);
}

TEST_F(AssemblyErrors, ColumnOutsideSenderBlock) {
  const auto id = fed.map.pair(0, 1).ids.front();
  EXPECT_THROW(assemble({single(id, fed.index.offset(0))}), ProtocolError);
  EXPECT_THROW(assemble({single(id, fed.index.width)}), ProtocolError);
}

TEST_F(AssemblyErrors, DuplicateCell) {
  const auto id = fed.map.pair(0, 1).ids.front();
  const auto s = single(id, fed.index.offset(1));
  EXPECT_THROW(assemble({s, s}), ProtocolError);
}

TEST_F(AssemblyErrors, MisaddressedShard) {
  const auto id = fed.map.pair(0, 1).ids.front();
  EXPECT_THROW(assemble({single(id, fed.index.offset(1), 2)}), ProtocolError);
}

double weight_objective(const Eigen::MatrixXd& Y, const Eigen::VectorXd& r, const Eigen::VectorXd& w) {
  return 0.5 * (Y * w - r).squaredNorm() / static_cast<double>(r.size());
}

TEST(AssistanceWeights, MatchGridSearchOnTwoModels) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd Y(200, 2);
  Eigen::VectorXd r(200);
  for (Index i = 0; i < 200; ++i) {
    Y(i, 0) = n(rng);
    Y(i, 1) = n(rng);
    r[i] = 0.3 * Y(i, 0) + 0.7 * Y(i, 1) + 0.2 * n(rng);
  }
  nn::QuasiNewtonOptions opt;
  opt.iterations = 50;
  const Eigen::VectorXd w = optimize_assistance_weights(Y, r, opt);
  double best = 1e300, best_w = 0.0;
  for (int g = 0; g <= 1000; ++g) {
    const double a = g / 1000.0;
    const double v = weight_objective(Y, r, Eigen::Vector2d(a, 1 - a));
    if (v < best) best = v, best_w = a;
  }
  EXPECT_NEAR(w[0], best_w, 1e-3);
  EXPECT_LE(weight_objective(Y, r, w), best + 1e-12);
  EXPECT_NEAR(w.sum(), 1.0, 1e-12);
}

TEST(AssistanceWeights, SingleModelGetsAllTheWeight) {
  const Eigen::VectorXd w = optimize_assistance_weights(Eigen::MatrixXd::Ones(4, 1), Eigen::VectorXd::Zero(4));
  ASSERT_EQ(w.size(), 1);
  EXPECT_EQ(w[0], 1.0);
}

TEST(LearningRate, FullStepWhenTheDirectionIsTheResidual) {
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(20, 1.0, 5.0);
  const Eigen::VectorXd f = Eigen::VectorXd::Zero(20);
  EXPECT_NEAR(optimize_learning_rate(f, t, t, FeedbackKind::kExplicit, 0.1), 1.0, 1e-6);
  EXPECT_NEAR(optimize_learning_rate(f, 2.0 * t, t, FeedbackKind::kExplicit, 0.1), 0.5, 1e-6);
}

TEST(LearningRate, AscentDirectionGivesZero) {
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(20, 1.0, 5.0);
  EXPECT_EQ(optimize_learning_rate(Eigen::VectorXd::Zero(20), -t, t, FeedbackKind::kExplicit, 0.1), 0.0);
  Eigen::VectorXd labels = Eigen::VectorXd::Zero(10);
  labels.head(5).setOnes();
  Eigen::VectorXd d = Eigen::VectorXd::Ones(10);
  d.head(5) *= -1.0;
  EXPECT_EQ(optimize_learning_rate(Eigen::VectorXd::Zero(10), d, labels, FeedbackKind::kImplicit, 0.1), 0.0);
}

TEST(Learning, SingleDomainWithAnOracleModelIsPlainBoosting) {
  auto c = test::toy_config();
  c.synthetic.users = 6;
  c.synthetic.items = 6;
  c.synthetic.density = 0.7;
  c.partition = PartitionKind::kUniform;
  c.domains = 1;
  c.alignment = AlignmentMode::kUserAligned;
  c.assist.rounds = 5;
  auto fed = toy_federation(c);
  ASSERT_EQ(fed.views.size(), 1u);
  const DomainView start = fed.views[0];
  InProcessBus bus(1);
  const auto result = run_learning(fed.views, fed.map, fed.index, bus, half_row_mean(), c.assist);

  // reference: F += eta * 0.5 * rowmean(t - F), rows without train cells stay put
  const auto& tr = start.train;
  Eigen::VectorXd f = start.f_train, g = start.f_test;
  for (std::uint32_t round = 1; round <= c.assist.rounds; ++round) {
    Eigen::VectorXd h(tr.rows());
    std::vector<bool> seen(static_cast<std::size_t>(tr.rows()), false);
    Index k = 0;
    for (Index r = 0; r < tr.rows(); ++r) {
      double s = 0.0;
      int n = 0;
      for (RowSparse::InnerIterator it(tr, r); it; ++it, ++k, ++n) s += it.value() - f[k];
      h[r] = n > 0 ? 0.5 * (s / n) : 0.0;
      seen[static_cast<std::size_t>(r)] = n > 0;
    }
    k = 0;
    for (Index r = 0; r < tr.rows(); ++r) {
      for (RowSparse::InnerIterator it(tr, r); it; ++it, ++k) f[k] += c.assist.eta * h[r];
    }
    k = 0;
    for (Index r = 0; r < start.test.rows(); ++r) {
      for (RowSparse::InnerIterator it(start.test, r); it; ++it, ++k) {
        if (seen[static_cast<std::size_t>(r)]) g[k] += c.assist.eta * h[r];
      }
    }
    EXPECT_TRUE(result.history[0][round].f_train == f) << "round " << round;
    EXPECT_TRUE(result.history[0][round].f_test == g) << "round " << round;
  }
}

class ToyLearning : public ::testing::Test {
 protected:
  static LearningResult learn(Federation& fed, const ExperimentConfig& c, Bus& bus) {
    return run_learning(fed.views, fed.map, fed.index, bus, aae_factory(c.local), c.assist);
  }
};

TEST_F(ToyLearning, InProcessAndTcpAgreeBitwise) {
  const auto c = test::toy_config();
  auto a = toy_federation(c), b = toy_federation(c);
  ASSERT_EQ(a.views.size(), 3u);
  InProcessBus local(3);
  TcpBus tcp(3, "127.0.0.1", 0);
  const auto ra = learn(a, c, local);
  const auto rb = learn(b, c, tcp);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t t = 0; t <= c.assist.rounds; ++t) {
      EXPECT_TRUE(ra.history[k][t].f_train == rb.history[k][t].f_train) << k << "/" << t;
      EXPECT_TRUE(ra.history[k][t].f_test == rb.history[k][t].f_test) << k << "/" << t;
    }
  }
}

TEST_F(ToyLearning, PredictionStageReplaysEveryRoundBitwise) {
  auto c = test::toy_config();
  c.assist.optimize_weights = true;
  c.assist.eta_mode = EtaMode::kOptimized;
  auto fed = toy_federation(c);
  InProcessBus bus(3);
  const auto result = learn(fed, c, bus);
  for (std::uint32_t t = 0; t <= c.assist.rounds; ++t) {
    auto cut = result.ensembles;
    for (auto& e : cut) e.rounds.resize(t);
    InProcessBus replay(3);
    const auto scores = predict(cut, fed.views, fed.map, fed.index, replay, 10s);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_TRUE(scores[k].train == result.history[k][t].f_train) << "domain " << k << " round " << t;
      EXPECT_TRUE(scores[k].test == result.history[k][t].f_test) << "domain " << k << " round " << t;
    }
  }
}

TEST_F(ToyLearning, StoredWeightsLieOnTheSimplex) {
  auto c = test::toy_config();
  c.assist.optimize_weights = true;
  auto fed = toy_federation(c);
  InProcessBus bus(3);
  const auto result = learn(fed, c, bus);
  for (const auto& e : result.ensembles) {
    ASSERT_EQ(e.rounds.size(), c.assist.rounds);
    for (const auto& r : e.rounds) {
      ASSERT_EQ(r.w.size(), 3);
      EXPECT_NEAR(r.w.sum(), 1.0, 1e-9);
      EXPECT_GE(r.w.minCoeff(), 0.0);
    }
  }
}

TEST_F(ToyLearning, EnsembleCheckpointsReplayExactly) {
  const auto c = test::toy_config();
  auto fed = toy_federation(c);
  InProcessBus bus(3);
  const auto result = learn(fed, c, bus);
  std::vector<EnsemblePredictor> loaded;
  for (std::size_t k = 0; k < 3; ++k) {
    std::stringstream buf;
    write_ensemble(buf, result.ensembles[k]);
    loaded.push_back(read_ensemble(buf, fed.views[k]));
  }
  InProcessBus replay(3);
  const auto scores = predict(loaded, fed.views, fed.map, fed.index, replay, 10s);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_TRUE(scores[k].test == fed.views[k].f_test);
  std::stringstream wrong;
  write_ensemble(wrong, result.ensembles[0]);
  EXPECT_THROW(read_ensemble(wrong, fed.views[1]), Error);
}

TEST_F(ToyLearning, OnlyResidualsAndPredictionsCrossTheBus) {
  const auto c = test::toy_config();
  const auto data = load_data(c);
  auto fed = prepare_federation(c, data, 0);
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> raw;
  for (const auto& e : data.ratings.entries) raw[{e.user, e.item}] = e.value;

  std::mutex m;
  std::vector<std::vector<std::byte>> wire;
  InProcessBus bus(3);
  bus.set_tap([&](std::span<const std::byte> b) {
    std::lock_guard lock(m);
    wire.emplace_back(b.begin(), b.end());
  });
  const auto result = learn(fed, c, bus);
  InProcessBus replay(3);
  replay.set_tap([&](std::span<const std::byte> b) {
    std::lock_guard lock(m);
    wire.emplace_back(b.begin(), b.end());
  });
  predict(result.ensembles, fed.views, fed.map, fed.index, replay, 10s);

  std::set<std::uint32_t> weights;
  for (const auto& e : result.ensembles) {
    for (const auto& r : e.rounds) {
      const auto& p = dynamic_cast<const AaeModel&>(*r.model).params();
      nn::zip_tensors(
          [&](const char*, const auto& t) {
            for (Index i = 0; i < t.size(); ++i) {
              const float f = static_cast<float>(t.data()[i]);
              if (f != 0.0f) weights.insert(std::bit_cast<std::uint32_t>(f));
            }
          },
          p);
    }
  }

  ASSERT_EQ(wire.size(), 3u * 2u * (2u * c.assist.rounds + 1u));
  for (const auto& bytes : wire) {
    const Shard s = decode_shard(bytes);
    ASSERT_TRUE(s.kind == MessageKind::kResidual || s.kind == MessageKind::kPrediction);
    // header, cells, values and checksum; nothing else rides along
    EXPECT_EQ(bytes.size(), 44u + 8u * s.cells() + 4u * s.planes * s.cells());
    const auto& ids = fed.map.pair(s.sender, s.receiver).ids;
    const std::uint32_t block = s.kind == MessageKind::kResidual ? s.sender : s.receiver;
    for (std::size_t i = 0; i < s.cells(); ++i) {
      EXPECT_TRUE(std::binary_search(ids.begin(), ids.end(), s.rows[i]));
      EXPECT_EQ(fed.index.owner(s.cols[i]), block);
      const auto item = fed.index.dataset_ids[s.cols[i]];
      const auto it = raw.find({s.rows[i], item});
      for (std::size_t p = 0; p < s.planes; ++p) {
        const float v = s.plane(p)[i];
        if (it != raw.end()) {
          EXPECT_NE(v, static_cast<float>(it->second));
        }
        if (v != 0.0f) {
          EXPECT_FALSE(weights.count(std::bit_cast<std::uint32_t>(v)));
        }
      }
    }
  }
}

TEST_F(ToyLearning, WorkerFailureAbortsTheRunWithItsRound) {
  const auto c = test::toy_config();
  auto fed = toy_federation(c);
  std::array<std::atomic<int>, 3> calls{};
  ModelFactory flaky = [&](const DomainView& v, Index width) -> std::unique_ptr<LocalModel> {
    if (v.id == 1 && ++calls[1] == 2) throw Error("disk on fire");
    return std::make_unique<HalfRowMean>(v, width);
  };
  InProcessBus bus(3);
  auto cfg = c.assist;
  cfg.timeout = 20s;
  const auto start = std::chrono::steady_clock::now();
  try {
    run_learning(fed.views, fed.map, fed.index, bus, flaky, cfg);
    FAIL() << "expected an abort";
  } catch (const AbortError& e) {
    EXPECT_EQ(e.round(), 2u);
    const std::string what = e.what();
    EXPECT_NE(what.find("domain 1 failed in round 2"), std::string::npos) << what;
    EXPECT_NE(what.find("disk on fire"), std::string::npos) << what;
  }
  EXPECT_LT(std::chrono::steady_clock::now() - start, 10s);
}

TEST(Learning, RejectsMismatchedInputs) {
  const auto c = test::toy_config();
  auto fed = toy_federation(c);
  InProcessBus two(2);
  EXPECT_THROW(run_learning(fed.views, fed.map, fed.index, two, half_row_mean(), c.assist), DimensionError);
}

}  // namespace
}  // namespace mtal
