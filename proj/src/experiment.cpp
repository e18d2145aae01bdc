#include "mtal/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <tuple>

namespace mtal {
namespace {

// Stream tags for derive_seed.
enum : std::uint64_t { kSplitTag = 1, kPartitionTag, kAlignmentTag, kLearningTag, kPrivacyTag, kAloneTag };

std::filesystem::path under(const std::string& dir, const char* name) { return std::filesystem::path(dir) / name; }

}  // namespace

LoadedData load_data(const ExperimentConfig& config) {
  LoadedData data;
  switch (config.source) {
    case DataSource::kMovieLens100K:
    case DataSource::kMovieLens1M: {
      const bool ml1m = config.source == DataSource::kMovieLens1M;
      data.ratings = load_ratings(under(config.path, ml1m ? "ratings.dat" : "u.data").string(),
                                  ml1m ? RatingFormat::kDoubleColonSeparated : RatingFormat::kTabSeparated);
      const auto items = load_movielens_items(under(config.path, ml1m ? "movies.dat" : "u.item").string());
      const auto users = load_movielens_users(under(config.path, ml1m ? "users.dat" : "u.user").string());
      const auto side = build_side_features(data.ratings, users,
                                            ml1m ? movielens1m_user_schema() : movielens_user_schema(), items,
                                            movielens_item_schema());
      data.ratings.user_features = side.user;
      data.ratings.item_features = side.item;
      data.genres = genre_flags(data.ratings, items);
      break;
    }
    case DataSource::kRatings:
      data.ratings = load_ratings(config.path, config.format);
      break;
    case DataSource::kSnapshot:
      data.ratings = load_snapshot(config.path);
      break;
    case DataSource::kSynthetic: {
      auto [ratings, genres] = make_synthetic(config.synthetic);
      data.ratings = std::move(ratings);
      data.genres = std::move(genres);
      break;
    }
  }
  logger()->info("loaded {} ratings, {} users, {} items", data.ratings.entries.size(), data.ratings.num_users(),
                 data.ratings.num_items());
  return data;
}

Federation prepare_federation(const ExperimentConfig& config, const LoadedData& data, std::uint64_t seed) {
  const auto& full = data.ratings;
  auto [train, test] = split_train_test(full, config.train_ratio, derive_seed(seed, kSplitTag));
  if (config.feedback == FeedbackKind::kImplicit) {
    const std::optional<double> threshold =
        config.dense_implicit ? std::nullopt : std::optional<double>(config.implicit_threshold);
    train = to_implicit(train, threshold);
    test = to_implicit(test, threshold);
  }

  PartitionPlan plan;
  const auto partition_seed = derive_seed(config.partition_seed, kPartitionTag, seed);
  if (config.scenario == Scenario::kJoint) {
    plan.users.emplace_back(static_cast<std::size_t>(full.num_users()));
    plan.items.emplace_back(static_cast<std::size_t>(full.num_items()));
    std::iota(plan.users[0].begin(), plan.users[0].end(), 0u);
    std::iota(plan.items[0].begin(), plan.items[0].end(), 0u);
  } else if (config.partition == PartitionKind::kGenre) {
    if (!data.genres) throw ConfigError("genre partition needs genre flags, which this source lacks");
    plan = genre_plan(full, *data.genres, config.genre_rule, partition_seed);
  } else {
    plan = uniform_plan(full, config.domains, partition_seed);
  }
  const auto train_domains = apply_partition(train, plan);
  const auto test_domains = apply_partition(test, plan);

  const AlignmentMode mode = config.alignment_mode();
  std::vector<OrientedDomain> train_o, test_o;
  for (std::size_t k = 0; k < train_domains.size(); ++k) {
    train_o.push_back(orient(train_domains[k], mode));
    test_o.push_back(orient(test_domains[k], mode));
  }

  Federation fed;
  fed.map = build_alignment(train_o);
  if (config.alignment_fraction < 1.0) {
    fed.map = restrict_alignment(fed.map, config.alignment_fraction, derive_seed(seed, kAlignmentTag));
  }
  fed.index = build_global_index(train_o);
  ViewOptions options;
  options.kind = config.feedback;
  options.dense_universe = config.dense_implicit;
  options.side_info = config.side_info;
  fed.views.reserve(train_o.size());
  for (std::size_t k = 0; k < train_o.size(); ++k) {
    fed.views.push_back(make_view(train_o[k], test_o[k], mode, options, fed.index.offset(k)));
  }
  return fed;
}

std::filesystem::path checkpoint_dir(const std::filesystem::path& output_dir, std::uint64_t seed) {
  return output_dir / "checkpoints" / ("seed" + std::to_string(seed));
}

namespace {

std::filesystem::path ensemble_path(const std::filesystem::path& dir, std::size_t k) {
  return dir / ("domain" + std::to_string(k) + ".ens");
}

std::vector<DomainScores> current_scores(const std::vector<DomainView>& views) {
  std::vector<DomainScores> out;
  for (const auto& v : views) out.push_back({v.f_train, v.f_test});
  return out;
}

void append(std::vector<MetricRow>& rows, std::vector<MetricRow> more) {
  rows.insert(rows.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
}

}  // namespace

std::vector<MetricRow> run_seed(const ExperimentConfig& config, const LoadedData& data, std::uint64_t seed) {
  Federation fed = prepare_federation(config, data, seed);
  std::vector<MetricRow> rows = evaluate(fed.views, current_scores(fed.views), 0, seed);

  if (config.scenario == Scenario::kMtal) {
    LearningConfig lc = config.assist;
    lc.seed = derive_seed(seed, kLearningTag);
    lc.privacy.seed = derive_seed(seed, kPrivacyTag);
    auto bus = make_bus(config.bus, fed.views.size(), config.host, config.port);
    const auto result = run_learning(fed.views, fed.map, fed.index, *bus, aae_factory(config.local), lc);
    for (std::uint32_t t = 1; t <= lc.rounds; ++t) append(rows, evaluate(fed.views, scores_at(result, t), t, seed));
    if (config.checkpoints) {
      const auto dir = checkpoint_dir(config.output_dir, seed);
      std::filesystem::create_directories(dir);
      for (std::size_t k = 0; k < result.ensembles.size(); ++k) {
        std::ofstream out(ensemble_path(dir, k), std::ios::binary);
        if (!out) throw Error("cannot write " + ensemble_path(dir, k).string());
        write_ensemble(out, result.ensembles[k]);
      }
    }
  } else {
    const auto checkpoints = run_alone(fed.views, config.local, config.alone_checkpoints,
                                       derive_seed(seed, kAloneTag), config.assist.fit_slots);
    for (std::uint32_t c = 0; c < checkpoints.size(); ++c) append(rows, evaluate(fed.views, checkpoints[c], c + 1, seed));
  }
  return rows;
}

std::vector<MetricRow> evaluate_checkpoints(const ExperimentConfig& config, const LoadedData& data,
                                            std::uint64_t seed, const std::filesystem::path& dir) {
  if (config.scenario != Scenario::kMtal) throw ConfigError("only mtal runs write ensemble checkpoints");
  const Federation fed = prepare_federation(config, data, seed);
  std::vector<EnsemblePredictor> ensembles;
  for (std::size_t k = 0; k < fed.views.size(); ++k) {
    std::ifstream in(ensemble_path(dir, k), std::ios::binary);
    if (!in) throw Error("cannot open " + ensemble_path(dir, k).string());
    ensembles.push_back(read_ensemble(in, fed.views[k]));
  }
  const auto rounds = static_cast<std::uint32_t>(ensembles.empty() ? 0 : ensembles[0].rounds.size());
  auto bus = make_bus(config.bus, fed.views.size(), config.host, config.port);
  const auto scores = predict(ensembles, fed.views, fed.map, fed.index, *bus, config.assist.timeout);
  return evaluate(fed.views, scores, rounds, seed);
}

std::vector<SummaryRow> summarize(const std::vector<MetricRow>& rows) {
  using Key = std::tuple<std::uint32_t, std::string, std::string, std::string>;
  std::map<Key, std::vector<double>> groups;
  std::vector<Key> order;
  for (const auto& r : rows) {
    Key key{r.round, r.domain, r.split, r.metric};
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) order.push_back(key);
    if (std::isfinite(r.value)) it->second.push_back(r.value);
  }
  std::vector<SummaryRow> out;
  for (const auto& key : order) {
    const auto& v = groups[key];
    SummaryRow s{std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key), 0.0, 0.0, v.size()};
    if (!v.empty()) {
      s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.stderr_ = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
      }
    } else {
      s.mean = std::nan("");
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "seed,round,domain,split,metric,value\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.seed << ',' << r.round << ',' << r.domain << ',' << r.split << ',' << r.metric << ',' << r.value << '\n';
  }
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "round,domain,split,metric,mean,stderr,n\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.round << ',' << r.domain << ',' << r.split << ',' << r.metric << ',' << r.mean << ',' << r.stderr_ << ','
        << r.n << '\n';
  }
}

std::vector<MetricRow> run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);
  {
    std::ofstream out(config.output_dir / "config.ini");
    write_config(out, config);
  }
  const LoadedData data = load_data(config);
  std::vector<MetricRow> rows;
  for (auto seed : config.seeds) {
    const auto start = std::chrono::steady_clock::now();
    append(rows, run_seed(config, data, seed));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    logger()->info("seed {} finished in {:.1f} s", seed, secs);
    std::ofstream out(config.output_dir / "metrics.csv");
    write_metrics_csv(out, rows);
  }
  std::ofstream out(config.output_dir / "summary.csv");
  write_summary_csv(out, summarize(rows));
  return rows;
}

}  // namespace mtal
