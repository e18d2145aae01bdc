#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mtal/ingest.hpp"
#include "mtal/protocol/baselines.hpp"
#include "mtal/protocol/evaluate.hpp"

namespace mtal {

enum class Scenario { kMtal, kAlone, kJoint };
Scenario parse_scenario(std::string_view name);
std::string_view to_string(Scenario scenario);

enum class DataSource { kMovieLens100K, kMovieLens1M, kRatings, kSnapshot, kSynthetic };
DataSource parse_data_source(std::string_view name);
std::string_view to_string(DataSource source);

enum class PartitionKind { kGenre, kUniform };
PartitionKind parse_partition_kind(std::string_view name);
std::string_view to_string(PartitionKind kind);

GenreRule parse_genre_rule(std::string_view name);
std::string_view to_string(GenreRule rule);

struct ExperimentConfig {
  // [data]
  DataSource source = DataSource::kMovieLens100K;
  std::string path;  // directory for MovieLens sources, file otherwise
  RatingFormat format = RatingFormat::kTabSeparated;
  SyntheticSpec synthetic;

  // [experiment]
  Scenario scenario = Scenario::kMtal;
  FeedbackKind feedback = FeedbackKind::kExplicit;
  /// Implicit only. true: unobserved cells are negatives and MAP ranks every
  /// unobserved item; false: ratings are thresholded and MAP ranks test cells.
  bool dense_implicit = true;
  double implicit_threshold = 3.5;
  std::optional<AlignmentMode> alignment;  // default follows the partition
  std::vector<std::uint64_t> seeds{0, 1, 2, 3};
  double train_ratio = 0.9;

  // [partition]
  PartitionKind partition = PartitionKind::kGenre;
  std::size_t domains = 8;
  GenreRule genre_rule = GenreRule::kFirstFlag;
  std::uint64_t partition_seed = 0;

  // [local]
  AaeModelConfig local;
  bool side_info = false;

  // [assist]
  LearningConfig assist;
  double alignment_fraction = 1.0;
  std::uint32_t alone_checkpoints = 10;  // Alone/Joint report every local.epochs epochs

  // [bus]
  BusBackend bus = BusBackend::kInProcess;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  // [output]
  std::filesystem::path output_dir = "out";
  bool checkpoints = false;

  AlignmentMode alignment_mode() const;
  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

/// INI text with sections data, experiment, partition, local, assist,
/// privacy, bus and output. Unknown keys are errors.
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
/// Applies "section.key=value" overrides.
void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& overrides);
/// Writes every field, so the result parses back to the same config.
void write_config(std::ostream& out, const ExperimentConfig& config);

struct LoadedData {
  RatingDataset ratings;
  std::optional<GenreFlags> genres;
};

LoadedData load_data(const ExperimentConfig& config);

/// Everything one seed's run needs, rebuilt deterministically from the config.
struct Federation {
  std::vector<DomainView> views;
  AlignmentMap map;
  GlobalIndex index;
};

Federation prepare_federation(const ExperimentConfig& config, const LoadedData& data, std::uint64_t seed);

/// Runs the configured scenario for one seed. MTAL rounds 0..T, or Alone /
/// Joint checkpoints 1..C with the base model at round 0.
std::vector<MetricRow> run_seed(const ExperimentConfig& config, const LoadedData& data, std::uint64_t seed);

struct SummaryRow {
  std::uint32_t round = 0;
  std::string domain, split, metric;
  double mean = 0.0, stderr_ = 0.0;
  std::size_t n = 0;
};

/// Mean and standard error over seeds per (round, domain, split, metric).
std::vector<SummaryRow> summarize(const std::vector<MetricRow>& rows);

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

/// All seeds; writes config.ini, metrics.csv, summary.csv and, when enabled,
/// checkpoints/seed<s>/domain<k>.ens into the output directory.
std::vector<MetricRow> run_experiment(const ExperimentConfig& config);

/// Reloads a seed's checkpoints, replays the prediction stage and evaluates.
std::vector<MetricRow> evaluate_checkpoints(const ExperimentConfig& config, const LoadedData& data,
                                            std::uint64_t seed, const std::filesystem::path& dir);

std::filesystem::path checkpoint_dir(const std::filesystem::path& output_dir, std::uint64_t seed);

}  // namespace mtal
