// Command-line front end: ingest, run and eval.
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "mtal/experiment.hpp"

namespace {

constexpr int kFailure = 1;
constexpr int kUsage = 2;

mtal::ExperimentConfig config_from(const std::string& path, const std::vector<std::string>& overrides) {
  mtal::ExperimentConfig config = path.empty() ? mtal::ExperimentConfig{} : mtal::load_config(path);
  mtal::apply_overrides(config, overrides);
  return config;
}

int cmd_ingest(const std::string& source, const std::string& input, const std::string& format,
               const std::string& output) {
  mtal::ExperimentConfig config;
  config.source = mtal::parse_data_source(source);
  config.path = input;
  config.format = mtal::parse_rating_format(format);
  if (config.source == mtal::DataSource::kSynthetic || config.source == mtal::DataSource::kSnapshot) {
    throw mtal::ConfigError("ingest reads movielens100k, movielens1m or ratings sources");
  }
  const auto data = mtal::load_data(config);
  mtal::save_snapshot(output, data.ratings);
  std::cout << "users " << data.ratings.num_users() << "\nitems " << data.ratings.num_items() << "\nratings "
            << data.ratings.entries.size() << "\nsnapshot " << output << '\n';
  return 0;
}

int cmd_run(const mtal::ExperimentConfig& config) {
  const auto rows = mtal::run_experiment(config);
  const auto summary = mtal::summarize(rows);
  std::uint32_t last = 0;
  for (const auto& s : summary) last = std::max(last, s.round);
  for (const auto& s : summary) {
    if (s.domain == "all" && s.split == "test" && (s.round == 0 || s.round == last)) {
      std::cout << "round " << s.round << ' ' << s.metric << ' ' << s.mean << " +- " << s.stderr_ << " (n=" << s.n
                << ")\n";
    }
  }
  std::cout << "wrote " << (config.output_dir / "metrics.csv").string() << '\n';
  return 0;
}

int cmd_eval(const mtal::ExperimentConfig& config, std::uint64_t seed, const std::string& dir,
             const std::string& csv) {
  const auto data = mtal::load_data(config);
  const auto rows = mtal::evaluate_checkpoints(
      config, data, seed, dir.empty() ? mtal::checkpoint_dir(config.output_dir, seed) : std::filesystem::path(dir));
  if (!csv.empty()) {
    std::ofstream out(csv);
    mtal::write_metrics_csv(out, rows);
  }
  std::cout.precision(10);
  for (const auto& r : rows) {
    if (r.split == "test") std::cout << "domain " << r.domain << ' ' << r.metric << ' ' << r.value << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-domain assisted learning over a message bus"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  auto* ingest = app.add_subcommand("ingest", "Parse raw ratings into a binary snapshot");
  std::string source = "movielens100k", input, format = "tab", output;
  ingest->add_option("--source", source, "movielens100k, movielens1m or ratings");
  ingest->add_option("--input", input, "Dataset directory or ratings file")->required();
  ingest->add_option("--format", format, "Ratings file format: tab, double_colon or csv");
  ingest->add_option("--output", output, "Snapshot path")->required();

  std::string config_path, out_dir;
  std::vector<std::string> overrides;
  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  run->add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
  run->add_option("--set", overrides, "Override, section.key=value (repeatable)");
  run->add_option("--output", out_dir, "Output directory (overrides output.dir)");

  auto* eval = app.add_subcommand("eval", "Replay saved ensembles through the prediction stage");
  std::uint64_t seed = 0;
  std::string ckpt_dir, csv;
  eval->add_option("--config", config_path, "INI config file used for the run")->required()->check(
      CLI::ExistingFile);
  eval->add_option("--set", overrides, "Override, section.key=value (repeatable)");
  eval->add_option("--seed", seed, "Seed whose checkpoints to load");
  eval->add_option("--checkpoints", ckpt_dir, "Checkpoint directory (default <output>/checkpoints/seed<s>)");
  eval->add_option("--csv", csv, "Write the metric rows to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));
    if (*ingest) return cmd_ingest(source, input, format, output);
    if (!out_dir.empty()) overrides.push_back("output.dir=" + out_dir);
    const auto config = config_from(config_path, overrides);
    if (*run) return cmd_run(config);
    return cmd_eval(config, seed, ckpt_dir, csv);
  } catch (const mtal::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
