#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mtal/experiment.hpp"

namespace mtal {

Scenario parse_scenario(std::string_view name) {
  if (name == "mtal") return Scenario::kMtal;
  if (name == "alone") return Scenario::kAlone;
  if (name == "joint") return Scenario::kJoint;
  throw ConfigError("unknown scenario '" + std::string(name) + "' (expected mtal, alone or joint)");
}

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::kMtal: return "mtal";
    case Scenario::kAlone: return "alone";
    case Scenario::kJoint: return "joint";
  }
  return "?";
}

DataSource parse_data_source(std::string_view name) {
  if (name == "movielens100k" || name == "ml100k") return DataSource::kMovieLens100K;
  if (name == "movielens1m" || name == "ml1m") return DataSource::kMovieLens1M;
  if (name == "ratings") return DataSource::kRatings;
  if (name == "snapshot") return DataSource::kSnapshot;
  if (name == "synthetic") return DataSource::kSynthetic;
  throw ConfigError("unknown data source '" + std::string(name) + "'");
}

std::string_view to_string(DataSource s) {
  switch (s) {
    case DataSource::kMovieLens100K: return "movielens100k";
    case DataSource::kMovieLens1M: return "movielens1m";
    case DataSource::kRatings: return "ratings";
    case DataSource::kSnapshot: return "snapshot";
    case DataSource::kSynthetic: return "synthetic";
  }
  return "?";
}

PartitionKind parse_partition_kind(std::string_view name) {
  if (name == "genre") return PartitionKind::kGenre;
  if (name == "uniform") return PartitionKind::kUniform;
  throw ConfigError("unknown partition '" + std::string(name) + "' (expected genre or uniform)");
}

std::string_view to_string(PartitionKind k) { return k == PartitionKind::kGenre ? "genre" : "uniform"; }

GenreRule parse_genre_rule(std::string_view name) {
  if (name == "first") return GenreRule::kFirstFlag;
  if (name == "random") return GenreRule::kRandomFlag;
  throw ConfigError("unknown genre rule '" + std::string(name) + "' (expected first or random)");
}

std::string_view to_string(GenreRule r) { return r == GenreRule::kFirstFlag ? "first" : "random"; }

AlignmentMode ExperimentConfig::alignment_mode() const {
  if (alignment) return *alignment;
  return partition == PartitionKind::kGenre ? AlignmentMode::kUserAligned : AlignmentMode::kItemAligned;
}

void ExperimentConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  need(!seeds.empty(), "experiment.seeds must list at least one seed");
  need(train_ratio > 0.0 && train_ratio < 1.0, "experiment.train_ratio must lie in (0, 1)");
  need(domains >= 1, "partition.domains must be positive");
  need(local.fit.epochs >= 1, "local.epochs must be positive");
  need(local.fit.batch_size >= 1, "local.batch_size must be positive");
  need(local.fit.adam.lr > 0.0, "local.lr must be positive");
  need(local.fit.adam.weight_decay >= 0.0, "local.weight_decay must be non-negative");
  need(local.dropout >= 0.0 && local.dropout < 1.0, "local.dropout must lie in [0, 1)");
  need(local.hidden0 >= 1 && local.hidden1 >= 1, "local.hidden sizes must be positive");
  need(assist.rounds >= 1, "assist.rounds must be positive");
  need(std::isfinite(assist.eta), "assist.eta must be finite");
  need(assist.qn.iterations >= 1, "assist.qn_iterations must be positive");
  need(alignment_fraction > 0.0 && alignment_fraction <= 1.0, "assist.alignment_fraction must lie in (0, 1]");
  need(alone_checkpoints >= 1, "assist.alone_checkpoints must be positive");
  need(assist.timeout.count() > 0, "bus.timeout_s must be positive");
  need(source == DataSource::kSynthetic || !path.empty(), "data.path is required for this source");
  need(!(partition == PartitionKind::kGenre && (source == DataSource::kRatings || source == DataSource::kSnapshot)),
       "genre partition needs a MovieLens or synthetic source");
  assist.privacy.validate();
}

namespace {

std::string_view format_name(RatingFormat f) {
  switch (f) {
    case RatingFormat::kTabSeparated: return "tab";
    case RatingFormat::kDoubleColonSeparated: return "double_colon";
    case RatingFormat::kCsv: return "csv";
  }
  return "?";
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, value);
  if (text.empty() || r.ec != std::errc() || r.ptr != end) {
    throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + text + "'");
}

std::string fmt_double(double x) {
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

struct Field {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define MTAL_NUM(KEY, MEMBER, TYPE)                                                      \
  Field {                                                                                \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = parse_number<TYPE>(KEY, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }               \
  }
#define MTAL_REAL(KEY, MEMBER)                                                            \
  Field {                                                                                 \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = parse_number<double>(KEY, v); }, \
        [](const ExperimentConfig& c) { return fmt_double(c.MEMBER); }                    \
  }
#define MTAL_BOOL(KEY, MEMBER)                                                            \
  Field {                                                                                 \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = parse_bool(KEY, v); }, \
        [](const ExperimentConfig& c) { return std::string(c.MEMBER ? "true" : "false"); } \
  }
#define MTAL_ENUM(KEY, MEMBER, PARSE)                                                     \
  Field {                                                                                 \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = PARSE(v); },          \
        [](const ExperimentConfig& c) { return std::string(to_string(c.MEMBER)); }        \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      MTAL_ENUM("data.source", source, parse_data_source),
      Field{"data.path", [](ExperimentConfig& c, const std::string& v) { c.path = v; },
            [](const ExperimentConfig& c) { return c.path; }},
      Field{"data.format", [](ExperimentConfig& c, const std::string& v) { c.format = parse_rating_format(v); },
            [](const ExperimentConfig& c) { return std::string(format_name(c.format)); }},
      MTAL_NUM("data.synthetic_users", synthetic.users, Index),
      MTAL_NUM("data.synthetic_items", synthetic.items, Index),
      MTAL_NUM("data.synthetic_rank", synthetic.rank, Index),
      MTAL_REAL("data.synthetic_density", synthetic.density),
      MTAL_NUM("data.synthetic_genres", synthetic.genres, Index),
      MTAL_NUM("data.synthetic_seed", synthetic.seed, std::uint64_t),

      MTAL_ENUM("experiment.scenario", scenario, parse_scenario),
      MTAL_ENUM("experiment.feedback", feedback, parse_feedback_kind),
      Field{"experiment.implicit_protocol",
            [](ExperimentConfig& c, const std::string& v) {
              if (v != "dense" && v != "thresholded") {
                throw ConfigError("experiment.implicit_protocol: expected dense or thresholded, got '" + v + "'");
              }
              c.dense_implicit = v == "dense";
            },
            [](const ExperimentConfig& c) { return std::string(c.dense_implicit ? "dense" : "thresholded"); }},
      MTAL_REAL("experiment.implicit_threshold", implicit_threshold),
      Field{"experiment.alignment",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "auto") {
                c.alignment.reset();
              } else {
                c.alignment = parse_alignment_mode(v);
              }
            },
            [](const ExperimentConfig& c) {
              return c.alignment ? std::string(to_string(*c.alignment)) : std::string("auto");
            }},
      Field{"experiment.seeds",
            [](ExperimentConfig& c, const std::string& v) {
              c.seeds.clear();
              std::stringstream in(v);
              std::string item;
              while (std::getline(in, item, ',')) {
                c.seeds.push_back(parse_number<std::uint64_t>("experiment.seeds", std::string(trim(item))));
              }
            },
            [](const ExperimentConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.seeds.size(); ++i) out += (i ? "," : "") + std::to_string(c.seeds[i]);
              return out;
            }},
      MTAL_REAL("experiment.train_ratio", train_ratio),

      MTAL_ENUM("partition.kind", partition, parse_partition_kind),
      MTAL_NUM("partition.domains", domains, std::size_t),
      MTAL_ENUM("partition.genre_rule", genre_rule, parse_genre_rule),
      MTAL_NUM("partition.seed", partition_seed, std::uint64_t),

      MTAL_NUM("local.epochs", local.fit.epochs, int),
      MTAL_NUM("local.batch_size", local.fit.batch_size, Index),
      MTAL_REAL("local.lr", local.fit.adam.lr),
      MTAL_REAL("local.weight_decay", local.fit.adam.weight_decay),
      MTAL_BOOL("local.coupled_decay", local.fit.adam.coupled_decay),
      MTAL_REAL("local.dropout", local.dropout),
      MTAL_NUM("local.hidden0", local.hidden0, Index),
      MTAL_NUM("local.hidden1", local.hidden1, Index),
      MTAL_BOOL("local.side_info", side_info),

      MTAL_NUM("assist.rounds", assist.rounds, std::uint32_t),
      MTAL_ENUM("assist.eta_mode", assist.eta_mode, parse_eta_mode),
      MTAL_REAL("assist.eta", assist.eta),
      MTAL_REAL("assist.eta0", assist.eta0),
      MTAL_BOOL("assist.optimize_weights", assist.optimize_weights),
      MTAL_NUM("assist.qn_iterations", assist.qn.iterations, int),
      MTAL_REAL("assist.alignment_fraction", alignment_fraction),
      MTAL_NUM("assist.alone_checkpoints", alone_checkpoints, std::uint32_t),
      MTAL_NUM("assist.fit_slots", assist.fit_slots, unsigned),

      MTAL_ENUM("privacy.mechanism", assist.privacy.mechanism, parse_privacy_mechanism),
      MTAL_REAL("privacy.clip", assist.privacy.clip),
      MTAL_REAL("privacy.sigma", assist.privacy.sigma),
      MTAL_REAL("privacy.width", assist.privacy.width),

      Field{"bus.backend", [](ExperimentConfig& c, const std::string& v) { c.bus = parse_bus_backend(v); },
            [](const ExperimentConfig& c) {
              return std::string(c.bus == BusBackend::kTcp ? "tcp" : "inprocess");
            }},
      Field{"bus.host", [](ExperimentConfig& c, const std::string& v) { c.host = v; },
            [](const ExperimentConfig& c) { return c.host; }},
      MTAL_NUM("bus.port", port, std::uint16_t),
      Field{"bus.timeout_s",
            [](ExperimentConfig& c, const std::string& v) {
              c.assist.timeout = std::chrono::milliseconds(
                  static_cast<std::int64_t>(parse_number<double>("bus.timeout_s", v) * 1000.0));
            },
            [](const ExperimentConfig& c) { return fmt_double(static_cast<double>(c.assist.timeout.count()) / 1000.0); }},

      Field{"output.dir", [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
            [](const ExperimentConfig& c) { return c.output_dir.string(); }},
      MTAL_BOOL("output.checkpoints", checkpoints),
  };
  return table;
}

#undef MTAL_NUM
#undef MTAL_REAL
#undef MTAL_BOOL
#undef MTAL_ENUM

void set_field(ExperimentConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(c, std::string(trim(value)));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  ExperimentConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(source + ": key '" + section + "' outside any section");
    for (const auto& [key, value] : body) {
      try {
        set_field(c, section + "." + key, value.data());
      } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
      }
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, path.string());
}

void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not section.key=value");
    set_field(config, std::string(trim(std::string_view(o).substr(0, eq))), o.substr(eq + 1));
  }
  config.validate();
}

void write_config(std::ostream& out, const ExperimentConfig& config) {
  std::string section;
  for (const auto& f : fields()) {
    const std::string key = f.key;
    const auto dot = key.find('.');
    if (key.substr(0, dot) != section) {
      if (!section.empty()) out << '\n';
      section = key.substr(0, dot);
      out << '[' << section << "]\n";
    }
    out << key.substr(dot + 1) << " = " << f.get(config) << '\n';
  }
}

}  // namespace mtal
