#include "mtal/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>

#include "mtal/binary_io.hpp"

namespace mtal {
namespace {

constexpr char kSnapshotMagic[9] = "MTALDS1";

std::vector<std::string_view> split(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::ifstream open_or_throw(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error("cannot open " + path);
  return in;
}

/// Assigns contiguous indices to external ids in first-appearance order.
class IdRegistry {
 public:
  std::uint32_t intern(std::string_view id) {
    auto [it, inserted] = index_.try_emplace(std::string(id), static_cast<std::uint32_t>(ids_.size()));
    if (inserted) ids_.emplace_back(id);
    return it->second;
  }
  std::vector<std::string> release() { return std::move(ids_); }

 private:
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<std::string> ids_;
};

std::uint64_t pair_key(std::uint32_t u, std::uint32_t i) {
  return (static_cast<std::uint64_t>(u) << 32) | i;
}

}  // namespace

void RatingDataset::validate() const {
  std::unordered_map<std::uint64_t, std::size_t> seen;
  seen.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.user >= user_ids.size() || e.item >= item_ids.size()) {
      throw Error("rating entry references an out-of-range user or item");
    }
    if (!seen.emplace(pair_key(e.user, e.item), 0).second) {
      throw Error("duplicate (user, item) pair in dataset");
    }
  }
  if (user_features && user_features->rows() != num_users()) {
    throw DimensionError("user_features row count differs from the number of users");
  }
  if (item_features && item_features->rows() != num_items()) {
    throw DimensionError("item_features row count differs from the number of items");
  }
}

RatingDataset RatingDataset::with_entries(std::vector<Rating> e) const {
  RatingDataset out;
  out.user_ids = user_ids;
  out.item_ids = item_ids;
  out.user_features = user_features;
  out.item_features = item_features;
  out.entries = std::move(e);
  return out;
}

RowSparse RatingDataset::to_matrix() const {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(entries.size());
  for (const auto& e : entries) triplets.emplace_back(e.user, e.item, e.value);
  RowSparse m(num_users(), num_items());
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return m;
}

RatingFormat parse_rating_format(std::string_view name) {
  if (name == "tab" || name == "tab_separated") return RatingFormat::kTabSeparated;
  if (name == "double_colon" || name == "double_colon_separated" || name == "::") {
    return RatingFormat::kDoubleColonSeparated;
  }
  if (name == "csv") return RatingFormat::kCsv;
  throw ConfigError("unknown rating format '" + std::string(name) + "'");
}

RatingDataset parse_ratings(std::istream& in, RatingFormat format, const std::string& source) {
  const std::string_view sep = format == RatingFormat::kTabSeparated         ? "\t"
                               : format == RatingFormat::kDoubleColonSeparated ? "::"
                                                                               : ",";
  const bool movielens_scale = format != RatingFormat::kCsv;
  IdRegistry users, items;
  std::vector<Rating> entries;
  std::unordered_map<std::uint64_t, std::size_t> position;

  std::string line;
  std::size_t line_no = 0;
  bool first_data_line = true;
  std::size_t out_of_scale = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty()) continue;
    const auto fields = split(text, sep);
    if (fields.size() < 3 || fields.size() > 4) {
      throw ParseError(source, line_no, "expected 3 or 4 fields, got " + std::to_string(fields.size()));
    }
    Rating r;
    if (!parse_number(fields[2], r.value) || !std::isfinite(r.value)) {
      if (format == RatingFormat::kCsv && first_data_line) {
        first_data_line = false;  // header row
        continue;
      }
      throw ParseError(source, line_no, "rating is not a number: '" + std::string(fields[2]) + "'");
    }
    first_data_line = false;
    if (fields.size() == 4) {
      double ts = 0;
      if (!parse_number(fields[3], r.timestamp)) {
        if (!parse_number(fields[3], ts)) {
          throw ParseError(source, line_no, "timestamp is not a number");
        }
        r.timestamp = static_cast<std::int64_t>(ts);
      }
    }
    const auto user_id = trim(fields[0]);
    const auto item_id = trim(fields[1]);
    if (user_id.empty() || item_id.empty()) throw ParseError(source, line_no, "empty user or item id");
    if (movielens_scale && (r.value < 0.5 || r.value > 5.0)) ++out_of_scale;
    r.user = users.intern(user_id);
    r.item = items.intern(item_id);
    const auto [it, inserted] = position.try_emplace(pair_key(r.user, r.item), entries.size());
    if (inserted) {
      entries.push_back(r);
    } else {
      entries[it->second] = r;
    }
  }
  if (out_of_scale > 0) {
    logger()->warn("{}: {} ratings outside [0.5, 5] kept as-is", source, out_of_scale);
  }
  RatingDataset ds;
  ds.user_ids = users.release();
  ds.item_ids = items.release();
  ds.entries = std::move(entries);
  return ds;
}

RatingDataset load_ratings(const std::string& path, RatingFormat format) {
  auto in = open_or_throw(path);
  return parse_ratings(in, format, path);
}

void write_snapshot(std::ostream& out, const RatingDataset& dataset) {
  io::write_magic(out, kSnapshotMagic);
  io::write<std::uint64_t>(out, static_cast<std::uint64_t>(dataset.num_users()));
  io::write<std::uint64_t>(out, static_cast<std::uint64_t>(dataset.num_items()));
  io::write<std::uint64_t>(out, dataset.entries.size());
  for (const auto& e : dataset.entries) {
    io::write<std::uint32_t>(out, e.user);
    io::write<std::uint32_t>(out, e.item);
    io::write<float>(out, static_cast<float>(e.value));
    io::write<std::int64_t>(out, e.timestamp);
  }
}

RatingDataset read_snapshot(std::istream& in) {
  io::expect_magic(in, kSnapshotMagic, "dataset snapshot");
  const auto m = io::read<std::uint64_t>(in, "user count");
  const auto n = io::read<std::uint64_t>(in, "item count");
  const auto count = io::read<std::uint64_t>(in, "entry count");
  RatingDataset ds;
  ds.user_ids.reserve(m);
  ds.item_ids.reserve(n);
  for (std::uint64_t u = 0; u < m; ++u) ds.user_ids.push_back(std::to_string(u));
  for (std::uint64_t i = 0; i < n; ++i) ds.item_ids.push_back(std::to_string(i));
  ds.entries.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    Rating r;
    r.user = io::read<std::uint32_t>(in, "entry user");
    r.item = io::read<std::uint32_t>(in, "entry item");
    r.value = io::read<float>(in, "entry rating");
    r.timestamp = io::read<std::int64_t>(in, "entry timestamp");
    ds.entries.push_back(r);
  }
  ds.validate();
  return ds;
}

void save_snapshot(const std::string& path, const RatingDataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  write_snapshot(out, dataset);
  if (!out) throw Error("write failed for " + path);
}

RatingDataset load_snapshot(const std::string& path) {
  auto in = open_or_throw(path, std::ios::binary);
  return read_snapshot(in);
}

// ---------------------------------------------------------------------------

AttributeTable parse_movielens_users(std::istream& in, const std::string& source) {
  AttributeTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty()) continue;
    const bool ml1m = text.find("::") != std::string_view::npos;
    const auto f = split(text, ml1m ? "::" : "|");
    if (f.size() != 5) throw ParseError(source, line_no, "expected 5 user fields");
    table.ids.emplace_back(trim(f[0]));
    // normalized to (age, gender, occupation, zip)
    if (ml1m) {
      table.rows.push_back({std::string(f[2]), std::string(f[1]), std::string(f[3]), std::string(f[4])});
    } else {
      table.rows.push_back({std::string(f[1]), std::string(f[2]), std::string(f[3]), std::string(f[4])});
    }
  }
  return table;
}

AttributeTable parse_movielens_items(std::istream& in, const std::string& source) {
  AttributeTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty()) continue;
    std::vector<std::string> flags(kMovieLensGenres.size(), "0");
    if (text.find("::") != std::string_view::npos) {
      const auto f = split(text, "::");
      if (f.size() != 3) throw ParseError(source, line_no, "expected id::title::genres");
      table.ids.emplace_back(trim(f[0]));
      for (auto g : split(trim(f[2]), "|")) {
        const auto it = std::find(kMovieLensGenres.begin(), kMovieLensGenres.end(), g);
        if (it != kMovieLensGenres.end()) flags[static_cast<std::size_t>(it - kMovieLensGenres.begin())] = "1";
      }
    } else {
      const auto f = split(text, "|");
      // id|title|release|video release|url|unknown|18 genres
      if (f.size() != 24) throw ParseError(source, line_no, "expected 24 item fields, got " + std::to_string(f.size()));
      table.ids.emplace_back(trim(f[0]));
      for (std::size_t g = 0; g < kMovieLensGenres.size(); ++g) {
        const auto v = trim(f[6 + g]);
        if (v != "0" && v != "1") throw ParseError(source, line_no, "genre flag is not 0/1");
        flags[g] = std::string(v);
      }
    }
    table.rows.push_back(std::move(flags));
  }
  return table;
}

AttributeTable load_movielens_users(const std::string& path) {
  auto in = open_or_throw(path);
  return parse_movielens_users(in, path);
}

AttributeTable load_movielens_items(const std::string& path) {
  auto in = open_or_throw(path);
  return parse_movielens_items(in, path);
}

std::size_t FeatureColumn::width() const {
  switch (kind) {
    case Kind::kCategorical: return categories.size();
    case Kind::kBinned: return edges.size() + 1;
    case Kind::kFlags: return columns.size();
  }
  return 0;
}

std::size_t FeatureSchema::width() const {
  std::size_t w = 0;
  for (const auto& c : columns) w += c.width();
  return w;
}

FeatureSchema movielens_user_schema() {
  FeatureSchema s;
  s.columns.push_back({"gender", FeatureColumn::Kind::kCategorical, {1}, {"M", "F"}, {}});
  s.columns.push_back({"age", FeatureColumn::Kind::kBinned, {0}, {}, {18, 25, 35, 45, 50, 56}});
  s.columns.push_back({"occupation",
                       FeatureColumn::Kind::kCategorical,
                       {2},
                       {"administrator", "artist", "doctor", "educator", "engineer", "entertainment",
                        "executive", "healthcare", "homemaker", "lawyer", "librarian", "marketing",
                        "none", "other", "programmer", "retired", "salesman", "scientist", "student",
                        "technician", "writer"},
                       {}});
  return s;
}

FeatureSchema movielens1m_user_schema() {
  FeatureSchema s = movielens_user_schema();
  auto& occupation = s.columns[2].categories;
  occupation.clear();
  for (int code = 0; code < 21; ++code) occupation.push_back(std::to_string(code));
  return s;
}

FeatureSchema movielens_item_schema() {
  FeatureColumn genres{"genre", FeatureColumn::Kind::kFlags, {}, {}, {}};
  for (std::size_t g = 0; g < kMovieLensGenres.size(); ++g) genres.columns.push_back(g);
  return FeatureSchema{{genres}};
}

Eigen::MatrixXd encode_features(const AttributeTable& table, const FeatureSchema& schema,
                                const std::vector<std::string>& entity_ids) {
  std::unordered_map<std::string_view, std::size_t> row_of;
  for (std::size_t r = 0; r < table.ids.size(); ++r) row_of.emplace(table.ids[r], r);

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Index>(entity_ids.size()),
                                              static_cast<Index>(schema.width()));
  std::size_t missing = 0, unknown = 0;
  for (std::size_t e = 0; e < entity_ids.size(); ++e) {
    const auto it = row_of.find(entity_ids[e]);
    if (it == row_of.end()) {
      ++missing;
      continue;
    }
    const auto& row = table.rows[it->second];
    Index offset = 0;
    for (const auto& col : schema.columns) {
      for (auto c : col.columns) {
        if (c >= row.size()) throw Error("feature column " + col.name + " out of range");
      }
      switch (col.kind) {
        case FeatureColumn::Kind::kCategorical: {
          const auto& v = row[col.columns.front()];
          const auto pos = std::find(col.categories.begin(), col.categories.end(), v);
          if (pos == col.categories.end()) {
            ++unknown;
          } else {
            out(static_cast<Index>(e), offset + (pos - col.categories.begin())) = 1.0;
          }
          break;
        }
        case FeatureColumn::Kind::kBinned: {
          double x = 0;
          if (!parse_number(row[col.columns.front()], x)) {
            ++unknown;
          } else {
            const auto bin = std::upper_bound(col.edges.begin(), col.edges.end(), x) - col.edges.begin();
            out(static_cast<Index>(e), offset + bin) = 1.0;
          }
          break;
        }
        case FeatureColumn::Kind::kFlags:
          for (std::size_t k = 0; k < col.columns.size(); ++k) {
            if (trim(row[col.columns[k]]) == "1") out(static_cast<Index>(e), offset + static_cast<Index>(k)) = 1.0;
          }
          break;
      }
      offset += static_cast<Index>(col.width());
    }
  }
  if (missing > 0) logger()->warn("{} entities have no attribute row; features left at zero", missing);
  if (unknown > 0) logger()->warn("{} unknown attribute values mapped to all-zero blocks", unknown);
  return out;
}

SideFeatures build_side_features(const RatingDataset& dataset, const AttributeTable& users,
                                 const FeatureSchema& user_schema, const AttributeTable& items,
                                 const FeatureSchema& item_schema) {
  SideFeatures out;
  if (!users.empty()) out.user = encode_features(users, user_schema, dataset.user_ids);
  if (!items.empty()) out.item = encode_features(items, item_schema, dataset.item_ids);
  return out;
}

GenreFlags genre_flags(const RatingDataset& dataset, const AttributeTable& items) {
  const Eigen::MatrixXd encoded = encode_features(items, movielens_item_schema(), dataset.item_ids);
  return encoded.array() > 0.5;
}

// ---------------------------------------------------------------------------

PartitionPlan genre_plan(const RatingDataset& dataset, const GenreFlags& flags, GenreRule rule,
                         std::uint64_t seed) {
  if (flags.rows() != dataset.num_items()) {
    throw DimensionError("genre flag rows differ from the number of items");
  }
  const auto genres = static_cast<std::size_t>(flags.cols());
  if (genres == 0) throw DimensionError("genre flags have no columns");
  PartitionPlan plan;
  plan.users.resize(genres);
  plan.items.resize(genres);
  std::vector<std::uint32_t> all_users(static_cast<std::size_t>(dataset.num_users()));
  std::iota(all_users.begin(), all_users.end(), 0u);
  for (auto& u : plan.users) u = all_users;

  std::mt19937_64 rng(seed);
  std::size_t unflagged = 0;
  std::vector<std::size_t> candidates;
  for (Index j = 0; j < flags.rows(); ++j) {
    candidates.clear();
    for (Index g = 0; g < flags.cols(); ++g) {
      if (flags(j, g)) candidates.push_back(static_cast<std::size_t>(g));
    }
    std::size_t domain = 0;
    if (candidates.empty()) {
      ++unflagged;
    } else if (rule == GenreRule::kFirstFlag || candidates.size() == 1) {
      domain = candidates.front();
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      domain = candidates[pick(rng)];
    }
    plan.items[domain].push_back(static_cast<std::uint32_t>(j));
  }
  if (unflagged > 0) logger()->warn("{} items carry no genre flag; assigned to domain 0", unflagged);
  return plan;
}

PartitionPlan uniform_plan(const RatingDataset& dataset, std::size_t domains, std::uint64_t seed) {
  const auto m = static_cast<std::size_t>(dataset.num_users());
  if (domains == 0) throw ConfigError("uniform partition needs at least one domain");
  if (domains > m) throw ConfigError("uniform partition: more domains than users");
  std::vector<std::uint32_t> order(m);
  std::iota(order.begin(), order.end(), 0u);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  PartitionPlan plan;
  plan.users.resize(domains);
  plan.items.resize(domains);
  for (std::size_t p = 0; p < m; ++p) plan.users[p % domains].push_back(order[p]);
  std::vector<std::uint32_t> all_items(static_cast<std::size_t>(dataset.num_items()));
  std::iota(all_items.begin(), all_items.end(), 0u);
  for (std::size_t k = 0; k < domains; ++k) {
    std::sort(plan.users[k].begin(), plan.users[k].end());
    plan.items[k] = all_items;
  }
  return plan;
}

std::vector<DomainDataset> apply_partition(const RatingDataset& dataset, const PartitionPlan& plan) {
  const auto K = plan.num_domains();
  if (plan.items.size() != K) throw DimensionError("partition plan user/item domain counts differ");
  // Owners of each user/item with their local index.
  std::vector<std::vector<std::pair<std::uint32_t, int>>> user_owner(static_cast<std::size_t>(dataset.num_users()));
  std::vector<std::vector<std::pair<std::uint32_t, int>>> item_owner(static_cast<std::size_t>(dataset.num_items()));
  for (std::size_t k = 0; k < K; ++k) {
    if (!std::is_sorted(plan.users[k].begin(), plan.users[k].end()) ||
        !std::is_sorted(plan.items[k].begin(), plan.items[k].end())) {
      throw Error("partition plan entity lists must be ascending");
    }
    for (std::size_t l = 0; l < plan.users[k].size(); ++l) {
      user_owner.at(plan.users[k][l]).emplace_back(static_cast<std::uint32_t>(k), static_cast<int>(l));
    }
    for (std::size_t l = 0; l < plan.items[k].size(); ++l) {
      item_owner.at(plan.items[k][l]).emplace_back(static_cast<std::uint32_t>(k), static_cast<int>(l));
    }
  }

  std::vector<std::vector<Eigen::Triplet<double>>> triplets(K);
  for (const auto& e : dataset.entries) {
    for (const auto& [ku, lu] : user_owner[e.user]) {
      for (const auto& [ki, li] : item_owner[e.item]) {
        if (ku == ki) triplets[ku].emplace_back(lu, li, e.value);
      }
    }
  }

  std::vector<DomainDataset> out(K);
  for (std::size_t k = 0; k < K; ++k) {
    auto& d = out[k];
    d.domain_id = static_cast<std::uint32_t>(k);
    d.user_map = plan.users[k];
    d.item_map = plan.items[k];
    d.ratings.resize(d.num_users(), d.num_items());
    d.ratings.setFromTriplets(triplets[k].begin(), triplets[k].end());
    d.ratings.makeCompressed();
    auto slice = [](const Eigen::MatrixXd& full, const std::vector<std::uint32_t>& rows) {
      Eigen::MatrixXd s(static_cast<Index>(rows.size()), full.cols());
      for (std::size_t r = 0; r < rows.size(); ++r) s.row(static_cast<Index>(r)) = full.row(rows[r]);
      return s;
    };
    if (dataset.user_features) d.user_features = slice(*dataset.user_features, d.user_map);
    if (dataset.item_features) d.item_features = slice(*dataset.item_features, d.item_map);
  }
  return out;
}

std::vector<DomainDataset> partition_by_genre(const RatingDataset& dataset, const GenreFlags& flags,
                                              GenreRule rule, std::uint64_t seed) {
  return apply_partition(dataset, genre_plan(dataset, flags, rule, seed));
}

std::vector<DomainDataset> partition_uniform(const RatingDataset& dataset, std::size_t domains,
                                             std::uint64_t seed) {
  return apply_partition(dataset, uniform_plan(dataset, domains, seed));
}

std::pair<RatingDataset, RatingDataset> split_train_test(const RatingDataset& dataset, double ratio,
                                                         std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("train ratio must lie in (0, 1)");
  std::vector<std::size_t> order(dataset.entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(order.size())));
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::vector<Rating> train, test;
  train.reserve(n_train);
  test.reserve(order.size() - n_train);
  for (std::size_t p = 0; p < order.size(); ++p) {
    (p < n_train ? train : test).push_back(dataset.entries[order[p]]);
  }
  return {dataset.with_entries(std::move(train)), dataset.with_entries(std::move(test))};
}

RatingDataset to_implicit(const RatingDataset& dataset, std::optional<double> threshold) {
  auto entries = dataset.entries;
  for (auto& e : entries) {
    e.value = (!threshold || e.value >= *threshold) ? 1.0 : 0.0;
  }
  return dataset.with_entries(std::move(entries));
}

std::pair<RatingDataset, GenreFlags> make_synthetic(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.rank));
  Eigen::MatrixXd users(spec.users, spec.rank), items(spec.items, spec.rank);
  for (Index i = 0; i < users.size(); ++i) users.data()[i] = normal(rng) * scale;
  for (Index i = 0; i < items.size(); ++i) items.data()[i] = normal(rng) * scale;
  Eigen::VectorXd item_bias(spec.items);
  for (Index j = 0; j < spec.items; ++j) item_bias(j) = 0.5 * normal(rng);

  RatingDataset ds;
  for (Index u = 0; u < spec.users; ++u) ds.user_ids.push_back("u" + std::to_string(u));
  for (Index j = 0; j < spec.items; ++j) ds.item_ids.push_back("i" + std::to_string(j));
  auto rate = [&](Index u, Index j) {
    const double raw = 3.2 + item_bias(j) + 1.5 * users.row(u).dot(items.row(j)) + 0.3 * normal(rng);
    return std::clamp(std::round(raw), 1.0, 5.0);
  };
  std::vector<bool> user_seen(static_cast<std::size_t>(spec.users)), item_seen(static_cast<std::size_t>(spec.items));
  for (Index u = 0; u < spec.users; ++u) {
    for (Index j = 0; j < spec.items; ++j) {
      if (unit(rng) < spec.density) {
        ds.entries.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(j), rate(u, j),
                              static_cast<std::int64_t>(u * spec.items + j)});
        user_seen[static_cast<std::size_t>(u)] = item_seen[static_cast<std::size_t>(j)] = true;
      }
    }
  }
  // every entity rated at least once
  for (Index u = 0; u < spec.users; ++u) {
    if (!user_seen[static_cast<std::size_t>(u)]) {
      const Index j = u % spec.items;
      ds.entries.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(j), rate(u, j), 0});
      item_seen[static_cast<std::size_t>(j)] = true;
    }
  }
  for (Index j = 0; j < spec.items; ++j) {
    if (!item_seen[static_cast<std::size_t>(j)]) {
      const Index u = j % spec.users;
      ds.entries.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(j), rate(u, j), 0});
    }
  }
  std::sort(ds.entries.begin(), ds.entries.end(),
            [](const Rating& a, const Rating& b) { return pair_key(a.user, a.item) < pair_key(b.user, b.item); });
  ds.entries.erase(std::unique(ds.entries.begin(), ds.entries.end(),
                               [](const Rating& a, const Rating& b) { return a.user == b.user && a.item == b.item; }),
                   ds.entries.end());

  GenreFlags flags = GenreFlags::Constant(spec.items, spec.genres, false);
  for (Index j = 0; j < spec.items; ++j) flags(j, j % spec.genres) = true;
  return {std::move(ds), std::move(flags)};
}

}  // namespace mtal
