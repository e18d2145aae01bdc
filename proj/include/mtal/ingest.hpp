#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mtal/common.hpp"

namespace mtal {

struct Rating {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double value = 0.0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Rating&, const Rating&) = default;
};

/// Sparse user-item interactions with contiguous 0-based indices. External
/// identifiers are kept in `user_ids` / `item_ids` (index -> id).
struct RatingDataset {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::vector<Rating> entries;
  std::optional<Eigen::MatrixXd> user_features;
  std::optional<Eigen::MatrixXd> item_features;

  Index num_users() const { return static_cast<Index>(user_ids.size()); }
  Index num_items() const { return static_cast<Index>(item_ids.size()); }

  /// Throws if an entry is out of range, a pair is duplicated or a feature
  /// matrix has the wrong row count.
  void validate() const;

  /// Same entities and features, different entries.
  RatingDataset with_entries(std::vector<Rating> e) const;

  /// users x items matrix of the entry values.
  RowSparse to_matrix() const;
};

enum class RatingFormat { kTabSeparated, kDoubleColonSeparated, kCsv };

RatingFormat parse_rating_format(std::string_view name);

/// Parses `user sep item sep rating [sep timestamp]` lines. Duplicated
/// (user, item) pairs keep the last occurrence. `source` names the stream in
/// error messages. The MovieLens formats warn on ratings outside [0.5, 5].
RatingDataset parse_ratings(std::istream& in, RatingFormat format,
                            const std::string& source = "<stream>");
RatingDataset load_ratings(const std::string& path, RatingFormat format);

// Snapshot: "MTALDS1\0", u64 m, u64 n, u64 count, then count x
// (u32 user, u32 item, f32 rating, i64 timestamp); little-endian.
void write_snapshot(std::ostream& out, const RatingDataset& dataset);
RatingDataset read_snapshot(std::istream& in);
void save_snapshot(const std::string& path, const RatingDataset& dataset);
RatingDataset load_snapshot(const std::string& path);

// ---------------------------------------------------------------------------
// Entity attributes and side features

/// The 18 MovieLens genres in canonical order (the "unknown" flag excluded).
inline constexpr std::array<std::string_view, 18> kMovieLensGenres = {
    "Action",  "Adventure", "Animation", "Children's", "Comedy",   "Crime",
    "Documentary", "Drama", "Fantasy",   "Film-Noir",  "Horror",   "Musical",
    "Mystery", "Romance",   "Sci-Fi",    "Thriller",   "War",      "Western"};

/// Raw attribute rows keyed by external entity id.
struct AttributeTable {
  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> rows;

  bool empty() const { return ids.empty(); }
};

/// ML100K `u.user` (id|age|gender|occupation|zip) or ML1M `users.dat`.
AttributeTable parse_movielens_users(std::istream& in, const std::string& source = "<stream>");

/// ML100K `u.item` or ML1M `movies.dat`. Each row holds the 18 genre flags as
/// "0"/"1" strings in kMovieLensGenres order.
AttributeTable parse_movielens_items(std::istream& in, const std::string& source = "<stream>");

AttributeTable load_movielens_users(const std::string& path);
AttributeTable load_movielens_items(const std::string& path);

struct FeatureColumn {
  enum class Kind {
    kCategorical,  // one-hot over `categories`
    kBinned,       // one-hot over numeric bins split at `edges`
    kFlags,        // pass-through 0/1 columns
  };
  std::string name;
  Kind kind = Kind::kCategorical;
  std::vector<std::size_t> columns;  // one source column, or several for kFlags
  std::vector<std::string> categories;
  std::vector<double> edges;  // ascending; width = edges.size() + 1

  std::size_t width() const;
};

struct FeatureSchema {
  std::vector<FeatureColumn> columns;
  std::size_t width() const;
};

/// gender(2) + age bins(7) + occupation(21) = 30 columns.
FeatureSchema movielens_user_schema();
/// ML1M encodes occupation as integer codes 0..20.
FeatureSchema movielens1m_user_schema();
/// 18 genre flags.
FeatureSchema movielens_item_schema();

/// Encodes `table` rows for the entities in `entity_ids` order. Entities
/// missing from the table and unknown category values give all-zero blocks
/// and a warning.
Eigen::MatrixXd encode_features(const AttributeTable& table, const FeatureSchema& schema,
                                const std::vector<std::string>& entity_ids);

struct SideFeatures {
  std::optional<Eigen::MatrixXd> user;
  std::optional<Eigen::MatrixXd> item;
};

/// Side features aligned with the dataset's user / item indices. An empty
/// table leaves the corresponding matrix absent.
SideFeatures build_side_features(const RatingDataset& dataset, const AttributeTable& users,
                                 const FeatureSchema& user_schema, const AttributeTable& items,
                                 const FeatureSchema& item_schema);

/// n x 18 genre flags aligned with the dataset's item indices.
Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> genre_flags(const RatingDataset& dataset,
                                                               const AttributeTable& items);

// ---------------------------------------------------------------------------
// Domains

/// One organization's shard of the ratings.
struct DomainDataset {
  std::uint32_t domain_id = 0;
  RowSparse ratings;                       // m_k x n_k, local indices
  std::vector<std::uint32_t> user_map;     // local user -> dataset user, ascending
  std::vector<std::uint32_t> item_map;     // local item -> dataset item, ascending
  std::optional<Eigen::MatrixXd> user_features;
  std::optional<Eigen::MatrixXd> item_features;

  Index num_users() const { return static_cast<Index>(user_map.size()); }
  Index num_items() const { return static_cast<Index>(item_map.size()); }
};

/// Which dataset users and items each domain owns. Applying the same plan to
/// a train and a test split yields consistent domains.
struct PartitionPlan {
  std::vector<std::vector<std::uint32_t>> users;
  std::vector<std::vector<std::uint32_t>> items;

  std::size_t num_domains() const { return users.size(); }
};

enum class GenreRule {
  kFirstFlag,   // first flagged genre in canonical order
  kRandomFlag,  // uniform draw among the flagged genres, seeded
};

using GenreFlags = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// User-aligned plan: every domain keeps all users; each item goes to exactly
/// one genre. Items with no flag go to domain 0 with a warning.
PartitionPlan genre_plan(const RatingDataset& dataset, const GenreFlags& flags, GenreRule rule,
                         std::uint64_t seed);

/// Item-aligned plan: every domain keeps all items; users are shuffled and
/// dealt round-robin into `domains` groups.
PartitionPlan uniform_plan(const RatingDataset& dataset, std::size_t domains, std::uint64_t seed);

std::vector<DomainDataset> apply_partition(const RatingDataset& dataset, const PartitionPlan& plan);

std::vector<DomainDataset> partition_by_genre(const RatingDataset& dataset, const GenreFlags& flags,
                                              GenreRule rule = GenreRule::kFirstFlag,
                                              std::uint64_t seed = 0);
std::vector<DomainDataset> partition_uniform(const RatingDataset& dataset, std::size_t domains,
                                             std::uint64_t seed);

/// Entries shuffled by `seed`; the first floor(ratio * N) go to train.
std::pair<RatingDataset, RatingDataset> split_train_test(const RatingDataset& dataset, double ratio,
                                                         std::uint64_t seed);

/// Implicit feedback. Without a threshold every observed entry becomes 1.
/// With one, entries are kept and labelled (rating >= threshold).
RatingDataset to_implicit(const RatingDataset& dataset,
                          std::optional<double> threshold = std::nullopt);

/// Low-rank synthetic ratings in [1, 5], for toy runs and tests. Item j gets
/// the single genre flag j mod `genres`.
struct SyntheticSpec {
  Index users = 50;
  Index items = 60;
  Index rank = 3;
  double density = 0.3;
  Index genres = 3;
  std::uint64_t seed = 7;
};
std::pair<RatingDataset, GenreFlags> make_synthetic(const SyntheticSpec& spec);

}  // namespace mtal
