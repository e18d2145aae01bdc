#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "mtal/common.hpp"
#include "mtal/ingest.hpp"

namespace mtal {

enum class AlignmentMode { kUserAligned, kItemAligned };

AlignmentMode parse_alignment_mode(std::string_view name);
std::string_view to_string(AlignmentMode mode);

/// A domain's ratings seen from the alignment: rows are the aligned entities
/// (users when user-aligned, items when item-aligned), columns the domain's
/// own entities. Item-aligned views are transposes of the domain matrix.
struct OrientedDomain {
  std::uint32_t domain_id = 0;
  RowSparse ratings;                  // rows x cols
  std::vector<std::uint32_t> row_ids;  // local row -> dataset id of aligned entity
  std::vector<std::uint32_t> col_ids;  // local col -> dataset id of own entity
  std::optional<Eigen::MatrixXd> row_features;
  std::optional<Eigen::MatrixXd> col_features;

  Index rows() const { return ratings.rows(); }
  Index cols() const { return ratings.cols(); }
};

OrientedDomain orient(const DomainDataset& domain, AlignmentMode mode);

/// Sorted dataset ids of the aligned entities both domains hold.
std::vector<std::uint32_t> common_entities(const DomainDataset& a, const DomainDataset& b,
                                           AlignmentMode mode);

/// Shared entities of an ordered pair (a, b) and their local rows on each side.
struct SharedEntities {
  std::vector<std::uint32_t> ids;
  std::vector<std::uint32_t> rows_a;
  std::vector<std::uint32_t> rows_b;

  std::size_t size() const { return ids.size(); }
  bool operator==(const SharedEntities&) const = default;
};

/// Pairwise shared sets for K domains; `pair(k, l)` lists rows of k first.
class AlignmentMap {
 public:
  AlignmentMap() = default;
  explicit AlignmentMap(std::size_t domains) : k_(domains), pairs_(domains * domains) {}

  std::size_t num_domains() const { return k_; }
  const SharedEntities& pair(std::size_t k, std::size_t l) const { return pairs_.at(k * k_ + l); }
  SharedEntities& pair(std::size_t k, std::size_t l) { return pairs_.at(k * k_ + l); }

  bool operator==(const AlignmentMap&) const = default;

 private:
  std::size_t k_ = 0;
  std::vector<SharedEntities> pairs_;
};

AlignmentMap build_alignment(const std::vector<OrientedDomain>& domains);

/// Keeps a seeded uniform sample of floor(fraction * |U|) ids, where U is
/// every id shared by at least two domains. Pairwise sets are intersected
/// with the sample; a domain's pair with itself is left whole.
AlignmentMap restrict_alignment(const AlignmentMap& map, double fraction, std::uint64_t seed);

/// Global numbering of the non-aligned axis: domain k's local column c maps to
/// offset(k) + c, so domains occupy consecutive column blocks.
struct GlobalIndex {
  Index width = 0;                                  // n (user-aligned) or m (item-aligned)
  Index aligned_count = 0;                          // distinct aligned entities
  std::vector<Index> offsets;                       // per domain, size K + 1
  std::vector<std::uint32_t> dataset_ids;           // global column -> dataset id

  std::size_t num_domains() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  Index offset(std::size_t k) const { return offsets.at(k); }
  Index columns_of(std::size_t k) const { return offsets.at(k + 1) - offsets.at(k); }
  Index global_column(std::size_t k, Index local) const { return offsets.at(k) + local; }
  std::size_t owner(Index global) const;
};

/// Throws if a non-aligned entity belongs to more than one domain.
GlobalIndex build_global_index(const std::vector<OrientedDomain>& domains);

// Serialized form: "MTALAL1\0", u64 K, then for every ordered pair (k, l):
// u64 count, count x (u32 id, u32 row_a, u32 row_b).
void write_alignment(std::ostream& out, const AlignmentMap& map);
AlignmentMap read_alignment(std::istream& in);

}  // namespace mtal
