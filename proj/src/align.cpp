#include "mtal/align.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include "mtal/binary_io.hpp"

namespace mtal {
namespace {

constexpr char kAlignmentMagic[9] = "MTALAL1";

SharedEntities intersect(const OrientedDomain& a, const OrientedDomain& b) {
  SharedEntities s;
  std::size_t i = 0, j = 0;
  while (i < a.row_ids.size() && j < b.row_ids.size()) {
    if (a.row_ids[i] < b.row_ids[j]) {
      ++i;
    } else if (b.row_ids[j] < a.row_ids[i]) {
      ++j;
    } else {
      s.ids.push_back(a.row_ids[i]);
      s.rows_a.push_back(static_cast<std::uint32_t>(i));
      s.rows_b.push_back(static_cast<std::uint32_t>(j));
      ++i;
      ++j;
    }
  }
  return s;
}

}  // namespace

AlignmentMode parse_alignment_mode(std::string_view name) {
  if (name == "user" || name == "user_aligned") return AlignmentMode::kUserAligned;
  if (name == "item" || name == "item_aligned") return AlignmentMode::kItemAligned;
  throw ConfigError("unknown alignment mode '" + std::string(name) + "'");
}

std::string_view to_string(AlignmentMode mode) {
  return mode == AlignmentMode::kUserAligned ? "user_aligned" : "item_aligned";
}

OrientedDomain orient(const DomainDataset& domain, AlignmentMode mode) {
  OrientedDomain o;
  o.domain_id = domain.domain_id;
  if (mode == AlignmentMode::kUserAligned) {
    o.ratings = domain.ratings;
    o.row_ids = domain.user_map;
    o.col_ids = domain.item_map;
    o.row_features = domain.user_features;
    o.col_features = domain.item_features;
  } else {
    o.ratings = RowSparse(domain.ratings.transpose());
    o.row_ids = domain.item_map;
    o.col_ids = domain.user_map;
    o.row_features = domain.item_features;
    o.col_features = domain.user_features;
  }
  o.ratings.makeCompressed();
  return o;
}

std::vector<std::uint32_t> common_entities(const DomainDataset& a, const DomainDataset& b,
                                           AlignmentMode mode) {
  const auto& ia = mode == AlignmentMode::kUserAligned ? a.user_map : a.item_map;
  const auto& ib = mode == AlignmentMode::kUserAligned ? b.user_map : b.item_map;
  std::vector<std::uint32_t> out;
  std::set_intersection(ia.begin(), ia.end(), ib.begin(), ib.end(), std::back_inserter(out));
  return out;
}

AlignmentMap build_alignment(const std::vector<OrientedDomain>& domains) {
  AlignmentMap map(domains.size());
  for (const auto& d : domains) {
    if (!std::is_sorted(d.row_ids.begin(), d.row_ids.end())) {
      throw Error("aligned entity ids must be ascending");
    }
  }
  for (std::size_t k = 0; k < domains.size(); ++k) {
    for (std::size_t l = 0; l < domains.size(); ++l) {
      map.pair(k, l) = intersect(domains[k], domains[l]);
    }
  }
  return map;
}

AlignmentMap restrict_alignment(const AlignmentMap& map, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("alignment fraction must lie in (0, 1]");
  const auto K = map.num_domains();
  std::vector<std::uint32_t> universe;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t l = 0; l < K; ++l) {
      if (k != l) universe.insert(universe.end(), map.pair(k, l).ids.begin(), map.pair(k, l).ids.end());
    }
  }
  std::sort(universe.begin(), universe.end());
  universe.erase(std::unique(universe.begin(), universe.end()), universe.end());
  std::mt19937_64 rng(seed);
  std::shuffle(universe.begin(), universe.end(), rng);
  const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(universe.size())));
  universe.resize(keep);
  std::sort(universe.begin(), universe.end());

  AlignmentMap out(K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t l = 0; l < K; ++l) {
      const auto& src = map.pair(k, l);
      auto& dst = out.pair(k, l);
      for (std::size_t p = 0; p < src.size(); ++p) {
        if (k == l || std::binary_search(universe.begin(), universe.end(), src.ids[p])) {
          dst.ids.push_back(src.ids[p]);
          dst.rows_a.push_back(src.rows_a[p]);
          dst.rows_b.push_back(src.rows_b[p]);
        }
      }
    }
  }
  return out;
}

std::size_t GlobalIndex::owner(Index global) const {
  if (global < 0 || global >= width) throw DimensionError("global column out of range");
  const auto it = std::upper_bound(offsets.begin(), offsets.end(), global);
  return static_cast<std::size_t>(it - offsets.begin()) - 1;
}

GlobalIndex build_global_index(const std::vector<OrientedDomain>& domains) {
  GlobalIndex g;
  g.offsets.push_back(0);
  std::vector<std::uint32_t> aligned;
  std::unordered_map<std::uint32_t, std::size_t> col_owner;
  for (const auto& d : domains) {
    for (auto id : d.col_ids) {
      const auto [it, inserted] = col_owner.emplace(id, d.domain_id);
      if (!inserted) {
        throw Error("entity " + std::to_string(id) + " is owned by domains " + std::to_string(it->second) +
                    " and " + std::to_string(d.domain_id) + "; non-aligned entities must be partitioned");
      }
      g.dataset_ids.push_back(id);
    }
    g.offsets.push_back(g.offsets.back() + d.cols());
    aligned.insert(aligned.end(), d.row_ids.begin(), d.row_ids.end());
  }
  std::sort(aligned.begin(), aligned.end());
  g.aligned_count = std::unique(aligned.begin(), aligned.end()) - aligned.begin();
  g.width = g.offsets.back();
  return g;
}

void write_alignment(std::ostream& out, const AlignmentMap& map) {
  io::write_magic(out, kAlignmentMagic);
  io::write<std::uint64_t>(out, map.num_domains());
  for (std::size_t k = 0; k < map.num_domains(); ++k) {
    for (std::size_t l = 0; l < map.num_domains(); ++l) {
      const auto& s = map.pair(k, l);
      io::write<std::uint64_t>(out, s.size());
      for (std::size_t p = 0; p < s.size(); ++p) {
        io::write(out, s.ids[p]);
        io::write(out, s.rows_a[p]);
        io::write(out, s.rows_b[p]);
      }
    }
  }
}

AlignmentMap read_alignment(std::istream& in) {
  io::expect_magic(in, kAlignmentMagic, "alignment");
  const auto K = io::read<std::uint64_t>(in, "domain count");
  if (K > (1u << 16)) throw Error("alignment: implausible domain count");
  AlignmentMap map(K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t l = 0; l < K; ++l) {
      auto& s = map.pair(k, l);
      const auto count = io::read<std::uint64_t>(in, "pair size");
      for (std::uint64_t p = 0; p < count; ++p) {
        s.ids.push_back(io::read<std::uint32_t>(in, "id"));
        s.rows_a.push_back(io::read<std::uint32_t>(in, "row"));
        s.rows_b.push_back(io::read<std::uint32_t>(in, "row"));
      }
    }
  }
  return map;
}

}  // namespace mtal
