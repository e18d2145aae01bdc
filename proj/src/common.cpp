#include "mtal/common.hpp"

#include <algorithm>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace mtal {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto l = spdlog::get("mtal");
    if (!l) l = spdlog::stderr_color_mt("mtal");
    return l;
  }();
  return instance;
}

bool same_pattern(const RowSparse& a, const RowSparse& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.nonZeros() != b.nonZeros()) {
    return false;
  }
  if (!a.isCompressed() || !b.isCompressed()) return false;
  const auto n = static_cast<std::size_t>(a.nonZeros());
  return std::equal(a.outerIndexPtr(), a.outerIndexPtr() + a.rows() + 1, b.outerIndexPtr()) &&
         std::equal(a.innerIndexPtr(), a.innerIndexPtr() + n, b.innerIndexPtr());
}

RowSparse with_values(const RowSparse& pattern, const Eigen::VectorXd& values) {
  if (values.size() != pattern.nonZeros()) {
    throw DimensionError("with_values: value count does not match the pattern");
  }
  RowSparse out = pattern;
  values_of(out) = values;
  return out;
}

}  // namespace mtal
