#include "mtal/nn/checkpoint.hpp"

#include "mtal/binary_io.hpp"

namespace mtal::nn {
namespace {

constexpr char kMagic[9] = "MTALAE1";

}  // namespace

void write_params(std::ostream& out, const Params& params) {
  const auto s = params.shape();
  io::write_magic(out, kMagic);
  for (Index d : {s.d_in, s.hidden0, s.hidden1, s.d_out, s.side_row, s.side_col}) {
    io::write<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  }
  io::write<double>(out, params.dropout_rate);
  zip_tensors(
      [&](const char*, const auto& t) {
        for (Index r = 0; r < t.rows(); ++r)
          for (Index c = 0; c < t.cols(); ++c) io::write<float>(out, static_cast<float>(t(r, c)));
      },
      params);
}

Params read_params(std::istream& in) {
  io::expect_magic(in, kMagic, "model checkpoint");
  AaeShape s;
  for (Index* d : {&s.d_in, &s.hidden0, &s.hidden1, &s.d_out, &s.side_row, &s.side_col}) {
    const auto v = io::read<std::uint64_t>(in, "layer dimension");
    if (v > (std::uint64_t{1} << 32)) throw Error("model checkpoint: implausible layer dimension");
    *d = static_cast<Index>(v);
  }
  const double dropout = io::read<double>(in, "dropout rate");
  auto params = Params::zeros(s, dropout);
  zip_tensors(
      [&](const char* name, auto& t) {
        for (Index r = 0; r < t.rows(); ++r)
          for (Index c = 0; c < t.cols(); ++c) t(r, c) = io::read<float>(in, name);
      },
      params);
  return params;
}

}  // namespace mtal::nn
