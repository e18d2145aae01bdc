#pragma once

#include <iosfwd>

#include "mtal/nn/train.hpp"

namespace mtal::nn {

// "MTALAE1\0", u64 d_in, hidden0, hidden1, d_out, side_row, side_col, f64
// dropout rate, then every tensor in declaration order as row-major f32.
// Values are stored in single precision; see round_to_float.
void write_params(std::ostream& out, const Params& params);
Params read_params(std::istream& in);

}  // namespace mtal::nn
