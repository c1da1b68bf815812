#pragma once

#include <iosfwd>
#include <string>

#include "crbm/model.hpp"

namespace crbm {

/// Binary container: "CRBMBP01", u32 LE (|v|, |h|, |x|), then Wvh, Wvx, Whx, bv, bh as
/// little-endian f64 in row-major order. An RBM is stored with |x| = 0.
inline constexpr char kModelMagic[9] = "CRBMBP01";

void write_model(std::ostream& out, const Crbm& p);
Crbm read_model(std::istream& in);

void save_model(const std::string& path, const Crbm& p);
Crbm load_model(const std::string& path);

void save_rbm(const std::string& path, const Rbm& p);
/// Throws DataError when the file holds a conditional model (|x| > 0).
Rbm load_rbm(const std::string& path);

}  // namespace crbm
