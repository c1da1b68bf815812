#include "crbm/model_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace crbm {
namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int k = 0; k < 4; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xFFu);
  out.write(b.data(), b.size());
}

void put_f64(std::ostream& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  std::array<char, 8> b{};
  for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((bits >> (8 * k)) & 0xFFu);
  out.write(b.data(), b.size());
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw DataError("model file truncated at byte offset " + std::to_string(offset_ + in_.gcount()));
    offset_ += n;
  }

  std::uint32_t u32() {
    std::array<unsigned char, 4> b{};
    bytes(reinterpret_cast<char*>(b.data()), b.size());
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= std::uint32_t{b[k]} << (8 * k);
    return v;
  }

  double f64() {
    std::array<unsigned char, 8> b{};
    bytes(reinterpret_cast<char*>(b.data()), b.size());
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= std::uint64_t{b[k]} << (8 * k);
    return std::bit_cast<double>(v);
  }

  void matrix(MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
  }

  void vector(VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
  }

  std::size_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

void put_matrix(std::ostream& out, const MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
}

}  // namespace

void write_model(std::ostream& out, const Crbm& p) {
  p.validate();
  out.write(kModelMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(p.num_visible()));
  put_u32(out, static_cast<std::uint32_t>(p.num_hidden()));
  put_u32(out, static_cast<std::uint32_t>(p.num_features()));
  put_matrix(out, p.Wvh);
  put_matrix(out, p.Wvx);
  put_matrix(out, p.Whx);
  put_matrix(out, p.bv);
  put_matrix(out, p.bh);
  if (!out) throw DataError("failed writing model");
}

Crbm read_model(std::istream& in) {
  Reader r(in);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kModelMagic, 8) != 0) throw DataError("bad model magic at byte offset 0");
  const auto nv = r.u32();
  const auto nh = r.u32();
  const auto nx = r.u32();
  if (nv == 0 || nh == 0) throw DataError("model header declares an empty layer at byte offset 8");
  Crbm p = Crbm::zeros(nv, nh, nx);
  r.matrix(p.Wvh);
  r.matrix(p.Wvx);
  r.matrix(p.Whx);
  r.vector(p.bv);
  r.vector(p.bh);
  if (in.peek() != std::char_traits<char>::eof())
    throw DataError("trailing bytes after model payload at byte offset " + std::to_string(r.offset()));
  p.validate();
  return p;
}

void save_model(const std::string& path, const Crbm& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  write_model(out, p);
}

Crbm load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  return read_model(in);
}

void save_rbm(const std::string& path, const Rbm& p) {
  Crbm c = Crbm::zeros(p.num_visible(), p.num_hidden(), 0);
  c.Wvh = p.W;
  c.bv = p.b1;
  c.bh = p.b2;
  save_model(path, c);
}

Rbm load_rbm(const std::string& path) {
  const Crbm c = load_model(path);
  if (c.num_features() != 0) throw DataError(path + " holds a conditional model (|x| > 0)");
  return Rbm(c.Wvh, c.bv, c.bh);
}

}  // namespace crbm
