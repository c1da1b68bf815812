#include "crbm/data.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>

#include "crbm/inference.hpp"
#include "crbm/model.hpp"

namespace crbm {
namespace {

constexpr std::uint32_t kIdxMagic = 0x00000803;
constexpr char kRawMagic[9] = "BINMAT01";

class ByteReader {
 public:
  ByteReader(std::istream& in, const char* what) : in_(in), what_(what) {}

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != n)
      throw DataError(std::string(what_) + ": truncated at byte offset " + std::to_string(offset_ + got));
    offset_ += n;
  }

  std::uint32_t u32_be() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
  }

  std::uint32_t u32_le() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    return (std::uint32_t{b[3]} << 24) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[1]} << 8) | b[0];
  }

  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof())
      throw DataError(std::string(what_) + ": payload longer than declared dims at byte offset " +
                      std::to_string(offset_));
  }

  std::size_t offset() const { return offset_; }

 private:
  std::istream& in_;
  const char* what_;
  std::size_t offset_ = 0;
};

ImageSet read_payload(ByteReader& r, std::uint32_t n, std::uint32_t h, std::uint32_t w) {
  if (n == 0) throw DataError("image file declares zero images");
  if (h == 0 || w == 0) throw DataError("image file declares an empty image shape");
  const std::uint64_t per_image = std::uint64_t{h} * w;
  if (per_image > std::numeric_limits<int>::max() || std::uint64_t{n} * per_image > (std::uint64_t{1} << 34))
    throw DataError("image file dims too large");
  ImageSet out;
  out.height = static_cast<int>(h);
  out.width = static_cast<int>(w);
  out.pixels.resize(n, static_cast<Eigen::Index>(per_image));
  r.bytes(reinterpret_cast<char*>(out.pixels.data()), static_cast<std::size_t>(n * per_image));
  r.expect_end();
  return out;
}

void put_u32_be(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

void put_u32_le(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 24)};
  out.write(b, 4);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  return out;
}

void check_shape(const ImageSet& images) {
  if (images.size() < 1) throw DataError("image set is empty");
  if (static_cast<Eigen::Index>(images.height) * images.width != images.num_pixels())
    throw DataError("image set shape does not match its pixel count");
}

}  // namespace

void ImageSet::set_image(Eigen::Index n, const VectorXd& v) {
  require_dims(v.size() == num_pixels(), "set_image: pixel count mismatch");
  pixels.row(n) = v.transpose().cast<std::uint8_t>();
}

ImageSet ImageSet::from_vectors(const std::vector<VectorXd>& images, int height, int width) {
  ImageSet out;
  out.height = height;
  out.width = width;
  out.pixels.resize(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(height) * width);
  for (std::size_t n = 0; n < images.size(); ++n) out.set_image(static_cast<Eigen::Index>(n), images[n]);
  return out;
}

ImageSet read_idx(std::istream& in) {
  ByteReader r(in, "idx");
  const auto magic = r.u32_be();
  if (magic != kIdxMagic) throw DataError("idx: bad magic at byte offset 0 (expected 0x00000803)");
  const auto n = r.u32_be();
  const auto h = r.u32_be();
  const auto w = r.u32_be();
  return read_payload(r, n, h, w);
}

ImageSet load_idx(const std::string& path) {
  auto in = open_in(path);
  return read_idx(in);
}

void write_idx(const std::string& path, const ImageSet& images) {
  check_shape(images);
  auto out = open_out(path);
  put_u32_be(out, kIdxMagic);
  put_u32_be(out, static_cast<std::uint32_t>(images.size()));
  put_u32_be(out, static_cast<std::uint32_t>(images.height));
  put_u32_be(out, static_cast<std::uint32_t>(images.width));
  out.write(reinterpret_cast<const char*>(images.pixels.data()), images.pixels.size());
}

ImageSet read_raw(std::istream& in) {
  ByteReader r(in, "raw");
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kRawMagic, 8) != 0) throw DataError("raw: bad magic at byte offset 0");
  const auto n = r.u32_le();
  const auto h = r.u32_le();
  const auto w = r.u32_le();
  return read_payload(r, n, h, w);
}

ImageSet load_raw(const std::string& path) {
  auto in = open_in(path);
  return read_raw(in);
}

void write_raw(const std::string& path, const ImageSet& images) {
  check_shape(images);
  auto out = open_out(path);
  out.write(kRawMagic, 8);
  put_u32_le(out, static_cast<std::uint32_t>(images.size()));
  put_u32_le(out, static_cast<std::uint32_t>(images.height));
  put_u32_le(out, static_cast<std::uint32_t>(images.width));
  out.write(reinterpret_cast<const char*>(images.pixels.data()), images.pixels.size());
}

ImageSet load_images(const std::string& path) {
  auto in = open_in(path);
  char head[8] = {};
  in.read(head, 8);
  in.clear();
  in.seekg(0);
  if (std::memcmp(head, kRawMagic, 8) == 0) return read_raw(in);
  return read_idx(in);
}

ImageSet binarize(const ImageSet& images, int threshold) {
  ImageSet out = images;
  out.pixels = (images.pixels.array().cast<int>() > threshold).cast<std::uint8_t>().matrix();
  return out;
}

void CorruptionSpec::validate(int height, int width) const {
  if (!(flipProb >= 0.0 && flipProb <= 1.0)) throw std::invalid_argument("flip probability must be in [0,1]");
  if (kind == CorruptionKind::kOcclude) {
    if (patchH < 1 || patchW < 1 || patchH > height || patchW > width)
      throw std::invalid_argument("occlusion patch must fit inside the image");
    if (fillValue != 0 && fillValue != 1) throw std::invalid_argument("occlusion fill must be 0 or 1");
  }
}

StructuredPair corrupt_flip(const VectorXd& v, double flip_prob, Rng& rng) {
  require_binary(v, "corrupt_flip: v");
  std::bernoulli_distribution flip(flip_prob);
  StructuredPair out{v, v, VectorXd::Zero(v.size())};
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (flip(rng)) {
      out.x(i) = 1.0 - v(i);
      out.changedMask(i) = 1.0;
    }
  }
  return out;
}

PatchCorner draw_patch_corner(int height, int width, int patch_h, int patch_w, Rng& rng) {
  std::uniform_int_distribution<int> row(0, height - patch_h);
  std::uniform_int_distribution<int> col(0, width - patch_w);
  PatchCorner c;
  c.row = row(rng);
  c.col = col(rng);
  return c;
}

StructuredPair corrupt_occlude(const VectorXd& v, int height, int width, const CorruptionSpec& spec, Rng& rng) {
  require_binary(v, "corrupt_occlude: v");
  require_dims(v.size() == static_cast<Eigen::Index>(height) * width, "corrupt_occlude: image size mismatch");
  spec.validate(height, width);
  const PatchCorner c = draw_patch_corner(height, width, spec.patchH, spec.patchW, rng);
  StructuredPair out{v, v, VectorXd::Zero(v.size())};
  const double fill = spec.fillValue;
  for (int r = c.row; r < c.row + spec.patchH; ++r)
    for (int k = c.col; k < c.col + spec.patchW; ++k) {
      const auto i = static_cast<Eigen::Index>(r) * width + k;
      if (out.x(i) != fill) out.changedMask(i) = 1.0;
      out.x(i) = fill;
    }
  return out;
}

std::vector<StructuredPair> corrupt_dataset(const ImageSet& clean, const CorruptionSpec& spec) {
  check_shape(clean);
  spec.validate(clean.height, clean.width);
  if (!clean.is_binary()) throw DataError("corrupt_dataset: images must be binarized first");
  std::vector<StructuredPair> out;
  out.reserve(static_cast<std::size_t>(clean.size()));
  for (Eigen::Index n = 0; n < clean.size(); ++n) {
    Rng rng = make_stream(spec.seed, {static_cast<std::uint64_t>(n)});
    const VectorXd v = clean.image(n);
    if (spec.kind == CorruptionKind::kFlip)
      out.push_back(corrupt_flip(v, spec.flipProb, rng));
    else
      out.push_back(corrupt_occlude(v, clean.height, clean.width, spec, rng));
  }
  return out;
}

Metrics error_metrics(const std::vector<VectorXd>& predictions, const std::vector<StructuredPair>& pairs) {
  require_dims(predictions.size() == pairs.size(), "error_metrics: prediction count mismatch");
  if (pairs.empty()) throw DataError("error_metrics: no instances");
  double wrong = 0, total = 0, wrong_changed = 0, changed = 0;
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const auto& pair = pairs[n];
    require_dims(predictions[n].size() == pair.v.size(), "error_metrics: prediction length mismatch");
    const auto miss = (predictions[n].array() != pair.v.array()).cast<double>();
    wrong += miss.sum();
    total += static_cast<double>(pair.v.size());
    wrong_changed += (miss * pair.changedMask.array()).sum();
    changed += pair.changedMask.sum();
  }
  Metrics m;
  m.nInstances = pairs.size();
  m.allErr = 100.0 * wrong / total;
  m.changedErr = changed > 0 ? 100.0 * wrong_changed / changed : std::numeric_limits<double>::quiet_NaN();
  return m;
}

Split split(std::size_t n, const std::array<std::size_t, 3>& sizes, std::uint64_t seed) {
  if (sizes[0] + sizes[1] + sizes[2] != n) throw std::invalid_argument("split sizes must sum to the dataset size");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = make_stream(seed, {0x5u});
  std::shuffle(perm.begin(), perm.end(), rng);
  Split s;
  auto first = perm.begin();
  s.train.assign(first, first + static_cast<std::ptrdiff_t>(sizes[0]));
  first += static_cast<std::ptrdiff_t>(sizes[0]);
  s.val.assign(first, first + static_cast<std::ptrdiff_t>(sizes[1]));
  first += static_cast<std::ptrdiff_t>(sizes[1]);
  s.test.assign(first, perm.end());
  return s;
}

ImageSet subset(const ImageSet& images, const std::vector<std::size_t>& indices) {
  ImageSet out;
  out.height = images.height;
  out.width = images.width;
  out.pixels.resize(static_cast<Eigen::Index>(indices.size()), images.num_pixels());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= static_cast<std::size_t>(images.size())) throw std::out_of_range("subset: index out of range");
    out.pixels.row(static_cast<Eigen::Index>(k)) = images.pixels.row(static_cast<Eigen::Index>(indices[k]));
  }
  return out;
}

PairedFiles to_files(const std::vector<StructuredPair>& pairs, int height, int width) {
  std::vector<VectorXd> v, x, m;
  for (const auto& p : pairs) {
    v.push_back(p.v);
    x.push_back(p.x);
    m.push_back(p.changedMask);
  }
  return {ImageSet::from_vectors(v, height, width), ImageSet::from_vectors(x, height, width),
          ImageSet::from_vectors(m, height, width)};
}

std::vector<StructuredPair> from_files(const PairedFiles& files) {
  const auto n = files.clean.size();
  if (files.corrupted.size() != n || files.mask.size() != n ||
      files.corrupted.num_pixels() != files.clean.num_pixels() || files.mask.num_pixels() != files.clean.num_pixels())
    throw DataError("paired dataset files disagree on shape");
  std::vector<StructuredPair> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out.push_back({files.clean.image(i), files.corrupted.image(i), files.mask.image(i)});
  return out;
}

void save_pairs(const std::string& dir, const std::vector<StructuredPair>& pairs, int height, int width) {
  std::filesystem::create_directories(dir);
  const auto files = to_files(pairs, height, width);
  const std::filesystem::path root(dir);
  write_raw((root / "clean.bin").string(), files.clean);
  write_raw((root / "corrupted.bin").string(), files.corrupted);
  write_raw((root / "mask.bin").string(), files.mask);
}

std::vector<StructuredPair> load_pairs(const std::string& dir, int* height, int* width) {
  const std::filesystem::path root(dir);
  PairedFiles files{load_raw((root / "clean.bin").string()), load_raw((root / "corrupted.bin").string()),
                    load_raw((root / "mask.bin").string())};
  if (!files.clean.is_binary() || !files.corrupted.is_binary() || !files.mask.is_binary())
    throw DataError(dir + ": paired files must be binary");
  if (height) *height = files.clean.height;
  if (width) *width = files.clean.width;
  return from_files(files);
}

void write_pgm_grid(const std::string& path, const std::vector<ImageSet>& rows, std::size_t max_columns) {
  if (rows.empty()) throw std::invalid_argument("write_pgm_grid: no rows");
  const int h = rows.front().height;
  const int w = rows.front().width;
  std::size_t cols = 0;
  for (const auto& r : rows) {
    if (r.height != h || r.width != w) throw std::invalid_argument("write_pgm_grid: image shapes differ");
    cols = std::max(cols, std::min(max_columns, static_cast<std::size_t>(r.size())));
  }
  const std::size_t grid_w = cols * static_cast<std::size_t>(w + 1) + 1;
  const std::size_t grid_h = rows.size() * static_cast<std::size_t>(h + 1) + 1;
  std::vector<std::uint8_t> canvas(grid_w * grid_h, 128);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const bool binary = rows[r].is_binary();
    const std::size_t n = std::min(cols, static_cast<std::size_t>(rows[r].size()));
    for (std::size_t c = 0; c < n; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const std::uint8_t value = rows[r].pixels(static_cast<Eigen::Index>(c), y * w + x);
          const std::size_t gy = r * (h + 1) + 1 + y;
          const std::size_t gx = c * (w + 1) + 1 + x;
          canvas[gy * grid_w + gx] = binary ? static_cast<std::uint8_t>(value ? 255 : 0) : value;
        }
  }
  auto out = open_out(path);
  out << "P5\n" << grid_w << ' ' << grid_h << "\n255\n";
  out.write(reinterpret_cast<const char*>(canvas.data()), static_cast<std::streamsize>(canvas.size()));
}

ImageSet synthetic_stroke_images(const SyntheticSpec& spec) {
  if (spec.count < 1 || spec.height < 4 || spec.width < 4 || spec.strokes < 1)
    throw std::invalid_argument("synthetic_stroke_images: bad spec");
  const int nv = spec.height * spec.width;
  constexpr double kStroke = 9.0;
  Rbm model = Rbm::zeros(nv, spec.strokes);
  model.b1.setConstant(-5.0);

  Rng layout = make_stream(spec.seed, {0x7e3u});
  const int dr[4] = {0, 1, 1, 1};
  const int dc[4] = {1, 0, 1, -1};
  for (int j = 0; j < spec.strokes; ++j) {
    const int dir = std::uniform_int_distribution<int>(0, 3)(layout);
    const int len = std::uniform_int_distribution<int>(5, std::min(9, std::min(spec.height, spec.width)))(layout);
    const int span_r = dr[dir] * (len - 1);
    const int span_c = dc[dir] * (len - 1);
    const int r0 = std::uniform_int_distribution<int>(0, spec.height - 1 - span_r)(layout);
    const int c_lo = span_c < 0 ? -span_c : 0;
    const int c_hi = spec.width - 1 - (span_c > 0 ? span_c : 0);
    const int c0 = std::uniform_int_distribution<int>(c_lo, c_hi)(layout);
    for (int k = 0; k < len; ++k) model.W((r0 + k * dr[dir]) * spec.width + c0 + k * dc[dir], j) = kStroke;
    // on iff at most one stroke pixel is missing
    model.b2(j) = -kStroke * (len - 1) + 4.5;
  }

  ImageSet out;
  out.height = spec.height;
  out.width = spec.width;
  out.pixels.resize(spec.count, nv);
  for (int n = 0; n < spec.count; ++n) {
    Rng rng = make_stream(spec.seed, {0x11u, static_cast<std::uint64_t>(n)});
    VectorXd h(spec.strokes);
    std::bernoulli_distribution active(spec.activeRate);
    for (int j = 0; j < spec.strokes; ++j) h(j) = active(rng) ? 1.0 : 0.0;
    VectorXd v = sample_bernoulli(conditional_v_given_h(model, h), rng);
    for (int s = 0; s < spec.gibbsSweeps; ++s) v = gibbs_step(model, v, rng).v;
    out.set_image(n, v);
  }
  return out;
}

}  // namespace crbm
