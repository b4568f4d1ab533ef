#include "sga/io/sgtr.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sga::io {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t raw(int n) {
    if (bytes_.size() - pos_ < static_cast<std::size_t>(n))
      throw SgtrError(SgtrErrorKind::TruncatedFile, "SGTR: file ends early");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += n;
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(raw(4)); }
  double f64() { return std::bit_cast<double>(raw(8)); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_trajectory(const mpm::Trajectory& t) {
  const std::size_t expected = static_cast<std::size_t>(t.n_frames) * t.n_particles * t.dim;
  if (t.dim < 1 || t.n_particles < 0 || t.n_frames < 0 || t.positions.size() != expected)
    throw SgtrError(SgtrErrorKind::BadHeader, "SGTR: trajectory shape and data length disagree");
  std::string out = "SGTR";
  put_u32(out, kSgtrVersion);
  put_u32(out, static_cast<std::uint32_t>(t.dim));
  put_u32(out, static_cast<std::uint32_t>(t.n_particles));
  put_u32(out, static_cast<std::uint32_t>(t.n_frames));
  put_f64(out, t.dt);
  out.reserve(out.size() + 8 * expected);
  for (double v : t.positions) put_f64(out, v);
  return out;
}

mpm::Trajectory decode_trajectory(std::string_view bytes) {
  if (bytes.size() < 4) throw SgtrError(SgtrErrorKind::TruncatedFile, "SGTR: file ends early");
  if (bytes.substr(0, 4) != "SGTR") throw SgtrError(SgtrErrorKind::BadMagic, "SGTR: bad magic bytes");
  Reader r(bytes.substr(4));
  const auto version = r.u32();
  if (version != kSgtrVersion)
    throw SgtrError(SgtrErrorKind::VersionMismatch,
                    "SGTR: version " + std::to_string(version) + ", expected " +
                        std::to_string(kSgtrVersion));
  mpm::Trajectory t;
  const auto dim = r.u32();
  const auto n = r.u32();
  const auto frames = r.u32();
  t.dt = r.f64();
  if (dim < 1 || dim > 3) throw SgtrError(SgtrErrorKind::BadHeader, "SGTR: dim must be 1 to 3");
  t.dim = static_cast<int>(dim);
  t.n_particles = static_cast<int>(n);
  t.n_frames = static_cast<int>(frames);
  const auto wide = static_cast<unsigned __int128>(frames) * n * dim;
  if (r.remaining() / 8 < wide) throw SgtrError(SgtrErrorKind::TruncatedFile, "SGTR: file ends early");
  const auto count = static_cast<std::size_t>(wide);
  if (r.remaining() != count * 8)
    throw SgtrError(SgtrErrorKind::TrailingData, "SGTR: unexpected bytes after the positions");
  t.positions.resize(count);
  for (auto& v : t.positions) v = r.f64();
  return t;
}

void save_trajectory(const std::filesystem::path& path, const mpm::Trajectory& t) {
  const auto bytes = encode_trajectory(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SgtrError(SgtrErrorKind::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw SgtrError(SgtrErrorKind::Io, "write failed for " + path.string());
}

mpm::Trajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SgtrError(SgtrErrorKind::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_trajectory(ss.str());
}

}  // namespace sga::io
