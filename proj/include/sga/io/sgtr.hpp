#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "sga/mpm/sim.hpp"

namespace sga::io {

// Layout, little-endian: "SGTR", u32 version, u32 dim, u32 n_particles,
// u32 n_frames, f64 dt, then n_frames * n_particles * dim f64 positions
// (frame-major, then particle, then axis).
inline constexpr std::uint32_t kSgtrVersion = 1;

enum class SgtrErrorKind { BadMagic, VersionMismatch, TruncatedFile, TrailingData, BadHeader, Io };

class SgtrError : public std::runtime_error {
 public:
  SgtrError(SgtrErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  SgtrErrorKind kind() const { return kind_; }

 private:
  SgtrErrorKind kind_;
};

std::string encode_trajectory(const mpm::Trajectory& t);
mpm::Trajectory decode_trajectory(std::string_view bytes);

void save_trajectory(const std::filesystem::path& path, const mpm::Trajectory& t);
mpm::Trajectory load_trajectory(const std::filesystem::path& path);

}  // namespace sga::io
