#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sga/dsl/eval.hpp"
#include "sga/dsl/parser.hpp"
#include "sga/mpm/sim.hpp"

namespace sga::support {

inline std::filesystem::path fixture(const std::string& rel) {
  return std::filesystem::path(SGA_FIXTURE_DIR) / rel;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sga_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Central difference of a scalar function along one coordinate, with the
/// step scaled by |x| + 1.
inline double central_difference(const std::function<double(double)>& f, double x, double rel_step) {
  const double h = rel_step * (std::abs(x) + 1.0);
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

inline dsl::Mat random_matrix(std::mt19937_64& rng, int d, double spread, bool near_identity) {
  std::normal_distribution<double> n;
  dsl::Mat m = dsl::Mat::Zero(d, d);
  if (near_identity) m.setIdentity();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) += spread * n(rng);
  return m;
}

/// Small 2D scene: 16^2 grid, a 0.2 m box of about 36 particles falling at
/// 1 m/s toward the floor.
struct SmallScene {
  mpm::SimConfig config;
  mpm::ParticleState initial;
};

inline SmallScene small_scene(int frames = 6, int substeps = 4) {
  SmallScene s;
  auto& c = s.config;
  c.dim = 2;
  c.grid_res = 16;
  c.dt = 5e-4;
  c.n_steps = frames;
  c.substeps_per_frame = substeps;
  c.gravity = mpm::Vec(2);
  c.gravity << 0.0, -9.8;
  c.boundary = mpm::Boundary::SlipBox;
  c.seed = 3;
  mpm::Geometry g;
  g.center = mpm::Vec(2);
  g.center << 0.5, 0.3;
  g.half_extents = mpm::Vec::Constant(2, 0.1);
  g.particles_per_cell = 4.0;
  const double h = mpm::lattice_spacing(c, g);
  c.particle_volume = h * h;
  c.particle_mass = 1000.0 * c.particle_volume;
  s.initial = mpm::init_scene(c, g);
  for (auto& v : s.initial.v) v << 0.2, -1.0;
  return s;
}

}  // namespace sga::support
