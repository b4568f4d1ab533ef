#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sga/dsl/ast.hpp"
#include "sga/dsl/eval.hpp"

namespace sga::mpm {

using Mat = dsl::Mat;
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 3, 1>;

enum class Boundary { Sticky, SlipBox };
enum class Validity { Valid, Invalid };

std::string_view to_string(Validity v);
std::string_view to_string(Boundary b);

/// Velocity bound used by the time-step check: dt <= kCflFactor * dx / kMaxSpeedEstimate.
inline constexpr double kMaxSpeedEstimate = 10.0;
inline constexpr double kCflFactor = 0.5;
/// Nodes closer than this many cells to a wall are constrained.
inline constexpr int kBoundaryCells = 2;

struct SimConfig {
  int dim = 2;
  int grid_res = 32;  // cells per axis on the unit box
  double dt = 2e-4;   // substep, seconds
  int n_steps = 25;   // recorded frames
  int substeps_per_frame = 4;
  Vec gravity = Vec::Zero(2);
  double particle_mass = 0.0;    // kg
  double particle_volume = 0.0;  // m^3
  Boundary boundary = Boundary::SlipBox;
  std::uint64_t seed = 0;

  double dx() const { return 1.0 / grid_res; }
  int total_substeps() const { return n_steps * substeps_per_frame; }
  double frame_dt() const { return dt * substeps_per_frame; }
};

/// Throws std::invalid_argument when a field is out of range or dt violates
/// the stability bound.
void check_config(const SimConfig& config);

struct ParticleState {
  int dim = 2;
  std::vector<Vec> x;  // positions, m
  std::vector<Vec> v;  // velocities, m/s
  std::vector<Mat> F;  // deformation gradients
  std::vector<Mat> C;  // APIC affine velocity, 1/s

  std::size_t size() const { return x.size(); }
  bool operator==(const ParticleState&) const = default;
};

struct Geometry {
  enum class Shape { Box, Ball };
  Shape shape = Shape::Box;
  Vec center = Vec::Constant(2, 0.5);
  Vec half_extents = Vec::Constant(2, 0.1);  // Box
  double radius = 0.1;                       // Ball
  double particles_per_cell = 4.0;           // target count per cell area (2D) or volume (3D)
};

class GeometryOutOfBounds : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Lattice spacing init_scene uses for this geometry; particle_volume should
/// be spacing^dim for a consistent density.
double lattice_spacing(const SimConfig& config, const Geometry& geometry);

/// Jittered lattice inside the shape. F = I, v = 0, C = 0. Deterministic in
/// config.seed.
ParticleState init_scene(const SimConfig& config, const Geometry& geometry);

/// Elastic law plus an optional plastic correction. The parameter vector of a
/// material is the elastic parameters followed by the plastic ones.
struct Material {
  dsl::LawProgram elastic;
  std::optional<dsl::LawProgram> plastic;

  std::size_t param_count() const;
  std::vector<double> default_theta() const;
};

struct Trajectory {
  int dim = 2;
  int n_particles = 0;
  int n_frames = 0;
  double dt = 0.0;                // time between frames, s
  std::vector<double> positions;  // frame-major, then particle, then axis

  double* frame(int t) { return positions.data() + static_cast<std::size_t>(t) * n_particles * dim; }
  const double* frame(int t) const {
    return positions.data() + static_cast<std::size_t>(t) * n_particles * dim;
  }
  bool operator==(const Trajectory&) const = default;
};

/// Grid scratch of one substep: node mass and momentum after P2G, node
/// velocity after the grid update. Nodes are (grid_res+1)^dim, x-fastest.
struct GridState {
  int dim = 2;
  int res = 0;
  std::vector<double> mass;
  std::vector<double> momentum;  // node-major, then axis
  std::vector<double> velocity;

  std::size_t nodes() const { return mass.size(); }
};

struct Tape {
  SimConfig config;
  std::vector<double> theta;
  std::vector<ParticleState> snapshots;  // state entering each executed substep
  std::vector<GridState> grids;          // grid scratch of each executed substep
  ParticleState final_state;             // state after the last executed substep
  std::vector<std::uint8_t> boundary_mask;  // 1 keeps a node velocity component

  std::size_t size() const { return snapshots.size(); }
};

struct SimResult {
  Trajectory trajectory;
  Tape tape;
  Validity validity = Validity::Valid;
  std::string failure;  // empty when valid
};

struct SimOptions {
  bool record_tape = true;
};

/// Runs n_steps frames. Never throws on numerical failure: the run stops at
/// the failing substep and keeps the frames recorded so far.
SimResult simulate(const SimConfig& config, const Material& material, std::span<const double> theta,
                   const ParticleState& initial, const SimOptions& options = {});

class SubstepFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One substep. Throws SubstepFailure where simulate would mark the run invalid.
ParticleState advance(const SimConfig& config, const Material& material,
                      std::span<const double> theta, const ParticleState& state,
                      GridState* grid = nullptr);

class TapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mean over frames, particles and axes of the squared position difference.
double mse(const Trajectory& a, const Trajectory& b);

struct Gradient {
  double loss = 0.0;
  std::vector<double> grad_theta;
  bool valid = true;
  std::string error;
};

/// Reverse sweep over the tape. Throws TapeMismatch when the tape does not
/// belong to (config, material, theta) or the trajectories do not match it.
/// A non-finite gradient or a failing law adjoint is reported in the result.
Gradient backprop(const SimConfig& config, const Material& material, std::span<const double> theta,
                  const Tape& tape, const Trajectory& trajectory, const Trajectory& target);

/// Particle-to-grid scatter alone (mass and momentum; velocity left empty).
/// Throws SubstepFailure if a particle is outside the grid or the law fails.
GridState p2g(const SimConfig& config, const Material& material, std::span<const double> theta,
              const ParticleState& state);

struct MomentumReport {
  Vec particles;
  Vec grid;
};

MomentumReport conservation_report(const SimConfig& config, const ParticleState& state_before_p2g,
                                   const GridState& grid_after_p2g);

/// Quadratic B-spline weights of the three nodes around a particle, given its
/// position in cell units relative to the first node (fx in [0.5, 1.5)).
std::array<double, 3> bspline_weights(double fx);

}  // namespace sga::mpm
