#include <gtest/gtest.h>

#include <random>

#include "sga/dsl/parser.hpp"
#include "sga/mpm/sim.hpp"
#include "sga/tasks/catalog.hpp"
#include "support.hpp"

using namespace sga;
using mpm::Vec;

namespace {

dsl::LawProgram law(const char* src) { return dsl::parse_law(src); }

const char* kZeroStress = R"(law elastic "zero" { params {} forward(F: mat) -> mat { return 0.0 * F; } })";

mpm::Material elastic(const std::string& name) { return {tasks::bundled_law(name), std::nullopt}; }

// Loss of the full simulation as a function of theta.
double loss_at(const mpm::SimConfig& c, const mpm::Material& m, std::vector<double> theta,
               const mpm::ParticleState& init, const mpm::Trajectory& target) {
  const auto r = mpm::simulate(c, m, theta, init, {.record_tape = false});
  EXPECT_EQ(r.validity, mpm::Validity::Valid) << r.failure;
  return mpm::mse(r.trajectory, target);
}

std::vector<double> fd_grad(const mpm::SimConfig& c, const mpm::Material& m, const std::vector<double>& theta,
                            const mpm::ParticleState& init, const mpm::Trajectory& target) {
  std::vector<double> g(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k)
    g[k] = support::central_difference(
        [&](double x) {
          auto t = theta;
          t[k] = x;
          return loss_at(c, m, t, init, target);
        },
        theta[k], 1e-6);
  return g;
}

}  // namespace

TEST(BSpline, PartitionOfUnity) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (int i = 0; i < 1000; ++i) {
    const auto w = mpm::bspline_weights(u(rng));
    EXPECT_NEAR(w[0] + w[1] + w[2], 1.0, 1e-12);
    for (double x : w) EXPECT_GE(x, 0.0);
  }
}

TEST(Config, RejectsUnstableStep) {
  auto s = support::small_scene();
  auto c = s.config;
  c.dt = 1.0;
  EXPECT_THROW(mpm::check_config(c), std::invalid_argument);
  c = s.config;
  c.grid_res = 4;
  EXPECT_THROW(mpm::check_config(c), std::invalid_argument);
  c = s.config;
  c.dim = 4;
  EXPECT_THROW(mpm::check_config(c), std::invalid_argument);
}

TEST(InitScene, DeterministicInSeed) {
  auto s = support::small_scene();
  mpm::Geometry g;
  g.center = Vec::Constant(2, 0.5);
  g.half_extents = Vec::Constant(2, 0.1);
  g.particles_per_cell = 16;
  auto c = s.config;
  c.seed = 7;
  const auto a = mpm::init_scene(c, g);
  EXPECT_EQ(a, mpm::init_scene(c, g));
  c.seed = 8;
  const auto b = mpm::init_scene(c, g);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_NE(a.x, b.x);
  for (std::size_t p = 0; p < a.size(); ++p) {
    EXPECT_TRUE(a.F[p].isIdentity());
    EXPECT_TRUE(a.v[p].isZero());
    EXPECT_TRUE(a.C[p].isZero());
  }
}

TEST(InitScene, BallContainment3D) {
  mpm::SimConfig c;
  c.dim = 3;
  c.grid_res = 16;
  c.dt = 1e-4;
  c.gravity = Vec::Zero(3);
  c.particle_mass = 1.0;
  c.particle_volume = 1.0;
  mpm::Geometry g;
  g.shape = mpm::Geometry::Shape::Ball;
  g.center = Vec::Constant(3, 0.5);
  g.radius = 0.1;
  g.particles_per_cell = 8;
  const auto s = mpm::init_scene(c, g);
  ASSERT_GT(s.size(), 0u);
  for (const auto& x : s.x) EXPECT_LE((x - g.center).norm(), 0.1);
}

TEST(InitScene, GeometryOutOfBounds) {
  auto c = support::small_scene().config;
  mpm::Geometry g;
  g.center = Vec::Constant(2, 0.15);
  g.half_extents = Vec::Constant(2, 0.1);
  EXPECT_THROW(mpm::init_scene(c, g), mpm::GeometryOutOfBounds);
}

TEST(Simulate, FreeFallKinematics) {
  mpm::SimConfig c;
  c.dim = 2;
  c.grid_res = 16;
  c.dt = 1e-4;
  c.n_steps = 1;
  c.substeps_per_frame = 100;
  c.gravity = Vec(2);
  c.gravity << 0.0, -9.8;
  c.particle_mass = 1e-3;
  c.particle_volume = 1e-6;
  c.boundary = mpm::Boundary::Sticky;
  mpm::ParticleState s;
  s.dim = 2;
  s.x = {Vec::Constant(2, 0.5)};
  s.v = {Vec::Zero(2)};
  s.F = {mpm::Mat::Identity(2, 2)};
  s.C = {mpm::Mat::Zero(2, 2)};
  const auto r = mpm::simulate(c, {law(kZeroStress), std::nullopt}, {}, s);
  ASSERT_EQ(r.validity, mpm::Validity::Valid);
  EXPECT_NEAR(r.tape.final_state.v[0][1], -0.098, 1e-12);
  EXPECT_NEAR(r.tape.final_state.v[0][0], 0.0, 1e-15);
  // x_n = -g dt^2 n(n+1)/2 for symplectic Euler
  EXPECT_NEAR(r.trajectory.frame(0)[1], 0.5 - 9.8 * 1e-8 * 100 * 101 / 2, 1e-12);
}

TEST(Simulate, ZeroFramesKeepsInitialFrame) {
  auto s = support::small_scene(0);
  const auto r = mpm::simulate(s.config, elastic("neo_hookean"), elastic("neo_hookean").default_theta(), s.initial);
  EXPECT_EQ(r.validity, mpm::Validity::Valid);
  ASSERT_EQ(r.trajectory.n_frames, 1);
  for (std::size_t p = 0; p < s.initial.size(); ++p)
    EXPECT_EQ(r.trajectory.frame(0)[2 * p + 1], s.initial.x[p][1]);
}

TEST(Simulate, ExplodingLawIsInvalid) {
  auto s = support::small_scene();
  const auto bad = law(R"(law elastic "boom" { params {} forward(F: mat) -> mat { return exp(1000*trace(F))*F; } })");
  const auto r = mpm::simulate(s.config, {bad, std::nullopt}, {}, s.initial);
  EXPECT_EQ(r.validity, mpm::Validity::Invalid);
  EXPECT_FALSE(r.failure.empty());
  EXPECT_LT(r.trajectory.n_frames, s.config.n_steps);
  EXPECT_TRUE(std::all_of(r.trajectory.positions.begin(), r.trajectory.positions.end(),
                          [](double x) { return std::isfinite(x); }));
  // an incomplete tape is refused by the adjoint
  EXPECT_THROW(mpm::backprop(s.config, {bad, std::nullopt}, std::vector<double>{}, r.tape, r.trajectory,
                             r.trajectory),
               mpm::TapeMismatch);
}

TEST(Simulate, FastParticleIsInvalid) {
  auto s = support::small_scene();
  for (auto& v : s.initial.v) v << 0.0, -80.0;  // 0.04 m per substep on a 0.0625 m grid
  const auto r = mpm::simulate(s.config, {law(kZeroStress), std::nullopt}, {}, s.initial);
  EXPECT_EQ(r.validity, mpm::Validity::Invalid);
  EXPECT_NE(r.failure.find("half a cell"), std::string::npos) << r.failure;
}

TEST(Simulate, BitReproducible) {
  auto s = support::small_scene();
  const auto m = elastic("neo_hookean");
  const auto a = mpm::simulate(s.config, m, m.default_theta(), s.initial);
  const auto b = mpm::simulate(s.config, m, m.default_theta(), s.initial);
  EXPECT_EQ(a.trajectory, b.trajectory);
}

TEST(Simulate, TapeReplaysBitIdentically) {
  auto s = support::small_scene(3);
  mpm::Material m{tasks::bundled_law("neo_hookean"), tasks::bundled_law("von_mises")};
  const auto theta = m.default_theta();
  const auto r = mpm::simulate(s.config, m, theta, s.initial);
  ASSERT_EQ(r.tape.size(), static_cast<std::size_t>(s.config.total_substeps()));
  for (std::size_t k = 0; k < r.tape.size(); ++k) {
    const auto next = mpm::advance(s.config, m, theta, r.tape.snapshots[k]);
    const auto& expect = k + 1 < r.tape.size() ? r.tape.snapshots[k + 1] : r.tape.final_state;
    EXPECT_EQ(next, expect) << "substep " << k;
  }
}

TEST(Conservation, UniformVelocity) {
  auto s = support::small_scene();
  Vec v0(2);
  v0 << 0.3, -0.7;
  for (auto& v : s.initial.v) v = v0;
  const auto m = elastic("neo_hookean");
  const auto grid = mpm::p2g(s.config, m, m.default_theta(), s.initial);
  const auto rep = mpm::conservation_report(s.config, s.initial, grid);
  const Vec expect = static_cast<double>(s.initial.size()) * s.config.particle_mass * v0;
  EXPECT_TRUE(rep.particles.isApprox(expect, 1e-12));
  EXPECT_TRUE(rep.grid.isApprox(expect, 1e-12));
}

TEST(Conservation, ZeroVelocity) {
  auto s = support::small_scene();
  for (auto& v : s.initial.v) v.setZero();
  const auto m = elastic("neo_hookean");
  const auto rep = mpm::conservation_report(s.config, s.initial, mpm::p2g(s.config, m, m.default_theta(), s.initial));
  EXPECT_TRUE(rep.particles.isZero());
  EXPECT_LT(rep.grid.norm(), 1e-15);
}

TEST(Conservation, RandomStates) {
  auto s = support::small_scene();
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n;
  const auto m = elastic("neo_hookean");
  for (int trial = 0; trial < 20; ++trial) {
    auto st = s.initial;
    for (std::size_t p = 0; p < st.size(); ++p) {
      st.v[p] << n(rng), n(rng);
      st.C[p] = support::random_matrix(rng, 2, 5.0, false);
      st.F[p] = support::random_matrix(rng, 2, 0.05, true);
    }
    const auto rep = mpm::conservation_report(s.config, st, mpm::p2g(s.config, m, m.default_theta(), st));
    // independent particle sum
    Vec sum = Vec::Zero(2);
    for (const auto& v : st.v) sum += s.config.particle_mass * v;
    EXPECT_LT((rep.grid - sum).norm() / sum.norm(), 1e-10);
  }
}

TEST(Mse, Examples) {
  mpm::Trajectory a{2, 3, 2, 0.1, {}};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int i = 0; i < 12; ++i) a.positions.push_back(n(rng));
  EXPECT_EQ(mpm::mse(a, a), 0.0);
  auto b = a;
  for (double& x : b.positions) x += 0.1;
  EXPECT_NEAR(mpm::mse(a, b), 0.01, 1e-15);
  for (double& x : b.positions) x = n(rng);
  double brute = 0.0;
  for (int i = 0; i < 12; ++i) brute += (a.positions[i] - b.positions[i]) * (a.positions[i] - b.positions[i]);
  EXPECT_NEAR(mpm::mse(a, b), brute / 12.0, 1e-15);
  b.n_frames = 1;
  b.positions.resize(6);
  EXPECT_THROW(mpm::mse(a, b), mpm::ShapeMismatch);
}

TEST(Backprop, ZeroResidual) {
  auto s = support::small_scene();
  const auto m = elastic("neo_hookean");
  const auto r = mpm::simulate(s.config, m, m.default_theta(), s.initial);
  const auto g = mpm::backprop(s.config, m, m.default_theta(), r.tape, r.trajectory, r.trajectory);
  EXPECT_TRUE(g.valid);
  EXPECT_EQ(g.loss, 0.0);
  for (double x : g.grad_theta) EXPECT_TRUE(std::isfinite(x));
}

TEST(Backprop, TapeMismatch) {
  auto s = support::small_scene();
  const auto m = elastic("neo_hookean");
  const auto theta = m.default_theta();
  const auto r = mpm::simulate(s.config, m, theta, s.initial);
  auto other = theta;
  other[0] += 0.1;
  EXPECT_THROW(mpm::backprop(s.config, m, other, r.tape, r.trajectory, r.trajectory), mpm::TapeMismatch);
  auto c = s.config;
  c.dt *= 0.5;
  EXPECT_THROW(mpm::backprop(c, m, theta, r.tape, r.trajectory, r.trajectory), mpm::TapeMismatch);
}

TEST(Backprop, LinearLawOneFrameMatchesFiniteDifferences) {
  auto s = support::small_scene(1, 8);
  const auto m = elastic("linear_mu");
  const std::vector<double> target_theta{2000.0};
  const auto target = mpm::simulate(s.config, m, target_theta, s.initial).trajectory;
  const std::vector<double> theta{3000.0};
  const auto r = mpm::simulate(s.config, m, theta, s.initial);
  const auto g = mpm::backprop(s.config, m, theta, r.tape, r.trajectory, target);
  const auto fd = fd_grad(s.config, m, theta, s.initial, target);
  EXPECT_LT(support::rel_error(g.grad_theta[0], fd[0]), 1e-4) << g.grad_theta[0] << " vs " << fd[0];
}

TEST(Backprop, NeoHookeanDescentDirection) {
  auto s = support::small_scene(8);
  const auto m = elastic("neo_hookean");
  const auto star = m.default_theta();
  const auto target = mpm::simulate(s.config, m, star, s.initial).trajectory;
  auto theta = star;
  theta[0] += 0.5;
  theta[1] -= 0.3;
  const auto r = mpm::simulate(s.config, m, theta, s.initial);
  const auto g = mpm::backprop(s.config, m, theta, r.tape, r.trajectory, target);
  double tn = 0.0, gn = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    tn += theta[k] * theta[k];
    gn += g.grad_theta[k] * g.grad_theta[k];
  }
  const double alpha = 1e-3 * std::sqrt(tn) / std::sqrt(gn);
  auto next = theta;
  for (std::size_t k = 0; k < theta.size(); ++k) next[k] -= alpha * g.grad_theta[k];
  EXPECT_LT(loss_at(s.config, m, next, s.initial, target), g.loss);
}

TEST(Backprop, PlasticFixturesMatchFiniteDifferences) {
  auto s = support::small_scene(8);
  for (const char* name : {"von_mises", "granular_hardening", "isochoric_fluid", "soft_volume_correction",
                           "volume_shape_correction"}) {
    mpm::Material m{tasks::bundled_law("neo_hookean"), tasks::bundled_law(name)};
    const auto star = m.default_theta();
    const auto target = mpm::simulate(s.config, m, star, s.initial).trajectory;
    auto theta = star;
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] += 0.03 * (std::abs(theta[k]) + 0.1);
    const auto r = mpm::simulate(s.config, m, theta, s.initial);
    ASSERT_EQ(r.validity, mpm::Validity::Valid) << name;
    const auto g = mpm::backprop(s.config, m, theta, r.tape, r.trajectory, target);
    ASSERT_TRUE(g.valid) << g.error;
    const auto fd = fd_grad(s.config, m, theta, s.initial, target);
    double scale = 0.0;
    for (double x : fd) scale = std::max(scale, std::abs(x));
    for (std::size_t k = 0; k < theta.size(); ++k)
      EXPECT_LT(std::abs(g.grad_theta[k] - fd[k]) / scale, 1e-3) << name << " param " << k;
  }
}

TEST(Backprop, StickyBoundaryMatchesFiniteDifferences) {
  auto s = support::small_scene(8);
  s.config.boundary = mpm::Boundary::Sticky;
  const auto m = elastic("neo_hookean");
  const auto target = mpm::simulate(s.config, m, m.default_theta(), s.initial).trajectory;
  auto theta = m.default_theta();
  theta[0] -= 0.4;
  const auto r = mpm::simulate(s.config, m, theta, s.initial);
  const auto g = mpm::backprop(s.config, m, theta, r.tape, r.trajectory, target);
  const auto fd = fd_grad(s.config, m, theta, s.initial, target);
  for (std::size_t k = 0; k < theta.size(); ++k) EXPECT_LT(support::rel_error(g.grad_theta[k], fd[k]), 1e-3);
}

TEST(Backprop, ThreeDimensionalScene) {
  mpm::SimConfig c;
  c.dim = 3;
  c.grid_res = 12;
  c.dt = 5e-4;
  c.n_steps = 3;
  c.substeps_per_frame = 4;
  c.gravity = Vec(3);
  c.gravity << 0.0, -9.8, 0.0;
  mpm::Geometry g;
  g.shape = mpm::Geometry::Shape::Ball;
  g.center = Vec::Constant(3, 0.5);
  g.radius = 0.15;
  g.particles_per_cell = 1;
  const double h = mpm::lattice_spacing(c, g);
  c.particle_volume = h * h * h;
  c.particle_mass = 1000.0 * c.particle_volume;
  auto init = mpm::init_scene(c, g);
  for (auto& v : init.v) v << 0.5, -0.5, 0.2;
  const auto m = elastic("neo_hookean");
  const auto target = mpm::simulate(c, m, m.default_theta(), init).trajectory;
  auto theta = m.default_theta();
  theta[0] -= 1.0;
  const auto r = mpm::simulate(c, m, theta, init);
  ASSERT_EQ(r.validity, mpm::Validity::Valid) << r.failure;
  const auto gr = mpm::backprop(c, m, theta, r.tape, r.trajectory, target);
  const auto fd = fd_grad(c, m, theta, init, target);
  for (std::size_t k = 0; k < theta.size(); ++k) EXPECT_LT(support::rel_error(gr.grad_theta[k], fd[k]), 1e-3);
}
