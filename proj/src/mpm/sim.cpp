#include "sga/mpm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace sga::mpm {

std::string_view to_string(Validity v) { return v == Validity::Valid ? "valid" : "invalid"; }

std::string_view to_string(Boundary b) { return b == Boundary::Sticky ? "sticky" : "slip_box"; }

void check_config(const SimConfig& c) {
  const auto fail = [](const std::string& m) { throw std::invalid_argument("sim config: " + m); };
  if (c.dim != 2 && c.dim != 3) fail("dim must be 2 or 3");
  if (c.grid_res < 8) fail("grid_res must be at least 8");
  if (!(c.dt > 0.0) || !std::isfinite(c.dt)) fail("dt must be positive");
  if (c.dt > kCflFactor * c.dx() / kMaxSpeedEstimate)
    fail("dt exceeds the stability bound " + std::to_string(kCflFactor * c.dx() / kMaxSpeedEstimate));
  if (c.n_steps < 0) fail("n_steps must be non-negative");
  if (c.substeps_per_frame < 1) fail("substeps_per_frame must be at least 1");
  if (c.gravity.size() != c.dim || !c.gravity.allFinite()) fail("gravity must have dim finite entries");
  if (!(c.particle_mass > 0.0) || !(c.particle_volume > 0.0))
    fail("particle mass and volume must be positive");
}

std::array<double, 3> bspline_weights(double fx) {
  return {0.5 * (1.5 - fx) * (1.5 - fx), 0.75 - (fx - 1.0) * (fx - 1.0),
          0.5 * (fx - 0.5) * (fx - 0.5)};
}

double lattice_spacing(const SimConfig& config, const Geometry& geometry) {
  const double per_axis =
      std::max(1.0, std::round(std::pow(geometry.particles_per_cell, 1.0 / config.dim)));
  return config.dx() / per_axis;
}

ParticleState init_scene(const SimConfig& config, const Geometry& g) {
  check_config(config);
  const int D = config.dim;
  if (g.center.size() != D) throw std::invalid_argument("geometry center has the wrong dimension");
  Vec lo(D), hi(D);
  if (g.shape == Geometry::Shape::Box) {
    if (g.half_extents.size() != D || (g.half_extents.array() <= 0.0).any())
      throw std::invalid_argument("box half extents must be positive, one per axis");
    lo = g.center - g.half_extents;
    hi = g.center + g.half_extents;
  } else {
    if (!(g.radius > 0.0)) throw std::invalid_argument("ball radius must be positive");
    lo = g.center.array() - g.radius;
    hi = g.center.array() + g.radius;
  }
  const double margin = 2.0 * config.dx();
  if ((lo.array() < margin).any() || (hi.array() > 1.0 - margin).any())
    throw GeometryOutOfBounds("geometry must stay at least 2 cells from the domain walls");

  const double h = lattice_spacing(config, g);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> jitter(-0.25 * h, 0.25 * h);

  std::array<int, 3> count{1, 1, 1};
  for (int d = 0; d < D; ++d) count[d] = static_cast<int>(std::floor((hi[d] - lo[d]) / h));

  ParticleState s;
  s.dim = D;
  std::array<int, 3> idx{};
  for (idx[2] = 0; idx[2] < count[2]; ++idx[2])
    for (idx[1] = 0; idx[1] < count[1]; ++idx[1])
      for (idx[0] = 0; idx[0] < count[0]; ++idx[0]) {
        Vec p(D);
        for (int d = 0; d < D; ++d) p[d] = lo[d] + (idx[d] + 0.5) * h;
        for (int d = 0; d < D; ++d) p[d] += jitter(rng);
        if (g.shape == Geometry::Shape::Ball && (p - g.center).norm() > g.radius) continue;
        s.x.push_back(p);
      }
  s.v.assign(s.x.size(), Vec::Zero(D));
  s.F.assign(s.x.size(), Mat::Identity(D, D));
  s.C.assign(s.x.size(), Mat::Zero(D, D));
  return s;
}

std::size_t Material::param_count() const {
  return elastic.param_count() + (plastic ? plastic->param_count() : 0);
}

std::vector<double> Material::default_theta() const {
  auto theta = elastic.default_theta();
  if (plastic) {
    const auto p = plastic->default_theta();
    theta.insert(theta.end(), p.begin(), p.end());
  }
  return theta;
}

double mse(const Trajectory& a, const Trajectory& b) {
  if (a.dim != b.dim || a.n_particles != b.n_particles || a.n_frames != b.n_frames ||
      a.positions.size() != b.positions.size())
    throw ShapeMismatch("trajectories differ in shape");
  if (a.positions.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.positions.size(); ++i) {
    const double d = a.positions[i] - b.positions[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.positions.size());
}

namespace {

void check_material(const Material& m, std::span<const double> theta) {
  if (m.elastic.kind != dsl::LawKind::Elastic)
    throw std::invalid_argument("the first law of a material must be elastic");
  if (m.plastic && m.plastic->kind != dsl::LawKind::Plastic)
    throw std::invalid_argument("the second law of a material must be plastic");
  if (theta.size() != m.param_count())
    throw std::invalid_argument("theta has " + std::to_string(theta.size()) +
                                " entries, material declares " + std::to_string(m.param_count()));
}

std::vector<std::uint8_t> make_mask(const SimConfig& c) {
  const int D = c.dim;
  const int n = c.grid_res;
  const int side = n + 1;
  std::size_t nodes = 1;
  for (int d = 0; d < D; ++d) nodes *= side;
  std::vector<std::uint8_t> mask(nodes * D, 1);
  for (std::size_t i = 0; i < nodes; ++i) {
    std::size_t rest = i;
    bool any = false;
    std::array<bool, 3> near{};
    for (int d = 0; d < D; ++d) {
      const int k = static_cast<int>(rest % side);
      rest /= side;
      near[d] = k <= kBoundaryCells || k >= n - kBoundaryCells;
      any = any || near[d];
    }
    for (int d = 0; d < D; ++d) {
      const bool zero = c.boundary == Boundary::Sticky ? any : near[d];
      if (zero) mask[i * D + d] = 0;
    }
  }
  return mask;
}

template <int D>
class Stepper {
 public:
  using Vector = Eigen::Matrix<double, D, 1>;
  using Matrix = Eigen::Matrix<double, D, D>;
  static constexpr int kStencil = D == 2 ? 9 : 27;

  struct Stencil {
    std::array<int, kStencil> node;
    std::array<double, kStencil> w;
    std::array<Vector, kStencil> dw;    // gradient of w with respect to x
    std::array<Vector, kStencil> dpos;  // node position minus particle position
  };

  Stepper(const SimConfig& c, const Material& m, std::span<const double> theta)
      : cfg_(c),
        n_(c.grid_res),
        side_(c.grid_res + 1),
        dx_(c.dx()),
        inv_dx_(1.0 / c.dx()),
        elastic_(m.elastic),
        theta_e_(theta.first(m.elastic.param_count())),
        theta_p_(theta.subspan(m.elastic.param_count())),
        mask_(make_mask(c)) {
    if (m.plastic) plastic_.emplace(*m.plastic);
    nodes_ = 1;
    for (int d = 0; d < D; ++d) nodes_ *= side_;
    gravity_ = c.gravity.template head<D>();
    for (int k = 0; k < kStencil; ++k) {
      int rest = k;
      for (int d = 0; d < D; ++d) {
        offsets_[k][d] = rest % 3;
        rest /= 3;
      }
    }
    stencils_.resize(0);
  }

  const std::vector<std::uint8_t>& mask() const { return mask_; }

  // Returns false if the particle is outside the interpolation range.
  bool stencil(const Vector& x, Stencil& st) const {
    std::array<int, D> base{};
    std::array<std::array<double, 3>, D> w{}, dw{};
    Vector fx;
    for (int d = 0; d < D; ++d) {
      const double s = x[d] * inv_dx_;
      if (!std::isfinite(s)) return false;
      const double b = std::floor(s - 0.5);
      if (b < 0.0 || b + 2.0 > n_) return false;
      base[d] = static_cast<int>(b);
      const double f = s - b;
      fx[d] = f;
      w[d] = bspline_weights(f);
      dw[d] = {-(1.5 - f) * inv_dx_, -2.0 * (f - 1.0) * inv_dx_, (f - 0.5) * inv_dx_};
    }
    for (int k = 0; k < kStencil; ++k) {
      const auto& o = offsets_[k];
      int node = 0;
      int stride = 1;
      double weight = 1.0;
      for (int d = 0; d < D; ++d) {
        node += (base[d] + o[d]) * stride;
        stride *= side_;
        weight *= w[d][o[d]];
      }
      Vector g;
      for (int e = 0; e < D; ++e) {
        double v = dw[e][o[e]];
        for (int d = 0; d < D; ++d)
          if (d != e) v *= w[d][o[d]];
        g[e] = v;
      }
      st.node[k] = node;
      st.w[k] = weight;
      st.dw[k] = g;
      for (int d = 0; d < D; ++d) st.dpos[k][d] = (o[d] - fx[d]) * dx_;
    }
    return true;
  }

  double alpha() const { return cfg_.dt * cfg_.particle_volume * 4.0 * inv_dx_ * inv_dx_; }

  void scatter(const ParticleState& in, GridState& grid) {
    const std::size_t N = in.size();
    grid.dim = D;
    grid.res = n_;
    grid.mass.assign(nodes_, 0.0);
    grid.momentum.assign(nodes_ * D, 0.0);
    stencils_.resize(N);
    const double m = cfg_.particle_mass;
    for (std::size_t p = 0; p < N; ++p) {
      const Vector x = in.x[p];
      Stencil& st = stencils_[p];
      if (!stencil(x, st))
        throw SubstepFailure("particle " + std::to_string(p) + " left the grid");
      const Matrix F = in.F[p];
      const Matrix tau = eval(elastic_, F, theta_e_, "elastic");
      const Matrix A = -alpha() * tau + m * Matrix(in.C[p]);
      const Vector mv = m * Vector(in.v[p]);
      for (int k = 0; k < kStencil; ++k) {
        const Vector contrib = st.w[k] * (mv + A * st.dpos[k]);
        const int i = st.node[k];
        for (int d = 0; d < D; ++d) grid.momentum[i * D + d] += contrib[d];
        grid.mass[i] += st.w[k] * m;
      }
    }
  }

  void grid_update(GridState& grid) const {
    grid.velocity.assign(nodes_ * D, 0.0);
    for (std::size_t i = 0; i < nodes_; ++i) {
      const double mass = grid.mass[i];
      if (mass <= 0.0) continue;
      for (int d = 0; d < D; ++d) {
        const double u = grid.momentum[i * D + d] / mass + cfg_.dt * gravity_[d];
        grid.velocity[i * D + d] = mask_[i * D + d] ? u : 0.0;
      }
    }
  }

  ParticleState gather(const ParticleState& in, const GridState& grid) {
    const std::size_t N = in.size();
    ParticleState out;
    out.dim = D;
    out.x.resize(N);
    out.v.resize(N);
    out.F.resize(N);
    out.C.resize(N);
    const double max_disp = 0.5 * dx_;
    for (std::size_t p = 0; p < N; ++p) {
      const Stencil& st = stencils_[p];
      Vector v = Vector::Zero();
      Matrix B = Matrix::Zero();
      for (int k = 0; k < kStencil; ++k) {
        const Vector vi = Eigen::Map<const Vector>(grid.velocity.data() + st.node[k] * D);
        v += st.w[k] * vi;
        B += st.w[k] * vi * st.dpos[k].transpose();
      }
      const Matrix C = 4.0 * inv_dx_ * inv_dx_ * B;
      const Vector x = Vector(in.x[p]) + cfg_.dt * v;
      if (!(cfg_.dt * v.norm() <= max_disp))
        throw SubstepFailure("particle " + std::to_string(p) + " moved more than half a cell");
      const Matrix Fe = (Matrix::Identity() + cfg_.dt * C) * Matrix(in.F[p]);
      const Matrix F = plastic_ ? eval(*plastic_, Fe, theta_p_, "plastic") : Fe;
      if (!x.allFinite() || !v.allFinite() || !C.allFinite() || !F.allFinite())
        throw SubstepFailure("non-finite state at particle " + std::to_string(p));
      out.x[p] = x;
      out.v[p] = v;
      out.F[p] = F;
      out.C[p] = C;
    }
    return out;
  }

  ParticleState step(const ParticleState& in, GridState& grid) {
    scatter(in, grid);
    grid_update(grid);
    return gather(in, grid);
  }

  // Adjoint of one substep. g* hold the adjoints of `out` on entry and of
  // `in` on exit; gtheta accumulates.
  void step_adjoint(const ParticleState& in, const GridState& grid, const ParticleState& out,
                    std::vector<Vector>& gx, std::vector<Vector>& gv, std::vector<Matrix>& gF,
                    std::vector<Matrix>& gC, std::span<double> gtheta) {
    const std::size_t N = in.size();
    const double m = cfg_.particle_mass;
    const double k4 = 4.0 * inv_dx_ * inv_dx_;
    stencils_.resize(N);
    gvel_.assign(nodes_ * D, 0.0);
    auto gtheta_e = gtheta.first(theta_e_.size());
    auto gtheta_p = gtheta.subspan(theta_e_.size());

    // Plastic correction, F update, position update and G2P.
    for (std::size_t p = 0; p < N; ++p) {
      Stencil& st = stencils_[p];
      stencil(Vector(in.x[p]), st);
      const Matrix F0 = in.F[p];
      const Matrix C1 = out.C[p];
      const Matrix Fe = (Matrix::Identity() + cfg_.dt * C1) * F0;
      Matrix gFe = gF[p];
      if (plastic_) {
        Matrix dF;
        vjp(*plastic_, Fe, theta_p_, gF[p], dF, gtheta_p, "plastic");
        gFe = dF;
      }
      const Matrix gC1 = gC[p] + cfg_.dt * gFe * F0.transpose();
      gF[p] = (Matrix::Identity() + cfg_.dt * C1).transpose() * gFe;
      const Vector gv1 = gv[p] + cfg_.dt * gx[p];
      Vector gxp = gx[p];
      for (int k = 0; k < kStencil; ++k) {
        const Vector vi = Eigen::Map<const Vector>(grid.velocity.data() + st.node[k] * D);
        const Vector gC1d = gC1 * st.dpos[k];
        const Vector contrib = st.w[k] * (gv1 + k4 * gC1d);
        for (int d = 0; d < D; ++d) gvel_[st.node[k] * D + d] += contrib[d];
        gxp += (gv1.dot(vi) + k4 * vi.dot(gC1d)) * st.dw[k] - st.w[k] * k4 * gC1.transpose() * vi;
      }
      gx[p] = gxp;
    }

    // Grid update.
    gmom_.assign(nodes_ * D, 0.0);
    gmass_.assign(nodes_, 0.0);
    for (std::size_t i = 0; i < nodes_; ++i) {
      const double mass = grid.mass[i];
      if (mass <= 0.0) continue;
      double dot = 0.0;
      for (int d = 0; d < D; ++d) {
        const double gu = mask_[i * D + d] ? gvel_[i * D + d] : 0.0;
        gmom_[i * D + d] = gu / mass;
        dot += gu * grid.momentum[i * D + d];
      }
      gmass_[i] = -dot / (mass * mass);
    }

    // P2G and the stress.
    const double a = alpha();
    for (std::size_t p = 0; p < N; ++p) {
      const Stencil& st = stencils_[p];
      Vector gmv = Vector::Zero();
      Matrix gA = Matrix::Zero();
      for (int k = 0; k < kStencil; ++k) {
        const Vector gP = Eigen::Map<const Vector>(gmom_.data() + st.node[k] * D);
        gmv += st.w[k] * gP;
        gA += st.w[k] * gP * st.dpos[k].transpose();
      }
      Matrix dF;
      const Matrix F0 = in.F[p];
      vjp(elastic_, F0, theta_e_, Matrix(-a * gA), dF, gtheta_e, "elastic");
      const Matrix A = -a * elastic_.output() + m * Matrix(in.C[p]);
      const Vector mv = m * Vector(in.v[p]);
      Vector gxp = gx[p];
      for (int k = 0; k < kStencil; ++k) {
        const Vector gP = Eigen::Map<const Vector>(gmom_.data() + st.node[k] * D);
        gxp += (gP.dot(mv + A * st.dpos[k]) + gmass_[st.node[k]] * m) * st.dw[k] -
               st.w[k] * A.transpose() * gP;
      }
      gx[p] = gxp;
      gv[p] = m * gmv;
      gC[p] = m * gA;
      gF[p] += dF;
    }
  }

 private:
  Matrix eval(dsl::Evaluator<D>& ev, const Matrix& F, std::span<const double> theta,
              const char* which) {
    try {
      return ev.forward(F, theta);
    } catch (const dsl::EvalError& e) {
      throw SubstepFailure(std::string(which) + " law: " + e.what());
    }
  }

  void vjp(dsl::Evaluator<D>& ev, const Matrix& F, std::span<const double> theta,
           const Matrix& cot, Matrix& dF, std::span<double> dtheta, const char* which) {
    try {
      ev.vjp(F, theta, cot, dF, dtheta);
    } catch (const dsl::EvalError& e) {
      throw SubstepFailure(std::string(which) + " law adjoint: " + e.what());
    }
  }

  const SimConfig& cfg_;
  int n_;
  int side_;
  std::size_t nodes_ = 0;
  double dx_;
  double inv_dx_;
  Vector gravity_;
  std::array<std::array<int, D>, kStencil> offsets_{};
  dsl::Evaluator<D> elastic_;
  std::optional<dsl::Evaluator<D>> plastic_;
  std::span<const double> theta_e_;
  std::span<const double> theta_p_;
  std::vector<std::uint8_t> mask_;
  std::vector<Stencil> stencils_;
  std::vector<double> gvel_, gmom_, gmass_;
};

void record_frame(Trajectory& t, const ParticleState& s) {
  for (std::size_t p = 0; p < s.size(); ++p)
    for (int d = 0; d < s.dim; ++d) t.positions.push_back(s.x[p][d]);
  ++t.n_frames;
}

void check_state(const SimConfig& c, const ParticleState& s) {
  if (s.dim != c.dim) throw std::invalid_argument("particle state dimension differs from config");
  const std::size_t N = s.size();
  if (s.v.size() != N || s.F.size() != N || s.C.size() != N)
    throw std::invalid_argument("particle state arrays differ in length");
  for (std::size_t p = 0; p < N; ++p)
    if (s.x[p].size() != c.dim || s.v[p].size() != c.dim || s.F[p].rows() != c.dim ||
        s.F[p].cols() != c.dim || s.C[p].rows() != c.dim || s.C[p].cols() != c.dim)
      throw std::invalid_argument("particle " + std::to_string(p) + " has the wrong dimension");
}

template <int D>
SimResult simulate_dim(const SimConfig& c, const Material& m, std::span<const double> theta,
                       const ParticleState& initial, const SimOptions& options) {
  Stepper<D> stepper(c, m, theta);
  SimResult r;
  r.trajectory.dim = D;
  r.trajectory.n_particles = static_cast<int>(initial.size());
  r.trajectory.dt = c.frame_dt();
  if (options.record_tape) {
    r.tape.config = c;
    r.tape.theta.assign(theta.begin(), theta.end());
    r.tape.boundary_mask = stepper.mask();
  }
  if (c.n_steps == 0) {
    record_frame(r.trajectory, initial);
    if (options.record_tape) r.tape.final_state = initial;
    return r;
  }
  ParticleState state = initial;
  GridState grid;
  for (int s = 0; s < c.total_substeps(); ++s) {
    try {
      ParticleState next = stepper.step(state, grid);
      if (options.record_tape) {
        r.tape.snapshots.push_back(std::move(state));
        r.tape.grids.push_back(grid);
      }
      state = std::move(next);
    } catch (const SubstepFailure& e) {
      r.validity = Validity::Invalid;
      r.failure = "substep " + std::to_string(s) + ": " + e.what();
      break;
    }
    if ((s + 1) % c.substeps_per_frame == 0) record_frame(r.trajectory, state);
  }
  if (options.record_tape) r.tape.final_state = std::move(state);
  return r;
}

bool same_config(const SimConfig& a, const SimConfig& b) {
  return a.dim == b.dim && a.grid_res == b.grid_res && a.dt == b.dt && a.n_steps == b.n_steps &&
         a.substeps_per_frame == b.substeps_per_frame && a.gravity == b.gravity &&
         a.particle_mass == b.particle_mass && a.particle_volume == b.particle_volume &&
         a.boundary == b.boundary;
}

template <int D>
Gradient backprop_dim(const SimConfig& c, const Material& m, std::span<const double> theta,
                      const Tape& tape, const Trajectory& traj, const Trajectory& target) {
  using Vector = typename Stepper<D>::Vector;
  using Matrix = typename Stepper<D>::Matrix;
  Gradient g;
  g.loss = mse(traj, target);
  g.grad_theta.assign(theta.size(), 0.0);
  if (c.n_steps == 0) return g;

  const std::size_t N = static_cast<std::size_t>(traj.n_particles);
  const double scale = 2.0 / static_cast<double>(traj.positions.size());
  std::vector<Vector> gx(N, Vector::Zero()), gv(N, Vector::Zero());
  std::vector<Matrix> gF(N, Matrix::Zero()), gC(N, Matrix::Zero());
  Stepper<D> stepper(c, m, theta);
  const int S = static_cast<int>(tape.size());
  for (int s = S - 1; s >= 0; --s) {
    if ((s + 1) % c.substeps_per_frame == 0) {
      const int f = (s + 1) / c.substeps_per_frame - 1;
      const double* x = traj.frame(f);
      const double* y = target.frame(f);
      for (std::size_t p = 0; p < N; ++p)
        for (int d = 0; d < D; ++d) gx[p][d] += scale * (x[p * D + d] - y[p * D + d]);
    }
    const ParticleState& out = s + 1 < S ? tape.snapshots[s + 1] : tape.final_state;
    try {
      stepper.step_adjoint(tape.snapshots[s], tape.grids[s], out, gx, gv, gF, gC, g.grad_theta);
    } catch (const SubstepFailure& e) {
      g.valid = false;
      g.error = "substep " + std::to_string(s) + ": " + e.what();
      return g;
    }
  }
  for (double v : g.grad_theta)
    if (!std::isfinite(v)) {
      g.valid = false;
      g.error = "non-finite gradient";
      break;
    }
  return g;
}

}  // namespace

SimResult simulate(const SimConfig& config, const Material& material, std::span<const double> theta,
                   const ParticleState& initial, const SimOptions& options) {
  check_config(config);
  check_material(material, theta);
  check_state(config, initial);
  return config.dim == 2 ? simulate_dim<2>(config, material, theta, initial, options)
                         : simulate_dim<3>(config, material, theta, initial, options);
}

ParticleState advance(const SimConfig& config, const Material& material,
                      std::span<const double> theta, const ParticleState& state, GridState* grid) {
  check_config(config);
  check_material(material, theta);
  check_state(config, state);
  GridState local;
  GridState& g = grid ? *grid : local;
  if (config.dim == 2) return Stepper<2>(config, material, theta).step(state, g);
  return Stepper<3>(config, material, theta).step(state, g);
}

GridState p2g(const SimConfig& config, const Material& material, std::span<const double> theta,
              const ParticleState& state) {
  check_config(config);
  check_material(material, theta);
  check_state(config, state);
  GridState g;
  if (config.dim == 2) {
    Stepper<2>(config, material, theta).scatter(state, g);
  } else {
    Stepper<3>(config, material, theta).scatter(state, g);
  }
  return g;
}

MomentumReport conservation_report(const SimConfig& config, const ParticleState& state,
                                   const GridState& grid) {
  const int D = config.dim;
  MomentumReport r{Vec::Zero(D), Vec::Zero(D)};
  for (std::size_t p = 0; p < state.size(); ++p) r.particles += config.particle_mass * state.v[p];
  for (std::size_t i = 0; i < grid.nodes(); ++i)
    for (int d = 0; d < D; ++d) r.grid[d] += grid.momentum[i * D + d];
  return r;
}

Gradient backprop(const SimConfig& config, const Material& material, std::span<const double> theta,
                  const Tape& tape, const Trajectory& trajectory, const Trajectory& target) {
  check_config(config);
  check_material(material, theta);
  if (!same_config(config, tape.config)) throw TapeMismatch("tape was recorded with another config");
  if (!std::equal(theta.begin(), theta.end(), tape.theta.begin(), tape.theta.end()))
    throw TapeMismatch("tape was recorded with other parameters");
  if (tape.grids.size() != tape.snapshots.size() ||
      tape.size() != static_cast<std::size_t>(config.total_substeps()))
    throw TapeMismatch("tape does not cover the full run (invalid or truncated simulation)");
  const int expected_frames = config.n_steps == 0 ? 1 : config.n_steps;
  if (trajectory.n_frames != expected_frames || trajectory.dim != config.dim ||
      trajectory.n_particles != static_cast<int>(tape.final_state.size()))
    throw TapeMismatch("trajectory does not match the tape");
  if (target.n_frames != trajectory.n_frames || target.n_particles != trajectory.n_particles ||
      target.dim != trajectory.dim)
    throw TapeMismatch("target shape differs from the trajectory");
  return config.dim == 2 ? backprop_dim<2>(config, material, theta, tape, trajectory, target)
                         : backprop_dim<3>(config, material, theta, tape, trajectory, target);
}

}  // namespace sga::mpm
