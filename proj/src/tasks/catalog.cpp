#include "sga/tasks/catalog.hpp"

#include <algorithm>
#include <cctype>

#include "sga/bundled_laws.hpp"
#include "sga/dsl/parser.hpp"

namespace sga::tasks {

std::optional<TaskId> parse_task_id(std::string_view letter) {
  if (letter.size() != 1) return std::nullopt;
  switch (std::tolower(static_cast<unsigned char>(letter[0]))) {
    case 'a': return TaskId::A_NonlinearElastic;
    case 'b': return TaskId::B_VonMises;
    case 'c': return TaskId::C_Granular;
    case 'd': return TaskId::D_Fluid;
    case 'x': return TaskId::X_Imaginary;
    default: return std::nullopt;
  }
}

char task_letter(TaskId id) {
  switch (id) {
    case TaskId::A_NonlinearElastic: return 'a';
    case TaskId::B_VonMises: return 'b';
    case TaskId::C_Granular: return 'c';
    case TaskId::D_Fluid: return 'd';
    case TaskId::X_Imaginary: return 'x';
  }
  return '?';
}

std::string_view task_name(TaskId id) {
  switch (id) {
    case TaskId::A_NonlinearElastic: return "nonlinear_elastic";
    case TaskId::B_VonMises: return "von_mises";
    case TaskId::C_Granular: return "granular";
    case TaskId::D_Fluid: return "fluid";
    case TaskId::X_Imaginary: return "imaginary";
  }
  return "unknown";
}

std::string_view bundled_law_source(std::string_view stem) {
  for (const auto& [name, text] : detail::kBundledLaws)
    if (name == stem) return text;
  throw std::invalid_argument("no bundled law named '" + std::string(stem) + "'");
}

dsl::LawProgram bundled_law(std::string_view stem) { return dsl::parse_law(bundled_law_source(stem)); }

std::vector<std::string_view> bundled_law_names() {
  std::vector<std::string_view> names;
  for (const auto& entry : detail::kBundledLaws) names.push_back(entry.first);
  return names;
}

std::vector<std::string_view> gradient_fixture_names() {
  return {"neo_hookean", "soft_volume_correction", "granular_hardening", "isochoric_fluid",
          "volume_shape_correction"};
}

namespace {

// Box dropped onto the floor: 256 particles, 1000 kg/m^3, hits after ~10 ms of
// the 20 ms horizon.
void desk_scene(TaskSpec& t) {
  mpm::SimConfig& c = t.sim;
  c.dim = 2;
  c.grid_res = 32;
  c.dt = 2e-4;
  c.n_steps = 25;
  c.substeps_per_frame = 4;
  c.gravity = mpm::Vec(2);
  c.gravity << 0.0, -9.8;
  c.boundary = mpm::Boundary::SlipBox;
  c.seed = 1;

  mpm::Geometry& g = t.scene.geometry;
  g.shape = mpm::Geometry::Shape::Box;
  g.center = mpm::Vec(2);
  g.center << 0.5, 0.24;
  g.half_extents = mpm::Vec::Constant(2, 0.125);
  g.particles_per_cell = 4.0;
  t.scene.initial_velocity = mpm::Vec(2);
  t.scene.initial_velocity << 0.0, -2.0;

  constexpr double kDensity = 1000.0;
  const double h = mpm::lattice_spacing(c, g);
  c.particle_volume = h * h;
  c.particle_mass = kDensity * c.particle_volume;
}

LawPair pair(std::string_view elastic, std::optional<std::string_view> plastic) {
  LawPair p{bundled_law(elastic), std::nullopt, {}};
  if (plastic) p.plastic = bundled_law(*plastic);
  p.theta = p.material().default_theta();
  return p;
}

}  // namespace

TaskSpec make_task(TaskId id) {
  TaskSpec t;
  t.id = id;
  desk_scene(t);
  switch (id) {
    case TaskId::A_NonlinearElastic:
      t.ground_truth = pair("neo_hookean", std::nullopt);
      t.initial_guess = pair("linear_elastic", std::nullopt);
      t.evolved_kind = dsl::LawKind::Elastic;
      t.recovery_threshold = 5e-10;
      break;
    case TaskId::B_VonMises:
      t.ground_truth = pair("neo_hookean", "von_mises");
      t.recovery_threshold = 1e-9;
      break;
    case TaskId::C_Granular:
      t.ground_truth = pair("neo_hookean", "granular_hardening");
      t.recovery_threshold = 1e-9;
      break;
    case TaskId::D_Fluid:
      t.ground_truth = pair("neo_hookean", "isochoric_fluid");
      t.recovery_threshold = 1e-9;
      break;
    case TaskId::X_Imaginary:
      t.ground_truth = pair("neo_hookean", "imaginary_blend");
      t.recovery_threshold = 1e-9;
      break;
  }
  if (id != TaskId::A_NonlinearElastic) {
    t.initial_guess = pair("neo_hookean", "identity_plastic");
    t.evolved_kind = dsl::LawKind::Plastic;
  }
  return t;
}

mpm::ParticleState TaskSpec::initial_state() const {
  auto s = mpm::init_scene(sim, scene.geometry);
  for (auto& v : s.v) v = scene.initial_velocity;
  return s;
}

FitProblem TaskSpec::fit_problem(const dsl::LawProgram& proposal) const {
  if (proposal.kind != evolved_kind)
    throw KindMismatch(std::string("this task evolves ") +
                       (evolved_kind == dsl::LawKind::Elastic ? "elastic" : "plastic") + " laws");
  FitProblem f;
  if (evolved_kind == dsl::LawKind::Elastic) {
    f.material = {proposal, std::nullopt};
    f.theta0 = proposal.default_theta();
    f.trainable.assign(f.theta0.size(), 1);
    return f;
  }
  // The elastic base stays at its ground-truth parameters.
  const std::size_t ne = ground_truth.elastic.param_count();
  f.material = {ground_truth.elastic, proposal};
  f.theta0.assign(ground_truth.theta.begin(), ground_truth.theta.begin() + ne);
  const auto p = proposal.default_theta();
  f.theta0.insert(f.theta0.end(), p.begin(), p.end());
  f.trainable.assign(ne, 0);
  f.trainable.resize(f.theta0.size(), 1);
  return f;
}

mpm::Trajectory generate_ground_truth(const TaskSpec& task) {
  const auto run = mpm::simulate(task.sim, task.ground_truth.material(), task.ground_truth.theta,
                                 task.initial_state(), {.record_tape = false});
  if (run.validity != mpm::Validity::Valid)
    throw GroundTruthUnstable("ground truth of task " + std::string(1, task_letter(task.id)) +
                              " failed: " + run.failure);
  return run.trajectory;
}

}  // namespace sga::tasks
