#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sga/dsl/ast.hpp"
#include "sga/mpm/sim.hpp"

namespace sga::tasks {

enum class TaskId { A_NonlinearElastic, B_VonMises, C_Granular, D_Fluid, X_Imaginary };

inline constexpr TaskId kAllTasks[] = {TaskId::A_NonlinearElastic, TaskId::B_VonMises,
                                       TaskId::C_Granular, TaskId::D_Fluid, TaskId::X_Imaginary};

/// Accepts the letters a, b, c, d, x (either case).
std::optional<TaskId> parse_task_id(std::string_view letter);
char task_letter(TaskId id);
std::string_view task_name(TaskId id);

/// Law source shipped under laws/, by file stem (e.g. "neo_hookean").
std::string_view bundled_law_source(std::string_view stem);
dsl::LawProgram bundled_law(std::string_view stem);
std::vector<std::string_view> bundled_law_names();
/// The five laws transcribed from previously discovered programs; the
/// gradient suites run over these.
std::vector<std::string_view> gradient_fixture_names();

struct LawPair {
  dsl::LawProgram elastic;
  std::optional<dsl::LawProgram> plastic;
  std::vector<double> theta;  // elastic parameters, then plastic

  mpm::Material material() const { return {elastic, plastic}; }
};

struct Scene {
  mpm::Geometry geometry;
  mpm::Vec initial_velocity;
};

/// Material, starting point and trainable mask for fitting one proposed law
/// inside a task.
struct FitProblem {
  mpm::Material material;
  std::vector<double> theta0;
  std::vector<std::uint8_t> trainable;
};

class KindMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TaskSpec {
  TaskId id = TaskId::A_NonlinearElastic;
  LawPair ground_truth;
  LawPair initial_guess;
  mpm::SimConfig sim;
  Scene scene;
  double recovery_threshold = 0.0;  // MSE, m^2
  /// Which law the search replaces; the other one stays at ground truth.
  dsl::LawKind evolved_kind = dsl::LawKind::Elastic;

  mpm::ParticleState initial_state() const;
  /// Throws KindMismatch when the proposal is not of evolved_kind.
  FitProblem fit_problem(const dsl::LawProgram& proposal) const;
};

TaskSpec make_task(TaskId id);

class GroundTruthUnstable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

mpm::Trajectory generate_ground_truth(const TaskSpec& task);

}  // namespace sga::tasks
