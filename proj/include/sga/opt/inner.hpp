#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sga/mpm/sim.hpp"

namespace sga::opt {

struct OptConfig {
  int n_steps = 100;
  double learning_rate = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::optional<double> grad_clip_norm = 10.0;
  int curve_checkpoints = 10;

  bool operator==(const OptConfig&) const = default;
};

/// Throws std::invalid_argument on out-of-range fields.
void check_opt_config(const OptConfig& config);

class Adam {
 public:
  Adam(std::size_t n, const OptConfig& config);

  /// One update of every component; `scale` multiplies the learning rate.
  void step(std::span<double> theta, std::span<const double> grad, double scale = 1.0);
  void reset_first_moment();
  int steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<double> m_, v_;
};

/// Rescales grad in place so its Euclidean norm is at most max_norm.
void clip_by_norm(std::span<double> grad, double max_norm);

struct CurvePoint {
  int step = 0;
  double loss = 0.0;
  bool operator==(const CurvePoint&) const = default;
};

struct OptResult {
  std::vector<double> theta_hat;
  double final_loss = 0.0;
  std::vector<CurvePoint> loss_curve;  // evenly spaced checkpoints, valid steps only
  mpm::Validity validity = mpm::Validity::Valid;
  int best_step = -1;
  std::string failure;

  // Every evaluated iterate and its loss (NaN where the step was skipped).
  std::vector<std::vector<double>> iterates;
  std::vector<double> loss_trace;
  mpm::Trajectory best_trajectory;
};

/// MSE between trajectories; throws mpm::ShapeMismatch.
double mse_loss(const mpm::Trajectory& a, const mpm::Trajectory& b);

/// Steps 0..n_steps at which the loss curve is sampled.
std::vector<int> checkpoint_steps(int n_steps, int checkpoints);

/// Fits the components of theta marked in `trainable` (all when empty).
/// Evaluates n_steps + 1 iterates and keeps the best; a skipped step reverts
/// to the last iterate with a usable gradient and halves the step size.
OptResult optimize(const mpm::Material& material, std::span<const double> theta0,
                   std::span<const std::uint8_t> trainable, const mpm::SimConfig& sim,
                   const OptConfig& opt, const mpm::ParticleState& initial,
                   const mpm::Trajectory& target);

/// Elastic-only convenience form, starting from the law's declared defaults.
OptResult optimize(const dsl::LawProgram& law, const mpm::SimConfig& sim, const OptConfig& opt,
                   const mpm::ParticleState& initial, const mpm::Trajectory& target);

}  // namespace sga::opt
