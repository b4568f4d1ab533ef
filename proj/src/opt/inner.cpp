#include "sga/opt/inner.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sga::opt {

void check_opt_config(const OptConfig& c) {
  const auto fail = [](const std::string& m) { throw std::invalid_argument("opt config: " + m); };
  if (c.n_steps < 1) fail("n_steps must be at least 1");
  if (!(c.learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(c.adam_beta1 > 0.0 && c.adam_beta1 < 1.0)) fail("adam_beta1 must be in (0, 1)");
  if (!(c.adam_beta2 > 0.0 && c.adam_beta2 < 1.0)) fail("adam_beta2 must be in (0, 1)");
  if (!(c.adam_eps > 0.0)) fail("adam_eps must be positive");
  if (c.grad_clip_norm && !(*c.grad_clip_norm > 0.0)) fail("grad_clip_norm must be positive");
  if (c.curve_checkpoints < 1) fail("curve_checkpoints must be at least 1");
}

Adam::Adam(std::size_t n, const OptConfig& c)
    : lr_(c.learning_rate), b1_(c.adam_beta1), b2_(c.adam_beta2), eps_(c.adam_eps), m_(n), v_(n) {}

void Adam::step(std::span<double> theta, std::span<const double> grad, double scale) {
  if (theta.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, t_);
  const double c2 = 1.0 - std::pow(b2_, t_);
  for (std::size_t i = 0; i < m_.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
    theta[i] -= scale * lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

void Adam::reset_first_moment() { std::fill(m_.begin(), m_.end(), 0.0); }

void clip_by_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (double& g : grad) g *= s;
  }
}

double mse_loss(const mpm::Trajectory& a, const mpm::Trajectory& b) { return mpm::mse(a, b); }

std::vector<int> checkpoint_steps(int n_steps, int checkpoints) {
  std::vector<int> steps;
  for (int j = 0; j <= checkpoints; ++j) {
    const int s = static_cast<int>(std::llround(static_cast<double>(j) * n_steps / checkpoints));
    if (steps.empty() || steps.back() != s) steps.push_back(s);
  }
  return steps;
}

OptResult optimize(const mpm::Material& material, std::span<const double> theta0,
                   std::span<const std::uint8_t> trainable, const mpm::SimConfig& sim,
                   const OptConfig& opt, const mpm::ParticleState& initial,
                   const mpm::Trajectory& target) {
  check_opt_config(opt);
  const std::size_t n = theta0.size();
  if (!trainable.empty() && trainable.size() != n)
    throw std::invalid_argument("trainable mask length differs from theta");
  const auto is_trainable = [&](std::size_t i) { return trainable.empty() || trainable[i] != 0; };
  bool any_trainable = false;
  for (std::size_t i = 0; i < n; ++i) any_trainable = any_trainable || is_trainable(i);
  // Nothing to fit: one evaluation gives the answer.
  const int n_steps = any_trainable ? opt.n_steps : 0;

  OptResult r;
  r.final_loss = std::numeric_limits<double>::infinity();
  std::vector<double> theta(theta0.begin(), theta0.end());
  std::vector<double> anchor;  // last iterate with a usable gradient
  std::vector<double> anchor_grad;
  Adam adam(n, opt);
  double scale = 1.0;
  const auto checkpoints = checkpoint_steps(opt.n_steps, opt.curve_checkpoints);
  std::size_t next_checkpoint = 0;

  for (int k = 0; k <= n_steps; ++k) {
    const bool last = k == n_steps;
    r.iterates.push_back(theta);
    auto run = mpm::simulate(sim, material, theta, initial, {.record_tape = !last});
    double loss = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> grad;
    std::string problem;
    if (run.validity == mpm::Validity::Valid) {
      loss = mpm::mse(run.trajectory, target);
      if (!last) {
        auto g = mpm::backprop(sim, material, theta, run.tape, run.trajectory, target);
        if (g.valid) {
          grad = std::move(g.grad_theta);
        } else {
          problem = g.error;
        }
      }
    } else {
      problem = run.failure;
    }
    if (!std::isfinite(loss)) {
      loss = std::numeric_limits<double>::quiet_NaN();
      if (problem.empty()) problem = "non-finite loss";
    }
    if (k == 0 && (!std::isfinite(loss) || (!last && grad.empty()))) {
      r.validity = mpm::Validity::Invalid;
      r.failure = problem;
      r.loss_trace.push_back(loss);
      r.theta_hat = theta;
      r.final_loss = std::numeric_limits<double>::infinity();
      return r;
    }
    r.loss_trace.push_back(loss);
    while (next_checkpoint < checkpoints.size() && checkpoints[next_checkpoint] < k) ++next_checkpoint;
    if (std::isfinite(loss)) {
      if (next_checkpoint < checkpoints.size() && checkpoints[next_checkpoint] == k)
        r.loss_curve.push_back({k, loss});
      if (loss < r.final_loss) {
        r.final_loss = loss;
        r.best_step = k;
        r.theta_hat = theta;
        r.best_trajectory = std::move(run.trajectory);
      }
    }
    if (last) break;

    if (grad.empty()) {
      theta = anchor;
      grad = anchor_grad;
      scale *= 0.5;
      adam.reset_first_moment();
    } else {
      for (std::size_t i = 0; i < n; ++i)
        if (!is_trainable(i)) grad[i] = 0.0;
      if (opt.grad_clip_norm) clip_by_norm(grad, *opt.grad_clip_norm);
      anchor = theta;
      anchor_grad = grad;
    }
    adam.step(theta, grad, scale);
  }
  return r;
}

OptResult optimize(const dsl::LawProgram& law, const mpm::SimConfig& sim, const OptConfig& opt,
                   const mpm::ParticleState& initial, const mpm::Trajectory& target) {
  const mpm::Material material{law, std::nullopt};
  const auto theta = material.default_theta();
  return optimize(material, theta, {}, sim, opt, initial, target);
}

}  // namespace sga::opt
