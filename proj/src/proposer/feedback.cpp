#include "sga/proposer/feedback.hpp"

#include <cmath>

#include "sga/dsl/parser.hpp"

namespace sga::proposer {

std::string format_real(double v) { return dsl::format_number(v); }

std::vector<FrameError> frame_errors(const mpm::Trajectory& fit, const mpm::Trajectory& target) {
  if (fit.n_frames != target.n_frames || fit.n_particles != target.n_particles ||
      fit.dim != target.dim)
    throw mpm::ShapeMismatch("trajectories differ in shape");
  std::vector<FrameError> out;
  for (int t = 0; t < fit.n_frames; ++t) {
    const double* a = fit.frame(t);
    const double* b = target.frame(t);
    double sum = 0.0;
    for (int p = 0; p < fit.n_particles; ++p) {
      double sq = 0.0;
      for (int d = 0; d < fit.dim; ++d) {
        const double e = a[p * fit.dim + d] - b[p * fit.dim + d];
        sq += e * e;
      }
      sum += std::sqrt(sq);
    }
    out.push_back({t + 1, fit.n_particles > 0 ? sum / fit.n_particles : 0.0});
  }
  return out;
}

std::vector<FrameError> subsample(const std::vector<FrameError>& errors, int rows) {
  const int n = static_cast<int>(errors.size());
  if (n <= rows) return errors;
  std::vector<FrameError> out;
  for (int j = 0; j < rows; ++j) {
    const auto i = static_cast<std::size_t>(std::llround(static_cast<double>(j) * (n - 1) / (rows - 1)));
    out.push_back(errors[i]);
  }
  return out;
}

FeedbackSummary summarize(const dsl::LawProgram& law, std::size_t theta_offset,
                          const opt::OptResult& result, const mpm::Trajectory& target) {
  FeedbackSummary f;
  f.validity = result.validity;
  if (result.validity != mpm::Validity::Valid) {
    f.final_loss = result.final_loss;
    f.error_message = result.failure.empty() ? "simulation failed" : result.failure;
    return f;
  }
  f.final_loss = result.final_loss;
  f.loss_curve = result.loss_curve;
  for (std::size_t k = 0; k < law.params.size(); ++k)
    f.theta_hat_named.emplace_back(law.params[k].name, result.theta_hat.at(theta_offset + k));
  f.per_frame_error = subsample(frame_errors(result.best_trajectory, target), kMaxFrameRows);
  return f;
}

FeedbackSummary invalid_feedback(std::string message) {
  FeedbackSummary f;
  f.final_loss = INFINITY;
  f.validity = mpm::Validity::Invalid;
  f.error_message = std::move(message);
  return f;
}

std::string render_feedback(const FeedbackSummary& f) {
  std::string s;
  if (f.validity != mpm::Validity::Valid) {
    s += "Status: invalid\n";
    s += "Error: " + f.error_message.value_or("unknown") + "\n";
    return s;
  }
  s += "Status: valid\n";
  s += "Best trajectory MSE (m^2): " + format_real(f.final_loss) + "\n";
  s += "\nOptimized parameters:\n| parameter | value |\n|---|---|\n";
  if (f.theta_hat_named.empty()) s += "| (none) | |\n";
  for (const auto& [name, value] : f.theta_hat_named)
    s += "| " + name + " | " + format_real(value) + " |\n";
  s += "\nLoss during parameter fitting:\n| step | loss |\n|---|---|\n";
  for (const auto& p : f.loss_curve)
    s += "| " + std::to_string(p.step) + " | " + format_real(p.loss) + " |\n";
  s += "\nMean particle position error of the best fit:\n| frame | error (m) |\n|---|---|\n";
  for (const auto& e : f.per_frame_error)
    s += "| " + std::to_string(e.frame) + " | " + format_real(e.mean_error) + " |\n";
  return s;
}

}  // namespace sga::proposer
