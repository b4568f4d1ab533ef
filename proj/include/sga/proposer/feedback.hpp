#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sga/dsl/ast.hpp"
#include "sga/mpm/sim.hpp"
#include "sga/opt/inner.hpp"

namespace sga::proposer {

struct FrameError {
  int frame = 0;
  double mean_error = 0.0;  // mean particle position error, m
  bool operator==(const FrameError&) const = default;
};

struct FeedbackSummary {
  double final_loss = 0.0;
  std::vector<opt::CurvePoint> loss_curve;
  std::vector<std::pair<std::string, double>> theta_hat_named;
  std::vector<FrameError> per_frame_error;  // at most kMaxFrameRows rows
  mpm::Validity validity = mpm::Validity::Valid;
  std::optional<std::string> error_message;
};

inline constexpr int kMaxFrameRows = 10;

/// Mean Euclidean position error per frame.
std::vector<FrameError> frame_errors(const mpm::Trajectory& fit, const mpm::Trajectory& target);

/// Keeps at most `rows` entries, evenly spaced, always including the first
/// and last.
std::vector<FrameError> subsample(const std::vector<FrameError>& errors, int rows);

/// Feedback for a fitted law. `theta_offset` is where the law's parameters
/// start inside result.theta_hat (non-zero when a fixed elastic base precedes
/// a plastic proposal).
FeedbackSummary summarize(const dsl::LawProgram& law, std::size_t theta_offset,
                          const opt::OptResult& result, const mpm::Trajectory& target);

/// Feedback for a proposal that never reached a valid fit.
FeedbackSummary invalid_feedback(std::string message);

/// Fixed-format text tables; deterministic.
std::string render_feedback(const FeedbackSummary& feedback);

/// Shortest round-trip decimal form.
std::string format_real(double v);

}  // namespace sga::proposer
