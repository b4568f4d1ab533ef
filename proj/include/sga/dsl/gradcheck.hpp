#pragma once

#include <optional>
#include <random>

#include "sga/dsl/eval.hpp"

namespace sga::dsl {

struct GradcheckOptions {
  int dim = 3;
  int points = 10;          // informative points required
  int max_attempts = 400;   // sampled points before giving up
  double spread = 0.3;      // F = I + spread * N(0, 1)
  double step = 1e-6;       // scaled by |x| + 1
};

struct GradcheckResult {
  int points = 0;
  int attempts = 0;
  double worst_error = 0.0;
};

/// ‖vjp − fd‖₂ / max(‖vjp‖∞, ‖fd‖∞) over F and theta with central
/// differences of ⟨cotangent, output⟩. Empty when the gradient is too small
/// against |⟨cotangent, output⟩| for differences to resolve it.
std::optional<double> vjp_fd_error(const LawProgram& program, const Mat& F,
                                   std::span<const double> theta, const Mat& cotangent,
                                   double step = 1e-6);

/// Samples well-conditioned points until `points` informative ones are found.
GradcheckResult gradcheck(const LawProgram& program, std::mt19937_64& rng,
                          const GradcheckOptions& options = {});

}  // namespace sga::dsl
