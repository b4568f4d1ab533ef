#include "sga/dsl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "sga/dsl/random_program.hpp"

namespace sga::dsl {

std::optional<double> vjp_fd_error(const LawProgram& program, const Mat& F,
                                   std::span<const double> theta, const Mat& cotangent, double step) {
  const auto v = eval_vjp(program, F, theta, cotangent);
  std::vector<double> th(theta.begin(), theta.end());
  const auto objective = [&](const Mat& G, const std::vector<double>& t) {
    return eval_forward(program, G, t).cwiseProduct(cotangent).sum();
  };
  const int d = static_cast<int>(F.rows());
  double sq = 0.0;
  double scale = 0.0;
  const auto accumulate = [&](double fd, double an) {
    sq += (fd - an) * (fd - an);
    scale = std::max({scale, std::abs(fd), std::abs(an)});
  };
  for (int e = 0; e < d * d; ++e) {
    const int r = e % d;
    const int c = e / d;
    const double h = step * (std::abs(F(r, c)) + 1.0);
    Mat plus = F;
    Mat minus = F;
    plus(r, c) += h;
    minus(r, c) -= h;
    accumulate((objective(plus, th) - objective(minus, th)) / (2.0 * h), v.dF(r, c));
  }
  for (std::size_t k = 0; k < th.size(); ++k) {
    const double h = step * (std::abs(th[k]) + 1.0);
    auto plus = th;
    auto minus = th;
    plus[k] += h;
    minus[k] -= h;
    accumulate((objective(F, plus) - objective(F, minus)) / (2.0 * h), v.dtheta[k]);
  }
  if (scale < 1e-3 * (std::abs(objective(F, th)) + 1.0)) return std::nullopt;
  return std::sqrt(sq) / scale;
}

GradcheckResult gradcheck(const LawProgram& program, std::mt19937_64& rng,
                          const GradcheckOptions& options) {
  std::normal_distribution<double> normal;
  const int d = options.dim;
  GradcheckResult result;
  const auto base = program.default_theta();
  while (result.points < options.points && result.attempts < options.max_attempts) {
    ++result.attempts;
    Mat F = Mat::Identity(d, d);
    Mat cot(d, d);
    for (int e = 0; e < d * d; ++e) {
      F(e % d, e / d) += options.spread * normal(rng);
      cot(e % d, e / d) = normal(rng);
    }
    std::vector<double> theta = base;
    for (double& t : theta) t += 0.1 * normal(rng) * (std::abs(t) + 1.0);
    if (!well_conditioned(program, F, theta)) continue;
    const auto err = vjp_fd_error(program, F, theta, cot, options.step);
    if (!err) continue;
    ++result.points;
    result.worst_error = std::max(result.worst_error, *err);
  }
  return result;
}

}  // namespace sga::dsl
