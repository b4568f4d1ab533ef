#pragma once

#include <random>

#include "sga/dsl/eval.hpp"

namespace sga::dsl {

struct RandomProgramOptions {
  int computed_nodes = 50;
  int max_params = 3;
  // Wrap domain-restricted operands (log, sqrt, pow, division, inverse,
  // decompositions) in subgraphs that keep them in range, for gradient checks.
  bool conditioned = false;
};

/// Random well-typed program; valid per validate_graph.
LawProgram random_program(std::mt19937_64& rng, const RandomProgramOptions& options);

/// True when every node at this point is comfortably away from domain
/// boundaries, kinks and degenerate spectra, so central differences are a
/// trustworthy oracle there.
bool well_conditioned(const LawProgram& program, const Mat& F, std::span<const double> theta);

}  // namespace sga::dsl
