#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sga/io/runlog.hpp"

namespace sga::io {

struct LossTrendRow {
  int iteration = 0;
  double best_loss_so_far = 0.0;  // +inf until some candidate is valid
};

struct ValidityRow {
  int iteration = 0;
  int n_valid = 0;
  int n_invalid = 0;  // failed to parse, wrong kind, or fit invalid
  int n_missing = 0;
};

/// Per-iteration rows rebuilt from the log. Iteration 0 holds the seed.
std::vector<LossTrendRow> loss_trend(const RunLog& log);
std::vector<ValidityRow> validity_histogram(const RunLog& log);

std::string loss_trend_csv(const std::vector<LossTrendRow>& rows);
std::string validity_hist_csv(const std::vector<ValidityRow>& rows);

/// Writes loss_trend.csv and validity_hist.csv into `outdir` (created if
/// needed). Throws std::runtime_error on IO failure.
void emit_plot_data(const RunLog& log, const std::filesystem::path& outdir);

}  // namespace sga::io
