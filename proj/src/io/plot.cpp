#include "sga/io/plot.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include "sga/dsl/parser.hpp"

namespace sga::io {

namespace {

struct Outcome {
  int iteration = 0;
  enum { Pending, Valid, Invalid, Missing } state = Pending;
  double loss = std::numeric_limits<double>::infinity();
};

std::map<int, Outcome> outcomes(const RunLog& log) {
  std::map<int, Outcome> by_id;
  for (const auto& e : log.events()) {
    const auto& type = e.at("event");
    if (type == "CandidateProposed") {
      by_id[e.at("id").get<int>()].iteration = e.at("iteration").get<int>();
    } else if (type == "CandidateMissing") {
      by_id.at(e.at("id").get<int>()).state = Outcome::Missing;
    } else if (type == "CandidateParsed") {
      if (!e.at("ok").get<bool>()) by_id.at(e.at("id").get<int>()).state = Outcome::Invalid;
    } else if (type == "InnerOptDone") {
      auto& o = by_id.at(e.at("id").get<int>());
      if (e.at("validity") == "valid" && !e.at("final_loss").is_null()) {
        o.state = Outcome::Valid;
        o.loss = e.at("final_loss").get<double>();
      } else {
        o.state = Outcome::Invalid;
      }
    }
  }
  return by_id;
}

int last_iteration(const std::map<int, Outcome>& by_id) {
  int last = -1;
  for (const auto& [id, o] : by_id) last = std::max(last, o.iteration);
  return last;
}

std::string csv_number(double v) { return std::isfinite(v) ? dsl::format_number(v) : "inf"; }

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

std::vector<LossTrendRow> loss_trend(const RunLog& log) {
  const auto by_id = outcomes(log);
  std::vector<LossTrendRow> rows(last_iteration(by_id) + 1);
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
    rows[i].iteration = i;
    rows[i].best_loss_so_far = std::numeric_limits<double>::infinity();
  }
  for (const auto& [id, o] : by_id)
    if (o.state == Outcome::Valid)
      for (int i = o.iteration; i < static_cast<int>(rows.size()); ++i)
        rows[i].best_loss_so_far = std::min(rows[i].best_loss_so_far, o.loss);
  return rows;
}

std::vector<ValidityRow> validity_histogram(const RunLog& log) {
  const auto by_id = outcomes(log);
  std::vector<ValidityRow> rows(last_iteration(by_id) + 1);
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) rows[i].iteration = i;
  for (const auto& [id, o] : by_id) {
    auto& r = rows[o.iteration];
    switch (o.state) {
      case Outcome::Valid: ++r.n_valid; break;
      case Outcome::Missing: ++r.n_missing; break;
      // A proposal logged without an outcome never got a fit; count it invalid.
      case Outcome::Pending:
      case Outcome::Invalid: ++r.n_invalid; break;
    }
  }
  return rows;
}

std::string loss_trend_csv(const std::vector<LossTrendRow>& rows) {
  std::string s = "iteration,best_loss_so_far\n";
  for (const auto& r : rows) s += std::to_string(r.iteration) + "," + csv_number(r.best_loss_so_far) + "\n";
  return s;
}

std::string validity_hist_csv(const std::vector<ValidityRow>& rows) {
  std::string s = "iteration,n_valid,n_invalid,n_missing\n";
  for (const auto& r : rows)
    s += std::to_string(r.iteration) + "," + std::to_string(r.n_valid) + "," + std::to_string(r.n_invalid) +
         "," + std::to_string(r.n_missing) + "\n";
  return s;
}

void emit_plot_data(const RunLog& log, const std::filesystem::path& outdir) {
  std::error_code ec;
  std::filesystem::create_directories(outdir, ec);
  if (ec) throw std::runtime_error("cannot create " + outdir.string() + ": " + ec.message());
  write_file(outdir / "loss_trend.csv", loss_trend_csv(loss_trend(log)));
  write_file(outdir / "validity_hist.csv", validity_hist_csv(validity_histogram(log)));
}

}  // namespace sga::io
