#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "sga/dsl/gradcheck.hpp"
#include "sga/dsl/parser.hpp"
#include "sga/dsl/random_program.hpp"
#include "sga/io/config.hpp"
#include "sga/io/plot.hpp"
#include "sga/io/runlog.hpp"
#include "sga/io/sgtr.hpp"
#include "sga/opt/inner.hpp"
#include "sga/proposer/backend.hpp"
#include "sga/search/search.hpp"
#include "sga/tasks/catalog.hpp"

namespace fs = std::filesystem;
using namespace sga;

namespace {

constexpr double kGradcheckTolerance = 1e-4;

tasks::TaskId task_arg(const std::string& letter) {
  const auto id = tasks::parse_task_id(letter);
  if (!id) throw CLI::ValidationError("task", "expected one of a, b, c, d, x");
  return *id;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json loss_json(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

int gen_truth(const std::string& letter, fs::path out) {
  const auto task = tasks::make_task(task_arg(letter));
  if (out.empty()) out = std::string(1, tasks::task_letter(task.id)) + "_truth.sgtr";
  const auto t = tasks::generate_ground_truth(task);
  io::save_trajectory(out, t);
  std::cout << "wrote " << out.string() << " (" << t.n_frames << " frames, " << t.n_particles
            << " particles)\n";
  return 0;
}

int optimize(const std::string& letter, const fs::path& law_file, int steps, const fs::path& out) {
  const auto task = tasks::make_task(task_arg(letter));
  const auto law = dsl::parse_law(read_text(law_file));
  const auto fit = task.fit_problem(law);
  opt::OptConfig cfg;
  if (steps > 0) cfg.n_steps = steps;
  const auto target = tasks::generate_ground_truth(task);
  const auto r = opt::optimize(fit.material, fit.theta0, fit.trainable, task.sim, cfg,
                               task.initial_state(), target);
  nlohmann::ordered_json report;
  report["law"] = law.name;
  report["validity"] = mpm::to_string(r.validity);
  report["final_loss"] = loss_json(r.final_loss);
  report["best_step"] = r.best_step;
  report["recovered"] = r.final_loss <= task.recovery_threshold;
  nlohmann::ordered_json params;
  const std::size_t offset = fit.theta0.size() - law.param_count();
  for (std::size_t k = 0; k < law.param_count() && offset + k < r.theta_hat.size(); ++k)
    params[law.params[k].name] = r.theta_hat[offset + k];
  report["theta_hat"] = params;
  if (!r.failure.empty()) report["failure"] = r.failure;
  std::cout << report.dump(2) << "\n";
  if (!out.empty() && r.validity == mpm::Validity::Valid) io::save_trajectory(out, r.best_trajectory);
  return r.validity == mpm::Validity::Valid ? 0 : 1;
}

std::unique_ptr<proposer::Backend> make_backend(const io::RunConfig& c) {
  if (c.backend == io::BackendKind::Scripted)
    return std::make_unique<proposer::ScriptedBackend>(proposer::ScriptedBackend::read_script(c.script));
  proposer::HttpConfig http;
  http.endpoint = c.endpoint;
  http.model = c.model;
  http.api_key = c.api_key;
  return std::make_unique<proposer::HttpChatBackend>(http);
}

int run_search(const fs::path& config_path, const fs::path& output_dir) {
  auto cfg = io::load_config(config_path);
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  const auto task = io::configure_task(cfg);
  auto backend = make_backend(cfg);
  fs::create_directories(cfg.output_dir);
  io::RunLog log(cfg.output_dir / "run.jsonl");
  const auto target = tasks::generate_ground_truth(task);
  io::save_trajectory(cfg.output_dir / "truth.sgtr", target);
  const auto result = search::run_search(task, cfg.search, *backend, cfg.opt, log, target);
  io::save_trajectory(cfg.output_dir / "best.sgtr", result.best.opt.best_trajectory);
  {
    std::ofstream best(cfg.output_dir / "best.law", std::ios::binary);
    best << result.best.program.source_text;
  }
  io::emit_plot_data(log, cfg.output_dir);
  std::cout << "best candidate " << result.best.id << " (iteration " << result.best.iteration
            << ") loss " << dsl::format_number(result.best.final_loss()) << "\n";
  std::cout << "run written to " << cfg.output_dir.string() << "\n";
  return 0;
}

int gradcheck(bool fixtures, int random, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  bool ok = true;
  const auto report = [&](const std::string& name, const dsl::GradcheckResult& r, int wanted) {
    worst = std::max(worst, r.worst_error);
    const bool pass = r.points == wanted && r.worst_error < kGradcheckTolerance;
    ok = ok && pass;
    std::printf("%-28s points %2d/%d  worst %.3e  %s\n", name.c_str(), r.points, wanted, r.worst_error,
                pass ? "ok" : "FAIL");
  };
  dsl::GradcheckOptions opts;
  if (fixtures)
    for (auto name : tasks::gradient_fixture_names())
      report(std::string(name), dsl::gradcheck(tasks::bundled_law(name), rng, opts), opts.points);
  dsl::RandomProgramOptions gen;
  gen.conditioned = true;
  for (int i = 0; i < random;) {
    const auto program = dsl::random_program(rng, gen);
    const auto r = dsl::gradcheck(program, rng, opts);
    // Programs that never reach enough informative points are resampled.
    if (r.points < opts.points) continue;
    report("random #" + std::to_string(i), r, opts.points);
    ++i;
  }
  std::printf("worst relative error %.3e (tolerance %.0e)\n", worst, kGradcheckTolerance);
  return ok ? 0 : 1;
}

int plot(const fs::path& run_dir) {
  const auto log = io::RunLog::load(run_dir / "run.jsonl");
  io::emit_plot_data(log, run_dir);
  std::cout << "wrote " << (run_dir / "loss_trend.csv").string() << " and "
            << (run_dir / "validity_hist.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Law discovery by program search over a differentiable MPM simulator"};
  app.require_subcommand(1);

  std::string task;
  fs::path out;
  auto* gen = app.add_subcommand("gen-truth", "Simulate a task's ground truth and save it as SGTR");
  gen->add_option("task", task, "a, b, c, d or x")->required();
  gen->add_option("-o,--out", out, "Output file (default <task>_truth.sgtr)");

  fs::path law_file;
  int steps = 0;
  auto* fit = app.add_subcommand("optimize", "Fit one law's parameters inside a task");
  fit->add_option("task", task, "a, b, c, d or x")->required();
  fit->add_option("law", law_file, "Law source file")->required()->check(CLI::ExistingFile);
  fit->add_option("--steps", steps, "Adam steps (default 100)")->check(CLI::PositiveNumber);
  fit->add_option("-o,--out", out, "Save the best trajectory as SGTR");

  fs::path config;
  auto* run = app.add_subcommand("search", "Run the outer search from a config file");
  run->add_option("config", config, "Config file")->required()->check(CLI::ExistingFile);
  fs::path output_dir;
  run->add_option("-o,--output-dir", output_dir, "Override the config's output_dir");

  bool fixtures = false;
  int random = 0;
  std::uint64_t seed = 0;
  auto* grad = app.add_subcommand("gradcheck", "Compare law gradients with finite differences");
  auto* fx = grad->add_flag("--fixtures", fixtures, "Check the bundled fixture laws");
  auto* rnd = grad->add_option("--random", random, "Check N random programs")->check(CLI::NonNegativeNumber);
  grad->add_option("--seed", seed, "RNG seed");
  fx->excludes(rnd);
  rnd->excludes(fx);

  fs::path run_dir;
  auto* plt = app.add_subcommand("plot", "Write CSV plot data for a finished run");
  plt->add_option("run-dir", run_dir, "Directory holding run.jsonl")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return gen_truth(task, out);
    if (*fit) return optimize(task, law_file, steps, out);
    if (*run) return run_search(config, output_dir);
    if (*grad) {
      if (!fixtures && random == 0) fixtures = true;
      return gradcheck(fixtures, random, seed);
    }
    if (*plt) return plot(run_dir);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
