#include "sga/search/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "sga/proposer/parse.hpp"
#include "sga/proposer/prompt.hpp"

namespace sga::search {

void check_search_config(const SearchConfig& c) {
  const auto fail = [](const std::string& m) { throw std::invalid_argument("search config: " + m); };
  if (c.n_iterations < 1) fail("n_iterations must be at least 1");
  if (c.history_k < 1) fail("history_k must be at least 1");
  if (c.n_exploit < 0 || c.n_explore < 0 || c.n_exploit + c.n_explore < 1)
    fail("offspring counts must be non-negative with a positive sum");
  if (!(c.temp_exploit >= 0.0 && c.temp_exploit <= c.temp_explore && c.temp_explore <= 2.0))
    fail("temperatures must satisfy 0 <= temp_exploit <= temp_explore <= 2");
  if (c.heap_capacity < 1) fail("heap_capacity must be positive");
  if (c.workers < 0) fail("workers must be non-negative");
}

int candidate_id(const SearchConfig& c, int iteration, int index) {
  return 1 + (iteration - 1) * (c.n_exploit + c.n_explore) + index;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

nlohmann::json loss_json(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

nlohmann::json opt_json(const opt::OptConfig& o) {
  return {{"n_steps", o.n_steps},
          {"learning_rate", o.learning_rate},
          {"adam_beta1", o.adam_beta1},
          {"adam_beta2", o.adam_beta2},
          {"adam_eps", o.adam_eps},
          {"grad_clip_norm", o.grad_clip_norm ? nlohmann::json(*o.grad_clip_norm) : nullptr},
          {"curve_checkpoints", o.curve_checkpoints}};
}

nlohmann::json search_json(const SearchConfig& c) {
  return {{"n_iterations", c.n_iterations}, {"history_k", c.history_k},
          {"n_exploit", c.n_exploit},       {"n_explore", c.n_explore},
          {"temp_exploit", c.temp_exploit}, {"temp_explore", c.temp_explore},
          {"heap_capacity", c.heap_capacity}, {"root_seed", c.root_seed}};
}

std::string hex(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = kDigits[v & 0xF];
  return s;
}

// Outcome of one offspring slot, filled by a worker and merged in id order.
struct Slot {
  int id = 0;
  int index = 0;
  Group group = Group::Exploit;
  double temperature = 0.0;
  bool missing = false;
  std::optional<std::string> parse_error;
  std::string analysis;
  std::optional<Candidate> candidate;
};

template <typename F>
void parallel_for(int n, int workers, F&& body) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < std::min(workers, n); ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void log_outcome(io::RunLog& log, const Candidate& c) {
  nlohmann::json theta = nlohmann::json::array();
  for (double v : c.opt.theta_hat) theta.push_back(v);
  log.append("InnerOptDone", {{"id", c.id},
                              {"final_loss", loss_json(c.final_loss())},
                              {"steps", c.opt.loss_trace.size()},
                              {"best_step", c.opt.best_step},
                              {"validity", mpm::to_string(c.validity)},
                              {"theta_hat", theta},
                              {"error", c.feedback.error_message ? nlohmann::json(*c.feedback.error_message)
                                                                 : nullptr}});
}

}  // namespace

std::uint64_t candidate_seed(std::uint64_t root_seed, int iteration, int index) {
  return splitmix(splitmix(splitmix(root_seed) ^ static_cast<std::uint64_t>(iteration)) ^
                  static_cast<std::uint64_t>(index));
}

Candidate evaluate_candidate(const tasks::TaskSpec& task, const opt::OptConfig& opt,
                             const mpm::ParticleState& initial, const mpm::Trajectory& target,
                             dsl::LawProgram program, int id, int iteration, Group group) {
  Candidate c;
  c.id = id;
  c.iteration = iteration;
  c.group = group;
  tasks::FitProblem fit;
  try {
    fit = task.fit_problem(program);
  } catch (const tasks::KindMismatch& e) {
    c.program = std::move(program);
    c.opt.final_loss = INFINITY;
    c.opt.validity = mpm::Validity::Invalid;
    c.opt.failure = e.what();
    c.feedback = proposer::invalid_feedback(e.what());
    c.validity = mpm::Validity::Invalid;
    return c;
  }
  c.opt = opt::optimize(fit.material, fit.theta0, fit.trainable, task.sim, opt, initial, target);
  const std::size_t offset = fit.theta0.size() - program.param_count();
  c.feedback = proposer::summarize(program, offset, c.opt, target);
  c.validity = c.opt.validity;
  c.program = std::move(program);
  return c;
}

SearchResult run_search(const tasks::TaskSpec& task, const SearchConfig& cfg,
                        proposer::Backend& backend, const opt::OptConfig& opt, io::RunLog& log,
                        const std::optional<mpm::Trajectory>& target_override) {
  check_search_config(cfg);
  opt::check_opt_config(opt);
  const mpm::Trajectory target =
      target_override ? *target_override : tasks::generate_ground_truth(task);
  const mpm::ParticleState initial = task.initial_state();
  const int workers = cfg.workers > 0 ? cfg.workers
                                      : std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
  const int per_iteration = cfg.n_exploit + cfg.n_explore;

  const auto run_key = std::string(1, tasks::task_letter(task.id)) + search_json(cfg).dump() +
                       opt_json(opt).dump();
  log.append("RunStarted", {{"config_hash", hex(proposer::fnv1a(run_key))},
                            {"task", std::string(1, tasks::task_letter(task.id))},
                            {"search", search_json(cfg)},
                            {"opt", opt_json(opt)}});

  SearchResult result{Candidate{}, SolutionHeap(static_cast<std::size_t>(cfg.heap_capacity)), {}, {}};
  const auto note_heap = [&] {
    log.append("HeapUpdated", {{"best_id", result.heap.best().id},
                               {"best_loss", result.heap.best().final_loss()},
                               {"size", result.heap.size()}});
  };

  // Seed: the task's initial guess.
  const dsl::LawProgram& seed_law = task.evolved_kind == dsl::LawKind::Elastic
                                        ? task.initial_guess.elastic
                                        : *task.initial_guess.plastic;
  log.append("CandidateProposed", {{"id", 0},
                                   {"iteration", 0},
                                   {"group", "seed"},
                                   {"temperature", nullptr},
                                   {"prompt_hash", nullptr},
                                   {"seed", hex(candidate_seed(cfg.root_seed, 0, 0))}});
  log.append("CandidateParsed", {{"id", 0}, {"ok", true}, {"source", seed_law.source_text}});
  Candidate seed = evaluate_candidate(task, opt, initial, target, seed_law, 0, 0, Group::Seed);
  log_outcome(log, seed);
  result.candidates.push_back(seed);
  if (!result.heap.push(std::move(seed)))
    throw NoValidCandidate("the initial guess of task " + std::string(1, tasks::task_letter(task.id)) +
                           " did not produce a valid fit");
  note_heap();
  result.best_loss_per_iteration.push_back(result.heap.best().final_loss());

  std::size_t reported_errors = backend.errors().size();
  for (int it = 1; it <= cfg.n_iterations; ++it) {
    const auto topk = result.heap.topk(static_cast<std::size_t>(cfg.history_k));
    const auto prompt = proposer::build_prompt(topk, task.evolved_kind);
    const auto hash = hex(proposer::prompt_hash(prompt));
    std::vector<std::string> exploit, explore;
    if (cfg.n_exploit > 0) exploit = backend.propose(prompt, cfg.temp_exploit, cfg.n_exploit);
    if (cfg.n_explore > 0) explore = backend.propose(prompt, cfg.temp_explore, cfg.n_explore);
    const auto errors = backend.errors();
    for (; reported_errors < errors.size(); ++reported_errors)
      log.append("ProposerError", {{"iteration", it}, {"message", errors[reported_errors]}});

    std::vector<Slot> slots(per_iteration);
    std::vector<std::optional<std::string>> texts(per_iteration);
    for (int m = 0; m < per_iteration; ++m) {
      Slot& s = slots[m];
      s.index = m;
      s.id = candidate_id(cfg, it, m);
      const bool is_exploit = m < cfg.n_exploit;
      s.group = is_exploit ? Group::Exploit : Group::Explore;
      s.temperature = is_exploit ? cfg.temp_exploit : cfg.temp_explore;
      const auto& batch = is_exploit ? exploit : explore;
      const auto k = static_cast<std::size_t>(is_exploit ? m : m - cfg.n_exploit);
      if (k < batch.size()) {
        texts[m] = batch[k];
      } else {
        s.missing = true;
      }
    }

    parallel_for(per_iteration, workers, [&](int m) {
      Slot& s = slots[m];
      if (s.missing) return;
      try {
        auto proposal = proposer::parse_proposal(*texts[m]);
        s.analysis = std::move(proposal.analysis_excerpt);
        s.candidate = evaluate_candidate(task, opt, initial, target, std::move(proposal.program),
                                         s.id, it, s.group);
      } catch (const proposer::ProposalError& e) {
        s.parse_error = e.what();
      }
    });

    // Merge in id order.
    for (auto& s : slots) {
      log.append("CandidateProposed", {{"id", s.id},
                                       {"iteration", it},
                                       {"group", to_string(s.group)},
                                       {"temperature", s.temperature},
                                       {"prompt_hash", hash},
                                       {"seed", hex(candidate_seed(cfg.root_seed, it, s.index))}});
      if (s.missing) {
        log.append("CandidateMissing", {{"id", s.id}});
        continue;
      }
      if (s.parse_error) {
        log.append("CandidateParsed", {{"id", s.id}, {"ok", false}, {"error", *s.parse_error}});
        continue;
      }
      log.append("CandidateParsed", {{"id", s.id},
                                     {"ok", true},
                                     {"source", s.candidate->program.source_text},
                                     {"analysis", s.analysis}});
      log_outcome(log, *s.candidate);
      result.candidates.push_back(*s.candidate);
      result.heap.push(std::move(*s.candidate));
    }
    note_heap();
    result.best_loss_per_iteration.push_back(result.heap.best().final_loss());
  }

  result.best = result.heap.best();
  log.append("RunFinished", {{"best_id", result.best.id}, {"best_loss", result.best.final_loss()}});
  return result;
}

ReplayedHeap replay_heap(const io::RunLog& log, std::size_t capacity) {
  ReplayedHeap r;
  for (const auto& e : log.events()) {
    if (e.at("event") != "InnerOptDone" || e.at("validity") != "valid" || e.at("final_loss").is_null())
      continue;
    const int id = e.at("id").get<int>();
    const double loss = e.at("final_loss").get<double>();
    const auto pos = std::upper_bound(r.entries.begin(), r.entries.end(), std::pair{id, loss},
                                      [](const auto& a, const auto& b) {
                                        return ranks_before(a.second, a.first, b.second, b.first);
                                      });
    if (static_cast<std::size_t>(pos - r.entries.begin()) >= capacity) continue;
    r.entries.insert(pos, {id, loss});
    if (r.entries.size() > capacity) r.entries.pop_back();
  }
  if (!r.entries.empty()) r.best_id = r.entries.front().first;
  return r;
}

}  // namespace sga::search
