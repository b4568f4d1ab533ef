#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sga/io/runlog.hpp"
#include "sga/opt/inner.hpp"
#include "sga/proposer/backend.hpp"
#include "sga/search/heap.hpp"
#include "sga/tasks/catalog.hpp"

namespace sga::search {

struct SearchConfig {
  int n_iterations = 5;
  int history_k = 5;
  int n_exploit = 4;
  int n_explore = 12;
  double temp_exploit = 0.5;
  double temp_explore = 1.0;
  int heap_capacity = 64;
  std::uint64_t root_seed = 0;
  int workers = 0;  // candidate evaluation threads; 0 picks the hardware count

  bool operator==(const SearchConfig&) const = default;
};

void check_search_config(const SearchConfig& config);

class NoValidCandidate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Offspring m (exploit first) of iteration i >= 1; the seed is id 0.
int candidate_id(const SearchConfig& config, int iteration, int index);
std::uint64_t candidate_seed(std::uint64_t root_seed, int iteration, int index);

struct SearchResult {
  Candidate best;
  SolutionHeap heap;
  std::vector<Candidate> candidates;  // every parsed candidate, id order
  std::vector<double> best_loss_per_iteration;  // index 0 is the seed
};

/// The outer loop. Events go to `log`. `target` defaults to the task's
/// ground-truth trajectory.
SearchResult run_search(const tasks::TaskSpec& task, const SearchConfig& config,
                        proposer::Backend& backend, const opt::OptConfig& opt, io::RunLog& log,
                        const std::optional<mpm::Trajectory>& target = std::nullopt);

/// Fits one proposal inside the task and builds its feedback.
Candidate evaluate_candidate(const tasks::TaskSpec& task, const opt::OptConfig& opt,
                             const mpm::ParticleState& initial, const mpm::Trajectory& target,
                             dsl::LawProgram program, int id, int iteration, Group group);

struct ReplayedHeap {
  std::vector<std::pair<int, double>> entries;  // (id, loss), heap order
  int best_id = -1;
};

/// Rebuilds the heap from InnerOptDone events alone.
ReplayedHeap replay_heap(const io::RunLog& log, std::size_t capacity);

}  // namespace sga::search
