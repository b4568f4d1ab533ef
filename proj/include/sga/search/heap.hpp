#pragma once

#include <span>
#include <vector>

#include "sga/search/candidate.hpp"

namespace sga::search {

/// Valid candidates in ascending (final loss, id) order, bounded.
class SolutionHeap {
 public:
  explicit SolutionHeap(std::size_t capacity = 64);

  /// Drops invalid candidates and returns false; otherwise inserts in order,
  /// evicting the worst entry on overflow, and returns whether the candidate
  /// is still present.
  bool push(Candidate candidate);

  /// First min(j, size) entries.
  std::span<const Candidate> topk(std::size_t j) const;
  const Candidate& best() const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const std::vector<Candidate>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::vector<Candidate> entries_;
};

/// Strict ordering used by the heap.
bool ranks_before(double loss_a, int id_a, double loss_b, int id_b);

}  // namespace sga::search
