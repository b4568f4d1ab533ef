#include "sga/search/heap.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sga::search {

bool ranks_before(double loss_a, int id_a, double loss_b, int id_b) {
  if (loss_a != loss_b) return loss_a < loss_b;
  return id_a < id_b;
}

SolutionHeap::SolutionHeap(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("heap capacity must be positive");
}

bool SolutionHeap::push(Candidate c) {
  if (c.validity != mpm::Validity::Valid || !std::isfinite(c.final_loss())) return false;
  const auto pos = std::upper_bound(entries_.begin(), entries_.end(), c,
                                    [](const Candidate& a, const Candidate& b) {
                                      return ranks_before(a.final_loss(), a.id, b.final_loss(), b.id);
                                    });
  const auto index = static_cast<std::size_t>(pos - entries_.begin());
  if (index >= capacity_) return false;
  entries_.insert(pos, std::move(c));
  if (entries_.size() > capacity_) entries_.pop_back();
  return true;
}

std::span<const Candidate> SolutionHeap::topk(std::size_t j) const {
  return std::span<const Candidate>(entries_).first(std::min(j, entries_.size()));
}

const Candidate& SolutionHeap::best() const {
  if (entries_.empty()) throw std::out_of_range("heap is empty");
  return entries_.front();
}

}  // namespace sga::search
