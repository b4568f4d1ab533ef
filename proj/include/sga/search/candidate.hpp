#pragma once

#include <string_view>

#include "sga/dsl/ast.hpp"
#include "sga/mpm/sim.hpp"
#include "sga/opt/inner.hpp"
#include "sga/proposer/feedback.hpp"

namespace sga::search {

enum class Group { Seed, Exploit, Explore };

inline std::string_view to_string(Group g) {
  switch (g) {
    case Group::Seed: return "seed";
    case Group::Exploit: return "exploit";
    case Group::Explore: return "explore";
  }
  return "unknown";
}

struct Candidate {
  int id = 0;
  int iteration = 0;
  Group group = Group::Seed;
  dsl::LawProgram program;
  opt::OptResult opt;
  proposer::FeedbackSummary feedback;
  mpm::Validity validity = mpm::Validity::Invalid;

  double final_loss() const { return opt.final_loss; }
};

}  // namespace sga::search
