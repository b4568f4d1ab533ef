#include "sga/proposer/prompt.hpp"

#include "sga/dsl/parser.hpp"
#include "sga/dsl_reference.hpp"

namespace sga::proposer {

std::vector<std::string> PromptBundle::segments() const {
  std::vector<std::string> out;
  out.push_back(system);
  out.insert(out.end(), history_blocks.begin(), history_blocks.end());
  out.push_back(format);
  return out;
}

std::string PromptBundle::user_message() const {
  std::string s;
  for (const auto& block : history_blocks) s += block + "\n";
  s += format;
  return s;
}

std::string PromptBundle::assembled() const { return system + "\n" + user_message(); }

std::string system_prompt(dsl::LawKind kind) {
  std::string s =
      "You help with computational mechanics research by writing constitutive laws for a "
      "material point method simulator.\n"
      "Work only on the material model. Be brief and answer only what is asked.\n"
      "Comment the law so every step can be followed.\n"
      "Format the answer in Markdown.\n"
      "Laws are written in the tensor language described below; nothing outside it is "
      "available.\n\n";
  if (kind == dsl::LawKind::Elastic) {
    s +=
        "The law to find is elastic: it maps the deformation gradient F to the Kirchhoff "
        "stress tau = P @ transpose(F), where P is the first Piola-Kirchhoff stress. Return "
        "tau itself, never another stress measure.\n\n";
  } else {
    s +=
        "The law to find is a plastic correction: it maps the trial deformation gradient F, "
        "taken right after the elastic update, to the corrected deformation gradient. The "
        "elastic law is fixed and is not part of the task. Returning F unchanged means the "
        "material has no plastic flow.\n\n";
  }
  s += kDslReference;
  return s;
}

std::string format_prompt(dsl::LawKind kind) {
  const std::string header = kind == dsl::LawKind::Elastic ? "law elastic" : "law plastic";
  std::string s =
      "## Answer format\n\n"
      "Write three sections, in this order.\n\n"
      "1. `### Analysis`. For every iteration shown above, add a subsection `#### Iteration N` "
      "with its number and explain, from its feedback, where the simulated motion departs from "
      "the observed one. Discuss the form of the law, not the parameter fitting.\n"
      "2. `### Step-by-Step Plan`. Describe in detail the law for this round: which "
      "quantities are trainable parameters, which are fixed constants, and how they combine. "
      "Take the initial parameter values from the fitted values reported above.";
  if (kind == dsl::LawKind::Plastic) s += " First decide whether any plastic flow is needed.";
  s +=
      "\n3. `### Code`. Exactly one fenced block marked `law` holding a complete `" + header +
      " \"name\" { ... }` program. Write nothing after the block.\n\n"
      "Parameters are fitted by gradient descent through the simulation, so the output must "
      "depend smoothly on them and their initial values must give a stable simulation. The "
      "law must work for both 2x2 and 3x3 matrices.\n";
  return s;
}

std::string history_block(const search::Candidate& c, int position) {
  const std::string source =
      c.program.source_text.empty() ? dsl::pretty_print(c.program) : c.program.source_text;
  std::string s = "## Iteration " + std::to_string(position) + "\n\n```law\n" + source;
  if (!source.empty() && source.back() != '\n') s += "\n";
  s += "```\n\n" + render_feedback(c.feedback);
  return s;
}

PromptBundle build_prompt(std::span<const search::Candidate> topk, dsl::LawKind kind) {
  if (topk.empty()) throw EmptyHistory("build_prompt needs at least one candidate");
  for (const auto& c : topk)
    if (c.validity != mpm::Validity::Valid)
      throw std::invalid_argument("candidate " + std::to_string(c.id) +
                                  " is invalid and cannot enter the prompt");
  PromptBundle b;
  b.system = system_prompt(kind);
  int position = 1;
  for (auto it = topk.rbegin(); it != topk.rend(); ++it)
    b.history_blocks.push_back(history_block(*it, position++));
  b.format = format_prompt(kind);
  return b;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t prompt_hash(const PromptBundle& prompt) { return fnv1a(prompt.assembled()); }

}  // namespace sga::proposer
