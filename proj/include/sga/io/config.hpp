#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "sga/mpm/sim.hpp"
#include "sga/opt/inner.hpp"
#include "sga/search/search.hpp"
#include "sga/tasks/catalog.hpp"

namespace sga::io {

enum class ConfigErrorKind {
  MissingKey,
  UnknownKey,
  TypeErrorInConfig,
  MissingApiKey,
  InvalidValue,
  MissingPath,
  Syntax
};

std::string_view to_string(ConfigErrorKind kind);

class ConfigError : public std::runtime_error {
 public:
  ConfigError(ConfigErrorKind kind, const std::string& message);
  ConfigErrorKind kind() const { return kind_; }

 private:
  ConfigErrorKind kind_;
};

enum class BackendKind { Scripted, Http };

/// Task-scene overrides; unset fields keep the catalog values.
struct SimOverrides {
  std::optional<int> grid_res;
  std::optional<double> dt;
  std::optional<int> n_steps;
  std::optional<int> substeps_per_frame;
  std::optional<mpm::Boundary> boundary;
  std::optional<std::uint64_t> seed;

  void apply(mpm::SimConfig& sim) const;
  bool operator==(const SimOverrides&) const = default;
};

struct RunConfig {
  tasks::TaskId task = tasks::TaskId::A_NonlinearElastic;
  search::SearchConfig search;
  opt::OptConfig opt;
  SimOverrides sim;
  BackendKind backend = BackendKind::Scripted;
  std::filesystem::path script;  // scripted
  std::string endpoint;          // http
  std::string model;             // http
  std::string api_key;           // http, from SGA_API_KEY; never printed
  std::filesystem::path output_dir = "run";

  bool operator==(const RunConfig&) const = default;
};

/// Flat `key = value` text; `#` starts a comment. Relative paths resolve
/// against `base_dir`. Reads SGA_API_KEY only when backend = http.
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

/// The catalog task with the config's sim overrides applied. Particle mass
/// and volume follow a changed grid resolution at the catalog density.
tasks::TaskSpec configure_task(const RunConfig& config);

/// Text that parse_config reads back to an equal config (the API key is
/// omitted and re-read from the environment).
std::string print_config(const RunConfig& config);

}  // namespace sga::io
