#include "sga/io/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "sga/dsl/parser.hpp"

namespace sga::io {

std::string_view to_string(ConfigErrorKind kind) {
  switch (kind) {
    case ConfigErrorKind::MissingKey: return "missing key";
    case ConfigErrorKind::UnknownKey: return "unknown key";
    case ConfigErrorKind::TypeErrorInConfig: return "type error";
    case ConfigErrorKind::MissingApiKey: return "missing API key";
    case ConfigErrorKind::InvalidValue: return "invalid value";
    case ConfigErrorKind::MissingPath: return "missing path";
    case ConfigErrorKind::Syntax: return "syntax error";
  }
  return "error";
}

ConfigError::ConfigError(ConfigErrorKind kind, const std::string& message)
    : std::runtime_error("config: " + std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void SimOverrides::apply(mpm::SimConfig& sim) const {
  if (grid_res) sim.grid_res = *grid_res;
  if (dt) sim.dt = *dt;
  if (n_steps) sim.n_steps = *n_steps;
  if (substeps_per_frame) sim.substeps_per_frame = *substeps_per_frame;
  if (boundary) sim.boundary = *boundary;
  if (seed) sim.seed = *seed;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(const std::string& key, std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(ConfigErrorKind::TypeErrorInConfig,
                      key + " expects a number, got '" + std::string(v) + "'");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out))
      throw ConfigError(ConfigErrorKind::TypeErrorInConfig, key + " must be finite");
  }
  return out;
}

std::string unquote(std::string_view v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return std::string(v.substr(1, v.size() - 2));
  return std::string(v);
}

using Setter = std::function<void(RunConfig&, const std::string& key, std::string_view value)>;

template <typename T, typename M>
Setter number(M member) {
  return [member](RunConfig& c, const std::string& key, std::string_view v) {
    std::invoke(member, c) = parse_number<T>(key, v);
  };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"task",
       [](RunConfig& c, const std::string& key, std::string_view v) {
         const auto id = tasks::parse_task_id(unquote(v));
         if (!id) throw ConfigError(ConfigErrorKind::InvalidValue, key + " must be one of a, b, c, d, x");
         c.task = *id;
       }},
      {"backend",
       [](RunConfig& c, const std::string& key, std::string_view v) {
         const auto name = unquote(v);
         if (name == "scripted") {
           c.backend = BackendKind::Scripted;
         } else if (name == "http") {
           c.backend = BackendKind::Http;
         } else {
           throw ConfigError(ConfigErrorKind::InvalidValue, key + " must be scripted or http");
         }
       }},
      {"script", [](RunConfig& c, const std::string&, std::string_view v) { c.script = unquote(v); }},
      {"endpoint", [](RunConfig& c, const std::string&, std::string_view v) { c.endpoint = unquote(v); }},
      {"model", [](RunConfig& c, const std::string&, std::string_view v) { c.model = unquote(v); }},
      {"output_dir",
       [](RunConfig& c, const std::string&, std::string_view v) { c.output_dir = unquote(v); }},
      {"n_iterations", number<int>([](RunConfig& c) -> int& { return c.search.n_iterations; })},
      {"history_k", number<int>([](RunConfig& c) -> int& { return c.search.history_k; })},
      {"n_exploit", number<int>([](RunConfig& c) -> int& { return c.search.n_exploit; })},
      {"n_explore", number<int>([](RunConfig& c) -> int& { return c.search.n_explore; })},
      {"temp_exploit", number<double>([](RunConfig& c) -> double& { return c.search.temp_exploit; })},
      {"temp_explore", number<double>([](RunConfig& c) -> double& { return c.search.temp_explore; })},
      {"heap_capacity", number<int>([](RunConfig& c) -> int& { return c.search.heap_capacity; })},
      {"root_seed",
       number<std::uint64_t>([](RunConfig& c) -> std::uint64_t& { return c.search.root_seed; })},
      {"workers", number<int>([](RunConfig& c) -> int& { return c.search.workers; })},
      {"opt.n_steps", number<int>([](RunConfig& c) -> int& { return c.opt.n_steps; })},
      {"opt.learning_rate",
       number<double>([](RunConfig& c) -> double& { return c.opt.learning_rate; })},
      {"opt.adam_beta1", number<double>([](RunConfig& c) -> double& { return c.opt.adam_beta1; })},
      {"opt.adam_beta2", number<double>([](RunConfig& c) -> double& { return c.opt.adam_beta2; })},
      {"opt.adam_eps", number<double>([](RunConfig& c) -> double& { return c.opt.adam_eps; })},
      {"opt.grad_clip_norm",
       [](RunConfig& c, const std::string& key, std::string_view v) {
         if (v == "none") {
           c.opt.grad_clip_norm.reset();
         } else {
           c.opt.grad_clip_norm = parse_number<double>(key, v);
         }
       }},
      {"opt.curve_checkpoints",
       number<int>([](RunConfig& c) -> int& { return c.opt.curve_checkpoints; })},
      {"sim.grid_res",
       [](RunConfig& c, const std::string& key, std::string_view v) {
         c.sim.grid_res = parse_number<int>(key, v);
       }},
      {"sim.dt",
       [](RunConfig& c, const std::string& key, std::string_view v) {
         c.sim.dt = parse_number<double>(key, v);
       }},
      {"sim.n_steps",
       [](RunConfig& c, const std::string& key, std::string_view v) {
         c.sim.n_steps = parse_number<int>(key, v);
       }},
      {"sim.substeps_per_frame",
       [](RunConfig& c, const std::string& key, std::string_view v) {
         c.sim.substeps_per_frame = parse_number<int>(key, v);
       }},
      {"sim.boundary",
       [](RunConfig& c, const std::string& key, std::string_view v) {
         const auto name = unquote(v);
         if (name == "slip_box") {
           c.sim.boundary = mpm::Boundary::SlipBox;
         } else if (name == "sticky") {
           c.sim.boundary = mpm::Boundary::Sticky;
         } else {
           throw ConfigError(ConfigErrorKind::InvalidValue, key + " must be slip_box or sticky");
         }
       }},
      {"sim.seed",
       [](RunConfig& c, const std::string& key, std::string_view v) {
         c.sim.seed = parse_number<std::uint64_t>(key, v);
       }},
  };
  return table;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return (base / p).lexically_normal();
}

}  // namespace

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig c;
  std::map<std::string, int, std::less<>> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(ConfigErrorKind::Syntax, "line " + std::to_string(line_no) + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const auto value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end())
      throw ConfigError(ConfigErrorKind::UnknownKey, "line " + std::to_string(line_no) + ": '" + key + "'");
    if (seen.count(key))
      throw ConfigError(ConfigErrorKind::InvalidValue, "line " + std::to_string(line_no) + ": '" + key + "' given twice");
    seen[key] = line_no;
    if (value.empty())
      throw ConfigError(ConfigErrorKind::TypeErrorInConfig, "line " + std::to_string(line_no) + ": '" + key + "' has no value");
    it->second(c, key, value);
  }

  for (const char* key : {"task", "backend"})
    if (!seen.count(key)) throw ConfigError(ConfigErrorKind::MissingKey, key);
  if (c.backend == BackendKind::Scripted) {
    if (!seen.count("script")) throw ConfigError(ConfigErrorKind::MissingKey, "script (required by backend = scripted)");
    c.script = resolve(base_dir, c.script);
    if (!std::filesystem::exists(c.script))
      throw ConfigError(ConfigErrorKind::MissingPath, "script " + c.script.string() + " does not exist");
  } else {
    for (const char* key : {"endpoint", "model"})
      if (!seen.count(key))
        throw ConfigError(ConfigErrorKind::MissingKey, std::string(key) + " (required by backend = http)");
    const char* api_key = std::getenv("SGA_API_KEY");
    if (api_key == nullptr || *api_key == '\0')
      throw ConfigError(ConfigErrorKind::MissingApiKey, "backend = http needs SGA_API_KEY in the environment");
    c.api_key = api_key;
  }
  c.output_dir = resolve(base_dir, c.output_dir);

  try {
    search::check_search_config(c.search);
    opt::check_opt_config(c.opt);
    const auto task = configure_task(c);
    mpm::check_config(task.sim);
    (void)mpm::init_scene(task.sim, task.scene.geometry);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(ConfigErrorKind::InvalidValue, e.what());
  }
  return c;
}

tasks::TaskSpec configure_task(const RunConfig& config) {
  auto task = tasks::make_task(config.task);
  const double density = task.sim.particle_mass / task.sim.particle_volume;
  config.sim.apply(task.sim);
  const double h = mpm::lattice_spacing(task.sim, task.scene.geometry);
  task.sim.particle_volume = std::pow(h, task.sim.dim);
  task.sim.particle_mass = density * task.sim.particle_volume;
  return task;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(ConfigErrorKind::MissingPath, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::filesystem::absolute(path).parent_path());
}

std::string print_config(const RunConfig& c) {
  const auto num = [](double v) { return dsl::format_number(v); };
  std::ostringstream out;
  out << "task = " << tasks::task_letter(c.task) << "\n";
  if (c.backend == BackendKind::Scripted) {
    out << "backend = scripted\n";
    out << "script = \"" << c.script.string() << "\"\n";
  } else {
    out << "backend = http\n";
    out << "endpoint = \"" << c.endpoint << "\"\n";
    out << "model = \"" << c.model << "\"\n";
  }
  out << "output_dir = \"" << c.output_dir.string() << "\"\n";
  const auto& s = c.search;
  out << "n_iterations = " << s.n_iterations << "\n"
      << "history_k = " << s.history_k << "\n"
      << "n_exploit = " << s.n_exploit << "\n"
      << "n_explore = " << s.n_explore << "\n"
      << "temp_exploit = " << num(s.temp_exploit) << "\n"
      << "temp_explore = " << num(s.temp_explore) << "\n"
      << "heap_capacity = " << s.heap_capacity << "\n"
      << "root_seed = " << s.root_seed << "\n"
      << "workers = " << s.workers << "\n";
  const auto& o = c.opt;
  out << "opt.n_steps = " << o.n_steps << "\n"
      << "opt.learning_rate = " << num(o.learning_rate) << "\n"
      << "opt.adam_beta1 = " << num(o.adam_beta1) << "\n"
      << "opt.adam_beta2 = " << num(o.adam_beta2) << "\n"
      << "opt.adam_eps = " << num(o.adam_eps) << "\n"
      << "opt.grad_clip_norm = " << (o.grad_clip_norm ? num(*o.grad_clip_norm) : "none") << "\n"
      << "opt.curve_checkpoints = " << o.curve_checkpoints << "\n";
  const auto& m = c.sim;
  if (m.grid_res) out << "sim.grid_res = " << *m.grid_res << "\n";
  if (m.dt) out << "sim.dt = " << num(*m.dt) << "\n";
  if (m.n_steps) out << "sim.n_steps = " << *m.n_steps << "\n";
  if (m.substeps_per_frame) out << "sim.substeps_per_frame = " << *m.substeps_per_frame << "\n";
  if (m.boundary) out << "sim.boundary = " << mpm::to_string(*m.boundary) << "\n";
  if (m.seed) out << "sim.seed = " << *m.seed << "\n";
  return out.str();
}

}  // namespace sga::io
