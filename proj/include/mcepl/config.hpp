#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mcepl/error.hpp"
#include "mcepl/trainer.hpp"

namespace mcepl {

enum class ExperimentKind { train, dslth, bound_check, sweep };

inline std::string_view experiment_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::train: return "train";
    case ExperimentKind::dslth: return "dslth";
    case ExperimentKind::bound_check: return "bound_check";
    case ExperimentKind::sweep: return "sweep";
  }
  return "?";
}

/// A topology choice: ring, or Erdos-Renyi with edge probability p.
struct TopologySpec {
  bool ring = false;
  double p = 0.5;

  std::string label() const;
  friend bool operator==(const TopologySpec&, const TopologySpec&) = default;
};

/// Fully resolved experiment description. Every field has a default; the
/// text form written by to_config_text() parses back to an equal value.
struct RunConfig {
  ExperimentKind experiment = ExperimentKind::train;

  // data
  std::string dataset = "synthetic";  // synthetic | cifar10
  std::string cifar_path;
  std::size_t classes = 10;
  std::size_t channels = 3;
  std::size_t image_size = 16;
  std::size_t per_class = 100;
  double noise = 0.3;

  // agents and topology
  std::size_t n = 20;
  TopologySpec topology{};
  std::size_t max_retries = 100;
  std::vector<TopologySpec> sweep_topologies{{true, 0.0}, {false, 0.3}, {false, 0.5}, {false, 0.7}};
  std::size_t c = 4;
  std::vector<double> retention;  // explicit, one per agent
  std::vector<double> retention_choices{0.1, 0.2, 0.3, 0.4};

  // model
  std::size_t conv1 = 16;
  std::size_t conv2 = 32;
  std::size_t hidden = 128;

  // optimisation
  std::vector<Algorithm> algorithms{Algorithm::mcepl};
  double lr_mask = 1.0;
  double lr_weight = 0.001;
  double lambda = 0.001;
  std::size_t batch_size = 128;
  std::size_t rounds = 100;
  std::size_t eval_interval = 10;
  std::size_t min_nonzero = 2;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  // dslth
  std::vector<double> dslth_ratios{0.1, 0.3, 0.5};
  std::size_t dslth_steps = 600;
  std::size_t dslth_eval_interval = 3;

  // bound_check
  std::size_t bound_instances = 100;
  std::size_t bound_probes = 200;
  double bound_retention = 0.5;

  std::string out = "out";

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline std::string TopologySpec::label() const { return ring ? "ring" : "p" + detail::format_double(p); }

namespace detail {

struct LineError {
  std::size_t line;
  std::string key;

  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError("line " + std::to_string(line) + ": key '" + key + "': " + why);
  }
};

template <class T>
T parse_integer(const std::string& text, const LineError& where) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    where.fail("expected a nonnegative integer, got '" + text + "'");
  }
  return v;
}

inline double parse_real(const std::string& text, const LineError& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    where.fail("expected a real number, got '" + text + "'");
  }
  return v;
}

inline std::vector<double> parse_reals(const std::string& text, const LineError& where) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(parse_real(item, where));
  return out;
}

inline TopologySpec parse_topology_item(const std::string& text, const LineError& where) {
  if (text == "ring") return {true, 0.0};
  const std::string body = text.rfind("er:", 0) == 0 ? text.substr(3) : text;
  const double p = parse_real(body, where);
  if (!(p > 0.0 && p <= 1.0)) where.fail("edge probability must lie in (0, 1]");
  return {false, p};
}

}  // namespace detail

/// Parses the flat `key = value` format. `#` starts a comment; lists are
/// comma-separated. Unknown keys, repeated keys, malformed values and
/// violated invariants raise a ConfigError naming the line and key.
inline RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::size_t retention_line = 0;
  std::optional<std::string> topology_kind;
  std::size_t topology_line = 0;

  using detail::LineError;
  using Setter = std::function<void(const std::string&, const LineError&)>;
  auto uint_field = [](std::size_t& dst) -> Setter {
    return [&dst](const std::string& v, const LineError& w) { dst = detail::parse_integer<std::size_t>(v, w); };
  };
  auto real_field = [](double& dst) -> Setter {
    return [&dst](const std::string& v, const LineError& w) { dst = detail::parse_real(v, w); };
  };
  auto reals_field = [](std::vector<double>& dst) -> Setter {
    return [&dst](const std::string& v, const LineError& w) { dst = detail::parse_reals(v, w); };
  };

  const std::map<std::string, Setter> fields{
      {"experiment",
       [&](const std::string& v, const LineError& w) {
         if (v == "train") cfg.experiment = ExperimentKind::train;
         else if (v == "dslth") cfg.experiment = ExperimentKind::dslth;
         else if (v == "bound_check") cfg.experiment = ExperimentKind::bound_check;
         else if (v == "sweep") cfg.experiment = ExperimentKind::sweep;
         else w.fail("expected train, dslth, bound_check or sweep");
       }},
      {"dataset",
       [&](const std::string& v, const LineError& w) {
         if (v != "synthetic" && v != "cifar10") w.fail("expected synthetic or cifar10");
         cfg.dataset = v;
       }},
      {"cifar_path", [&](const std::string& v, const LineError&) { cfg.cifar_path = v; }},
      {"classes", uint_field(cfg.classes)},
      {"channels", uint_field(cfg.channels)},
      {"image_size", uint_field(cfg.image_size)},
      {"per_class", uint_field(cfg.per_class)},
      {"noise", real_field(cfg.noise)},
      {"n", uint_field(cfg.n)},
      {"topology",
       [&](const std::string& v, const LineError& w) {
         if (v != "er" && v != "ring") w.fail("expected er or ring");
         topology_kind = v;
         topology_line = w.line;
       }},
      {"p", real_field(cfg.topology.p)},
      {"max_retries", uint_field(cfg.max_retries)},
      {"sweep_topologies",
       [&](const std::string& v, const LineError& w) {
         cfg.sweep_topologies.clear();
         for (const auto& item : detail::split_list(v)) cfg.sweep_topologies.push_back(detail::parse_topology_item(item, w));
       }},
      {"c", uint_field(cfg.c)},
      {"retention",
       [&](const std::string& v, const LineError& w) {
         cfg.retention = detail::parse_reals(v, w);
         retention_line = w.line;
       }},
      {"retention_choices", reals_field(cfg.retention_choices)},
      {"conv1", uint_field(cfg.conv1)},
      {"conv2", uint_field(cfg.conv2)},
      {"hidden", uint_field(cfg.hidden)},
      {"algorithm",
       [&](const std::string& v, const LineError& w) {
         cfg.algorithms.clear();
         for (const auto& item : detail::split_list(v)) {
           try {
             cfg.algorithms.push_back(parse_algorithm(item));
           } catch (const ArgumentError& e) {
             w.fail(e.what());
           }
         }
       }},
      {"lr_mask", real_field(cfg.lr_mask)},
      {"lr_weight", real_field(cfg.lr_weight)},
      {"lambda", real_field(cfg.lambda)},
      {"batch_size", uint_field(cfg.batch_size)},
      {"rounds", uint_field(cfg.rounds)},
      {"eval_interval", uint_field(cfg.eval_interval)},
      {"min_nonzero", uint_field(cfg.min_nonzero)},
      {"seed", [&](const std::string& v, const LineError& w) { cfg.seed = detail::parse_integer<std::uint64_t>(v, w); }},
      {"workers", uint_field(cfg.workers)},
      {"dslth_ratios", reals_field(cfg.dslth_ratios)},
      {"dslth_steps", uint_field(cfg.dslth_steps)},
      {"dslth_eval_interval", uint_field(cfg.dslth_eval_interval)},
      {"bound_instances", uint_field(cfg.bound_instances)},
      {"bound_probes", uint_field(cfg.bound_probes)},
      {"bound_retention", real_field(cfg.bound_retention)},
      {"out", [&](const std::string& v, const LineError&) { cfg.out = v; }},
  };

  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const LineError where{lineno, key};
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (auto prev = seen.find(key); prev != seen.end()) {
      where.fail("already set on line " + std::to_string(prev->second));
    }
    seen.emplace(key, lineno);
    it->second(value, where);
  }
  if (topology_kind) cfg.topology.ring = *topology_kind == "ring";

  // Invariants.
  auto fail_at = [&](const std::string& key, const std::string& why) -> void {
    auto it = seen.find(key);
    const std::string where = it != seen.end() ? "line " + std::to_string(it->second) + ": " : "";
    throw ConfigError(where + "key '" + key + "': " + why);
  };
  if (cfg.n < 1) fail_at("n", "at least one agent is required");
  if (!cfg.topology.ring && !(cfg.topology.p > 0.0 && cfg.topology.p <= 1.0)) fail_at("p", "must lie in (0, 1]");
  if (cfg.topology.ring && cfg.n < 3 && cfg.experiment != ExperimentKind::dslth) {
    fail_at("topology", "ring needs at least 3 agents");
  }
  if (!cfg.retention.empty() && cfg.retention.size() != cfg.n) {
    fail_at("retention", "has " + std::to_string(cfg.retention.size()) + " entries but n = " + std::to_string(cfg.n));
  }
  for (double r : cfg.retention) {
    if (!(r > 0.0 && r <= 1.0)) fail_at("retention", "ratios must lie in (0, 1]");
  }
  if (cfg.retention.empty() && cfg.retention_choices.empty()) fail_at("retention_choices", "must not be empty");
  for (double r : cfg.retention_choices) {
    if (!(r > 0.0 && r <= 1.0)) fail_at("retention_choices", "ratios must lie in (0, 1]");
  }
  for (double r : cfg.dslth_ratios) {
    if (!(r > 0.0 && r <= 1.0)) fail_at("dslth_ratios", "ratios must lie in (0, 1]");
  }
  if (!(cfg.bound_retention > 0.0 && cfg.bound_retention <= 1.0)) fail_at("bound_retention", "must lie in (0, 1]");
  if (cfg.algorithms.empty()) fail_at("algorithm", "at least one algorithm is required");
  if (cfg.classes < 2) fail_at("classes", "at least 2 classes are required");
  if (cfg.c < 1 || cfg.c > cfg.classes) fail_at("c", "must lie in [1, classes]");
  if (cfg.n * cfg.c < cfg.classes) fail_at("c", "n * c must cover every class");
  if (!(cfg.lr_mask > 0.0)) fail_at("lr_mask", "must be positive");
  if (!(cfg.lr_weight > 0.0)) fail_at("lr_weight", "must be positive");
  if (cfg.lambda < 0.0) fail_at("lambda", "must be nonnegative");
  if (cfg.noise < 0.0) fail_at("noise", "must be nonnegative");
  if (cfg.per_class < 2) fail_at("per_class", "must be at least 2");
  if (cfg.batch_size < 1) fail_at("batch_size", "must be at least 1");
  if (cfg.eval_interval < 1) fail_at("eval_interval", "must be at least 1");
  if (cfg.dslth_eval_interval < 1) fail_at("dslth_eval_interval", "must be at least 1");
  if (cfg.bound_probes < 1) fail_at("bound_probes", "must be at least 1");
  if (cfg.workers < 1) fail_at("workers", "must be at least 1");
  if (cfg.sweep_topologies.empty() && cfg.experiment == ExperimentKind::sweep) {
    fail_at("sweep_topologies", "must not be empty");
  }
  if (cfg.dataset == "cifar10") {
    if (cfg.cifar_path.empty()) fail_at("cifar_path", "required when dataset = cifar10");
    if (!std::filesystem::is_directory(cfg.cifar_path)) fail_at("cifar_path", "directory does not exist");
    if (cfg.classes != 10) fail_at("classes", "CIFAR-10 has 10 classes");
  }
  return cfg;
}

/// Canonical text form; parse_config(to_config_text(c)) == c.
inline std::string to_config_text(const RunConfig& c) {
  using detail::format_double;
  auto reals = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
    return s;
  };
  std::ostringstream os;
  os << "experiment = " << experiment_name(c.experiment) << '\n';
  os << "dataset = " << c.dataset << '\n';
  if (!c.cifar_path.empty()) os << "cifar_path = " << c.cifar_path << '\n';
  os << "classes = " << c.classes << '\n';
  os << "channels = " << c.channels << '\n';
  os << "image_size = " << c.image_size << '\n';
  os << "per_class = " << c.per_class << '\n';
  os << "noise = " << format_double(c.noise) << '\n';
  os << "n = " << c.n << '\n';
  os << "topology = " << (c.topology.ring ? "ring" : "er") << '\n';
  os << "p = " << format_double(c.topology.p) << '\n';
  os << "max_retries = " << c.max_retries << '\n';
  os << "sweep_topologies = ";
  for (std::size_t i = 0; i < c.sweep_topologies.size(); ++i) {
    const auto& t = c.sweep_topologies[i];
    os << (i ? "," : "") << (t.ring ? "ring" : format_double(t.p));
  }
  os << '\n';
  os << "c = " << c.c << '\n';
  if (!c.retention.empty()) os << "retention = " << reals(c.retention) << '\n';
  os << "retention_choices = " << reals(c.retention_choices) << '\n';
  os << "conv1 = " << c.conv1 << '\n';
  os << "conv2 = " << c.conv2 << '\n';
  os << "hidden = " << c.hidden << '\n';
  os << "algorithm = ";
  for (std::size_t i = 0; i < c.algorithms.size(); ++i) os << (i ? "," : "") << algorithm_name(c.algorithms[i]);
  os << '\n';
  os << "lr_mask = " << format_double(c.lr_mask) << '\n';
  os << "lr_weight = " << format_double(c.lr_weight) << '\n';
  os << "lambda = " << format_double(c.lambda) << '\n';
  os << "batch_size = " << c.batch_size << '\n';
  os << "rounds = " << c.rounds << '\n';
  os << "eval_interval = " << c.eval_interval << '\n';
  os << "min_nonzero = " << c.min_nonzero << '\n';
  os << "seed = " << c.seed << '\n';
  os << "workers = " << c.workers << '\n';
  os << "dslth_ratios = " << reals(c.dslth_ratios) << '\n';
  os << "dslth_steps = " << c.dslth_steps << '\n';
  os << "dslth_eval_interval = " << c.dslth_eval_interval << '\n';
  os << "bound_instances = " << c.bound_instances << '\n';
  os << "bound_probes = " << c.bound_probes << '\n';
  os << "bound_retention = " << format_double(c.bound_retention) << '\n';
  os << "out = " << c.out << '\n';
  return os.str();
}

}  // namespace mcepl
