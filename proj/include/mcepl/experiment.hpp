#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mcepl/config.hpp"
#include "mcepl/data.hpp"
#include "mcepl/nn.hpp"
#include "mcepl/topology.hpp"
#include "mcepl/trainer.hpp"

namespace mcepl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

inline ModelArch build_arch(const RunConfig& c) {
  if (c.dataset == "cifar10") return desk_arch({3, 32, 32}, 10, c.hidden, c.conv1, c.conv2);
  return desk_arch({c.channels, c.image_size, c.image_size}, c.classes, c.hidden, c.conv1, c.conv2);
}

inline SplitDataset build_dataset(const RunConfig& c) {
  if (c.dataset == "cifar10") return load_cifar10(c.cifar_path);
  return synth_generate(c.classes, {c.channels, c.image_size, c.image_size}, c.per_class, c.noise, c.seed);
}

/// Explicit list when given, else one draw per agent from retention_choices.
inline std::vector<double> resolve_retention(const RunConfig& c) {
  if (!c.retention.empty()) return c.retention;
  auto eng = make_engine(c.seed, "retention", c.n);
  std::vector<double> out(c.n);
  for (auto& r : out) r = c.retention_choices[uniform_index(eng, c.retention_choices.size())];
  return out;
}

inline Graph build_graph(const RunConfig& c, const TopologySpec& t) {
  return t.ring ? ring(c.n) : erdos_renyi(c.n, t.p, c.seed, c.max_retries);
}

inline HyperConfig hyper_for(const RunConfig& c, Algorithm a, const std::vector<double>& retention) {
  HyperConfig h;
  h.algorithm = a;
  h.lr_mask = c.lr_mask;
  h.lr_weight = c.lr_weight;
  h.lambda = c.lambda;
  h.batch_size = c.batch_size;
  h.rounds = c.rounds;
  h.eval_interval = c.eval_interval;
  h.seed = c.seed;
  h.retention = retention;
  h.min_nonzero = c.min_nonzero;
  h.workers = c.workers;
  return h;
}

namespace detail {

inline std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw InputError("cannot write " + p.string());
  os << text;
}

}  // namespace detail

/// Rows sorted by (round, agent); the mean row uses agent -1 and network-wide bit totals.
inline std::string metrics_csv(const MetricsLog& log) {
  std::ostringstream os;
  os << "round,agent,accuracy,loss,payload_bits,header_bits\n";
  for (const auto& e : log.evals) {
    os << e.round << ",-1," << detail::fmt_real(e.mean_accuracy) << ',' << detail::fmt_real(e.mean_loss) << ','
       << e.total_payload_bits << ',' << e.total_header_bits << '\n';
    for (std::size_t i = 0; i < e.accuracy.size(); ++i) {
      os << e.round << ',' << i << ',' << detail::fmt_real(e.accuracy[i]) << ',' << detail::fmt_real(e.loss[i]) << ','
         << e.payload_bits[i] << ',' << e.header_bits[i] << '\n';
    }
  }
  return os.str();
}

inline std::string sparsity_csv(const MetricsLog& log) {
  std::ostringstream os;
  os << "agent,layer,entries,ones,density\n";
  for (const auto& s : log.sparsity) {
    os << s.agent << ',' << s.layer << ',' << s.entries << ',' << s.ones << ','
       << detail::fmt_real(static_cast<double>(s.ones) / static_cast<double>(s.entries)) << '\n';
  }
  return os.str();
}

inline std::string dslth_csv(const std::vector<DslthAgentResult>& res) {
  std::ostringstream os;
  os << "agent,arm,retention,step,accuracy,loss\n";
  auto arm = [&](std::size_t agent, const DslthArm& a) {
    for (const auto& p : a.trace) {
      os << agent << ',' << a.name << ',' << detail::fmt_real(a.retention) << ',' << p.step << ','
         << detail::fmt_real(p.accuracy) << ',' << detail::fmt_real(p.loss) << '\n';
    }
  };
  for (const auto& r : res) {
    arm(r.agent, r.weight);
    for (const auto& m : r.masks) arm(r.agent, m);
  }
  return os.str();
}

/// One random instance for the pairwise bound check: two independently
/// initialised dense networks f1, f2 and two masked subnetworks g1, g2 of a
/// shared random network.
struct BoundInstance {
  NetworkFn f1, f2, g1, g2;
};

inline BoundInstance random_bound_instance(const ModelArch& arch, std::uint64_t seed, std::size_t instance,
                                           double retention) {
  const auto s = derive_seed(seed, "bound", instance);
  const ParamSet f1 = init_uniform(arch, s, "f1");
  const ParamSet f2 = init_uniform(arch, s, "f2");
  const ParamSet w = init_uniform(arch, s, "shared");
  const BitMaskSet m1 = extract_mask(init_uniform(arch, s, "z1"), retention, 0);
  const BitMaskSet m2 = extract_mask(init_uniform(arch, s, "z2"), retention, 0);
  return {masked_network(arch, f1, full_masks(f1)), masked_network(arch, f2, full_masks(f2)),
          masked_network(arch, w, m1), masked_network(arch, w, m2)};
}

/// Uniform [0,1] probe inputs.
inline Tensor random_probes(const ModelArch& arch, std::size_t count, std::uint64_t seed) {
  Shape shape{count};
  for (auto e : arch.input_shape()) shape.push_back(e);
  Tensor t(shape);
  auto eng = make_engine(seed, "probes");
  for (auto& x : t) x = uniform01(eng);
  return t;
}

inline std::string bound_csv(const std::vector<BoundReport>& reports) {
  std::ostringstream os;
  os << "instance,eps1,eps2,alpha_u,alpha_l,sup_g,inf_g,upper_bound,lower_bound,upper_holds,lower_holds\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    os << i << ',' << detail::fmt_real(r.eps1) << ',' << detail::fmt_real(r.eps2) << ','
       << detail::fmt_real(r.alpha_u) << ',' << detail::fmt_real(r.alpha_l) << ',' << detail::fmt_real(r.sup_g)
       << ',' << detail::fmt_real(r.inf_g) << ',' << detail::fmt_real(r.upper_bound) << ','
       << detail::fmt_real(r.lower_bound) << ',' << (r.upper_holds ? 1 : 0) << ',' << (r.lower_holds ? 1 : 0)
       << '\n';
  }
  return os.str();
}

/// Executes one configured experiment and writes its outputs under cfg.out:
/// manifest.txt (resolved config, substream seeds, graph edges), metrics and
/// sparsity CSVs (train/sweep), dslth.csv or bound.csv.
inline void execute(const RunConfig& cfg, std::ostream* progress = nullptr) {
  namespace fs = std::filesystem;
  const fs::path out = cfg.out;
  fs::create_directories(out);
  const ModelArch arch = build_arch(cfg);

  RunConfig resolved = cfg;
  resolved.retention = resolve_retention(cfg);

  std::ostringstream manifest;
  manifest << "# resolved run configuration\n" << to_config_text(resolved);
  manifest << "# substream seeds\n";
  for (const char* stream : {"params", "z", "topology", "partition", "labels", "batches", "synth-prototype"}) {
    manifest << "#   " << stream << " " << derive_seed(cfg.seed, stream) << '\n';
  }
  manifest << "# model parameters " << arch.param_count() << '\n';

  if (cfg.experiment == ExperimentKind::bound_check) {
    std::vector<BoundReport> reports;
    const Tensor probe = random_probes(arch, cfg.bound_probes, cfg.seed);
    for (std::size_t i = 0; i < cfg.bound_instances; ++i) {
      auto inst = random_bound_instance(arch, cfg.seed, i, cfg.bound_retention);
      reports.push_back(bound_check(inst.f1, inst.f2, inst.g1, inst.g2, probe));
    }
    detail::write_file(out / "bound.csv", bound_csv(reports));
    detail::write_file(out / "manifest.txt", manifest.str());
    return;
  }

  const SplitDataset ds = build_dataset(cfg);
  const LabelSets labels = assign_labels(cfg.n, ds.train.classes, cfg.c, cfg.seed);
  const PartitionPlan plan = partition(ds.train, ds.test, labels, cfg.seed);
  manifest << "# label sets\n";
  for (std::size_t a = 0; a < labels.size(); ++a) {
    manifest << "#   agent " << a << ":";
    for (int l : labels[a]) manifest << ' ' << l;
    manifest << '\n';
  }

  if (cfg.experiment == ExperimentKind::dslth) {
    DslthConfig d;
    d.ratios = cfg.dslth_ratios;
    d.steps = cfg.dslth_steps;
    d.eval_interval = cfg.dslth_eval_interval;
    d.batch_size = cfg.batch_size;
    d.lr_weight = cfg.lr_weight;
    d.lr_mask = cfg.lr_mask;
    d.lambda = cfg.lambda;
    d.min_nonzero = cfg.min_nonzero;
    d.seed = cfg.seed;
    d.workers = cfg.workers;
    const auto res = dslth_verify(arch, local_data(ds.train, ds.test, plan), d);
    detail::write_file(out / "dslth.csv", dslth_csv(res));
    detail::write_file(out / "manifest.txt", manifest.str());
    return;
  }

  std::vector<TopologySpec> topologies{cfg.topology};
  if (cfg.experiment == ExperimentKind::sweep) topologies = cfg.sweep_topologies;
  const bool many_topologies = cfg.experiment == ExperimentKind::sweep;
  const bool many_algorithms = cfg.algorithms.size() > 1;

  for (const auto& topo : topologies) {
    const Graph g = build_graph(cfg, topo);
    const std::string tsuffix = many_topologies ? "_" + topo.label() : "";
    std::ostringstream edges;
    write_edge_list(edges, g);
    detail::write_file(out / ("graph" + tsuffix + ".txt"), edges.str());
    manifest << "# graph" << (many_topologies ? " " + topo.label() : "") << '\n';
    std::istringstream lines(edges.str());
    for (std::string line; std::getline(lines, line);) {
      if (line.rfind("#", 0) != 0) manifest << "#   edge " << line << '\n';
    }
    for (auto alg : cfg.algorithms) {
      const std::string suffix = tsuffix + (many_algorithms ? "_" + std::string(algorithm_name(alg)) : "");
      if (progress) *progress << "running " << algorithm_name(alg) << (many_topologies ? " on " + topo.label() : "") << '\n';
      const MetricsLog log = run(arch, hyper_for(cfg, alg, resolved.retention), g, local_data(ds.train, ds.test, plan),
                                 [&](const EvalPoint& e) {
                                   if (progress) {
                                     *progress << "  round " << e.round << " mean accuracy "
                                               << detail::fmt_real(e.mean_accuracy) << '\n';
                                   }
                                 });
      detail::write_file(out / ("metrics" + suffix + ".csv"), metrics_csv(log));
      detail::write_file(out / ("sparsity" + suffix + ".csv"), sparsity_csv(log));
    }
  }
  detail::write_file(out / "manifest.txt", manifest.str());
}

/// Exit status: 0 success, 1 configuration error, 2 runtime error. Diagnostics go to `err`.
inline int run_experiment(const RunConfig& cfg, std::ostream& err = std::cerr, std::ostream* progress = nullptr) {
  try {
    execute(cfg, progress);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace mcepl
