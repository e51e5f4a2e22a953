#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mcepl/bitmask.hpp"
#include "mcepl/data.hpp"
#include "mcepl/error.hpp"
#include "mcepl/masking.hpp"
#include "mcepl/nn.hpp"
#include "mcepl/parallel.hpp"
#include "mcepl/protocol.hpp"
#include "mcepl/rng.hpp"
#include "mcepl/tensor.hpp"
#include "mcepl/topology.hpp"

namespace mcepl {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Algorithm { mcepl, ind_mask, dsgd, ind_weipru, avr_weipru, par_weipru };

inline std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::mcepl: return "mcepl";
    case Algorithm::ind_mask: return "ind_mask";
    case Algorithm::dsgd: return "dsgd";
    case Algorithm::ind_weipru: return "ind_weipru";
    case Algorithm::avr_weipru: return "avr_weipru";
    case Algorithm::par_weipru: return "par_weipru";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  for (auto a : {Algorithm::mcepl, Algorithm::ind_mask, Algorithm::dsgd, Algorithm::ind_weipru,
                 Algorithm::avr_weipru, Algorithm::par_weipru}) {
    if (algorithm_name(a) == s) return a;
  }
  throw ArgumentError("unknown algorithm '" + std::string(s) + "'");
}

/// Mask-based algorithms train z against the frozen shared w; the others
/// train a private copy of w.
inline bool is_mask_algorithm(Algorithm a) { return a == Algorithm::mcepl || a == Algorithm::ind_mask; }

inline bool communicates(Algorithm a) {
  return a == Algorithm::mcepl || a == Algorithm::dsgd || a == Algorithm::avr_weipru ||
         a == Algorithm::par_weipru;
}

struct HyperConfig {
  Algorithm algorithm = Algorithm::mcepl;
  double lr_mask = 1.0;
  double lr_weight = 0.001;
  double lambda = 0.001;
  std::size_t batch_size = 128;
  std::size_t rounds = 100;
  std::size_t eval_interval = 10;
  std::uint64_t seed = 0;
  std::vector<double> retention;  // one per agent
  std::size_t min_nonzero = 2;
  std::size_t workers = 1;

  double learning_rate() const { return is_mask_algorithm(algorithm) ? lr_mask : lr_weight; }

  void validate(std::size_t agents) const {
    if (!(lr_mask > 0.0) || !(lr_weight > 0.0)) throw ConfigError("learning rates must be positive");
    if (lambda < 0.0) throw ConfigError("lambda must be nonnegative");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (eval_interval < 1) throw ConfigError("eval interval must be at least 1");
    if (retention.size() != agents) {
      throw ConfigError("retention list has " + std::to_string(retention.size()) + " entries for " +
                        std::to_string(agents) + " agents");
    }
    for (double r : retention) {
      if (!(r > 0.0 && r <= 1.0)) throw ConfigError("retention ratios must lie in (0, 1]");
    }
  }
};

/// An agent's local shards, materialized from a PartitionPlan.
struct LocalData {
  Dataset train;
  Dataset test;
};

inline std::vector<LocalData> local_data(const Dataset& train, const Dataset& test, const PartitionPlan& plan) {
  std::vector<LocalData> out;
  out.reserve(plan.train.size());
  auto subset = [](const Dataset& ds, const std::vector<std::size_t>& idx) {
    if (idx.empty()) return Dataset{Tensor(), {}, ds.classes};
    auto b = gather(ds, idx);
    return Dataset{std::move(b.features), std::move(b.labels), ds.classes};
  };
  for (std::size_t a = 0; a < plan.train.size(); ++a) {
    out.push_back({subset(train, plan.train[a]), subset(test, plan.test[a])});
  }
  return out;
}

/// Mini-batch indices for (seed, agent, step): min(batch, n) distinct samples.
inline std::vector<std::size_t> sample_batch(std::size_t n, std::size_t batch, std::uint64_t seed,
                                             std::size_t agent, std::size_t step) {
  if (n == 0) throw ConfigError("agent " + std::to_string(agent) + " has an empty training shard");
  auto eng = make_engine(seed, "batches", agent, step);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  const std::size_t b = std::min(batch, n);
  for (std::size_t k = 0; k < b; ++k) {
    const auto j = k + static_cast<std::size_t>(uniform_index(eng, n - k));
    std::swap(idx[k], idx[j]);
  }
  idx.resize(b);
  return idx;
}

// ---------------------------------------------------------------------------
// Tensor-set helpers
// ---------------------------------------------------------------------------

/// (1/|N|) Σ_j m_j per layer; the zero tensor when no masks are given.
inline ParamSet neighbor_average(const LayerMap<Shape>& shapes, std::span<const BitMaskSet> masks) {
  ParamSet avg;
  for (const auto& [l, s] : shapes) avg.emplace(l, Tensor(s));
  if (masks.empty()) return avg;
  const double inv = 1.0 / static_cast<double>(masks.size());
  for (const auto& m : masks) {
    for (auto& [l, t] : avg) {
      const BitMask& b = m.at(l);
      if (b.shape() != t.shape()) throw SimulationError("neighbor mask shape mismatch at layer " + std::to_string(l));
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (b[i]) t[i] += 1.0;
      }
    }
  }
  for (auto& [l, t] : avg) {
    for (auto& x : t) x *= inv;
  }
  return avg;
}

inline LayerMap<Shape> shapes_of(const ParamSet& p) {
  LayerMap<Shape> out;
  for (const auto& [l, t] : p) out.emplace(l, t.shape());
  return out;
}

/// y_l = z_l + mean(|z_l|) · sign(z_l) ⊙ avg_l, with the mean taken over the
/// z snapshot passed in.
inline ParamSet aggregation_tensor(const ParamSet& z, const ParamSet& avg) {
  ParamSet y;
  for (const auto& [l, zl] : z) {
    const Tensor& a = avg.at(l);
    require_same_shape(zl, a, "aggregation_tensor");
    double mean_abs = 0.0;
    for (double x : zl) mean_abs += std::abs(x);
    mean_abs /= static_cast<double>(zl.size());
    Tensor yl = zl;
    for (std::size_t i = 0; i < yl.size(); ++i) yl[i] += mean_abs * sign(zl[i]) * a[i];
    y.emplace(l, std::move(yl));
  }
  return y;
}

/// Per-layer magnitude pruning of real parameters: keep the top
/// retained_count(n, r) entries by |w|, zero the rest.
inline ParamSet magnitude_prune(const ParamSet& w, double r) {
  ParamSet out;
  for (const auto& [l, t] : w) out.emplace(l, apply_mask(t, threshold_layer(t, r)));
  return out;
}

// ---------------------------------------------------------------------------
// Agent state and the MCE-PL steps
// ---------------------------------------------------------------------------

struct AgentState {
  std::size_t id = 0;
  MaskState mask;                       // z, r_i, Fil threshold
  ParamSet grad;                        // cached G(z^{(k-1)})
  BitMaskSet m;                         // current mask m^{(k)}
  std::vector<BitMaskSet> neighbor_masks;  // latest received, ascending sender id
  ParamSet w_local;                     // weight baselines only
  LocalData data;
  double lr = 1.0;
  double lambda = 0.0;
  double loss_sum = 0.0;   // training loss since the last evaluation
  std::size_t loss_steps = 0;
};

struct HalfStep {
  ParamSet z_half;
  ParamSet grad;
  BitMaskSet m_half;
  double loss = 0.0;
};

/// z-gradient of the local objective: straight-through data term plus the
/// group-lasso gradient, which acts on z directly.
inline ParamSet local_z_gradient(const ParamSet& grad_v, const ParamSet& w, const ParamSet& z, double lambda) {
  ParamSet g = group_lasso_grad(z, lambda);
  for (auto& [l, gl] : g) {
    const Tensor data_term = grad_z(grad_v.at(l), w.at(l), z.at(l));
    for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += data_term[i];
  }
  return g;
}

/// Back-propagation half step: gradient at m^{(k-1)}, z^{(k-1/2)} = z - ηG,
/// then the intermediate mask from y^{(k-1/2)} built with the neighbor masks
/// received in the previous round.
inline HalfStep backprop_half_step(const AgentState& s, const ParamSet& w, const ModelArch& arch, const Batch& batch) {
  if (batch.labels.empty()) throw ConfigError("agent " + std::to_string(s.id) + " has an empty training shard");
  HalfStep out;
  auto lg = loss_and_grad_v(arch, w, s.m, batch.features, batch.labels);
  out.loss = lg.loss;
  out.grad = local_z_gradient(lg.grad_v, w, s.mask.z, s.lambda);
  out.z_half = s.mask.z;
  for (auto& [l, zl] : out.z_half) {
    const Tensor& g = out.grad.at(l);
    for (std::size_t i = 0; i < zl.size(); ++i) zl[i] -= s.lr * g[i];
  }
  const ParamSet avg = neighbor_average(shapes_of(out.z_half), s.neighbor_masks);
  out.m_half = extract_mask(aggregation_tensor(out.z_half, avg), s.mask.retention, s.mask.min_nonzero);
  return out;
}

/// Personalized fine-tuning: z^{(k)} = z^{(k-1/2)} - η G(z^{(k-1)}) ⊙ avg_j m_j^{(k-1/2)}.
/// Reuses the cached gradient; no new forward pass.
inline ParamSet fine_tune_step(const ParamSet& z_half, const ParamSet& cached_grad, const ParamSet& neighbor_avg,
                               double lr) {
  ParamSet z = z_half;
  for (auto& [l, zl] : z) {
    const Tensor& g = cached_grad.at(l);
    const Tensor& a = neighbor_avg.at(l);
    require_same_shape(zl, g, "fine_tune_step");
    require_same_shape(zl, a, "fine_tune_step");
    for (std::size_t i = 0; i < zl.size(); ++i) zl[i] -= lr * g[i] * a[i];
  }
  return z;
}

inline ParamSet fine_tune_step(const AgentState& s, std::span<const BitMaskSet> received) {
  return fine_tune_step(s.mask.z, s.grad, neighbor_average(shapes_of(s.mask.z), received), s.lr);
}

struct Aggregated {
  ParamSet y;
  BitMaskSet m;
};

/// Aggregation: y^{(k)} from the fine-tuned z and the received masks, then
/// m^{(k)} = Fil[Thres(y^{(k)})].
inline Aggregated aggregate_step(const ParamSet& z, const ParamSet& neighbor_avg, double r, std::size_t min_nonzero) {
  Aggregated out;
  out.y = aggregation_tensor(z, neighbor_avg);
  out.m = extract_mask(out.y, r, min_nonzero);
  return out;
}

inline Aggregated aggregate_step(const AgentState& s, std::span<const BitMaskSet> received) {
  return aggregate_step(s.mask.z, neighbor_average(shapes_of(s.mask.z), received), s.mask.retention,
                        s.mask.min_nonzero);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct EvalPoint {
  std::size_t round = 0;
  std::vector<double> accuracy;  // per agent
  std::vector<double> loss;      // per agent, mean training loss since the previous evaluation
  std::vector<std::uint64_t> payload_bits;  // cumulative bits sent, per agent
  std::vector<std::uint64_t> header_bits;
  double mean_accuracy = 0.0;
  double mean_loss = 0.0;
  std::uint64_t total_payload_bits = 0;
  std::uint64_t total_header_bits = 0;
};

struct LayerSparsity {
  std::size_t agent = 0;
  std::size_t layer = 0;
  std::size_t entries = 0;
  std::size_t ones = 0;
};

struct MetricsLog {
  std::vector<EvalPoint> evals;
  std::vector<LayerSparsity> sparsity;  // final, per agent and layer
  CommLedger ledger;

  const EvalPoint& final_eval() const { return evals.back(); }
};

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

/// Owns every agent's state for one algorithm run. The shared w is never
/// written after construction.
class Simulator {
 public:
  Simulator(ModelArch arch, Graph graph, HyperConfig hyper, std::vector<LocalData> data)
      : arch_(std::move(arch)), graph_(std::move(graph)), hyper_(std::move(hyper)), ledger_(graph_.size()) {
    const std::size_t n = graph_.size();
    if (data.size() != n) throw ConfigError("local data count does not match agent count");
    hyper_.validate(n);
    w_ = init_params(arch_, hyper_.seed);
    states_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = states_[i];
      s.id = i;
      s.data = std::move(data[i]);
      s.lr = hyper_.learning_rate();
      s.lambda = hyper_.lambda;
      s.mask.retention = hyper_.retention[i];
      s.mask.min_nonzero = hyper_.min_nonzero;
      if (s.data.train.size() == 0) throw ConfigError("agent " + std::to_string(i) + " has an empty training shard");
      if (is_mask_algorithm(hyper_.algorithm)) {
        s.mask.z = init_uniform(arch_, derive_seed(hyper_.seed, "z", i), "z");
        s.m = extract_mask(s.mask);
      } else {
        s.w_local = hyper_.algorithm == Algorithm::dsgd ? w_ : magnitude_prune(w_, s.mask.retention);
      }
    }
    if (hyper_.algorithm == Algorithm::mcepl) bootstrap();
  }

  const ModelArch& arch() const noexcept { return arch_; }
  const Graph& graph() const noexcept { return graph_; }
  const HyperConfig& hyper() const noexcept { return hyper_; }
  const ParamSet& shared_params() const noexcept { return w_; }
  const std::vector<AgentState>& states() const noexcept { return states_; }
  std::vector<AgentState>& states() noexcept { return states_; }
  const CommLedger& ledger() const noexcept { return ledger_; }
  std::size_t rounds_done() const noexcept { return round_; }

  /// Effective parameters agent i is evaluated with.
  ParamSet effective_params(std::size_t i) const {
    const auto& s = states_.at(i);
    switch (hyper_.algorithm) {
      case Algorithm::mcepl:
      case Algorithm::ind_mask: return masked_params(w_, s.m);
      case Algorithm::dsgd: return s.w_local;
      default: return magnitude_prune(s.w_local, s.mask.retention);
    }
  }

  /// One synchronous iteration of the configured algorithm.
  void step() {
    const auto k = static_cast<std::uint32_t>(++round_);
    switch (hyper_.algorithm) {
      case Algorithm::mcepl: mcepl_round(k); break;
      case Algorithm::ind_mask: ind_mask_round(k); break;
      default: weight_round(k); break;
    }
  }

  EvalPoint evaluate() {
    const std::size_t n = states_.size();
    EvalPoint p;
    p.round = round_;
    p.accuracy.resize(n);
    p.loss.resize(n);
    p.payload_bits.resize(n);
    p.header_bits.resize(n);
    parallel_for(n, hyper_.workers, [&](std::size_t i) {
      auto& s = states_[i];
      const ParamSet v = effective_params(i);
      p.accuracy[i] = s.data.test.size() ? mcepl::evaluate(arch_, v, s.data.test.features, s.data.test.labels).accuracy : 0.0;
      if (s.loss_steps > 0) {
        p.loss[i] = s.loss_sum / static_cast<double>(s.loss_steps);
      } else {
        p.loss[i] = mcepl::evaluate(arch_, v, s.data.train.features, s.data.train.labels).loss;
      }
      s.loss_sum = 0.0;
      s.loss_steps = 0;
    });
    const auto r = static_cast<std::uint32_t>(round_);
    for (std::size_t i = 0; i < n; ++i) {
      const Traffic t = ledger_.cumulative(i, r);
      p.payload_bits[i] = t.payload_sent;
      p.header_bits[i] = t.header_sent;
      p.mean_accuracy += p.accuracy[i];
      p.mean_loss += p.loss[i];
      p.total_payload_bits += t.payload_sent;
      p.total_header_bits += t.header_sent;
    }
    p.mean_accuracy /= static_cast<double>(n);
    p.mean_loss /= static_cast<double>(n);
    return p;
  }

  std::vector<LayerSparsity> sparsity() const {
    std::vector<LayerSparsity> out;
    for (std::size_t i = 0; i < states_.size(); ++i) {
      const ParamSet v = effective_params(i);
      for (const auto& [l, t] : v) {
        const auto ones = static_cast<std::size_t>(std::count_if(t.begin(), t.end(), [](double x) { return x != 0.0; }));
        if (is_mask_algorithm(hyper_.algorithm)) {
          out.push_back({i, l, t.size(), states_[i].m.at(l).count()});
        } else {
          out.push_back({i, l, t.size(), ones});
        }
      }
    }
    return out;
  }

 private:
  Batch next_batch(const AgentState& s, std::size_t k) const {
    const auto idx = sample_batch(s.data.train.size(), hyper_.batch_size, hyper_.seed, s.id, k);
    return gather(s.data.train, idx);
  }

  // Round-0 exchange of every agent's initial mask, so that round 1 has
  // neighbor masks for the half-step aggregation tensor.
  void bootstrap() {
    Outbox out;
    for (const auto& s : states_) out.emplace(s.id, encode_mask(s.m, static_cast<std::uint32_t>(s.id), 0));
    deliver(exchange(graph_, out, ledger_, 0), [](AgentState& s, std::vector<BitMaskSet> masks) {
      s.neighbor_masks = std::move(masks);
    });
  }

  template <class Fn>
  void deliver(const Inbox& inbox, Fn&& apply) {
    const auto shapes = arch_.param_shapes();
    parallel_for(states_.size(), hyper_.workers, [&](std::size_t i) {
      const auto& frames = inbox[i];
      if (frames.size() != graph_.degree(i)) throw SimulationError("agent " + std::to_string(i) + ": missing neighbor frame");
      std::vector<BitMaskSet> masks;
      masks.reserve(frames.size());
      for (const auto& f : frames) masks.push_back(decode_mask(f, shapes));
      apply(states_[i], std::move(masks));
    });
  }

  void mcepl_round(std::uint32_t k) {
    const std::size_t n = states_.size();
    std::vector<BitMaskSet> half(n);
    parallel_for(n, hyper_.workers, [&](std::size_t i) {
      auto& s = states_[i];
      auto hs = backprop_half_step(s, w_, arch_, next_batch(s, k));
      s.mask.z = std::move(hs.z_half);
      s.grad = std::move(hs.grad);
      s.loss_sum += hs.loss;
      ++s.loss_steps;
      half[i] = std::move(hs.m_half);
    });
    Outbox out;
    for (std::size_t i = 0; i < n; ++i) out.emplace(i, encode_mask(half[i], static_cast<std::uint32_t>(i), k));
    half.clear();
    deliver(exchange(graph_, out, ledger_, k), [](AgentState& s, std::vector<BitMaskSet> received) {
      s.mask.z = fine_tune_step(s, received);
      s.m = aggregate_step(s, received).m;
      s.neighbor_masks = std::move(received);
    });
  }

  void ind_mask_round(std::uint32_t k) {
    parallel_for(states_.size(), hyper_.workers, [&](std::size_t i) {
      auto& s = states_[i];
      const Batch b = next_batch(s, k);
      auto lg = loss_and_grad_v(arch_, w_, s.m, b.features, b.labels);
      const ParamSet g = local_z_gradient(lg.grad_v, w_, s.mask.z, s.lambda);
      for (auto& [l, zl] : s.mask.z) {
        const Tensor& gl = g.at(l);
        for (std::size_t j = 0; j < zl.size(); ++j) zl[j] -= s.lr * gl[j];
      }
      s.m = extract_mask(s.mask);
      s.loss_sum += lg.loss;
      ++s.loss_steps;
    });
  }

  void weight_round(std::uint32_t k) {
    const Algorithm alg = hyper_.algorithm;
    const bool prune = alg != Algorithm::dsgd;
    parallel_for(states_.size(), hyper_.workers, [&](std::size_t i) {
      auto& s = states_[i];
      const Batch b = next_batch(s, k);
      const ParamSet v = prune ? magnitude_prune(s.w_local, s.mask.retention) : s.w_local;
      auto lg = loss_and_grad_effective(arch_, v, b.features, b.labels);
      for (auto& [l, wl] : s.w_local) {
        const Tensor& gl = lg.grad_v.at(l);
        for (std::size_t j = 0; j < wl.size(); ++j) wl[j] -= s.lr * gl[j];
      }
      if (prune) s.w_local = magnitude_prune(s.w_local, s.mask.retention);
      s.loss_sum += lg.loss;
      ++s.loss_steps;
    });
    if (!communicates(alg)) return;

    // Every agent transmits its (pruned) real-valued parameters to each neighbor.
    const std::size_t n = states_.size();
    std::vector<ParamSet> sent(n);
    for (std::size_t i = 0; i < n; ++i) {
      sent[i] = states_[i].w_local;
      ledger_.record_broadcast(graph_, k, i, account_real_bits(sent[i]),
                               8ull * frame_overhead_bytes(sent[i].size()));
    }
    parallel_for(n, hyper_.workers, [&](std::size_t i) {
      auto& s = states_[i];
      const auto& nb = graph_.neighbors(i);
      for (auto& [l, wl] : s.w_local) {
        const Tensor& own = sent[i].at(l);
        for (std::size_t j = 0; j < wl.size(); ++j) {
          if (alg == Algorithm::par_weipru) {
            // Partial averaging: only coordinates the local mask keeps, over
            // the models (self included) that also keep them.
            if (own[j] == 0.0) continue;
            double sum = own[j];
            double holders = 1.0;
            for (auto q : nb) {
              const double x = sent[q].at(l)[j];
              if (x != 0.0) {
                sum += x;
                holders += 1.0;
              }
            }
            wl[j] = sum / holders;
          } else {
            double sum = own[j];
            for (auto q : nb) sum += sent[q].at(l)[j];
            wl[j] = sum / static_cast<double>(nb.size() + 1);
          }
        }
      }
    });
  }

  ModelArch arch_;
  Graph graph_;
  HyperConfig hyper_;
  ParamSet w_;
  std::vector<AgentState> states_;
  CommLedger ledger_;
  std::size_t round_ = 0;
};

/// Runs the configured algorithm for hyper.rounds iterations, evaluating at
/// round 0, every eval_interval rounds, and at the last round.
inline MetricsLog run(const ModelArch& arch, const HyperConfig& hyper, const Graph& graph, std::vector<LocalData> data,
                      const std::function<void(const EvalPoint&)>& on_eval = {}) {
  Simulator sim(arch, graph, hyper, std::move(data));
  MetricsLog log;
  auto record = [&] {
    log.evals.push_back(sim.evaluate());
    if (on_eval) on_eval(log.evals.back());
  };
  record();
  for (std::size_t k = 1; k <= hyper.rounds; ++k) {
    sim.step();
    if (k % hyper.eval_interval == 0 || k == hyper.rounds) record();
  }
  log.sparsity = sim.sparsity();
  log.ledger = sim.ledger();
  return log;
}

// ---------------------------------------------------------------------------
// Strong lottery ticket verification
// ---------------------------------------------------------------------------

struct TracePoint {
  std::size_t step = 0;
  double accuracy = 0.0;
  double loss = 0.0;  // mean training loss since the previous point
};

struct DslthArm {
  std::string name;   // "weight" or "mask_r<r>"
  double retention = 1.0;
  std::vector<TracePoint> trace;
};

struct DslthAgentResult {
  std::size_t agent = 0;
  DslthArm weight;
  std::vector<DslthArm> masks;  // one per retention ratio
};

struct DslthConfig {
  std::vector<double> ratios{0.1, 0.3, 0.5};
  std::size_t steps = 600;
  std::size_t eval_interval = 3;
  std::size_t batch_size = 32;
  double lr_weight = 0.001;
  double lr_mask = 1.0;
  double lambda = 0.001;
  std::size_t min_nonzero = 2;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

/// One arm of the verification on one agent: either plain SGD on w (mask
/// empty) or mask-only training of z at retention r against the frozen init.
inline std::vector<TracePoint> train_arm(const ModelArch& arch, const ParamSet& w_init, const LocalData& data,
                                         const DslthConfig& cfg, std::size_t agent, std::optional<double> retention) {
  if (data.train.size() == 0) throw ConfigError("agent " + std::to_string(agent) + " has an empty training shard");
  ParamSet w = w_init;
  MaskState ms;
  BitMaskSet m;
  if (retention) {
    ms.z = init_uniform(arch, derive_seed(cfg.seed, "z", agent), "z");
    ms.retention = *retention;
    ms.min_nonzero = cfg.min_nonzero;
    m = extract_mask(ms);
  }
  auto current = [&] { return retention ? masked_params(w, m) : w; };
  std::vector<TracePoint> trace;
  double loss_sum = 0.0;
  std::size_t loss_steps = 0;
  auto record = [&](std::size_t step) {
    const ParamSet v = current();
    const auto ev = evaluate(arch, v, data.test.features, data.test.labels);
    const double loss = loss_steps ? loss_sum / static_cast<double>(loss_steps)
                                   : evaluate(arch, v, data.train.features, data.train.labels).loss;
    trace.push_back({step, ev.accuracy, loss});
    loss_sum = 0.0;
    loss_steps = 0;
  };
  record(0);
  for (std::size_t k = 1; k <= cfg.steps; ++k) {
    const auto idx = sample_batch(data.train.size(), cfg.batch_size, cfg.seed, agent, k);
    const Batch b = gather(data.train, idx);
    if (retention) {
      auto lg = loss_and_grad_v(arch, w, m, b.features, b.labels);
      const ParamSet g = local_z_gradient(lg.grad_v, w, ms.z, cfg.lambda);
      for (auto& [l, zl] : ms.z) {
        const Tensor& gl = g.at(l);
        for (std::size_t j = 0; j < zl.size(); ++j) zl[j] -= cfg.lr_mask * gl[j];
      }
      m = extract_mask(ms);
      loss_sum += lg.loss;
    } else {
      auto lg = loss_and_grad_effective(arch, w, b.features, b.labels);
      for (auto& [l, wl] : w) {
        const Tensor& gl = lg.grad_v.at(l);
        for (std::size_t j = 0; j < wl.size(); ++j) wl[j] -= cfg.lr_weight * gl[j];
      }
      loss_sum += lg.loss;
    }
    ++loss_steps;
    if (k % cfg.eval_interval == 0 || k == cfg.steps) record(k);
  }
  return trace;
}

/// Per agent: full weight training from the uniform init, and mask-only
/// training from the same init at every retention ratio in cfg.ratios.
inline std::vector<DslthAgentResult> dslth_verify(const ModelArch& arch, const std::vector<LocalData>& data,
                                                  const DslthConfig& cfg) {
  for (double r : cfg.ratios) check_retention(r);
  if (cfg.eval_interval < 1) throw ConfigError("eval interval must be at least 1");
  const ParamSet w = init_params(arch, cfg.seed);
  std::vector<DslthAgentResult> out(data.size());
  for (std::size_t a = 0; a < data.size(); ++a) {
    out[a].agent = a;
    out[a].masks.resize(cfg.ratios.size());
  }
  const std::size_t arms = cfg.ratios.size() + 1;
  parallel_for(data.size() * arms, cfg.workers, [&](std::size_t job) {
    const std::size_t a = job / arms, arm = job % arms;
    if (arm == 0) {
      out[a].weight = {"weight", 1.0, train_arm(arch, w, data[a], cfg, a, std::nullopt)};
      return;
    }
    const double r = cfg.ratios[arm - 1];
    std::ostringstream name;
    name << "mask_r" << r;
    out[a].masks[arm - 1] = {name.str(), r, train_arm(arch, w, data[a], cfg, a, r)};
  });
  return out;
}

// ---------------------------------------------------------------------------
// Pairwise bound checker
// ---------------------------------------------------------------------------

/// Maps a batch [B, ...] to outputs [B, K].
using NetworkFn = std::function<Tensor(const Tensor&)>;

inline NetworkFn masked_network(const ModelArch& arch, ParamSet w, BitMaskSet m) {
  return [arch, v = masked_params(w, m)](const Tensor& batch) { return forward_effective(arch, v, batch).logits; };
}

struct BoundReport {
  double eps1 = 0.0;     // sup_x ‖f1 - g1‖_max
  double eps2 = 0.0;     // sup_x ‖f2 - g2‖_max
  double alpha_u = 0.0;  // sup_x ‖f1 - f2‖_max
  double alpha_l = 0.0;  // inf_x ‖f1 - f2‖_max
  double sup_g = 0.0;    // sup_x ‖g1 - g2‖_max
  double inf_g = 0.0;    // inf_x ‖g1 - g2‖_max
  double upper_bound = 0.0;  // eps1 + eps2 + alpha_u
  double lower_bound = 0.0;  // min{|eps1+eps2-alpha_l|, |eps1+eps2-alpha_u|, |alpha_l|}
  bool upper_holds = false;
  bool lower_holds = false;
};

/// Per-probe max-norm distance between two output batches.
inline std::vector<double> max_norm_rows(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() != 2) throw ArgumentError("bound_check: network output shape mismatch");
  const std::size_t n = a.dim(0), k = a.dim(1);
  std::vector<double> d(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) d[i] = std::max(d[i], std::abs(a[i * k + j] - b[i * k + j]));
  }
  return d;
}

/// Measures the pairwise distances over the probe set and tests the
/// correlation bound (upper) and the heterogeneity bound (lower). The upper
/// bound is a triangle-inequality consequence; its comparison allows a few
/// ulps of rounding in the summed distances.
inline BoundReport bound_check(const NetworkFn& f1, const NetworkFn& f2, const NetworkFn& g1, const NetworkFn& g2,
                               const Tensor& probe) {
  if (probe.empty() || probe.dim(0) == 0) throw ArgumentError("bound_check: empty probe set");
  const Tensor of1 = f1(probe), of2 = f2(probe), og1 = g1(probe), og2 = g2(probe);
  const auto d_f1g1 = max_norm_rows(of1, og1);
  const auto d_f2g2 = max_norm_rows(of2, og2);
  const auto d_f1f2 = max_norm_rows(of1, of2);
  const auto d_g1g2 = max_norm_rows(og1, og2);
  BoundReport r;
  r.eps1 = *std::max_element(d_f1g1.begin(), d_f1g1.end());
  r.eps2 = *std::max_element(d_f2g2.begin(), d_f2g2.end());
  r.alpha_u = *std::max_element(d_f1f2.begin(), d_f1f2.end());
  r.alpha_l = *std::min_element(d_f1f2.begin(), d_f1f2.end());
  r.sup_g = *std::max_element(d_g1g2.begin(), d_g1g2.end());
  r.inf_g = *std::min_element(d_g1g2.begin(), d_g1g2.end());
  r.upper_bound = r.eps1 + r.eps2 + r.alpha_u;
  const double e = r.eps1 + r.eps2;
  r.lower_bound = std::min({std::abs(e - r.alpha_l), std::abs(e - r.alpha_u), std::abs(r.alpha_l)});
  const double slack = 8.0 * std::numeric_limits<double>::epsilon() * r.upper_bound;
  r.upper_holds = r.sup_g <= r.upper_bound + slack;
  r.lower_holds = r.inf_g >= r.lower_bound;
  return r;
}

inline BoundReport bound_check(const NetworkFn& f1, const NetworkFn& f2, const NetworkFn& g1, const NetworkFn& g2,
                               const Dataset& probe) {
  return bound_check(f1, f2, g1, g2, probe.features);
}

}  // namespace mcepl
