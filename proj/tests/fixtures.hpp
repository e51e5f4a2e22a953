#pragma once

#include <cstdint>
#include <vector>

#include "mcepl/nn.hpp"
#include "mcepl/rng.hpp"
#include "mcepl/trainer.hpp"
#include "oracles.hpp"

namespace fixtures {

using namespace mcepl;

/// conv 3x3 -> relu -> pool 2/2 -> flatten -> linear.
inline ModelArch small_cnn(std::size_t channels = 1, std::size_t size = 4, std::size_t filters = 2,
                           std::size_t classes = 3, std::size_t padding = 1) {
  const std::size_t conv = size + 2 * padding - 2;
  const std::size_t pooled = (conv - 2) / 2 + 1;
  return ModelArch({LayerSpec::conv2d(filters, channels, 3, padding), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
                    LayerSpec::flatten(), LayerSpec::linear(classes, filters * pooled * pooled)},
                   {channels, size, size}, classes);
}

/// Random mask at retention r whose conv filters each keep at least one
/// entry. With unpadded convolutions and positive inputs this keeps every
/// pre-activation away from the ReLU kink, so central differences apply.
inline BitMaskSet differentiable_mask(const ModelArch& arch, std::uint64_t seed, double r) {
  for (std::uint64_t draw = 0;; ++draw) {
    auto m = extract_mask(init_uniform(arch, derive_seed(seed, "fd-mask", draw), "z"), r, 0);
    const auto& conv = m.at(0);
    const std::size_t groups = conv.shape()[0], per = conv.size() / groups;
    bool ok = true;
    for (std::size_t g = 0; g < groups; ++g) {
      std::size_t ones = 0;
      for (std::size_t i = g * per; i < (g + 1) * per; ++i) ones += conv[i];
      ok = ok && ones > 0;
    }
    if (ok) return m;
  }
}

inline ModelArch tiny_desk(std::size_t classes = 4, std::size_t size = 8) {
  return desk_arch({1, size, size}, classes, 16, 4, 8);
}

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Tensor t(shape);
  auto eng = make_engine(seed, "fixture-tensor");
  for (auto& x : t) x = uniform(eng, lo, hi);
  return t;
}

inline std::vector<int> random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
  auto eng = make_engine(seed, "fixture-labels");
  std::vector<int> out(n);
  for (auto& y : out) y = static_cast<int>(uniform_index(eng, classes));
  return out;
}

/// Random per-agent shards of a shared synthetic task.
inline std::vector<LocalData> synthetic_agents(std::size_t agents, std::size_t classes, std::size_t c,
                                               const Shape& dim, std::size_t per_class, std::uint64_t seed) {
  const auto ds = synth_generate(classes, dim, per_class, 0.3, seed);
  const auto labels = assign_labels(agents, classes, c, seed);
  return local_data(ds.train, ds.test, partition(ds.train, ds.test, labels, seed));
}

struct RoundComparison {
  double max_abs_z = 0.0;   // largest |z_lib - z_oracle| over agents and entries
  bool masks_equal = true;  // m, and the stored neighbor masks
};

/// Two connected agents, one biasless conv layer whose kernel covers the
/// whole 1x3x3 image (so it acts as a 3-class linear map). Runs `rounds`
/// rounds of the simulator and replays each from the simulator's own
/// pre-round state with the straight-line oracle.
inline RoundComparison mcepl_round_vs_oracle(std::uint64_t seed, std::size_t rounds = 1) {
  const std::size_t classes = 3;
  const ModelArch arch({LayerSpec::conv2d(classes, 1, 3, 0), LayerSpec::flatten()}, {1, 3, 3}, classes);
  const auto ds = synth_generate(classes, {1, 3, 3}, 10, 0.4, seed);
  std::vector<LocalData> data(2, LocalData{ds.train, ds.test});
  HyperConfig h;
  h.lr_mask = 0.7;
  h.lambda = 0.05;
  h.batch_size = 5;
  h.seed = seed;
  h.retention = {0.5, 0.3};
  h.min_nonzero = 2;
  Simulator sim(arch, Graph(2, {{0, 1}}), h, data);
  const auto to_vec = [](const Tensor& t) { return oracle::Vec(t.begin(), t.end()); };
  const oracle::Vec w = to_vec(sim.shared_params().at(0));
  RoundComparison cmp;
  for (std::size_t k = 1; k <= rounds; ++k) {
    std::vector<oracle::Agent> before(2);
    std::vector<oracle::Step> steps(2);
    for (std::size_t i = 0; i < 2; ++i) {
      const auto& s = sim.states()[i];
      before[i].z = to_vec(s.mask.z.at(0));
      before[i].m = s.m.at(0).bits();
      for (const auto& nm : s.neighbor_masks) before[i].neighbor_masks.push_back(nm.at(0).bits());
      before[i].r = s.mask.retention;
      const auto idx = sample_batch(data[i].train.size(), h.batch_size, seed, i, k);
      const auto b = gather(data[i].train, idx);
      steps[i] = oracle::half_step(before[i], w, to_vec(b.features), b.labels, classes, h.lr_mask, h.lambda,
                                   h.min_nonzero);
    }
    sim.step();
    for (std::size_t i = 0; i < 2; ++i) {
      const auto expect = oracle::finish(before[i], steps[i], {steps[1 - i].m_half}, classes, h.lr_mask, h.min_nonzero);
      const auto& s = sim.states()[i];
      const auto& z = s.mask.z.at(0);
      for (std::size_t e = 0; e < z.size(); ++e) cmp.max_abs_z = std::max(cmp.max_abs_z, std::abs(z[e] - expect.z[e]));
      cmp.masks_equal = cmp.masks_equal && s.m.at(0).bits() == expect.m && s.neighbor_masks.size() == 1 &&
                        s.neighbor_masks[0].at(0).bits() == expect.neighbor_masks[0];
    }
  }
  return cmp;
}

}  // namespace fixtures
