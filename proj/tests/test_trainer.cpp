#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "mcepl/experiment.hpp"
#include "mcepl/trainer.hpp"

using namespace mcepl;

namespace {

ParamSet single(std::vector<double> v, Shape shape) {
  ParamSet p;
  p.emplace(0, Tensor(std::move(shape), std::move(v)));
  return p;
}

HyperConfig hyper(Algorithm a, std::size_t agents, double r = 0.3) {
  HyperConfig h;
  h.algorithm = a;
  h.lr_mask = 0.05;
  h.batch_size = 16;
  h.rounds = 3;
  h.eval_interval = 2;
  h.seed = 4;
  h.retention.assign(agents, r);
  return h;
}

}  // namespace

TEST(Aggregation, TensorAndMask) {
  const auto z = single({0.2, -0.4}, {2});
  const auto avg = single({1.0, 0.5}, {2});
  const auto agg = aggregate_step(z, avg, 0.5, 0);
  EXPECT_NEAR(agg.y.at(0)[0], 0.5, 1e-15);
  EXPECT_NEAR(agg.y.at(0)[1], -0.55, 1e-15);
  EXPECT_EQ(agg.m.at(0).bits(), (std::vector<std::uint8_t>{0, 1}));
}

TEST(Aggregation, ZeroNeighborMasksReduceToExtractMask) {
  const ParamSet z = single({0.3, -0.1, 0.8, 0.5, -0.2, 0.05}, {2, 3});
  const auto agg = aggregate_step(z, single(std::vector<double>(6, 0.0), {2, 3}), 0.5, 2);
  EXPECT_EQ(agg.y, z);
  EXPECT_EQ(agg.m, extract_mask(z, 0.5, 2));
}

TEST(FineTune, MaskedUpdate) {
  const auto z = single({1.0, 2.0}, {2});
  const auto g = single({0.5, 0.5}, {2});
  const auto out = fine_tune_step(z, g, single({0.5, 0.0}, {2}), 1.0);
  EXPECT_DOUBLE_EQ(out.at(0)[0], 0.75);
  EXPECT_DOUBLE_EQ(out.at(0)[1], 2.0);
  EXPECT_EQ(fine_tune_step(z, g, single({1.0, 1.0}, {2}), 0.0), z);
}

TEST(HalfStep, IsolatedAgentAndZeroGradient) {
  const auto arch = fixtures::small_cnn();
  const auto data = fixtures::synthetic_agents(1, 3, 3, {1, 4, 4}, 10, 1);
  AgentState s;
  s.mask.z = init_uniform(arch, 2, "z");
  s.mask.retention = 0.4;
  s.m = extract_mask(s.mask);
  s.lr = 0.5;
  s.lambda = 0.01;
  const auto b = gather(data[0].train, sample_batch(data[0].train.size(), 8, 0, 0, 1));
  const auto w = init_params(arch, 3);
  const auto hs = backprop_half_step(s, w, arch, b);
  EXPECT_EQ(hs.m_half, extract_mask(hs.z_half, 0.4, 2));

  ParamSet zero_w = w;
  for (auto& [l, t] : zero_w) t.fill(0.0);
  s.lambda = 0.0;
  EXPECT_EQ(backprop_half_step(s, zero_w, arch, b).z_half, s.mask.z);

  EXPECT_THROW(backprop_half_step(s, w, arch, Batch{}), ConfigError);
}

TEST(McePlRound, MatchesStraightLineOracle) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const auto cmp = fixtures::mcepl_round_vs_oracle(seed, 3);
    EXPECT_LE(cmp.max_abs_z, 1e-12) << "seed " << seed;
    EXPECT_TRUE(cmp.masks_equal) << "seed " << seed;
  }
}

TEST(Simulator, SharedWeightsStayFrozen) {
  const auto arch = fixtures::tiny_desk();
  for (auto alg : {Algorithm::mcepl, Algorithm::ind_mask}) {
    Simulator sim(arch, ring(4), hyper(alg, 4), fixtures::synthetic_agents(4, 4, 2, {1, 8, 8}, 20, 0));
    const ParamSet before = sim.shared_params();
    for (int k = 0; k < 3; ++k) sim.step();
    EXPECT_EQ(sim.shared_params(), before);
    EXPECT_EQ(before, init_params(arch, 4));
  }
}

TEST(Simulator, DeterministicAcrossWorkerCounts) {
  const auto arch = fixtures::tiny_desk();
  const auto data = fixtures::synthetic_agents(5, 4, 2, {1, 8, 8}, 20, 2);
  const auto g = erdos_renyi(5, 0.5, 2);
  for (auto alg : {Algorithm::mcepl, Algorithm::par_weipru}) {
    auto h = hyper(alg, 5);
    const auto one = run(arch, h, g, data);
    h.workers = 3;
    const auto three = run(arch, h, g, data);
    EXPECT_EQ(metrics_csv(one), metrics_csv(three));
    EXPECT_EQ(sparsity_csv(one), sparsity_csv(three));
    EXPECT_EQ(metrics_csv(one), metrics_csv(run(arch, h, g, data)));
  }
}

TEST(Simulator, CommunicationAccounting) {
  const auto arch = fixtures::tiny_desk();
  const auto data = fixtures::synthetic_agents(4, 4, 2, {1, 8, 8}, 20, 0);
  for (auto alg : {Algorithm::mcepl, Algorithm::ind_mask, Algorithm::ind_weipru, Algorithm::avr_weipru,
                   Algorithm::par_weipru, Algorithm::dsgd}) {
    Simulator sim(arch, ring(4), hyper(alg, 4), data);
    std::uint64_t prev = sim.ledger().total().payload_sent;
    for (int k = 0; k < 3; ++k) {
      sim.step();
      const std::uint64_t now = sim.ledger().total().payload_sent;
      if (communicates(alg)) {
        EXPECT_GT(now, prev) << algorithm_name(alg);
      } else {
        EXPECT_EQ(now, 0u) << algorithm_name(alg);
      }
      prev = now;
    }
  }
}

TEST(Simulator, AveragingIdenticalModelsIsAFixedPoint) {
  const auto arch = fixtures::tiny_desk();
  auto one = fixtures::synthetic_agents(1, 4, 4, {1, 8, 8}, 10, 3)[0];
  one.train = Dataset{gather(one.train, std::vector<std::size_t>{0}).features, {one.train.labels[0]}, 4};
  const std::vector<LocalData> data(3, one);
  auto h = hyper(Algorithm::ind_weipru, 3);
  h.lr_weight = 0.01;
  Simulator ind(arch, ring(3), h, data);
  h.algorithm = Algorithm::avr_weipru;
  Simulator avr(arch, ring(3), h, data);
  ind.step();
  avr.step();
  for (std::size_t i = 0; i < 3; ++i) {
    for (const auto& [l, t] : avr.states()[i].w_local) {
      const Tensor& ref = ind.states()[i].w_local.at(l);
      for (std::size_t e = 0; e < t.size(); ++e) EXPECT_NEAR(t[e], ref[e], 1e-12);
    }
  }
}

TEST(Simulator, PartialAveragingKeepsLocalZeros) {
  const auto arch = fixtures::tiny_desk();
  const auto data = fixtures::synthetic_agents(4, 4, 2, {1, 8, 8}, 20, 5);
  auto h = hyper(Algorithm::par_weipru, 4);
  h.retention = {0.1, 0.2, 0.3, 0.4};
  Simulator sim(arch, erdos_renyi(4, 1.0, 0), h, data);
  for (int k = 0; k < 2; ++k) {
    sim.step();
    for (const auto& s : sim.states()) {
      for (const auto& [l, t] : s.w_local) {
        const auto nonzero = static_cast<std::size_t>(std::count_if(t.begin(), t.end(), [](double x) { return x != 0.0; }));
        EXPECT_LE(nonzero, retained_count(t.size(), s.mask.retention));
      }
    }
  }
}

TEST(Run, RoundZeroOnlyAndRetentionLength) {
  const auto arch = fixtures::tiny_desk();
  const auto data = fixtures::synthetic_agents(3, 4, 2, {1, 8, 8}, 10, 0);
  auto h = hyper(Algorithm::mcepl, 3);
  h.rounds = 0;
  const auto log = run(arch, h, ring(3), data);
  ASSERT_EQ(log.evals.size(), 1u);
  EXPECT_EQ(log.evals[0].round, 0u);
  h.retention = {0.3, 0.3};
  EXPECT_THROW(run(arch, h, ring(3), data), ConfigError);
}

TEST(Dslth, FullRetentionIsConstantAndTraceLength) {
  const auto arch = fixtures::tiny_desk();
  const auto data = fixtures::synthetic_agents(1, 4, 4, {1, 8, 8}, 10, 0);
  DslthConfig cfg;
  cfg.ratios = {1.0, 0.5};
  cfg.steps = 9;
  cfg.eval_interval = 3;
  cfg.batch_size = 8;
  const auto res = dslth_verify(arch, data, cfg);
  ASSERT_EQ(res.size(), 1u);
  EXPECT_EQ(res[0].weight.trace.size(), 4u);
  const auto& full = res[0].masks[0].trace;
  ASSERT_EQ(full.size(), 4u);
  for (const auto& p : full) EXPECT_EQ(p.accuracy, full[0].accuracy);
}

TEST(BoundCheck, SubstitutionCases) {
  const auto arch = fixtures::small_cnn();
  const auto f1 = masked_network(arch, init_params(arch, 1), full_masks(init_params(arch, 1)));
  const auto f2 = masked_network(arch, init_params(arch, 2), full_masks(init_params(arch, 2)));
  const auto probe = fixtures::random_tensor({20, 1, 4, 4}, 3);
  const auto same = bound_check(f1, f2, f1, f2, probe);
  EXPECT_EQ(same.eps1, 0.0);
  EXPECT_EQ(same.eps2, 0.0);
  EXPECT_EQ(same.sup_g, same.alpha_u);
  EXPECT_TRUE(same.upper_holds);
  const auto all = bound_check(f1, f1, f1, f1, probe);
  EXPECT_EQ(all.upper_bound, 0.0);
  EXPECT_EQ(all.sup_g, 0.0);
  EXPECT_TRUE(all.upper_holds);
  EXPECT_TRUE(all.lower_holds);
}
