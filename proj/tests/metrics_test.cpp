#include <cmath>

#include <gtest/gtest.h>

#include "cfsl/metrics.hpp"
#include "cfsl/rng.hpp"

using namespace cfsl;

namespace {

TaskConfig cfg(std::uint32_t nss) {
  TaskConfig c;
  c.nss = nss;
  return c;
}

}  // namespace

TEST(Atm, NoMemoryIsZero) {
  EXPECT_EQ(atm(0, episode_input_bytes(cfg(3), {64, 64, 3})).atm, 0.0);
}

TEST(Atm, VerbatimIsOne) {
  const auto bytes = episode_input_bytes(cfg(5), {28, 28, 1});
  EXPECT_EQ(atm(bytes, bytes).atm, 1.0);
}

TEST(Atm, PrototypeByteOracle) {
  const auto input = episode_input_bytes(cfg(3), {64, 64, 3});
  EXPECT_EQ(input, 184320u);
  const std::uint64_t memory = 15 * 64 * 4;
  EXPECT_EQ(memory, 3840u);
  const auto r = atm(memory, input);
  EXPECT_EQ(r.atm, 3840.0 / 184320.0);
  EXPECT_NEAR(r.atm, 0.0208333, 1e-7);
}

TEST(Atm, EmptyEpisodeUndefined) {
  try {
    atm(10, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AtmUndefined);
  }
}

TEST(Atm, InputPrecisionScales) {
  EXPECT_EQ(episode_input_bytes(cfg(1), {2, 2, 1}, 4), 5u * 4 * 4);
}

TEST(Macs, CostModel) {
  EXPECT_EQ(count_macs({{"dot", 64, 0, Phase::Inference}}).total(), 64u);
  OpTrace nearest;
  for (int p = 0; p < 50; ++p) nearest.push_back({"sqdist", 64, 0, Phase::Inference});
  EXPECT_EQ(count_macs(nearest).total(), 3200u);
  EXPECT_EQ(count_macs({}).total(), 0u);
  EXPECT_EQ(count_macs({{"mean", 5, 64, Phase::Learning}, {"fma", 7, 0, Phase::Learning}}).learning,
            327u);
}

TEST(Macs, PhasesSeparate) {
  const auto m = count_macs({{"dot", 10, 0, Phase::Learning}, {"dot", 3, 0, Phase::Inference}});
  EXPECT_EQ(m.learning, 10u);
  EXPECT_EQ(m.inference, 3u);
}

TEST(Macs, UnknownOp) {
  try {
    count_macs({{"conv", 1, 1, Phase::Learning}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownOp);
  }
}

TEST(Macs, MeterMatchesTrace) {
  MacMeter meter;
  meter.sqdist(64, Phase::Inference);
  meter.mean(3, 64, Phase::Learning);
  EXPECT_EQ(meter.counter().total(),
            count_macs({{"sqdist", 64, 0, Phase::Inference}, {"mean", 3, 64, Phase::Learning}}).total());
}

TEST(Aggregate, Examples) {
  const auto a = aggregate({0.5, 0.5, 0.5});
  EXPECT_DOUBLE_EQ(a.mean, 0.5);
  EXPECT_DOUBLE_EQ(a.std, 0.0);
  const auto b = aggregate({0.0, 1.0});
  EXPECT_DOUBLE_EQ(b.mean, 0.5);
  EXPECT_DOUBLE_EQ(b.std, 0.5);
  EXPECT_THROW(aggregate({}), Error);
}

TEST(Aggregate, MonteCarloWithinThreeSe) {
  Xoshiro256ss rng(77);
  const double p = 0.3;
  const int targets = 25;
  std::vector<double> acc;
  for (int e = 0; e < 600; ++e) {
    int hits = 0;
    for (int t = 0; t < targets; ++t) hits += rng.uniform() < p ? 1 : 0;
    acc.push_back(static_cast<double>(hits) / targets);
  }
  const auto s = aggregate(acc);
  const double se = std::sqrt(p * (1 - p) / (targets * 600.0));
  EXPECT_LT(std::abs(s.mean - p), 3 * se);
}
