#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cfsl/error.hpp"
#include "cfsl/sampler.hpp"

namespace cfsl {

struct InputGeometry {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;

  std::uint64_t scalars() const { return std::uint64_t{height} * width * channels; }
};

// -- Across-task memory ---------------------------------------------------------

struct AtmReport {
  std::uint64_t memory_bytes = 0;         // peak memory-bank bytes
  std::uint64_t episode_input_bytes = 0;  // all support inputs, at input precision
  double atm = 0.0;
};

/// Support-input bytes of an episode: nss * n_way * k_shot images. Targets are
/// not counted.
inline std::uint64_t episode_input_bytes(const TaskConfig& config, const InputGeometry& geometry,
                                         std::uint32_t bytes_per_input_scalar = 1) {
  return std::uint64_t{config.nss} * config.n_way * config.k_shot * geometry.scalars() *
         bytes_per_input_scalar;
}

inline AtmReport atm(std::uint64_t memory_bytes, std::uint64_t input_bytes) {
  if (input_bytes == 0) throw Error(ErrorCode::AtmUndefined, "episode has no support inputs");
  return {memory_bytes, input_bytes,
          static_cast<double>(memory_bytes) / static_cast<double>(input_bytes)};
}

inline AtmReport atm(std::uint64_t memory_bytes, const Episode& episode,
                     const InputGeometry& geometry, std::uint32_t bytes_per_input_scalar = 1) {
  std::uint64_t inputs = 0;
  for (const auto& s : episode.support_sets) inputs += s.entries.size();
  return atm(memory_bytes, inputs * geometry.scalars() * bytes_per_input_scalar);
}

// -- MAC accounting -------------------------------------------------------------
//
// Cost model: fma = 1 MAC each; dot(d) = d; sqdist(d) = d; mean(K, d) = K*d.

enum class Phase { Learning, Inference };

/// One primitive in an operation trace. `a`/`b` are the primitive's
/// dimensions: fma(count), dot(d), sqdist(d), mean(K, d).
struct OpRecord {
  std::string op;
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  Phase phase = Phase::Learning;
};

using OpTrace = std::vector<OpRecord>;

inline std::uint64_t op_cost(const OpRecord& r) {
  if (r.op == "fma") return r.a;
  if (r.op == "dot" || r.op == "sqdist") return r.a;
  if (r.op == "mean") return r.a * r.b;
  throw Error(ErrorCode::UnknownOp, "unknown primitive '" + r.op + "'");
}

struct MacCounter {
  std::uint64_t learning = 0;
  std::uint64_t inference = 0;

  std::uint64_t total() const { return learning + inference; }

  void add(const OpRecord& r) {
    const auto cost = op_cost(r);
    (r.phase == Phase::Learning ? learning : inference) += cost;
  }

  MacCounter& operator+=(const MacCounter& other) {
    learning += other.learning;
    inference += other.inference;
    return *this;
  }
};

inline MacCounter count_macs(const OpTrace& trace) {
  MacCounter counter;
  for (const auto& r : trace) counter.add(r);
  return counter;
}

/// Accumulates costs without keeping the trace; same cost model.
class MacMeter {
 public:
  void fma(std::uint64_t n, Phase p) { record({"fma", n, 0, p}); }
  void dot(std::uint64_t d, Phase p) { record({"dot", d, 0, p}); }
  void sqdist(std::uint64_t d, Phase p) { record({"sqdist", d, 0, p}); }
  void mean(std::uint64_t k, std::uint64_t d, Phase p) { record({"mean", k, d, p}); }
  void record(const OpRecord& r) { counter_.add(r); }

  const MacCounter& counter() const { return counter_; }

 private:
  MacCounter counter_;
};

// -- accuracy aggregation -------------------------------------------------------

struct AccuracySummary {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // population
};

inline AccuracySummary aggregate(const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorCode::EmptySuite, "no episodes to aggregate");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {values.size(), mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

struct SuiteSummary {
  std::size_t n_episodes = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  double atm_mean = 0.0;
  double mac_mean = 0.0;
};

}  // namespace cfsl
