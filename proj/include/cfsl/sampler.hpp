#pragma once

// Continual few-shot episode generation.
//
// Draw order for episode i under config c (all draws from one
// Xoshiro256ss(stream_seed(c.seed, i))):
//   1. Fisher-Yates prefix of length n_way * nss/cci over class ids 0..C-1
//      (manifest order). Block a (1-based) owns prefix slots
//      [(a-1)*n_way, a*n_way); removal is scoped to this episode.
//   2. For each block a, for each of its classes in slot order: a Fisher-Yates
//      prefix of length cci*k_shot + k_target over that class's instances.
//      Slots [(b-1)*k_shot, b*k_shot) go to support set n = (a-1)*cci + b;
//      the last k_target slots go to the target set (drawn once per block).
//   3. A full Fisher-Yates shuffle of the target set.
// Support sets list entries class-major (slot order, then shot order).

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfsl/config.hpp"
#include "cfsl/error.hpp"
#include "cfsl/pack.hpp"
#include "cfsl/rng.hpp"

namespace cfsl {

struct SampleRef {
  std::uint32_t class_id = 0;
  std::uint32_t instance = 0;

  friend auto operator<=>(const SampleRef&, const SampleRef&) = default;
};

struct LabeledSample {
  SampleRef sample;
  std::uint32_t label = 0;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct SupportSetRef {
  std::uint32_t position = 0;  // n, 1..nss
  std::uint32_t block = 0;     // a, 1..nss/cci
  std::vector<LabeledSample> entries;

  friend bool operator==(const SupportSetRef&, const SupportSetRef&) = default;
};

struct Episode {
  TaskConfig config;
  std::uint64_t episode_index = 0;
  std::vector<std::vector<std::uint32_t>> class_blocks;  // true class ids per block
  std::vector<SupportSetRef> support_sets;
  std::vector<LabeledSample> target;

  TaskKind kind() const { return derive_task_kind(config); }

  /// Assigned label -> true class ids carrying it.
  std::map<std::uint32_t, std::set<std::uint32_t>> true_class_map() const {
    std::map<std::uint32_t, std::set<std::uint32_t>> out;
    for (const auto& s : support_sets)
      for (const auto& e : s.entries) out[e.label].insert(e.sample.class_id);
    return out;
  }

  /// Sample -> assigned label, over supports and target.
  std::map<SampleRef, std::uint32_t> label_map() const {
    std::map<SampleRef, std::uint32_t> out;
    for (const auto& s : support_sets)
      for (const auto& e : s.entries) out.emplace(e.sample, e.label);
    for (const auto& e : target) out.emplace(e.sample, e.label);
    return out;
  }

  friend bool operator==(const Episode&, const Episode&) = default;
};

/// Throws NotEnoughClasses / NotEnoughSamples if `pack` cannot host `config`.
inline void check_feasible(const DatasetPack& pack, const TaskConfig& config) {
  require_valid(config);
  const std::uint64_t needed_classes = std::uint64_t{config.n_way} * config.num_blocks();
  if (pack.num_classes() < needed_classes)
    throw Error(ErrorCode::NotEnoughClasses,
                "need " + std::to_string(needed_classes) + " classes, pack '" +
                    pack.manifest().name + "' has " + std::to_string(pack.num_classes()));
  const std::uint64_t per_class = std::uint64_t{config.cci} * config.k_shot + config.k_target;
  for (const auto& c : pack.manifest().classes)
    if (c.count() < per_class)
      throw NotEnoughSamplesError(c.id, "class " + std::to_string(c.id) + " ('" + c.name +
                                            "') has " + std::to_string(c.count()) +
                                            " samples, need " + std::to_string(per_class));
}

inline Episode sample_episode(const DatasetPack& pack, const TaskConfig& config,
                              std::uint64_t episode_index) {
  check_feasible(pack, config);
  Xoshiro256ss rng(stream_seed(config.seed, episode_index));

  const std::uint32_t blocks = config.num_blocks();
  const auto classes = sample_without_replacement(pack.num_classes(),
                                                  std::size_t{config.n_way} * blocks, rng);
  Episode ep;
  ep.config = config;
  ep.episode_index = episode_index;
  ep.support_sets.resize(config.nss);

  const std::uint32_t per_class = config.cci * config.k_shot + config.k_target;
  for (std::uint32_t a = 1; a <= blocks; ++a) {
    const LabelRange labels = label_assignment(a, config);
    auto& block_classes = ep.class_blocks.emplace_back();
    for (std::uint32_t b = 1; b <= config.cci; ++b) {
      auto& s = ep.support_sets[(a - 1) * config.cci + b - 1];
      s.position = (a - 1) * config.cci + b;
      s.block = a;
    }
    for (std::uint32_t j = 0; j < config.n_way; ++j) {
      const std::uint32_t class_id = classes[(a - 1) * config.n_way + j];
      const std::uint32_t label = labels.first + j;
      block_classes.push_back(class_id);
      const auto instances = sample_without_replacement(pack.class_size(class_id), per_class, rng);
      for (std::uint32_t b = 1; b <= config.cci; ++b) {
        auto& s = ep.support_sets[(a - 1) * config.cci + b - 1];
        for (std::uint32_t k = 0; k < config.k_shot; ++k)
          s.entries.push_back({{class_id, instances[(b - 1) * config.k_shot + k]}, label});
      }
      for (std::uint32_t k = 0; k < config.k_target; ++k)
        ep.target.push_back({{class_id, instances[config.cci * config.k_shot + k]}, label});
    }
  }
  fisher_yates_prefix(std::span<LabeledSample>(ep.target), ep.target.size(), rng);
  return ep;
}

/// Episodes 0..count-1; each is an independent draw from the full pack.
inline std::vector<Episode> sample_eval_suite(const DatasetPack& pack, const TaskConfig& config,
                                              std::size_t count) {
  if (count < 1) throw Error(ErrorCode::Config, "suite count >= 1 required");
  std::vector<Episode> suite;
  suite.reserve(count);
  for (std::size_t i = 0; i < count; ++i) suite.push_back(sample_episode(pack, config, i));
  return suite;
}

// -- episode manifests ----------------------------------------------------------

inline nlohmann::json to_json(const LabeledSample& s) {
  return {{"class", s.sample.class_id}, {"instance", s.sample.instance}, {"label", s.label}};
}

/// Structured listing of sample ids, labels and block structure (no pixels).
inline nlohmann::json to_json(const Episode& ep) {
  nlohmann::json supports = nlohmann::json::array();
  for (const auto& s : ep.support_sets) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : s.entries) entries.push_back(to_json(e));
    supports.push_back({{"position", s.position}, {"block", s.block}, {"samples", entries}});
  }
  nlohmann::json target = nlohmann::json::array();
  for (const auto& e : ep.target) target.push_back(to_json(e));
  return {{"episode_index", ep.episode_index},
          {"config", to_json(ep.config)},
          {"task_kind", std::string(task_kind_name(ep.kind()))},
          {"class_blocks", ep.class_blocks},
          {"support_sets", supports},
          {"target", target}};
}

}  // namespace cfsl
