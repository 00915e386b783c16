#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cfsl/error.hpp"

namespace cfsl {

/// One episode family: support-set count, class-change interval, way/shot,
/// target shots per class, label overwrite, and the data-provider seed.
struct TaskConfig {
  std::uint32_t nss = 1;
  std::uint32_t cci = 1;
  std::uint32_t n_way = 5;
  std::uint32_t k_shot = 1;
  std::uint32_t k_target = 5;
  bool overwrite = false;
  std::uint64_t seed = 0;

  /// Number of class blocks (nss / cci). Only meaningful for a valid config.
  std::uint32_t num_blocks() const { return cci == 0 ? 0 : nss / cci; }
  std::uint32_t support_size() const { return n_way * k_shot; }

  friend bool operator==(const TaskConfig&, const TaskConfig&) = default;
};

enum class TaskKind {
  NewSamples,            // A
  NewClasses,            // B
  NewClassesOverwrite,   // C
  NewClassesNewSamples,  // D
  SingleFSL,
};

constexpr std::string_view task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::NewSamples: return "A";
    case TaskKind::NewClasses: return "B";
    case TaskKind::NewClassesOverwrite: return "C";
    case TaskKind::NewClassesNewSamples: return "D";
    case TaskKind::SingleFSL: return "FSL";
  }
  return "?";
}

inline std::vector<std::string> validate_config(const TaskConfig& c) {
  std::vector<std::string> violations;
  if (c.nss < 1) violations.emplace_back("nss >= 1 required");
  if (c.cci < 1) violations.emplace_back("cci >= 1 required");
  if (c.n_way < 1) violations.emplace_back("n_way >= 1 required");
  if (c.k_shot < 1) violations.emplace_back("k_shot >= 1 required");
  if (c.k_target < 1) violations.emplace_back("k_target >= 1 required");
  if (c.nss >= 1 && c.cci >= 1 && c.nss % c.cci != 0)
    violations.emplace_back("nss not divisible by cci");
  return violations;
}

inline void require_valid(const TaskConfig& c) {
  const auto violations = validate_config(c);
  if (violations.empty()) return;
  std::string joined;
  for (const auto& v : violations) {
    if (!joined.empty()) joined += "; ";
    joined += v;
  }
  throw Error(ErrorCode::Config, joined);
}

/// Total over valid configs. cci == nss > 1 is New Samples whatever the
/// overwrite flag (there is a single class block, so labels coincide), and
/// 1 < cci < nss is New Classes with New Samples.
inline TaskKind derive_task_kind(const TaskConfig& c) {
  if (c.nss == 1) return TaskKind::SingleFSL;
  if (c.cci == c.nss) return TaskKind::NewSamples;
  if (c.cci == 1) return c.overwrite ? TaskKind::NewClassesOverwrite : TaskKind::NewClasses;
  return TaskKind::NewClassesNewSamples;
}

inline std::uint32_t expected_distinct_classes(const TaskConfig& c) {
  require_valid(c);
  return c.n_way * c.num_blocks();
}

inline std::uint32_t output_label_count(const TaskConfig& c) {
  require_valid(c);
  return c.overwrite ? c.n_way : c.n_way * c.num_blocks();
}

/// Half-open label interval [first, first + count).
struct LabelRange {
  std::uint32_t first = 0;
  std::uint32_t count = 0;

  bool contains(std::uint32_t label) const { return label >= first && label < first + count; }
  friend bool operator==(const LabelRange&, const LabelRange&) = default;
};

/// Labels for class block `block` (1-based, as in the sampling loop). Labels
/// are 0-based: without overwrite block a owns [(a-1)*n_way, a*n_way), with
/// overwrite every block reuses [0, n_way).
inline LabelRange label_assignment(std::uint32_t block, const TaskConfig& c) {
  require_valid(c);
  if (block < 1 || block > c.num_blocks())
    throw Error(ErrorCode::BlockIndex, "block " + std::to_string(block) + " outside 1.." +
                                           std::to_string(c.num_blocks()));
  if (c.overwrite) return {0, c.n_way};
  return {(block - 1) * c.n_way, c.n_way};
}

struct LabelSpace {
  std::uint32_t num_output_labels = 0;
  std::vector<LabelRange> block_assignments;  // index a-1
};

inline LabelSpace label_space(const TaskConfig& c) {
  LabelSpace space;
  space.num_output_labels = output_label_count(c);
  for (std::uint32_t a = 1; a <= c.num_blocks(); ++a)
    space.block_assignments.push_back(label_assignment(a, c));
  return space;
}

/// Where a config sits on the few-shot / continual few-shot / continual
/// spectrum. Few-shot: one small support set. Continual few-shot: small
/// support sets, up to a hundred of them. Anything with larger support sets
/// (32+ samples) or longer sequences is full continual learning.
enum class Regime { FewShot, ContinualFewShot, Continual };

inline Regime classify_regime(const TaskConfig& c) {
  constexpr std::uint32_t kMaxFewShotSupport = 32;
  constexpr std::uint32_t kMaxContinualFewShotSets = 100;
  if (c.support_size() >= kMaxFewShotSupport || c.nss > kMaxContinualFewShotSets)
    return Regime::Continual;
  return c.nss == 1 ? Regime::FewShot : Regime::ContinualFewShot;
}

// -- serialization ----------------------------------------------------------

inline nlohmann::json to_json(const TaskConfig& c) {
  return nlohmann::json{{"nss", c.nss},       {"cci", c.cci},
                        {"n_way", c.n_way},   {"k_shot", c.k_shot},
                        {"k_target", c.k_target}, {"overwrite", c.overwrite},
                        {"seed", c.seed}};
}

inline TaskConfig task_config_from_json(const nlohmann::json& j) {
  static constexpr std::string_view kKeys[] = {"nss",      "cci",       "n_way", "k_shot",
                                               "k_target", "overwrite", "seed"};
  if (!j.is_object()) throw Error(ErrorCode::Config, "config must be an object");
  for (auto key : kKeys)
    if (!j.contains(std::string(key)))
      throw Error(ErrorCode::Config, "missing key '" + std::string(key) + "'");
  for (const auto& item : j.items()) {
    bool known = false;
    for (auto key : kKeys) known = known || item.key() == key;
    if (!known) throw Error(ErrorCode::Config, "unknown key '" + item.key() + "'");
  }
  try {
    TaskConfig c;
    c.nss = j.at("nss").get<std::uint32_t>();
    c.cci = j.at("cci").get<std::uint32_t>();
    c.n_way = j.at("n_way").get<std::uint32_t>();
    c.k_shot = j.at("k_shot").get<std::uint32_t>();
    c.k_target = j.at("k_target").get<std::uint32_t>();
    c.overwrite = j.at("overwrite").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, e.what());
  }
}

inline TaskConfig load_task_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot open " + path);
  try {
    return task_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Config, path + ": " + e.what());
  }
}

inline void save_task_config(const TaskConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Config, "cannot write " + path);
  out << to_json(c).dump(2) << '\n';
}

}  // namespace cfsl
