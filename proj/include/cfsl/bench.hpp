#pragma once

// Evaluation-only benchmark runs over a grid of task configs.
//
// Plan file (JSON):
//   {
//     "datasets": [{"name": "omniglot", "train": "p/train", "val": "p/val", "test": "p/test"}],
//     "split": "test",               // which pack episodes are drawn from
//     "n_way": 5, "k_shot": 1, "k_target": 5,
//     "data_seed": 0,                // episode seed, shared by every learner and seed
//     "grid": [{"nss": 3, "cci": 1, "overwrite": false}, ...],   // default: default_grid()
//     "learners": [{"learner": "prototype", "steps": 5, "lr": 0.01,
//                   "standardize": true, "pool": 8, "name": "proto"}],
//     "episodes": 600,
//     "seeds": 3                     // learner seeds 0..seeds-1
//   }
// Report CSV columns:
//   dataset,learner,seed,task_kind,nss,cci,overwrite,n_episodes,acc_mean,acc_std,
//   atm_mean,mac_mean,error

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfsl/config.hpp"
#include "cfsl/error.hpp"
#include "cfsl/learners.hpp"
#include "cfsl/metrics.hpp"
#include "cfsl/pack.hpp"
#include "cfsl/sampler.hpp"
#include "cfsl/session.hpp"

namespace cfsl {

struct GridCell {
  std::uint32_t nss = 1;
  std::uint32_t cci = 1;
  bool overwrite = false;

  friend bool operator==(const GridCell&, const GridCell&) = default;
};

/// Twelve columns: FSL; then B, C, A at NSS 3; D at 4/2; B, C, A at 5; D at
/// 8/2; B, C, A at 10.
inline std::vector<GridCell> default_grid() {
  return {{1, 1, false},  {3, 1, false}, {3, 1, true},  {3, 3, true},
          {4, 2, false},  {5, 1, false}, {5, 1, true},  {5, 5, true},
          {8, 2, false},  {10, 1, false}, {10, 1, true}, {10, 10, true}};
}

struct NamedLearner {
  std::string name;
  LearnerParams params;
};

struct BenchDataset {
  std::string name;
  std::shared_ptr<const DatasetPack> pack;  // the evaluation split
};

struct BenchPlan {
  std::vector<BenchDataset> datasets;
  std::uint32_t n_way = 5;
  std::uint32_t k_shot = 1;
  std::uint32_t k_target = 5;
  std::uint64_t data_seed = 0;
  std::vector<GridCell> grid = default_grid();
  std::vector<NamedLearner> learners;
  std::size_t episodes = 600;
  std::uint32_t seeds = 3;

  TaskConfig config_for(const GridCell& cell) const {
    return {cell.nss, cell.cci, n_way, k_shot, k_target, cell.overwrite, data_seed};
  }
};

inline std::vector<std::string> validate_plan(const BenchPlan& plan) {
  std::vector<std::string> problems;
  if (plan.datasets.empty()) problems.emplace_back("no datasets");
  if (plan.learners.empty()) problems.emplace_back("no learners");
  if (plan.grid.empty()) problems.emplace_back("empty grid");
  if (plan.episodes < 1) problems.emplace_back("episodes >= 1 required");
  if (plan.seeds < 1) problems.emplace_back("seeds >= 1 required");
  for (const auto& cell : plan.grid)
    for (const auto& v : validate_config(plan.config_for(cell)))
      problems.push_back("cell nss=" + std::to_string(cell.nss) + " cci=" +
                         std::to_string(cell.cci) + ": " + v);
  return problems;
}

struct BenchRow {
  std::string dataset;
  std::string learner;
  std::uint32_t seed = 0;
  GridCell cell;
  TaskKind kind = TaskKind::SingleFSL;
  SuiteSummary summary;
  std::string error;  // empty when the cell ran

  bool ok() const { return error.empty(); }
};

struct BenchReport {
  std::vector<BenchRow> rows;

  bool any_error() const {
    return std::any_of(rows.begin(), rows.end(), [](const BenchRow& r) { return !r.ok(); });
  }
};

/// One suite of episodes for one learner; episodes depend only on the config.
inline SuiteSummary evaluate_suite(const std::shared_ptr<const DatasetPack>& pack,
                                   const std::vector<Episode>& suite,
                                   const LearnerParams& params) {
  std::vector<double> accuracies;
  double atm_sum = 0.0, mac_sum = 0.0;
  for (const auto& ep : suite) {
    EpisodeSession session(pack, ep);
    const auto outcome = run_episode(params, session);
    accuracies.push_back(outcome.score.accuracy);
    atm_sum += outcome.score.atm.atm;
    mac_sum += static_cast<double>(outcome.macs.total());
  }
  const auto acc = aggregate(accuracies);
  const double n = static_cast<double>(suite.size());
  return {suite.size(), acc.mean, acc.std, atm_sum / n, mac_sum / n};
}

/// Rows come out ordered by (dataset, cell, learner, seed) as listed in the plan.
inline BenchReport run_benchmark(const BenchPlan& plan) {
  const auto problems = validate_plan(plan);
  if (!problems.empty()) throw Error(ErrorCode::Config, problems.front());
  BenchReport report;
  for (const auto& ds : plan.datasets) {
    for (const auto& cell : plan.grid) {
      const auto config = plan.config_for(cell);
      std::vector<Episode> suite;
      std::string error;
      try {
        suite = sample_eval_suite(*ds.pack, config, plan.episodes);
      } catch (const Error& e) {
        error = e.what();
      }
      for (const auto& learner : plan.learners) {
        for (std::uint32_t seed = 0; seed < plan.seeds; ++seed) {
          BenchRow row{ds.name, learner.name, seed, cell, derive_task_kind(config), {}, error};
          if (row.ok()) {
            auto params = learner.params;
            params.seed = seed;
            row.summary = evaluate_suite(ds.pack, suite, params);
          }
          report.rows.push_back(std::move(row));
        }
      }
    }
  }
  return report;
}

// -- plan files -------------------------------------------------------------------

inline NamedLearner learner_from_json(const nlohmann::json& j) {
  NamedLearner l;
  l.params.kind = parse_learner_kind(j.at("learner").get<std::string>());
  l.params.steps = j.value("steps", l.params.steps);
  l.params.lr = j.value("lr", l.params.lr);
  l.params.standardize = j.value("standardize", l.params.standardize);
  l.params.pool = j.value("pool", l.params.pool);
  l.name = j.value("name", std::string(learner_kind_name(l.params.kind)));
  return l;
}

/// Loads a plan and the evaluation-split pack of every dataset. Relative pack
/// paths resolve against the plan file's directory.
inline BenchPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot open plan " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Config, path.string() + ": " + e.what());
  }
  try {
    BenchPlan plan;
    const auto split = j.value("split", std::string("test"));
    const auto base = path.parent_path();
    for (const auto& jd : j.at("datasets")) {
      std::filesystem::path pack_path = jd.at(split).get<std::string>();
      if (pack_path.is_relative()) pack_path = base / pack_path;
      auto pack = std::make_shared<const DatasetPack>(read_pack(pack_path));
      plan.datasets.push_back({jd.value("name", pack->manifest().name), std::move(pack)});
    }
    plan.n_way = j.value("n_way", plan.n_way);
    plan.k_shot = j.value("k_shot", plan.k_shot);
    plan.k_target = j.value("k_target", plan.k_target);
    plan.data_seed = j.value("data_seed", plan.data_seed);
    plan.episodes = j.value("episodes", plan.episodes);
    plan.seeds = j.value("seeds", plan.seeds);
    if (j.contains("grid")) {
      plan.grid.clear();
      for (const auto& jc : j.at("grid"))
        plan.grid.push_back({jc.at("nss").get<std::uint32_t>(), jc.at("cci").get<std::uint32_t>(),
                             jc.value("overwrite", false)});
    }
    for (const auto& jl : j.at("learners")) plan.learners.push_back(learner_from_json(jl));
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, path.string() + ": " + e.what());
  }
}

// -- rendering --------------------------------------------------------------------

namespace detail {

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += ch;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

}  // namespace detail

inline constexpr const char* kReportCsvHeader =
    "dataset,learner,seed,task_kind,nss,cci,overwrite,n_episodes,acc_mean,acc_std,atm_mean,"
    "mac_mean,error";

inline std::string render_csv(const BenchReport& report) {
  std::string out = std::string(kReportCsvHeader) + "\n";
  for (const auto& r : report.rows) {
    out += detail::csv_field(r.dataset) + "," + detail::csv_field(r.learner) + "," +
           std::to_string(r.seed) + "," + std::string(task_kind_name(r.kind)) + "," +
           std::to_string(r.cell.nss) + "," + std::to_string(r.cell.cci) + "," +
           (r.cell.overwrite ? "true" : "false") + ",";
    if (r.ok()) {
      out += std::to_string(r.summary.n_episodes) + "," + detail::fixed(r.summary.accuracy_mean) +
             "," + detail::fixed(r.summary.accuracy_std) + "," + detail::fixed(r.summary.atm_mean) +
             "," + detail::fixed(r.summary.mac_mean, 1) + ",";
    } else {
      out += "0,,,,," + detail::csv_field(r.error);
    }
    out += "\n";
  }
  return out;
}

inline BenchReport parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kReportCsvHeader)
    throw Error(ErrorCode::Config, "not a benchmark report (header mismatch)");
  BenchReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 13) throw Error(ErrorCode::Config, "bad report row: " + line);
    try {
      BenchRow r;
      r.dataset = f[0];
      r.learner = f[1];
      r.seed = static_cast<std::uint32_t>(std::stoul(f[2]));
      r.cell = {static_cast<std::uint32_t>(std::stoul(f[4])),
                static_cast<std::uint32_t>(std::stoul(f[5])), f[6] == "true"};
      r.kind = derive_task_kind({r.cell.nss, r.cell.cci, 1, 1, 1, r.cell.overwrite, 0});
      r.error = f[12];
      if (r.ok()) {
        r.summary = {std::stoul(f[7]), std::stod(f[8]), std::stod(f[9]), std::stod(f[10]),
                     std::stod(f[11])};
      } else if (r.error.empty()) {
        r.error = "failed";
      }
      report.rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::Config, "bad report row: " + line);
    }
  }
  return report;
}

/// One table; a row per (dataset, learner), a column per grid cell. Cells read
/// "mean ± std" in percent, where std is taken across seeds (or across
/// episodes when there is a single seed). Failed cells read "—".
inline std::string render_markdown(const BenchReport& report) {
  if (report.rows.empty()) throw Error(ErrorCode::EmptyReport, "report has no rows");
  std::vector<GridCell> cells;
  std::vector<std::pair<std::string, std::string>> row_keys;
  for (const auto& r : report.rows) {
    if (std::find(cells.begin(), cells.end(), r.cell) == cells.end()) cells.push_back(r.cell);
    const std::pair<std::string, std::string> key{r.dataset, r.learner};
    if (std::find(row_keys.begin(), row_keys.end(), key) == row_keys.end()) row_keys.push_back(key);
  }
  std::stable_sort(row_keys.begin(), row_keys.end(),
                   [&](const auto& a, const auto& b) {
                     auto first_of = [&](const std::string& d) {
                       for (std::size_t i = 0; i < report.rows.size(); ++i)
                         if (report.rows[i].dataset == d) return i;
                       return report.rows.size();
                     };
                     return first_of(a.first) < first_of(b.first);
                   });

  std::string out = "| Dataset | Learner |";
  std::string rule = "|---|---|";
  for (const auto& c : cells) {
    const auto kind = derive_task_kind({c.nss, c.cci, 1, 1, 1, c.overwrite, 0});
    out += " " + std::string(task_kind_name(kind)) + " NSS=" + std::to_string(c.nss) +
           " CCI=" + std::to_string(c.cci) + " O=" + (c.overwrite ? "T" : "F") + " |";
    rule += "---|";
  }
  out += "\n" + rule + "\n";
  for (const auto& [dataset, learner] : row_keys) {
    out += "| " + dataset + " | " + learner + " |";
    for (const auto& c : cells) {
      std::vector<const BenchRow*> runs;
      bool failed = false;
      for (const auto& r : report.rows)
        if (r.dataset == dataset && r.learner == learner && r.cell == c) {
          runs.push_back(&r);
          failed = failed || !r.ok();
        }
      if (runs.empty() || failed) {
        out += " — |";
        continue;
      }
      std::vector<double> means;
      for (const auto* r : runs) means.push_back(r->summary.accuracy_mean);
      const auto across = aggregate(means);
      const double sd = runs.size() > 1 ? across.std : runs.front()->summary.accuracy_std;
      out += " " + detail::fixed(100.0 * across.mean, 2) + " ± " + detail::fixed(100.0 * sd, 2) +
             " |";
    }
    out += "\n";
  }
  return out;
}

enum class ReportFormat { Csv, Markdown };

inline std::string render_report(const BenchReport& report, ReportFormat format) {
  if (report.rows.empty()) throw Error(ErrorCode::EmptyReport, "report has no rows");
  return format == ReportFormat::Csv ? render_csv(report) : render_markdown(report);
}

}  // namespace cfsl
