// cfsl: command-line front end for packs, episode sampling, benchmark runs and
// the episode server.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cfsl/bench.hpp"
#include "cfsl/config.hpp"
#include "cfsl/pack.hpp"
#include "cfsl/sampler.hpp"
#include "cfsl/server.hpp"
#include "cfsl/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

cfsl::EpisodeServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->interrupt();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw cfsl::Error(cfsl::ErrorCode::Config, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw cfsl::Error(cfsl::ErrorCode::Config, "cannot write " + path.string());
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual few-shot benchmark toolkit"};
  app.require_subcommand(1);

  // pack ---------------------------------------------------------------------
  auto* pack_cmd = app.add_subcommand("pack", "Build and inspect dataset packs");
  pack_cmd->require_subcommand(1);

  std::string ingest_dir, ingest_out;
  std::uint32_t ingest_res = 64, ingest_channels = 0;
  auto* ingest = pack_cmd->add_subcommand("ingest", "Pack a directory of class folders");
  ingest->add_option("dir", ingest_dir, "Source directory (one sub-folder per class)")->required();
  ingest->add_option("--res", ingest_res, "Output resolution (square)")->required();
  ingest->add_option("--out", ingest_out, "Output pack directory")->required();
  ingest->add_option("--channels", ingest_channels, "Force 1 or 3 channels (default: first image)");

  std::string slim_pack, slim_out;
  std::uint32_t slim_max = 0;
  auto* slim = pack_cmd->add_subcommand("slim", "Keep the first N samples of every class");
  slim->add_option("pack", slim_pack, "Pack directory")->required();
  slim->add_option("--max-per-class", slim_max, "Samples kept per class")->required();
  slim->add_option("--out", slim_out, "Output pack (default: rewrite in place)");

  std::string split_pack, split_out;
  std::uint32_t split_train = 0, split_val = 0, split_test = 0;
  auto* split = pack_cmd->add_subcommand("split", "Class-disjoint train/val/test split");
  split->add_option("pack", split_pack, "Pack directory")->required();
  split->add_option("--train", split_train, "Training classes")->required();
  split->add_option("--val", split_val, "Validation classes")->required();
  split->add_option("--test", split_test, "Test classes")->required();
  split->add_option("--out-dir", split_out, "Where to write <name>.train/.val/.test");

  std::string stats_pack;
  auto* stats_cmd = pack_cmd->add_subcommand("stats", "Print suitability statistics as JSON");
  stats_cmd->add_option("pack", stats_pack, "Pack directory")->required();

  cfsl::SyntheticSpec synth_spec;
  std::string synth_out;
  auto* synth = pack_cmd->add_subcommand("synth", "Generate a cluster-separable synthetic pack");
  synth->add_option("--out", synth_out, "Output pack directory")->required();
  synth->add_option("--classes", synth_spec.num_classes, "Number of classes");
  synth->add_option("--samples", synth_spec.samples_per_class, "Samples per class");
  synth->add_option("--height", synth_spec.height, "Image height");
  synth->add_option("--width", synth_spec.width, "Image width");
  synth->add_option("--channels", synth_spec.channels, "Channels");
  synth->add_option("--noise", synth_spec.noise, "Per-pixel noise amplitude");
  synth->add_option("--seed", synth_spec.seed, "Generator seed");
  synth->add_option("--name", synth_spec.name, "Dataset name");

  // sample -------------------------------------------------------------------
  std::string sample_pack, sample_config, sample_out;
  std::size_t sample_count = 1;
  auto* sample = app.add_subcommand("sample", "Write episode manifests");
  sample->add_option("--pack", sample_pack, "Pack directory")->required();
  sample->add_option("--config", sample_config, "Task config JSON")->required();
  sample->add_option("--count", sample_count, "Number of episodes")->required();
  sample->add_option("--out", sample_out, "Output directory")->required();

  // bench --------------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "Run and render benchmark grids");
  bench->require_subcommand(1);
  std::string plan_path, report_out;
  auto* run = bench->add_subcommand("run", "Run a benchmark plan");
  run->add_option("--plan", plan_path, "Plan JSON")->required();
  run->add_option("--out", report_out, "Report CSV")->required();

  std::string render_in, render_format = "markdown";
  auto* render = bench->add_subcommand("render", "Render a report CSV");
  render->add_option("report", render_in, "Report CSV")->required();
  render->add_option("--format", render_format, "markdown or csv")
      ->check(CLI::IsMember({"markdown", "csv"}));

  // serve --------------------------------------------------------------------
  std::string serve_pack, serve_config, serve_bind = "127.0.0.1:7777";
  double idle_seconds = 300.0;
  auto* serve = app.add_subcommand("serve", "Serve episodes over TCP");
  serve->add_option("--pack", serve_pack, "Pack directory")->required();
  serve->add_option("--config", serve_config, "Task config JSON")->required();
  serve->add_option("--bind", serve_bind, "HOST:PORT");
  serve->add_option("--idle-timeout", idle_seconds, "Seconds before an idle session expires");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      std::optional<std::uint32_t> channels;
      if (ingest_channels != 0) channels = ingest_channels;
      const auto pack = cfsl::ingest(ingest_dir, ingest_res, channels);
      cfsl::write_pack(pack, ingest_out);
      std::cout << "packed " << pack.num_classes() << " classes, "
                << pack.manifest().total_samples() << " samples into " << ingest_out << "\n";
    } else if (*slim) {
      const auto pack = cfsl::slim(cfsl::read_pack(slim_pack), slim_max);
      const auto out = slim_out.empty() ? slim_pack : slim_out;
      cfsl::write_pack(pack, out);
      std::cout << "kept " << pack.manifest().total_samples() << " samples in " << out << "\n";
    } else if (*split) {
      const auto pack = cfsl::read_pack(split_pack);
      const auto parts = cfsl::split_by_class(pack, {split_train, split_val, split_test});
      const fs::path src(split_pack);
      const fs::path dir = split_out.empty() ? src.parent_path() : fs::path(split_out);
      const auto stem = src.filename().string();
      cfsl::write_pack(parts.train, dir / (stem + ".train"));
      cfsl::write_pack(parts.val, dir / (stem + ".val"));
      cfsl::write_pack(parts.test, dir / (stem + ".test"));
      std::cout << "wrote " << (dir / stem).string() << ".{train,val,test}\n";
    } else if (*stats_cmd) {
      std::cout << cfsl::to_json(cfsl::stats(cfsl::read_manifest(stats_pack))).dump(2) << "\n";
    } else if (*synth) {
      cfsl::write_pack(cfsl::make_synthetic_pack(synth_spec), synth_out);
    } else if (*sample) {
      const auto pack = cfsl::read_pack(sample_pack);
      const auto config = cfsl::load_task_config(sample_config);
      fs::create_directories(sample_out);
      for (std::size_t i = 0; i < sample_count; ++i) {
        const auto ep = cfsl::sample_episode(pack, config, i);
        char name[32];
        std::snprintf(name, sizeof name, "episode_%06zu.json", i);
        write_file(fs::path(sample_out) / name, cfsl::to_json(ep).dump(1) + "\n");
      }
    } else if (*run) {
      const auto report = cfsl::run_benchmark(cfsl::load_plan(plan_path));
      write_file(report_out, cfsl::render_csv(report));
      for (const auto& row : report.rows)
        if (!row.ok())
          std::cerr << row.dataset << " " << cfsl::task_kind_name(row.kind) << " nss=" << row.cell.nss
                    << " cci=" << row.cell.cci << ": " << row.error << "\n";
      return report.any_error() ? 1 : 0;
    } else if (*render) {
      const auto report = cfsl::parse_report_csv(read_file(render_in));
      std::cout << cfsl::render_report(report, render_format == "csv" ? cfsl::ReportFormat::Csv
                                                                      : cfsl::ReportFormat::Markdown);
    } else if (*serve) {
      auto pack = std::make_shared<const cfsl::DatasetPack>(cfsl::read_pack(serve_pack));
      auto service = std::make_shared<cfsl::EpisodeService>(
          pack, cfsl::load_task_config(serve_config),
          std::chrono::milliseconds(static_cast<std::int64_t>(idle_seconds * 1000)));
      cfsl::EpisodeServer server(service);
      const auto [host, port] = cfsl::wire::parse_address(serve_bind);
      server.bind(host, port);
      std::cout << "serving on " << host << ":" << server.port() << std::endl;
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.serve();
      g_server = nullptr;
      server.stop();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
