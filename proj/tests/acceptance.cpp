// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "box_oracle.hpp"
#include "cfsl/bench.hpp"
#include "cfsl/learners.hpp"
#include "cfsl/sampler.hpp"
#include "cfsl/server.hpp"
#include "cfsl/synthetic.hpp"
#include "laws.hpp"
#include "support.hpp"

using namespace cfsl;
using Clock = std::chrono::steady_clock;

namespace {

// Captured from the reference build; any platform must reproduce them.
constexpr std::uint64_t kGoldenEpisodeHash = 0x3125fa6d78aa44ebULL;
constexpr std::uint64_t kGoldenCsvHash = 0x491fa1621623656eULL;

struct Outcome {
  bool pass = true;
  std::string detail;
};

int g_failures = 0;

void report(const char* name, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  std::printf("%s %s: %s [%.1fs]\n", out.pass ? "PASS" : "FAIL", name, out.detail.c_str(), secs);
  std::fflush(stdout);
  if (!out.pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

TaskConfig config(std::uint32_t nss, std::uint32_t cci, bool overwrite, std::uint64_t seed = 0) {
  TaskConfig c;
  c.nss = nss;
  c.cci = cci;
  c.overwrite = overwrite;
  c.seed = seed;
  return c;
}

std::shared_ptr<const DatasetPack> synthetic(std::uint32_t classes, std::uint32_t per_class,
                                             std::uint32_t side, std::uint32_t channels,
                                             std::uint32_t noise, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_classes = classes;
  spec.samples_per_class = per_class;
  spec.height = spec.width = side;
  spec.channels = channels;
  spec.noise = noise;
  spec.seed = seed;
  return std::make_shared<const DatasetPack>(make_synthetic_pack(spec));
}

NamedLearner learner(LearnerKind kind) {
  NamedLearner l;
  l.name = std::string(learner_kind_name(kind));
  l.params.kind = kind;
  return l;
}

// -- 1 -----------------------------------------------------------------------------

Outcome sampler_laws() {
  const auto t0 = Clock::now();
  Xoshiro256ss rng(0xACCE);
  std::size_t violations = 0, episodes = 0;
  std::map<TaskKind, int> kinds;
  std::string first;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto c = testkit::random_config(rng);
    const auto classes = c.n_way * c.num_blocks() + static_cast<std::uint32_t>(rng.below(8));
    const auto per_class = c.cci * c.k_shot + c.k_target + static_cast<std::uint32_t>(rng.below(6));
    const auto pack = testkit::tiny_pack(classes, per_class, rng.next(), 2);
    const auto ep = sample_episode(pack, c, rng.below(1u << 20));
    const auto bad = testkit::episode_violations(ep, pack);
    ++episodes;
    ++kinds[ep.kind()];
    violations += bad.size();
    if (!bad.empty() && first.empty()) first = to_json(c).dump() + ": " + bad.front();
  }
  const double secs = seconds_since(t0);
  std::string detail = std::to_string(episodes) + " episodes (A=" + std::to_string(kinds[TaskKind::NewSamples]) +
                       " B=" + std::to_string(kinds[TaskKind::NewClasses]) +
                       " C=" + std::to_string(kinds[TaskKind::NewClassesOverwrite]) +
                       " D=" + std::to_string(kinds[TaskKind::NewClassesNewSamples]) +
                       " FSL=" + std::to_string(kinds[TaskKind::SingleFSL]) + "), " +
                       std::to_string(violations) + " violations";
  if (!first.empty()) detail += "; first: " + first;
  detail += fmt(", %.2fs < 60s", secs);
  return {violations == 0 && secs < 60.0, detail};
}

// -- 2 -----------------------------------------------------------------------------

Outcome counting() {
  const auto pack = testkit::tiny_pack(120, 16, 5, 2);
  bool ok = true;
  std::string detail;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto b = sample_episode(pack, config(10, 1, false, 3), i);
    std::set<std::uint32_t> classes, labels;
    for (const auto& s : b.support_sets)
      for (const auto& e : s.entries) {
        classes.insert(e.sample.class_id);
        labels.insert(e.label);
      }
    ok = ok && classes.size() == 50 && labels.size() == 50 && b.target.size() == 250 &&
         output_label_count(b.config) == 50;

    const auto d = sample_episode(pack, config(10, 5, false, 3), i);
    std::set<std::uint32_t> d_classes;
    std::map<std::uint32_t, std::uint32_t> per_class;
    for (const auto& s : d.support_sets)
      for (const auto& e : s.entries) {
        d_classes.insert(e.sample.class_id);
        ++per_class[e.sample.class_id];
      }
    bool five_each = true;
    for (const auto& [cls, n] : per_class) five_each = five_each && n == 5;
    ok = ok && d_classes.size() == 10 && five_each;
    if (!ok && detail.empty()) detail = "episode " + std::to_string(i) + " miscounted";
  }
  if (detail.empty())
    detail = "B nss=10: 50 classes, 50 output labels, 250 targets; D nss=10 cci=5: 10 classes x 5 samples (50 episodes each)";
  return {ok, detail};
}

// -- 3 -----------------------------------------------------------------------------

BenchPlan determinism_plan() {
  BenchPlan plan;
  plan.datasets.push_back({"synthetic", synthetic(60, 16, 8, 3, 30, 404)});
  plan.learners = {learner(LearnerKind::Random), learner(LearnerKind::Prototype)};
  plan.episodes = 20;
  plan.seeds = 2;
  plan.data_seed = 2021;
  return plan;
}

Outcome determinism() {
  const auto pack = synthetic(60, 16, 8, 3, 30, 404);
  const auto c = config(8, 2, false, 2021);
  const auto manifest = to_json(sample_episode(*pack, c, 17)).dump();
  const auto rebuilt = synthetic(60, 16, 8, 3, 30, 404);
  const bool episode_repeat = manifest == to_json(sample_episode(*rebuilt, c, 17)).dump();
  std::string suite_a, suite_b;
  for (const auto& ep : sample_eval_suite(*pack, c, 50)) suite_a += to_json(ep).dump();
  for (const auto& ep : sample_eval_suite(*rebuilt, c, 50)) suite_b += to_json(ep).dump();

  const auto csv = render_csv(run_benchmark(determinism_plan()));
  const bool csv_repeat = csv == render_csv(run_benchmark(determinism_plan()));

  const auto ep_hash = testkit::fnv1a(manifest);
  const auto csv_hash = testkit::fnv1a(csv);
  const bool golden = ep_hash == kGoldenEpisodeHash && csv_hash == kGoldenCsvHash;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "episode manifest fnv=%016llx (golden %016llx), csv fnv=%016llx (golden %016llx)",
                static_cast<unsigned long long>(ep_hash),
                static_cast<unsigned long long>(kGoldenEpisodeHash),
                static_cast<unsigned long long>(csv_hash),
                static_cast<unsigned long long>(kGoldenCsvHash));
  std::string detail = buf;
  detail += episode_repeat && suite_a == suite_b ? ", manifests repeat" : ", MANIFEST DRIFT";
  detail += csv_repeat ? ", csv repeats" : ", CSV DRIFT";
  return {episode_repeat && suite_a == suite_b && csv_repeat && golden, detail};
}

// -- 4 -----------------------------------------------------------------------------

Outcome chance_calibration() {
  const auto t0 = Clock::now();
  BenchPlan plan;
  plan.datasets.push_back({"synthetic", synthetic(64, 20, 8, 3, 8, 77)});
  plan.learners = {learner(LearnerKind::Random)};
  plan.episodes = 600;
  plan.seeds = 1;
  plan.data_seed = 600;
  const auto report = run_benchmark(plan);
  bool ok = report.rows.size() == 12;
  double worst = 0.0;
  std::string worst_cell, failures;
  for (const auto& row : report.rows) {
    if (!row.ok()) {
      ok = false;
      failures += " " + row.error;
      continue;
    }
    const auto c = plan.config_for(row.cell);
    const double p = 1.0 / output_label_count(c);
    const double targets = static_cast<double>(c.k_target) * c.n_way * c.num_blocks();
    const double se = std::sqrt(p * (1 - p) / (targets * static_cast<double>(row.summary.n_episodes)));
    const double z = std::abs(row.summary.accuracy_mean - p) / se;
    if (z > worst) {
      worst = z;
      worst_cell = std::string(task_kind_name(row.kind)) + "/" + std::to_string(row.cell.nss) + "/" +
                   std::to_string(row.cell.cci);
    }
    if (z >= 3.0) {
      ok = false;
      failures += " " + worst_cell;
    }
  }
  double b10 = 0.0;
  for (const auto& row : report.rows)
    if (row.cell == GridCell{10, 1, false}) b10 = row.summary.accuracy_mean;
  const double secs = seconds_since(t0);
  ok = ok && secs < 300.0;
  std::string detail = "12 cells x 600 episodes, max |z| = " + fmt("%.2f", worst) + " at " + worst_cell +
                       fmt(", B/10/1 acc %.4f vs 0.02", b10) + fmt(", %.1fs < 300s", secs);
  if (!failures.empty()) detail += "; outside 3 SE:" + failures;
  return {ok, detail};
}

// -- 5 -----------------------------------------------------------------------------

/// Keeps every support image byte-for-byte.
double verbatim_atm(const std::shared_ptr<const DatasetPack>& pack, const Episode& ep) {
  EpisodeSession s(pack, ep);
  while (s.cursor() < s.nss()) {
    const auto set = s.next_support();
    s.store("set/" + std::to_string(set.position), std::as_bytes(std::span(set.pixels)), 1);
  }
  s.request_target();
  return s.submit_predictions(std::vector<std::uint32_t>(s.target_size(), 0)).atm.atm;
}

Outcome atm_oracle() {
  const auto pack = synthetic(40, 12, 64, 3, 20, 5);
  const double expect_proto = 3840.0 / 184320.0;
  bool ok = true;
  std::string detail;
  for (std::uint64_t i = 0; i < 10; ++i) {
    const auto ep = sample_episode(*pack, config(3, 1, false, 9), i);
    const double verbatim = verbatim_atm(pack, ep);
    EpisodeSession none(pack, ep);
    LearnerParams random;
    random.kind = LearnerKind::Random;
    const double zero = run_episode(random, none).score.atm.atm;
    EpisodeSession proto(pack, ep);
    LearnerParams pp;
    pp.kind = LearnerKind::Prototype;
    const auto outcome = run_episode(pp, proto);
    ok = ok && verbatim == 1.0 && zero == 0.0 && outcome.score.atm.atm == expect_proto &&
         outcome.score.memory_bytes == 3840;
    if (i == 0)
      detail = fmt("verbatim %.17g, no-memory %.17g, prototype %.17g", verbatim, zero, outcome.score.atm.atm) +
               " (" + std::to_string(outcome.score.memory_bytes) + " B / 184320 B)";
  }
  detail += fmt(" vs oracle %.17g over 10 episodes", expect_proto);
  return {ok, detail};
}

// -- 6 -----------------------------------------------------------------------------

Outcome trend() {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {0u, 1u}) {
    BenchPlan plan;
    plan.datasets.push_back({"synthetic", synthetic(60, 20, 64, 3, 60, 1000 + seed)});
    plan.grid = {{3, 1, false}, {3, 1, true}, {5, 1, false}, {5, 1, true}, {10, 1, false}, {10, 1, true}};
    plan.learners = {learner(LearnerKind::Prototype), learner(LearnerKind::LinearFineTune)};
    plan.episodes = 200;
    plan.seeds = 1;
    plan.data_seed = seed;
    const auto report = run_benchmark(plan);
    auto acc = [&](const std::string& who, GridCell cell) {
      for (const auto& r : report.rows)
        if (r.learner == who && r.cell == cell) {
          if (!r.ok()) throw Error(ErrorCode::Config, r.error);
          return r.summary.accuracy_mean;
        }
      throw Error(ErrorCode::Config, "missing row");
    };
    detail += "seed " + std::to_string(seed) + ":";
    for (std::uint32_t nss : {3u, 5u, 10u}) {
      const double pb = acc("prototype", {nss, 1, false});
      const double pc = acc("prototype", {nss, 1, true});
      const double lc = acc("linear", {nss, 1, true});
      ok = ok && pb > pc && lc > 0.2;
      detail += fmt(" nss=%g proto B %.3f", nss, pb) + fmt(" > C %.3f, LFT C %.3f > 0.2;", pc, lc);
    }
    detail += " ";
  }
  return {ok, detail};
}

// -- 7 -----------------------------------------------------------------------------

Outcome slim_and_downsample() {
  const auto big = synthetic(1000, 210, 2, 3, 0, 3);
  const auto slimmed = slim(*big, 200);
  bool ok = slimmed.num_classes() == 1000 && slimmed.manifest().total_samples() == 200000;
  for (std::uint32_t c = 0; c < 1000 && ok; c += 97) ok = slimmed.class_size(c) == 200;

  Xoshiro256ss rng(500);
  int worst = 0;
  for (int i = 0; i < 500; ++i) {
    const auto h = static_cast<std::uint32_t>(2 + rng.below(127));
    const auto w = static_cast<std::uint32_t>(2 + rng.below(127));
    const auto ch = rng.below(2) ? 3u : 1u;
    Image img(h, w, ch);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    const auto target = static_cast<std::uint32_t>(1 + rng.below(std::min(h, w)));
    const auto got = box_downsample(img, target);
    worst = std::max(worst, testkit::max_abs_error(got, testkit::area_mean_oracle(img, target, target)));
  }
  ok = ok && worst <= 1;
  return {ok, std::to_string(slimmed.manifest().total_samples()) +
                  " samples after slimming 1000 classes to 200; 500 random box downsamples, max error " +
                  std::to_string(worst) + " <= 1"};
}

// -- 8 -----------------------------------------------------------------------------

wire::Frame request(const std::string& type, std::uint64_t seq, std::uint64_t id) {
  auto f = wire::make_frame(type, seq);
  f.header["session_id"] = id;
  return f;
}

std::string code_of(const wire::Frame& f) {
  return f.type() == wire::msg::kError ? f.header.value("code", std::string("?")) : f.type();
}

/// Reference model of the stream guard.
struct GuardModel {
  std::uint32_t nss, cursor = 0;
  std::size_t target_size;
  enum { Streaming, Awaiting, Closed } phase = Streaming;

  std::string support(std::optional<std::uint32_t> index) {
    if (phase == Closed) return "session_closed";
    const std::uint32_t i = index.value_or(cursor + 1);
    if (i >= 1 && i <= cursor) return "past_set_inaccessible";
    if (cursor >= nss || phase != Streaming || i > nss) return "stream_exhausted";
    if (i != cursor + 1) return "support_out_of_order";
    ++cursor;
    return "SUPPORT";
  }
  std::string target() {
    if (phase == Closed) return "session_closed";
    if (cursor < nss) return "target_not_ready";
    phase = Awaiting;
    return "TARGET";
  }
  std::string predict(std::size_t n) {
    if (phase == Closed) return "session_closed";
    if (phase != Awaiting) return "target_not_ready";
    if (n != target_size) return "prediction_shape";
    phase = Closed;
    return "SCORE";
  }
  std::string store() { return phase == Closed ? "session_closed" : "ACK"; }
};

Outcome stream_guard() {
  const auto pack = synthetic(40, 12, 8, 3, 8, 88);
  const auto c = config(4, 1, false, 4);
  auto service = std::make_shared<EpisodeService>(pack, c);
  EpisodeServer server(service);
  server.bind("127.0.0.1", 0);
  server.start();

  // Scripted adversary over TCP.
  std::vector<std::string> mismatches;
  {
    wire::Client client("127.0.0.1", server.port());
    std::uint64_t seq = 1;
    auto hello = wire::make_frame(wire::msg::kHello, seq++);
    hello.header["version"] = wire::kProtocolVersion;
    const auto id = client.request(hello).header["session_id"].get<std::uint64_t>();
    auto expect = [&](const wire::Frame& f, const std::string& want, const char* step) {
      const auto got = code_of(client.request(f));
      if (got != want) mismatches.push_back(std::string(step) + ": got " + got + ", want " + want);
    };
    expect(request(wire::msg::kNextSupport, seq++, id), "SUPPORT", "first support");
    expect(request(wire::msg::kNextSupport, seq++, id), "SUPPORT", "second support");
    auto past = request(wire::msg::kNextSupport, seq++, id);
    past.header["index"] = 1;
    expect(past, "past_set_inaccessible", "re-request set 1");
    expect(request(wire::msg::kGetTarget, seq++, id), "target_not_ready", "early target");
    expect(request(wire::msg::kNextSupport, seq++, id), "SUPPORT", "third support");
    expect(request(wire::msg::kNextSupport, seq++, id), "SUPPORT", "fourth support");
    expect(request(wire::msg::kNextSupport, seq++, id), "stream_exhausted", "fifth support");
    expect(request(wire::msg::kGetTarget, seq++, id), "TARGET", "target");
    auto predict = request(wire::msg::kPredict, seq++, id);
    predict.header["labels"] = std::vector<std::uint32_t>(service->config().k_target * 5 * 4, 0);
    expect(predict, "SCORE", "predict");
    predict.header["seq"] = seq++;
    expect(predict, "session_closed", "double predict");
  }

  // Fuzzed orderings against the reference model; track exposure.
  Xoshiro256ss rng(8080);
  std::size_t requests = 0, exposure_violations = 0, model_mismatches = 0, sessions = 0;
  const auto target_size = std::size_t{c.k_target} * c.n_way * c.num_blocks();
  auto fuzz_session = [&](const std::function<wire::Frame(const wire::Frame&)>& send) {
    std::uint64_t seq = 1;
    auto hello = wire::make_frame(wire::msg::kHello, seq++);
    hello.header["version"] = wire::kProtocolVersion;
    const auto id = send(hello).header["session_id"].get<std::uint64_t>();
    GuardModel model{c.nss, 0, target_size};
    std::uint32_t last_served = 0;
    bool target_seen = false;
    for (int step = 0; step < 24; ++step) {
      const auto op = rng.below(10);
      wire::Frame f;
      std::string want;
      if (op < 5) {
        f = request(wire::msg::kNextSupport, seq++, id);
        std::optional<std::uint32_t> index;
        if (op >= 3) {
          index = static_cast<std::uint32_t>(rng.below(c.nss + 2));
          f.header["index"] = *index;
        }
        want = model.support(index);
      } else if (op < 7) {
        f = request(wire::msg::kGetTarget, seq++, id);
        want = model.target();
      } else if (op < 9) {
        f = request(wire::msg::kPredict, seq++, id);
        const std::size_t n = rng.below(3) == 0 ? target_size - 1 : target_size;
        f.header["labels"] = std::vector<std::uint32_t>(n, 0);
        want = model.predict(n);
      } else {
        f = request(wire::msg::kStoreBytes, seq++, id);
        f.header["bytes"] = rng.below(1000);
        want = model.store();
      }
      const auto reply = send(f);
      ++requests;
      const auto got = code_of(reply);
      if (got != want) ++model_mismatches;
      if (reply.type() == wire::msg::kSupport) {
        const auto index = reply.header["index"].get<std::uint32_t>();
        if (index != last_served + 1 || target_seen) ++exposure_violations;
        last_served = index;
      }
      if (reply.type() == wire::msg::kTarget) {
        if (last_served != c.nss) ++exposure_violations;
        target_seen = true;
      }
    }
    ++sessions;
  };
  for (int i = 0; i < 2000; ++i) fuzz_session([&](const wire::Frame& f) { return service->handle(f); });
  {
    wire::Client client("127.0.0.1", server.port());
    for (int i = 0; i < 100; ++i) fuzz_session([&](const wire::Frame& f) { return client.request(f); });
  }
  server.stop();

  std::string detail = "scripted adversary: " +
                       (mismatches.empty() ? std::string("all 11 replies as specified") : mismatches.front()) +
                       "; fuzz: " + std::to_string(sessions) + " sessions, " + std::to_string(requests) +
                       " requests, " + std::to_string(model_mismatches) + " reply mismatches, " +
                       std::to_string(exposure_violations) + " exposure violations";
  return {mismatches.empty() && model_mismatches == 0 && exposure_violations == 0, detail};
}

}  // namespace

int main() {
  report("sampler-laws", sampler_laws);
  report("counting", counting);
  report("determinism", determinism);
  report("chance-calibration", chance_calibration);
  report("atm-oracle", atm_oracle);
  report("trend", trend);
  report("slim-downsample", slim_and_downsample);
  report("stream-guard", stream_guard);
  std::printf("%d of 8 criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
