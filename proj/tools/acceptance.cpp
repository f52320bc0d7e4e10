// Runs every acceptance criterion and prints one PASS/FAIL line each.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>

#include "lazydit/checkpoint.hpp"
#include "lazydit/cli.hpp"
#include "lazydit/config.hpp"
#include "lazydit/error.hpp"
#include "lazydit/format.hpp"
#include "lazydit/lazy_runtime.hpp"
#include "lazydit/prng.hpp"
#include "lazydit/theory.hpp"
#include "lazydit/trainer.hpp"

using namespace lazydit;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

double cli_tmacs(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  if (run_cli(args, out, err) != 0) throw Error("macs failed: " + err.str());
  return std::stod(out.str());
}

Outcome mac_reproduction() {
  const auto start = Clock::now();
  const double t256 = cli_tmacs({"macs", "--preset", "xl2-256", "--steps", "50", "--lazy-ratio", "0"});
  const double t512 = cli_tmacs({"macs", "--preset", "xl2-512", "--steps", "50", "--lazy-ratio", "0"});
  const double half = cli_tmacs(
      {"macs", "--preset", "xl2-256", "--steps", "50", "--lazy-ratio", "0.5", "--overhead", "on"});
  const double secs = seconds_since(start);
  const bool ok = t256 >= 5.61 && t256 <= 5.83 && t512 >= 22.39 && t512 <= 23.31 && half >= 2.81 &&
                  half <= 2.93 && secs < 1.0;
  return {ok, "xl2-256=" + fmt(t256) + " xl2-512=" + fmt(t512) + " half=" + fmt(half) +
                  " TMACs in " + fmt(secs, 2) + "s"};
}

struct Toy {
  ModelWeights w;
  NoiseSchedule sched;
  SamplerPlan plan;
  std::vector<Mat> z;
  std::vector<int> labels;
};

Toy make_toy(int layers, int patches, int hidden, int steps, int batch, std::uint64_t seed) {
  ModelConfig mc;
  mc.layers = layers;
  mc.patches = patches;
  mc.hidden = hidden;
  mc.train_steps = 100;
  mc.num_classes = 4;
  mc.weight_clip = 0.5;
  Toy t{init_model(mc, seed), build_schedule(100), uniform_plan(100, steps, 1.5), {}, {}};
  Prng rng(seed ^ 0x5a5a);
  for (int b = 0; b < batch; ++b) {
    t.labels.push_back(static_cast<int>(rng.below(4)));
    t.z.push_back(Mat::random_normal(static_cast<std::size_t>(patches), static_cast<std::size_t>(hidden), rng));
  }
  return t;
}

Outcome zero_skip_equivalence() {
  const auto start = Clock::now();
  const Toy t = make_toy(4, 16, 32, 20, 8, 11);
  const std::vector<Mat> dense = sample_dense(t.w, t.sched, t.plan, t.z, t.labels);
  LazySampleOptions opts;
  opts.gate.score_override = constant_score(0.0);
  const SampleResult lazy = sample_lazy(t.w, PredictorBank(4, 32), t.sched, t.plan, t.z, t.labels, opts);
  const double secs = seconds_since(start);
  const bool same = lazy.latents == dense;
  const std::int64_t skips = lazy.stats.skipped_count(ModuleKind::kAttn) + lazy.stats.skipped_count(ModuleKind::kFeed);
  return {same && skips == 0 && secs < 10.0,
          std::string(same ? "bit-identical" : "MISMATCH") + ", " + std::to_string(skips) + " skips, " +
              fmt(secs, 2) + "s"};
}

Outcome cache_semantics() {
  const Toy t = make_toy(3, 6, 8, 12, 4, 12);
  std::map<std::tuple<int, int, int>, std::pair<int, Mat>> last;  // (layer, kind, stream) -> (step, Y)
  std::int64_t events = 0, matched = 0;
  LazySampleOptions opts;
  opts.gate.score_override = [](const ScoreQuery& q) {
    const std::uint64_t h = (static_cast<std::uint64_t>(q.site.layer) * 131 + index_of(q.site.kind) * 17 +
                             q.site.stream * 7 + q.site.step_index * 3) % 5;
    return h < 3 ? 0.9 : 0.1;
  };
  opts.observer = [&](const ModuleEvent& e) {
    const auto key = std::make_tuple(e.site.layer, index_of(e.site.kind), e.site.stream);
    if (e.skipped) {
      ++events;
      const auto it = last.find(key);
      if (it != last.end() && it->second.first == e.site.step_index - 1 && it->second.second == e.output) ++matched;
    }
    last[key] = {e.site.step_index, e.output};
  };
  (void)sample_lazy(t.w, PredictorBank(3, 8), t.sched, t.plan, t.z, t.labels, opts);
  return {events > 0 && matched == events,
          std::to_string(matched) + "/" + std::to_string(events) + " skip events replayed the cached output"};
}

Outcome theory_suites() {
  const auto start = Clock::now();
  TheoryConfig cfg;
  cfg.trials = 1000;
  std::vector<BoundReport> reports;
  for (const char* suite : {"scaling", "lipschitz", "similarity", "propagation"}) {
    for (BoundReport& r : run_suite(suite, cfg)) reports.push_back(std::move(r));
  }
  const double secs = seconds_since(start);
  bool ok = secs < 60.0;
  std::string detail;
  for (const BoundReport& r : reports) {
    ok = ok && r.pass && r.trials >= 1000;
    detail += r.name + "=" + fmt(r.worst_ratio, 3) + (r.pass ? "" : "(VIOLATED)") + " ";
  }
  return {ok, detail + "in " + fmt(secs, 2) + "s"};
}

Outcome gradient_correctness() {
  Prng rng(2024);
  double worst = 0.0;
  std::size_t coords = 0;
  for (int config = 0; config < 10; ++config) {
    const int layers = 1 + static_cast<int>(rng.below(4));
    const int hidden = 2 + static_cast<int>(rng.below(15));
    ModelConfig mc;
    mc.layers = layers;
    mc.patches = 2 + static_cast<int>(rng.below(7));
    mc.hidden = hidden;
    mc.train_steps = 100;
    mc.num_classes = 3;
    mc.weight_clip = 0.5;
    const ModelWeights w = init_model(mc, 500 + config);
    const NoiseSchedule sched = build_schedule(100);
    const SamplerPlan plan = uniform_plan(100, 10, 1.5);
    const GaussianMixture data(DataConfig{mc.patches, hidden, 3, 1.0, 0.5}, 600 + config);
    TrainConfig cfg;
    cfg.batch = 1 + static_cast<int>(rng.below(4));
    cfg.subplan = 2 + static_cast<int>(rng.below(3));
    cfg.rho_attn = std::pow(10.0, -rng.uniform(0.0, 4.0));
    cfg.rho_feed = std::pow(10.0, -rng.uniform(0.0, 4.0));
    PredictorBank bank(layers, hidden);
    for (double& x : bank.params()) x = 0.3 * rng.normal();
    const TrainBatch batch = make_batch(w, sched, plan, data, cfg, rng);
    std::vector<ScoreRecord> rec;
    (void)total_loss(w, sched, bank, batch, cfg, &rec);
    const PredictorBank an = analytic_lazy_grad(bank, rec, cfg.rho_attn, cfg.rho_feed, cfg.batch);
    const PredictorBank fd = fd_gradient(
        [&](const PredictorBank& b) { return lazy_objective(b, rec, cfg.rho_attn, cfg.rho_feed, cfg.batch); },
        bank, 1e-5);
    double scale = 0.0;
    for (double g : an.params()) scale = std::max(scale, std::abs(g));
    for (std::size_t i = 0; i < an.num_params(); ++i) {
      const double a = an.params()[i];
      worst = std::max(worst, std::abs(fd.params()[i] - a) / std::max(std::abs(a), 1e-6 * scale));
    }
    coords += an.num_params();
  }
  return {worst <= 1e-6, "max relative error " + fmt(worst, 3) + " over " + std::to_string(coords) + " coordinates"};
}

Outcome training_behavior() {
  const auto start = Clock::now();
  const RunConfig rc;
  const ModelWeights w = init_model(rc.model_config(), derive_seed(rc.seed, "model"));
  const NoiseSchedule sched = rc.build_noise_schedule();
  const SamplerPlan plan = rc.build_plan();
  const GaussianMixture data(rc.data_config(), derive_seed(rc.seed, "data"));
  const TrainSetup setup{w, sched, plan, data};
  const TrainResult r = train_loop(setup, rc.train_config());
  const double secs = seconds_since(start);
  bool finite = true;
  for (const LossTraceRow& row : r.trace) finite = finite && std::isfinite(row.loss.total);
  const bool loss_ok = finite && r.final_eval.total <= r.initial_eval.total;
  const bool gamma_ok = r.gamma_attn > 0.0 && r.gamma_feed > 0.0;

  const std::vector<SweepRow> rows = penalty_sweep(setup, rc.train_config(), {1e-7, 1e-4, 1e-2});
  const SweepRow& lo = rows.front();
  const SweepRow& hi = rows.back();
  const bool order = lo.gamma_attn <= hi.gamma_attn && lo.gamma_feed <= hi.gamma_feed;
  std::string detail = std::to_string(rc.train.steps) + " steps in " + fmt(secs, 3) + "s, loss " +
                       fmt(r.initial_eval.total, 5) + " -> " + fmt(r.final_eval.total, 5) + ", gamma attn/feed " +
                       fmt(r.gamma_attn, 3) + "/" + fmt(r.gamma_feed, 3) + "; sweep";
  for (const SweepRow& row : rows) {
    detail += " rho=" + fmt(row.rho, 2) + ":" + fmt(row.gamma_attn, 3) + "/" + fmt(row.gamma_feed, 3);
  }
  return {secs < 300.0 && loss_ok && gamma_ok && order, detail};
}

Outcome lazy_ratio_arithmetic() {
  Prng rng(77);
  int agree = 0;
  bool boundary_ok = true;
  for (int run = 0; run < 100; ++run) {
    const int layers = 1 + static_cast<int>(rng.below(3));
    const int hidden = 3 + static_cast<int>(rng.below(4));
    const int steps = 2 + static_cast<int>(rng.below(6));
    const int batch = 1 + static_cast<int>(rng.below(3));
    const Toy t = make_toy(layers, 3, hidden, steps, batch, 900 + run);
    PredictorBank bank(layers, hidden);
    const double spread = rng.uniform(0.05, 1.0);
    for (double& x : bank.params()) x = spread * rng.normal();
    std::vector<std::array<int, 2>> bits(static_cast<std::size_t>(2 * batch), {0, 0});
    LazySampleOptions opts;
    const bool pin = run % 4 == 0;
    if (pin) {
      // every fourth run pins some scores exactly at the threshold
      opts.gate.score_override = [&](const ScoreQuery& q) {
        return (q.site.step_index + q.site.layer) % 2 == 0 ? 0.5 : lazy_score(q.z, bank.weight(q.site.layer, q.site.kind));
      };
    }
    opts.observer = [&](const ModuleEvent& e) {
      if (e.score == 0.5 && e.skipped) boundary_ok = false;
      bits[static_cast<std::size_t>(e.site.stream)][index_of(e.site.kind)] += e.skipped ? 1 : 0;
    };
    const SampleResult res = sample_lazy(t.w, bank, t.sched, t.plan, t.z, t.labels, opts);
    bool same = true;
    for (ModuleKind kind : kModuleKinds) {
      const Vec g = lazy_ratio(res.stats, kind);
      for (int s = 0; s < 2 * batch; ++s) {
        same = same && g[s] == static_cast<double>(bits[s][index_of(kind)]) / (layers * steps);
      }
    }
    agree += same ? 1 : 0;
  }
  const Toy t = make_toy(2, 3, 4, 5, 2, 5);
  LazySampleOptions half;
  half.gate.score_override = constant_score(0.5);
  const SampleResult at = sample_lazy(t.w, PredictorBank(2, 4), t.sched, t.plan, t.z, t.labels, half);
  const bool none = at.stats.skipped_count(ModuleKind::kAttn) + at.stats.skipped_count(ModuleKind::kFeed) == 0;
  return {agree == 100 && boundary_ok && none,
          std::to_string(agree) + "/100 runs agree with the recount; s=0.5 " +
              (boundary_ok && none ? "never skips" : "SKIPPED")};
}

std::vector<std::string> artifact_bytes(const fs::path& dir, const std::string& config) {
  std::ostringstream out, err;
  const std::string ck = (dir / "model.ckpt").string();
  if (run_cli({"train", "--config", config, "--out", ck}, out, err) != 0) throw Error(err.str());
  if (run_cli({"sample", "--config", config, "--ckpt", ck, "--out", (dir / "s").string()}, out, err) != 0) {
    throw Error(err.str());
  }
  std::vector<std::string> files;
  for (const char* f : {"model.loss.csv", "model.ckpt", "s/stats.json", "s/heatmap.csv", "s/latents.ckpt"}) {
    files.push_back(read_file((dir / f).string()));
  }
  return files;
}

Outcome determinism_and_persistence() {
  const fs::path root = fs::temp_directory_path() / "lazydit_acceptance";
  fs::remove_all(root);
  fs::create_directories(root / "a");
  fs::create_directories(root / "b");
  RunConfig rc;
  rc.train.steps = 20;
  rc.train.eval_batch = 8;
  rc.sample_batch = 4;
  const std::string config = (root / "config.json").string();
  write_file_atomic(config, to_json(rc).dump(2));
  const bool identical = artifact_bytes(root / "a", config) == artifact_bytes(root / "b", config);

  const std::string ck = (root / "a" / "model.ckpt").string();
  const ModelCheckpoint loaded = load_model_checkpoint(ck);
  const std::string resaved = (root / "resaved.ckpt").string();
  save_model_checkpoint(resaved, loaded.weights, loaded.bank ? &*loaded.bank : nullptr, loaded.meta);
  const bool round_trip = read_file(resaved) == read_file(ck);

  std::string bytes = read_file(ck);
  bytes[bytes.size() / 2 + inspect_checkpoint(ck).blob_bytes / 4] ^= 0x10;
  write_file_atomic((root / "corrupt.ckpt").string(), bytes);
  bool rejected = false;
  try {
    (void)load_model_checkpoint((root / "corrupt.ckpt").string());
  } catch (const ChecksumError&) {
    rejected = true;
  }
  return {identical && round_trip && rejected,
          std::string("metrics ") + (identical ? "byte-identical" : "DIFFER") + ", round trip " +
              (round_trip ? "bit-exact" : "BROKEN") + ", corruption " + (rejected ? "rejected" : "ACCEPTED")};
}

Outcome ddim_identities() {
  const NoiseSchedule sched = build_schedule(1000);
  Prng rng(99);
  int ok = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng.below(8), d = 1 + rng.below(8);
    const Mat z = Mat::random_normal(n, d, rng, std::pow(10.0, rng.uniform(-3, 3)));
    const Mat e = Mat::random_normal(n, d, rng, std::pow(10.0, rng.uniform(-3, 3)));
    const int t = static_cast<int>(rng.below(1001));
    const double w = 1.0 + rng.uniform(0.0, 20.0);
    ok += (ddim_step(z, e, t, t, sched) == z && cfg_combine(z, z, w) == z) ? 1 : 0;
  }
  return {ok == 1000, std::to_string(ok) + "/1000 cases exact"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 mac-reproduction", mac_reproduction},
      {"2 zero-skip-equivalence", zero_skip_equivalence},
      {"3 cache-semantics", cache_semantics},
      {"4 theory-suites", theory_suites},
      {"5 gradient-correctness", gradient_correctness},
      {"6 training-behavior", training_behavior},
      {"7 lazy-ratio-arithmetic", lazy_ratio_arithmetic},
      {"8 determinism-persistence", determinism_and_persistence},
      {"9 ddim-identities", ddim_identities},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " | " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
