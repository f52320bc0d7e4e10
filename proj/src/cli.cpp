#include "lazydit/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "lazydit/checkpoint.hpp"
#include "lazydit/config.hpp"
#include "lazydit/error.hpp"
#include "lazydit/format.hpp"
#include "lazydit/lazy_runtime.hpp"
#include "lazydit/macs.hpp"
#include "lazydit/prng.hpp"
#include "lazydit/theory.hpp"
#include "lazydit/trainer.hpp"

namespace lazydit {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const ChecksumError*>(&e)) return "checksum";
  if (dynamic_cast<const VersionError*>(&e)) return "version";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  if (dynamic_cast<const OverflowError*>(&e)) return "overflow";
  if (dynamic_cast<const ConvergenceError*>(&e)) return "convergence";
  return "internal";
}

RunConfig config_from(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

struct World {
  RunConfig cfg;
  ModelWeights weights;
  NoiseSchedule schedule;
  SamplerPlan plan;
  GaussianMixture data;
};

World build_world(const RunConfig& cfg) {
  cfg.validate();
  return {cfg, init_model(cfg.model_config(), derive_seed(cfg.seed, "model")),
          cfg.build_noise_schedule(), cfg.build_plan(),
          GaussianMixture(cfg.data_config(), derive_seed(cfg.seed, "data"))};
}

std::string sibling(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  p.replace_extension();
  return p.string() + suffix;
}

std::string double_list(const Vec& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s + "]";
}

int cmd_gen_data(const std::string& config_path, const std::string& out_path, int size,
                 std::ostream& out) {
  RunConfig cfg = config_from(config_path);
  if (size > 0) cfg.data.size = size;
  cfg.validate();
  const Dataset ds = gen_synthetic_dataset(cfg.data_config(), derive_seed(cfg.seed, "data"),
                                           static_cast<std::size_t>(cfg.data.size));
  ojson meta;
  meta["config"] = to_json(cfg);
  save_dataset(out_path, ds, meta);
  out << "wrote " << ds.tokens.size() << " samples to " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_path, std::string loss_path,
              int steps, std::ostream& out) {
  RunConfig cfg = config_from(config_path);
  if (steps >= 0) cfg.train.steps = steps;
  const World world = build_world(cfg);
  const TrainSetup setup{world.weights, world.schedule, world.plan, world.data};
  const TrainResult r = train_loop(setup, cfg.train_config());
  if (loss_path.empty()) loss_path = sibling(out_path, ".loss.csv");
  write_file_atomic(loss_path, loss_trace_csv(r.trace));
  ojson meta;
  meta["config"] = to_json(cfg);
  meta["gamma_attn"] = r.gamma_attn;
  meta["gamma_feed"] = r.gamma_feed;
  meta["initial_eval_loss"] = r.initial_eval.total;
  meta["final_eval_loss"] = r.final_eval.total;
  save_model_checkpoint(out_path, world.weights, &r.bank, meta);
  out << "steps " << cfg.train.steps << "\n"
      << "initial_eval_loss " << format_double(r.initial_eval.total) << "\n"
      << "final_eval_loss " << format_double(r.final_eval.total) << "\n"
      << "gamma_attn " << format_double(r.gamma_attn) << "\n"
      << "gamma_feed " << format_double(r.gamma_feed) << "\n"
      << "checkpoint " << out_path << "\n"
      << "loss_trace " << loss_path << "\n";
  return 0;
}

int cmd_sample(const std::string& config_path, const std::string& ckpt_path, bool lazy,
               std::string out_dir, int batch, std::ostream& out) {
  RunConfig cfg = config_from(config_path);
  if (batch > 0) cfg.sample_batch = batch;
  if (out_dir.empty()) out_dir = cfg.output_dir;
  World world = build_world(cfg);
  PredictorBank bank(cfg.model.layers, cfg.model.hidden);
  if (!ckpt_path.empty()) {
    ModelCheckpoint ck = load_model_checkpoint(ckpt_path);
    const ModelConfig& a = ck.weights.config;
    const ModelConfig b = cfg.model_config();
    if (a.layers != b.layers || a.patches != b.patches || a.hidden != b.hidden ||
        a.num_classes != b.num_classes || a.train_steps != b.train_steps) {
      throw ConfigError("checkpoint model shape does not match the config");
    }
    world.weights = std::move(ck.weights);
    if (ck.bank) bank = *ck.bank;
  }

  Prng rng(derive_seed(cfg.seed, "sample"));
  std::vector<Mat> z_init;
  std::vector<int> labels;
  for (int b = 0; b < cfg.sample_batch; ++b) {
    labels.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.model.num_classes))));
    z_init.push_back(Mat::random_normal(static_cast<std::size_t>(cfg.model.patches),
                                        static_cast<std::size_t>(cfg.model.hidden), rng));
  }

  SampleResult result;
  if (lazy) {
    LazySampleOptions opts;
    opts.gate.threshold = cfg.lazy.threshold;
    result = sample_lazy(world.weights, bank, world.schedule, world.plan, z_init, labels, opts);
  } else {
    result.latents = sample_dense(world.weights, world.schedule, world.plan, z_init, labels);
    result.stats = RunStats(cfg.model.layers, world.plan.num_steps(), 2 * cfg.sample_batch);
  }

  std::vector<NamedTensor> tensors;
  for (std::size_t b = 0; b < result.latents.size(); ++b) {
    tensors.push_back({"latent." + std::to_string(b), result.latents[b]});
  }
  ojson meta;
  meta["labels"] = labels;
  meta["lazy"] = lazy;
  meta["config"] = to_json(cfg);
  fs::create_directories(out_dir);
  save_checkpoint((fs::path(out_dir) / "latents.ckpt").string(), "latents", tensors, meta);
  write_file_atomic((fs::path(out_dir) / "heatmap.csv").string(), heatmap_csv(result.stats));

  const double ga = mean_lazy_ratio(result.stats, ModuleKind::kAttn);
  const double gf = mean_lazy_ratio(result.stats, ModuleKind::kFeed);
  const std::int64_t steps = world.plan.num_steps(), streams = 2 * cfg.sample_batch;
  const std::int64_t evals = steps * streams * cfg.model.layers;
  const ModelConfig mc = cfg.model_config();
  const double dense_macs =
      static_cast<double>(evals) * (module_macs(mc, ModuleKind::kAttn) + module_macs(mc, ModuleKind::kFeed));
  double executed = dense_macs;
  if (lazy) {
    executed = static_cast<double>(evals - result.stats.skipped_count(ModuleKind::kAttn)) *
                   module_macs(mc, ModuleKind::kAttn) +
               static_cast<double>(evals - result.stats.skipped_count(ModuleKind::kFeed)) *
                   module_macs(mc, ModuleKind::kFeed) +
               2.0 * static_cast<double>(evals) * predictor_macs(mc);
  }
  std::ostringstream stats;
  stats << "{\n"
        << "  \"lazy\": " << (lazy ? "true" : "false") << ",\n"
        << "  \"batch\": " << cfg.sample_batch << ",\n"
        << "  \"steps\": " << steps << ",\n"
        << "  \"streams\": " << streams << ",\n"
        << "  \"gamma_attn\": " << format_double(ga) << ",\n"
        << "  \"gamma_feed\": " << format_double(gf) << ",\n"
        << "  \"lazy_ratio_attn\": " << double_list(lazy_ratio(result.stats, ModuleKind::kAttn)) << ",\n"
        << "  \"lazy_ratio_feed\": " << double_list(lazy_ratio(result.stats, ModuleKind::kFeed)) << ",\n"
        << "  \"skipped_attn\": " << result.stats.skipped_count(ModuleKind::kAttn) << ",\n"
        << "  \"skipped_feed\": " << result.stats.skipped_count(ModuleKind::kFeed) << ",\n"
        << "  \"module_macs_dense\": " << format_double(dense_macs) << ",\n"
        << "  \"module_macs_executed\": " << format_double(executed) << "\n"
        << "}\n";
  write_file_atomic((fs::path(out_dir) / "stats.json").string(), stats.str());
  out << "gamma_attn " << format_double(ga) << "\n"
      << "gamma_feed " << format_double(gf) << "\n"
      << "out " << out_dir << "\n";
  return 0;
}

int cmd_verify(const std::string& suite, const std::string& out_path, int trials,
               std::uint64_t seed, std::ostream& out) {
  TheoryConfig tc;
  if (trials > 0) tc.trials = trials;
  tc.seed = seed;
  const std::vector<BoundReport> reports = run_suite(suite, tc);
  const std::string text = reports_json(reports);
  if (!out_path.empty()) write_file_atomic(out_path, text);
  bool pass = true;
  for (const BoundReport& r : reports) {
    out << (r.pass ? "PASS " : "FAIL ") << r.name << " trials=" << r.trials
        << " worst_ratio=" << format_double(r.worst_ratio) << "\n";
    pass = pass && r.pass;
  }
  return pass ? 0 : 1;
}

struct MacsArgs {
  std::string preset = "xl2-256";
  int steps = 50;
  double lazy_ratio = 0.0;
  std::string overhead = "auto";
  bool activations = false;
  int layers = 28, hidden = 1152, tokens = 256, mlp_ratio = 4, patch = 2;
  bool no_qkv_proj = false;
  std::string out;
};

int cmd_macs(const MacsArgs& a, std::ostream& out) {
  ArchSpec arch;
  if (a.preset == "custom") {
    arch.layers = a.layers;
    arch.hidden = a.hidden;
    arch.tokens = a.tokens;
    arch.mlp_ratio = a.mlp_ratio;
    arch.patch = a.patch;
    arch.has_qkv_proj = !a.no_qkv_proj;
  } else {
    arch = arch_preset(a.preset);
  }
  arch.count_activation_matmuls = a.activations;
  arch.lazy_predictor_overhead = a.overhead == "on" || (a.overhead == "auto" && a.lazy_ratio > 0.0);
  const MacReport r = mac_report(arch, a.steps, a.lazy_ratio);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", r.tmacs);
  out << buf << " TMACs\n";
  std::snprintf(buf, sizeof buf, "%.4f", r.tmacs_with_activations);
  out << "with_activation_matmuls " << buf << " TMACs\n";
  if (!a.out.empty()) write_file_atomic(a.out, mac_report_json(r));
  return 0;
}

std::vector<double> parse_rhos(const std::string& text) {
  std::vector<double> rhos;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      rhos.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--rhos: cannot parse '" + item + "'");
    }
  }
  if (rhos.size() < 2) throw ConfigError("--rhos needs at least two values");
  return rhos;
}

int cmd_sweep(const std::string& config_path, const std::string& rhos_text, bool unequal,
              std::string out_path, int steps, std::ostream& out) {
  RunConfig cfg = config_from(config_path);
  if (steps >= 0) cfg.train.steps = steps;
  const std::vector<double> rhos = parse_rhos(rhos_text);
  const World world = build_world(cfg);
  const TrainSetup setup{world.weights, world.schedule, world.plan, world.data};
  const std::vector<SweepRow> rows = penalty_sweep(setup, cfg.train_config(), rhos, unequal);
  const std::string csv = sweep_csv(rows);
  if (out_path.empty()) out_path = (fs::path(cfg.output_dir) / "sweep.csv").string();
  write_file_atomic(out_path, csv);
  out << csv;
  return 0;
}

int cmd_inspect(const std::string& path, std::ostream& out) {
  const CheckpointHeader h = inspect_checkpoint(path);
  ojson j;
  j["format_version"] = h.format_version;
  j["kind"] = h.kind;
  j["crc32"] = h.crc32;
  j["blob_bytes"] = h.blob_bytes;
  j["tensors"] = ojson::array();
  for (const TensorEntry& t : h.tensors) {
    j["tensors"].push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}, {"offset", t.offset}});
  }
  j["meta"] = h.meta;
  out << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lazy-learning diffusion transformer toolkit", "lazydit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string config, out_path, ckpt, loss_out, lazy = "on", suite = "all", rhos = "1e-7,1e-4,1e-2";
  int size = 0, steps = -1, batch = 0, trials = 0;
  std::uint64_t seed = 0;
  bool unequal = false;
  MacsArgs macs;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic Gaussian-mixture dataset");
  gen->add_option("--config", config, "Run config JSON")->check(CLI::ExistingFile);
  gen->add_option("--out", out_path, "Dataset file")->required();
  gen->add_option("--size", size, "Override data.size")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Train the similarity predictors");
  train->add_option("--config", config, "Run config JSON")->check(CLI::ExistingFile);
  train->add_option("--out", out_path, "Checkpoint path")->required();
  train->add_option("--loss-out", loss_out, "Loss trace CSV (default <out>.loss.csv)");
  train->add_option("--steps", steps, "Override train.steps")->check(CLI::NonNegativeNumber);

  auto* sample = app.add_subcommand("sample", "Run DDIM sampling, dense or lazy");
  sample->add_option("--config", config, "Run config JSON")->check(CLI::ExistingFile);
  sample->add_option("--ckpt", ckpt, "Model checkpoint")->check(CLI::ExistingFile);
  sample->add_option("--lazy", lazy, "on|off")->check(CLI::IsMember({"on", "off"}));
  sample->add_option("--out", out_path, "Output directory (default output.dir)");
  sample->add_option("--batch", batch, "Override sample.batch")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "Run the numerical bound checks");
  verify->add_option("--suite", suite, "Suite")
      ->check(CLI::IsMember({"all", "scaling", "lipschitz", "similarity", "linear", "propagation"}));
  verify->add_option("--out", out_path, "Report JSON");
  verify->add_option("--trials", trials, "Trials per bound")->check(CLI::PositiveNumber);
  verify->add_option("--seed", seed, "Seed");

  auto* mac = app.add_subcommand("macs", "Multiply-accumulate cost model");
  mac->add_option("--preset", macs.preset, "xl2-256|xl2-512|custom")
      ->check(CLI::IsMember({"xl2-256", "xl2-512", "custom"}));
  mac->add_option("--steps", macs.steps, "Sampling steps")->check(CLI::NonNegativeNumber);
  mac->add_option("--lazy-ratio", macs.lazy_ratio, "Fraction of skipped modules")->check(CLI::Range(0.0, 1.0));
  mac->add_option("--overhead", macs.overhead, "Predictor overhead: auto|on|off")
      ->check(CLI::IsMember({"auto", "on", "off"}));
  mac->add_flag("--activations", macs.activations, "Count N^2 D attention matmuls");
  mac->add_option("--layers", macs.layers, "custom: layers")->check(CLI::PositiveNumber);
  mac->add_option("--hidden", macs.hidden, "custom: hidden size")->check(CLI::PositiveNumber);
  mac->add_option("--tokens", macs.tokens, "custom: token count")->check(CLI::PositiveNumber);
  mac->add_option("--mlp-ratio", macs.mlp_ratio, "custom: MLP ratio")->check(CLI::PositiveNumber);
  mac->add_flag("--no-qkv-proj", macs.no_qkv_proj, "custom: bare Z W, Z W_V attention");
  mac->add_option("--out", macs.out, "Report JSON");

  auto* sweep = app.add_subcommand("sweep", "Train once per penalty ratio and tabulate laziness");
  sweep->add_option("--config", config, "Run config JSON")->check(CLI::ExistingFile);
  sweep->add_option("--rhos", rhos, "Comma-separated penalty ratios");
  sweep->add_flag("--unequal", unequal, "Also run rho_attn = 1.5 rho, rho_feed = 0.5 rho");
  sweep->add_option("--out", out_path, "Sweep CSV (default output.dir/sweep.csv)");
  sweep->add_option("--steps", steps, "Override train.steps")->check(CLI::NonNegativeNumber);

  auto* inspect = app.add_subcommand("inspect", "Print a checkpoint header without reading the blob");
  inspect->add_option("path", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*gen) return cmd_gen_data(config, out_path, size, out);
    if (*train) return cmd_train(config, out_path, loss_out, steps, out);
    if (*sample) return cmd_sample(config, ckpt, lazy == "on", out_path, batch, out);
    if (*verify) return cmd_verify(suite, out_path, trials, seed, out);
    if (*mac) return cmd_macs(macs, out);
    if (*sweep) return cmd_sweep(config, rhos, unequal, out_path, steps, out);
    if (*inspect) return cmd_inspect(ckpt, out);
  } catch (const std::exception& e) {
    nlohmann::ordered_json j;
    j["error"] = error_kind(e);
    j["message"] = e.what();
    err << j.dump() << "\n";
    return 1;
  }
  return 2;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace lazydit
