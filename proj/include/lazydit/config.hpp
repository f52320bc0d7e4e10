#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "lazydit/backbone.hpp"
#include "lazydit/dataset.hpp"
#include "lazydit/scheduler.hpp"
#include "lazydit/trainer.hpp"

namespace lazydit {

struct ScheduleConfig {
  int train_steps = 100;
  double beta_min = 1e-4;
  double beta_max = 0.02;
};

struct PlanConfig {
  int steps = 20;
  double guidance = 1.5;
};

struct LazyConfig {
  double rho_attn = 1e-3;
  double rho_feed = 1e-3;
  double threshold = 0.5;
};

struct DataSection {
  double mean_scale = 1.0;
  double noise_scale = 0.5;
  int size = 256;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  ScheduleConfig schedule;
  PlanConfig plan;
  LazyConfig lazy;
  TrainConfig train;
  DataSection data;
  int sample_batch = 8;
  std::string output_dir = "out";

  RunConfig();
  void validate() const;

  // Derived objects; the model's timestep range follows the schedule.
  ModelConfig model_config() const;
  DataConfig data_config() const;
  TrainConfig train_config() const;  // rho from the lazy section, seed from the run
  NoiseSchedule build_noise_schedule() const;
  SamplerPlan build_plan() const;
};

// Independent seeds for weights, data, training and sampling.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

nlohmann::ordered_json to_json(const RunConfig& cfg);
nlohmann::ordered_json to_json(const ModelConfig& cfg);
// Unknown keys and wrong types raise ConfigError naming the offending path.
RunConfig run_config_from_json(const nlohmann::json& j);
ModelConfig model_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

}  // namespace lazydit
