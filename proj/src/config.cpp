#include "lazydit/config.hpp"

#include <functional>
#include <set>

#include "lazydit/error.hpp"
#include "lazydit/format.hpp"
#include "lazydit/prng.hpp"

namespace lazydit {

namespace {

using json = nlohmann::json;

// Walks one JSON object, handing each known key to a reader and rejecting the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!it->is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  void section(const char* key, const std::function<void(Section&)>& fn) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    Section child(*it, path_ + "." + key);
    fn(child);
    child.finish();
  }

  void optional_double(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      out.reset();
    } else if (it->is_number()) {
      out = it->get<double>();
    } else {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(path_ + "." + it.key() + ": unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_model(Section& s, ModelConfig& m) {
  s.read("layers", m.layers);
  s.read("patches", m.patches);
  s.read("hidden", m.hidden);
  s.read("num_classes", m.num_classes);
  s.optional_double("weight_clip", m.weight_clip);
  s.read("logit_cap", m.logit_cap);
}

}  // namespace

RunConfig::RunConfig() {
  model.weight_clip = 0.5;
  model.train_steps = schedule.train_steps;
}

void RunConfig::validate() const {
  model_config().validate();
  if (schedule.train_steps < 1) throw ConfigError("schedule.train_steps must be >= 1");
  if (!(schedule.beta_min > 0.0 && schedule.beta_min <= schedule.beta_max && schedule.beta_max < 1.0)) {
    throw ConfigError("schedule: need 0 < beta_min <= beta_max < 1");
  }
  if (plan.steps < 1 || plan.steps > schedule.train_steps) {
    throw ConfigError("plan.steps must lie in [1, schedule.train_steps]");
  }
  if (!(plan.guidance >= 1.0)) throw ConfigError("plan.guidance must be >= 1");
  if (!(lazy.threshold >= 0.0 && lazy.threshold <= 1.0)) {
    throw ConfigError("lazy.threshold must lie in [0, 1]");
  }
  train_config().validate();
  if (train.subplan > plan.steps) throw ConfigError("train.subplan must not exceed plan.steps");
  if (data.size < 1) throw ConfigError("data.size must be >= 1");
  if (!(data.mean_scale >= 0.0 && data.noise_scale >= 0.0)) {
    throw ConfigError("data: scales must be >= 0");
  }
  if (sample_batch < 1) throw ConfigError("sample.batch must be >= 1");
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m = model;
  m.train_steps = schedule.train_steps;
  return m;
}

DataConfig RunConfig::data_config() const {
  DataConfig d;
  d.patches = model.patches;
  d.hidden = model.hidden;
  d.num_classes = model.num_classes;
  d.mean_scale = data.mean_scale;
  d.noise_scale = data.noise_scale;
  return d;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.rho_attn = lazy.rho_attn;
  t.rho_feed = lazy.rho_feed;
  t.seed = derive_seed(seed, "train");
  return t;
}

NoiseSchedule RunConfig::build_noise_schedule() const {
  return build_schedule(schedule.train_steps, schedule.beta_min, schedule.beta_max);
}

SamplerPlan RunConfig::build_plan() const {
  return uniform_plan(schedule.train_steps, plan.steps, plan.guidance);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : purpose) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return Prng(seed).fork(h).next_u64();
}

nlohmann::ordered_json to_json(const ModelConfig& m) {
  nlohmann::ordered_json j;
  j["layers"] = m.layers;
  j["patches"] = m.patches;
  j["hidden"] = m.hidden;
  j["num_classes"] = m.num_classes;
  j["weight_clip"] = m.weight_clip ? nlohmann::ordered_json(*m.weight_clip) : nullptr;
  j["logit_cap"] = m.logit_cap;
  j["train_steps"] = m.train_steps;
  return j;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  nlohmann::ordered_json model = to_json(c.model);
  model.erase("train_steps");
  j["model"] = model;
  j["schedule"] = {{"train_steps", c.schedule.train_steps},
                   {"beta_min", c.schedule.beta_min},
                   {"beta_max", c.schedule.beta_max}};
  j["plan"] = {{"steps", c.plan.steps}, {"guidance", c.plan.guidance}};
  j["lazy"] = {{"rho_attn", c.lazy.rho_attn},
               {"rho_feed", c.lazy.rho_feed},
               {"threshold", c.lazy.threshold}};
  j["train"] = {{"lr", c.train.lr},
                {"steps", c.train.steps},
                {"batch", c.train.batch},
                {"mode", std::string(to_string(c.train.mode))},
                {"fd_epsilon", c.train.fd_epsilon},
                {"subplan", c.train.subplan},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"adam_eps", c.train.adam_eps},
                {"weight_decay", c.train.weight_decay},
                {"distill_weight", c.train.distill_weight},
                {"eval_batch", c.train.eval_batch}};
  j["data"] = {{"mean_scale", c.data.mean_scale},
               {"noise_scale", c.data.noise_scale},
               {"size", c.data.size}};
  j["sample"] = {{"batch", c.sample_batch}};
  j["output"] = {{"dir", c.output_dir}};
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  Section s(j, "model");
  read_model(s, m);
  s.read("train_steps", m.train_steps);
  s.finish();
  m.validate();
  return m;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  Section root(j, "config");
  root.read("seed", c.seed);
  root.section("model", [&](Section& s) { read_model(s, c.model); });
  root.section("schedule", [&](Section& s) {
    s.read("train_steps", c.schedule.train_steps);
    s.read("beta_min", c.schedule.beta_min);
    s.read("beta_max", c.schedule.beta_max);
  });
  root.section("plan", [&](Section& s) {
    s.read("steps", c.plan.steps);
    s.read("guidance", c.plan.guidance);
  });
  root.section("lazy", [&](Section& s) {
    s.read("rho_attn", c.lazy.rho_attn);
    s.read("rho_feed", c.lazy.rho_feed);
    s.read("threshold", c.lazy.threshold);
  });
  root.section("train", [&](Section& s) {
    std::string mode(to_string(c.train.mode));
    s.read("lr", c.train.lr);
    s.read("steps", c.train.steps);
    s.read("batch", c.train.batch);
    s.read("mode", mode);
    s.read("fd_epsilon", c.train.fd_epsilon);
    s.read("subplan", c.train.subplan);
    s.read("beta1", c.train.beta1);
    s.read("beta2", c.train.beta2);
    s.read("adam_eps", c.train.adam_eps);
    s.read("weight_decay", c.train.weight_decay);
    s.read("distill_weight", c.train.distill_weight);
    s.read("eval_batch", c.train.eval_batch);
    c.train.mode = loss_mode_from_string(mode);
  });
  root.section("data", [&](Section& s) {
    s.read("mean_scale", c.data.mean_scale);
    s.read("noise_scale", c.data.noise_scale);
    s.read("size", c.data.size);
  });
  root.section("sample", [&](Section& s) { s.read("batch", c.sample_batch); });
  root.section("output", [&](Section& s) { s.read("dir", c.output_dir); });
  root.finish();
  c.model.train_steps = c.schedule.train_steps;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace lazydit
