#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lazydit/backbone.hpp"
#include "lazydit/linalg.hpp"
#include "lazydit/scheduler.hpp"

namespace lazydit {

// One D x 1 similarity predictor per (layer, module kind), no bias.
class PredictorBank {
 public:
  PredictorBank() = default;
  PredictorBank(int layers, int hidden);

  static PredictorBank zeros(int layers, int hidden) { return {layers, hidden}; }

  int layers() const noexcept { return layers_; }
  int hidden() const noexcept { return hidden_; }
  std::size_t num_params() const noexcept { return params_.size(); }

  std::span<const double> weight(int layer, ModuleKind kind) const;
  std::span<double> weight(int layer, ModuleKind kind);
  // Flat parameter view, ordered [layer][kind][hidden].
  std::span<const double> params() const noexcept { return params_; }
  std::span<double> params() noexcept { return params_; }

  friend bool operator==(const PredictorBank&, const PredictorBank&) = default;

 private:
  int layers_ = 0;
  int hidden_ = 0;
  Vec params_;
};

// Pre-sigmoid similarity logit: sum over the N entries of Z w.
double lazy_logit(const Mat& z, std::span<const double> w);
// s = sigmoid((Z w) 1_N).
double lazy_score(const Mat& z, std::span<const double> w);

// Skip rule: reuse the cache only when s > threshold (s == threshold computes).
constexpr bool skip_decision(double score, double threshold = 0.5) { return score > threshold; }

struct CacheKey {
  int layer = 0;
  ModuleKind kind = ModuleKind::kAttn;
  int stream = 0;
  auto operator<=>(const CacheKey&) const = default;
};

// Previous-step module outputs. Each entry carries the schedule index of the
// step whose module output it represents; it is readable only from the step
// that immediately follows.
class StepCache {
 public:
  const Mat* lookup(const CacheKey& key, int expected_generation) const;
  bool contains(const CacheKey& key) const { return entries_.count(key) != 0; }
  std::optional<int> generation(const CacheKey& key) const;
  void store(const CacheKey& key, Mat value, int generation);
  // A reused output is also the module output of the current step.
  void refresh(const CacheKey& key, int generation);
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    Mat value;
    int generation = 0;
  };
  std::map<CacheKey, Entry> entries_;
};

// Where a module evaluation sits within a sampling or training run.
struct ModuleSite {
  int layer = 0;
  ModuleKind kind = ModuleKind::kAttn;
  int stream = 0;
  int step_index = 0;
  int t = 0;        // schedule index of this step; the generation written
  int t_prev = -1;  // schedule index of the preceding step; -1 at the first

  CacheKey key() const { return {layer, kind, stream}; }
};

// Skip bits and scores for every (layer, kind, step, stream) of a sampling run.
class RunStats {
 public:
  RunStats() = default;
  RunStats(int layers, int steps, int streams);

  int layers() const noexcept { return layers_; }
  int steps() const noexcept { return steps_; }
  int streams() const noexcept { return streams_; }

  void record(int layer, ModuleKind kind, int step, int stream, double score, bool skipped);
  bool skipped(int layer, ModuleKind kind, int step, int stream) const;
  double score(int layer, ModuleKind kind, int step, int stream) const;
  bool recorded(int layer, ModuleKind kind, int step, int stream) const;

  // Module evaluations actually computed / reused for one kind, over everything.
  std::int64_t computed_count(ModuleKind kind) const;
  std::int64_t skipped_count(ModuleKind kind) const;

 private:
  std::size_t index(int layer, ModuleKind kind, int step, int stream) const;

  int layers_ = 0;
  int steps_ = 0;
  int streams_ = 0;
  std::vector<std::uint8_t> bits_;
  std::vector<std::uint8_t> seen_;
  Vec scores_;
};

// Gamma per stream: mean skip bit over (layer, step).
Vec lazy_ratio(const RunStats& stats, ModuleKind kind);
double mean_lazy_ratio(const RunStats& stats, ModuleKind kind);

struct HeatmapCell {
  int layer = 0;
  ModuleKind kind = ModuleKind::kAttn;
  int step = 0;
  double skip_rate = 0.0;  // mean skip bit over streams
};

// attn sheet first, then feed; layer-major, then step.
std::vector<HeatmapCell> laziness_heatmap(const RunStats& stats);
// CSV with header `layer,kind,step,skip_rate`, LF line endings.
std::string heatmap_csv(const RunStats& stats);

// Overrides the learned score, e.g. to force a skip schedule in tests.
struct ScoreQuery {
  const ModuleSite& site;
  const Mat& z;
};
using ScoreFn = std::function<double(const ScoreQuery&)>;

// Never-skip / always-skip score constants.
ScoreFn constant_score(double s);

// Training forward: Y = (1 - s) F(Z) + s Y_prev when the cache holds the previous
// step, else Y = F(Z). The cache always receives the fresh F(Z).
struct BlendResult {
  Mat y;
  std::optional<double> score;  // empty when the cache was empty
};
BlendResult blended_forward(const ModuleSite& site, const Mat& z, StepCache& cache,
                            const PredictorBank& bank, const ModuleEvaluator& dense);

// Inference forward: compute F(Z) when s <= threshold or the cache is empty,
// otherwise return the cached output. Records the decision in `stats`.
struct GateOptions {
  double threshold = 0.5;
  ScoreFn score_override;
};
Mat gated_forward(const ModuleSite& site, const Mat& z, StepCache& cache,
                  const PredictorBank& bank, const ModuleEvaluator& dense, RunStats& stats,
                  const GateOptions& opts = {});

// Observer invoked after every gated module evaluation of a lazy sampling run.
struct ModuleEvent {
  const ModuleSite& site;
  const Mat& z;
  const Mat& output;
  double score;
  bool skipped;
};
using ModuleObserver = std::function<void(const ModuleEvent&)>;

struct SampleResult {
  std::vector<Mat> latents;
  RunStats stats;
};

// Baseline DDIM + CFG sampling with dense module evaluation. Stream of sample b,
// branch r is 2b + r.
std::vector<Mat> sample_dense(const ModelWeights& w, const NoiseSchedule& sched,
                              const SamplerPlan& plan, const std::vector<Mat>& z_init,
                              const std::vector<int>& labels);

struct LazySampleOptions {
  GateOptions gate;
  ModuleObserver observer;
};

SampleResult sample_lazy(const ModelWeights& w, const PredictorBank& bank,
                         const NoiseSchedule& sched, const SamplerPlan& plan,
                         const std::vector<Mat>& z_init, const std::vector<int>& labels,
                         const LazySampleOptions& opts = {});

// Multiply-accumulates of one evaluation of the toy model's modules.
std::int64_t module_macs(const ModelConfig& config, ModuleKind kind);
std::int64_t predictor_macs(const ModelConfig& config);

}  // namespace lazydit
