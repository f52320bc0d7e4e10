#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "lazydit/backbone.hpp"
#include "lazydit/dataset.hpp"
#include "lazydit/lazy_runtime.hpp"
#include "lazydit/scheduler.hpp"

namespace lazydit {

enum class LossMode { kSelfDistill, kEpsMse };

std::string_view to_string(LossMode mode);
LossMode loss_mode_from_string(std::string_view name);

struct TrainConfig {
  double rho_attn = 1e-3;
  double rho_feed = 1e-3;
  double lr = 1e-4;
  int steps = 500;
  int batch = 4;
  LossMode mode = LossMode::kSelfDistill;
  double fd_epsilon = 1e-5;
  std::uint64_t seed = 0;
  // Consecutive plan steps per training batch; the first fills the cache.
  int subplan = 4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  // Multiplies the distillation / eps-mse term; zero leaves the pure lazy loss.
  double distill_weight = 1.0;
  // Samples drawn for the post-training inference lazy ratio.
  int eval_batch = 32;

  void validate() const;
};

// Scores of one step, laid out [layer][kind][sample].
struct LazyScores {
  int layers = 0;
  int batch = 0;
  Vec values;

  LazyScores() = default;
  LazyScores(int layers, int batch);
  double& at(int layer, ModuleKind kind, int sample);
  double at(int layer, ModuleKind kind, int sample) const;
};

// rho_attn / B sum_l sum_b (1 - s_attn) + rho_feed / B sum_l sum_b (1 - s_feed).
double lazy_loss(const LazyScores& scores, double rho_attn, double rho_feed);

// Noised synthetic tokens over a run of consecutive plan steps.
struct TrainBatch {
  std::vector<Mat> x0;
  std::vector<Mat> noise;
  std::vector<int> labels;
  std::vector<int> timesteps;             // schedule indices, strictly decreasing, all >= 1
  std::vector<std::vector<Mat>> targets;  // [sample][step]
};

TrainBatch make_batch(const ModelWeights& w, const NoiseSchedule& sched, const SamplerPlan& plan,
                      const GaussianMixture& data, const TrainConfig& cfg, Prng& rng);

// Regression targets: dense-model predictions (self-distill) or the injected noise.
void prepare_targets(const ModelWeights& w, const NoiseSchedule& sched, TrainBatch& batch,
                     LossMode mode);

Mat noised_input(const NoiseSchedule& sched, const Mat& x0, const Mat& noise, int t);

struct LossBreakdown {
  double total = 0.0;
  double lazy = 0.0;
  double distill = 0.0;
};

// A predictor input seen during a blended forward, kept for the analytic gradient.
struct ScoreRecord {
  int step = 0;
  int sample = 0;
  int layer = 0;
  ModuleKind kind = ModuleKind::kAttn;
  Mat z;
};

// Mean squared error against the targets (blended model) plus the lazy loss summed
// over every blended step.
LossBreakdown total_loss(const ModelWeights& w, const NoiseSchedule& sched,
                         const PredictorBank& bank, const TrainBatch& batch,
                         const TrainConfig& cfg, std::vector<ScoreRecord>* records = nullptr);

using Objective = std::function<double(const PredictorBank&)>;

// Central differences over every predictor weight.
PredictorBank fd_gradient(const Objective& objective, const PredictorBank& bank,
                          double fd_epsilon);
PredictorBank fd_gradient(const ModelWeights& w, const NoiseSchedule& sched,
                          const PredictorBank& bank, const TrainBatch& batch,
                          const TrainConfig& cfg);

// The lazy loss as a function of the predictors with the recorded inputs held fixed.
double lazy_objective(const PredictorBank& bank, const std::vector<ScoreRecord>& records,
                      double rho_attn, double rho_feed, int batch);

// d/dW of lazy_objective: -rho/B * s (1 - s) * Z^T 1_N per record.
PredictorBank analytic_lazy_grad(const PredictorBank& bank,
                                 const std::vector<ScoreRecord>& records, double rho_attn,
                                 double rho_feed, int batch);

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptimState {
  Vec m;
  Vec v;
  int step = 0;

  static OptimState for_bank(const PredictorBank& bank);
};

void adamw_step(PredictorBank& bank, const PredictorBank& grads, OptimState& state,
                const AdamWConfig& cfg);

struct LossTraceRow {
  int step = 0;
  LossBreakdown loss;
};

struct TrainResult {
  PredictorBank bank;
  std::vector<LossTraceRow> trace;
  LossBreakdown initial_eval;  // fixed evaluation batch, before training
  LossBreakdown final_eval;    // same batch, after training
  double gamma_attn = 0.0;     // inference lazy ratio after training
  double gamma_feed = 0.0;
};

struct TrainSetup {
  const ModelWeights& weights;
  const NoiseSchedule& schedule;
  const SamplerPlan& plan;
  const GaussianMixture& data;
};

// Samples `cfg.eval_batch` trajectories with the lazy runtime; shared by training
// and the sweep so both measure Gamma the same way.
SampleResult evaluate_laziness(const TrainSetup& setup, const PredictorBank& bank,
                               std::uint64_t seed, int batch, std::vector<Mat>* dense_out = nullptr);

TrainResult train_loop(const TrainSetup& setup, const TrainConfig& cfg,
                       const std::function<void(const LossTraceRow&)>& on_step = {});

std::string loss_trace_csv(const std::vector<LossTraceRow>& trace);

struct SweepRow {
  double rho = 0.0;
  std::string mode;  // "equal" or "unequal"
  double rho_attn = 0.0;
  double rho_feed = 0.0;
  double gamma_attn = 0.0;
  double gamma_feed = 0.0;
  double consistency_error = 0.0;  // RMS of lazy minus dense final latents
};

// One train + sample run per rho (fixed seed), sorted by rho. With `unequal`, also
// runs rho_attn = 1.5 rho, rho_feed = 0.5 rho (same total).
std::vector<SweepRow> penalty_sweep(const TrainSetup& setup, const TrainConfig& base,
                                    std::vector<double> rhos, bool unequal = false);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace lazydit
