#pragma once

#include <functional>
#include <vector>

#include "lazydit/linalg.hpp"

namespace lazydit {

// Variance-preserving schedule over indices 0..train_steps; index 0 is clean
// data (alpha = 1, sigma = 0). Schedule index t >= 1 is evaluated by the
// network as timestep t - 1.
struct NoiseSchedule {
  int train_steps = 0;
  Vec alpha;
  Vec sigma;
};

// Linear betas from beta_min to beta_max; alpha_t = sqrt(prod(1 - beta_s)),
// sigma_t = sqrt(1 - alpha_t^2).
NoiseSchedule build_schedule(int train_steps, double beta_min = 1e-4, double beta_max = 0.02);

struct SamplerPlan {
  // Strictly decreasing schedule indices ending at 0.
  std::vector<int> steps;
  double guidance = 1.0;

  // Number of network evaluations (steps.size() - 1).
  int num_steps() const { return steps.empty() ? 0 : static_cast<int>(steps.size()) - 1; }
  void validate(int train_steps) const;
};

// Uniform-stride plan with `num_steps` denoising steps from train_steps to 0.
SamplerPlan uniform_plan(int train_steps, int num_steps, double guidance);

// z_{t'} = alpha_{t'} (z_t - sigma_t eps) / alpha_t + sigma_{t'} eps; returns
// z_t unchanged when t_prev == t.
Mat ddim_step(const Mat& z, const Mat& eps, int t, int t_prev, const NoiseSchedule& sched);
Mat ddim_step(const Mat& z, const Mat& eps, double alpha_t, double sigma_t, double alpha_prev,
              double sigma_prev);

// eps_hat = w eps(c) - (w - 1) eps(null), evaluated as eps(c) + (w - 1)(eps(c) - eps(null)).
Mat cfg_combine(const Mat& eps_cond, const Mat& eps_uncond, double w);

// One CFG branch of one sampling step.
struct StepContext {
  int step_index = 0;  // 0 for the first network evaluation of the plan
  int t = 0;           // schedule index being denoised
  int t_prev = 0;      // schedule index of the previous evaluated step, -1 at the first
  int label = 0;       // class label or kNullClass
  int branch = 0;      // 0 conditional, 1 unconditional
};

using NoisePredictor = std::function<Mat(const Mat& z, const StepContext& ctx)>;

// Runs the plan: conditional and null-token predictions, CFG combine, DDIM update.
Mat sample_loop(const Mat& z_init, const SamplerPlan& plan, const NoiseSchedule& sched,
                const NoisePredictor& predict, int label);

}  // namespace lazydit
