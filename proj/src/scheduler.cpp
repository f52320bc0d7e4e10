#include "lazydit/scheduler.hpp"

#include <cmath>
#include <string>

#include "lazydit/backbone.hpp"
#include "lazydit/error.hpp"

namespace lazydit {

NoiseSchedule build_schedule(int train_steps, double beta_min, double beta_max) {
  if (train_steps < 1) throw DomainError("build_schedule: train_steps must be >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw DomainError("build_schedule: require 0 < beta_min <= beta_max < 1");
  }
  NoiseSchedule s;
  s.train_steps = train_steps;
  s.alpha.resize(static_cast<std::size_t>(train_steps) + 1);
  s.sigma.resize(s.alpha.size());
  s.alpha[0] = 1.0;
  s.sigma[0] = 0.0;
  double alpha_bar = 1.0;
  for (int t = 1; t <= train_steps; ++t) {
    const double frac = train_steps == 1 ? 0.0 : static_cast<double>(t - 1) / (train_steps - 1);
    const double beta = beta_min + (beta_max - beta_min) * frac;
    alpha_bar *= 1.0 - beta;
    s.alpha[t] = std::sqrt(alpha_bar);
    s.sigma[t] = std::sqrt(1.0 - alpha_bar);
  }
  return s;
}

void SamplerPlan::validate(int train_steps) const {
  if (steps.size() < 2) throw DomainError("plan: need at least one denoising step");
  if (steps.back() != 0) throw DomainError("plan: last step must be 0");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] < 0 || steps[i] > train_steps) throw DomainError("plan: step out of range");
    if (i > 0 && steps[i] >= steps[i - 1]) throw DomainError("plan: steps must strictly decrease");
  }
  if (!(guidance >= 1.0)) throw DomainError("plan: guidance must be >= 1");
}

SamplerPlan uniform_plan(int train_steps, int num_steps, double guidance) {
  if (num_steps < 1 || num_steps > train_steps) {
    throw DomainError("uniform_plan: num_steps must lie in [1, train_steps]");
  }
  SamplerPlan plan;
  plan.guidance = guidance;
  for (int i = num_steps; i >= 0; --i) {
    plan.steps.push_back(static_cast<int>(
        std::lround(static_cast<double>(i) * train_steps / static_cast<double>(num_steps))));
  }
  plan.validate(train_steps);
  return plan;
}

Mat ddim_step(const Mat& z, const Mat& eps, double alpha_t, double sigma_t, double alpha_prev,
              double sigma_prev) {
  if (z.rows() != eps.rows() || z.cols() != eps.cols()) {
    throw ShapeError("ddim_step: " + z.shape_string() + " vs " + eps.shape_string());
  }
  if (alpha_t == 0.0) throw DomainError("ddim_step: alpha_t is zero");
  Mat out(z.rows(), z.cols());
  auto zi = z.data();
  auto ei = eps.data();
  auto oi = out.data();
  for (std::size_t i = 0; i < oi.size(); ++i) {
    oi[i] = alpha_prev * (zi[i] - sigma_t * ei[i]) / alpha_t + sigma_prev * ei[i];
  }
  return out;
}

Mat ddim_step(const Mat& z, const Mat& eps, int t, int t_prev, const NoiseSchedule& sched) {
  if (t < 0 || t > sched.train_steps || t_prev < 0 || t_prev > t) {
    throw DomainError("ddim_step: require 0 <= t_prev <= t <= T, got t=" + std::to_string(t) +
                      " t_prev=" + std::to_string(t_prev));
  }
  if (t_prev == t) {
    if (z.rows() != eps.rows() || z.cols() != eps.cols()) {
      throw ShapeError("ddim_step: " + z.shape_string() + " vs " + eps.shape_string());
    }
    return z;
  }
  return ddim_step(z, eps, sched.alpha[t], sched.sigma[t], sched.alpha[t_prev],
                   sched.sigma[t_prev]);
}

Mat cfg_combine(const Mat& eps_cond, const Mat& eps_uncond, double w) {
  if (!(w >= 1.0)) throw DomainError("cfg_combine: guidance must be >= 1");
  return axpy(eps_cond, w - 1.0, sub(eps_cond, eps_uncond));
}

Mat sample_loop(const Mat& z_init, const SamplerPlan& plan, const NoiseSchedule& sched,
                const NoisePredictor& predict, int label) {
  plan.validate(sched.train_steps);
  Mat z = z_init;
  for (int k = 0; k < plan.num_steps(); ++k) {
    const int t = plan.steps[k];
    const int t_next = plan.steps[k + 1];
    StepContext ctx;
    ctx.step_index = k;
    ctx.t = t;
    ctx.t_prev = k == 0 ? -1 : plan.steps[k - 1];
    ctx.label = label;
    ctx.branch = 0;
    const Mat eps_cond = predict(z, ctx);
    ctx.label = kNullClass;
    ctx.branch = 1;
    const Mat eps_uncond = predict(z, ctx);
    z = ddim_step(z, cfg_combine(eps_cond, eps_uncond, plan.guidance), t, t_next, sched);
  }
  return z;
}

}  // namespace lazydit
