#include "lazydit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lazydit/error.hpp"
#include "lazydit/format.hpp"
#include "lazydit/prng.hpp"

namespace lazydit {

std::string_view to_string(LossMode mode) {
  return mode == LossMode::kSelfDistill ? "self-distill" : "eps-mse";
}

LossMode loss_mode_from_string(std::string_view name) {
  if (name == "self-distill") return LossMode::kSelfDistill;
  if (name == "eps-mse") return LossMode::kEpsMse;
  throw ConfigError("unknown loss mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(rho_attn >= 0.0 && rho_attn <= 1.0) || !(rho_feed >= 0.0 && rho_feed <= 1.0)) {
    throw ConfigError("train: rho must lie in [0, 1]");
  }
  if (!(fd_epsilon > 0.0)) throw ConfigError("train: fd_epsilon must be > 0");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (steps < 0 || batch < 1 || subplan < 1 || eval_batch < 1) {
    throw ConfigError("train: steps >= 0, batch >= 1, subplan >= 1, eval_batch >= 1 required");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: betas must lie in [0, 1)");
  }
}

LazyScores::LazyScores(int layers_, int batch_)
    : layers(layers_), batch(batch_),
      values(static_cast<std::size_t>(layers_) * 2 * static_cast<std::size_t>(batch_), 0.0) {}

double& LazyScores::at(int layer, ModuleKind kind, int sample) {
  return values[(static_cast<std::size_t>(layer) * 2 + index_of(kind)) * batch + sample];
}

double LazyScores::at(int layer, ModuleKind kind, int sample) const {
  return values[(static_cast<std::size_t>(layer) * 2 + index_of(kind)) * batch + sample];
}

double lazy_loss(const LazyScores& scores, double rho_attn, double rho_feed) {
  if (scores.batch == 0) return 0.0;
  double attn = 0.0, feed = 0.0;
  for (int l = 0; l < scores.layers; ++l) {
    for (int b = 0; b < scores.batch; ++b) {
      attn += 1.0 - scores.at(l, ModuleKind::kAttn, b);
      feed += 1.0 - scores.at(l, ModuleKind::kFeed, b);
    }
  }
  return rho_attn * attn / scores.batch + rho_feed * feed / scores.batch;
}

Mat noised_input(const NoiseSchedule& sched, const Mat& x0, const Mat& noise, int t) {
  Mat z(x0.rows(), x0.cols());
  const double a = sched.alpha.at(static_cast<std::size_t>(t));
  const double s = sched.sigma.at(static_cast<std::size_t>(t));
  auto xd = x0.data();
  auto nd = noise.data();
  auto zd = z.data();
  for (std::size_t i = 0; i < zd.size(); ++i) zd[i] = a * xd[i] + s * nd[i];
  return z;
}

TrainBatch make_batch(const ModelWeights& w, const NoiseSchedule& sched, const SamplerPlan& plan,
                      const GaussianMixture& data, const TrainConfig& cfg, Prng& rng) {
  const int k = plan.num_steps();
  if (cfg.subplan > k) throw ConfigError("train: subplan longer than the sampling plan");
  TrainBatch batch;
  const std::size_t n = static_cast<std::size_t>(w.config.patches);
  const std::size_t d = static_cast<std::size_t>(w.config.hidden);
  for (int b = 0; b < cfg.batch; ++b) {
    // The null token is drawn like one more class so both guidance branches are trained.
    const int draw = static_cast<int>(rng.below(static_cast<std::uint64_t>(w.config.num_classes) + 1));
    const int label = draw == w.config.num_classes ? kNullClass : draw;
    batch.labels.push_back(label);
    const int source = label == kNullClass
                           ? static_cast<int>(rng.below(static_cast<std::uint64_t>(data.config().num_classes)))
                           : label;
    batch.x0.push_back(data.sample(source, rng));
    batch.noise.push_back(Mat::random_normal(n, d, rng));
  }
  const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(k - cfg.subplan + 1)));
  for (int i = 0; i < cfg.subplan; ++i) batch.timesteps.push_back(plan.steps[start + i]);
  prepare_targets(w, sched, batch, cfg.mode);
  return batch;
}

void prepare_targets(const ModelWeights& w, const NoiseSchedule& sched, TrainBatch& batch,
                     LossMode mode) {
  batch.targets.assign(batch.x0.size(), {});
  const ModuleEvaluator dense = dense_evaluator(w);
  for (std::size_t b = 0; b < batch.x0.size(); ++b) {
    for (int t : batch.timesteps) {
      if (mode == LossMode::kEpsMse) {
        batch.targets[b].push_back(batch.noise[b]);
      } else {
        const Mat z = noised_input(sched, batch.x0[b], batch.noise[b], t);
        batch.targets[b].push_back(model_forward(w, z, t - 1, batch.labels[b], dense));
      }
    }
  }
}

LossBreakdown total_loss(const ModelWeights& w, const NoiseSchedule& sched,
                         const PredictorBank& bank, const TrainBatch& batch,
                         const TrainConfig& cfg, std::vector<ScoreRecord>* records) {
  const int nb = static_cast<int>(batch.x0.size());
  const int ns = static_cast<int>(batch.timesteps.size());
  const int layers = static_cast<int>(w.blocks.size());
  if (batch.targets.size() != batch.x0.size()) throw DomainError("total_loss: targets missing");

  std::vector<LazyScores> scores(static_cast<std::size_t>(ns), LazyScores(layers, nb));
  std::vector<bool> blended(static_cast<std::size_t>(ns), false);
  const ModuleEvaluator dense = dense_evaluator(w);
  double sq_err = 0.0;
  std::size_t count = 0;

  for (int b = 0; b < nb; ++b) {
    StepCache cache;
    for (int i = 0; i < ns; ++i) {
      const int t = batch.timesteps[i];
      const int t_prev = i == 0 ? -1 : batch.timesteps[i - 1];
      ModuleEvaluator blend = [&](int layer, ModuleKind kind, const Mat& z) {
        const ModuleSite site{layer, kind, b, i, t, t_prev};
        BlendResult r = blended_forward(site, z, cache, bank, dense);
        if (r.score) {
          scores[i].at(layer, kind, b) = *r.score;
          blended[i] = true;
          if (records) records->push_back({i, b, layer, kind, z});
        }
        return std::move(r.y);
      };
      const Mat z = noised_input(sched, batch.x0[b], batch.noise[b], t);
      const Mat pred = model_forward(w, z, t - 1, batch.labels[b], blend);
      const Mat& target = batch.targets[b][i];
      auto p = pred.data();
      auto q = target.data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double e = p[j] - q[j];
        sq_err += e * e;
      }
      count += p.size();
    }
  }

  LossBreakdown out;
  out.distill = count == 0 ? 0.0 : sq_err / static_cast<double>(count);
  for (int i = 0; i < ns; ++i) {
    if (blended[i]) out.lazy += lazy_loss(scores[i], cfg.rho_attn, cfg.rho_feed);
  }
  out.total = cfg.distill_weight * out.distill + out.lazy;
  return out;
}

PredictorBank fd_gradient(const Objective& objective, const PredictorBank& bank,
                          double fd_epsilon) {
  if (!(fd_epsilon > 0.0)) throw DomainError("fd_gradient: epsilon must be > 0");
  PredictorBank grad = PredictorBank::zeros(bank.layers(), bank.hidden());
  PredictorBank probe = bank;
  auto p = probe.params();
  auto g = grad.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + fd_epsilon;
    const double up = objective(probe);
    p[i] = saved - fd_epsilon;
    const double down = objective(probe);
    p[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw DomainError("fd_gradient: non-finite loss at coordinate " + std::to_string(i));
    }
    g[i] = (up - down) / (2.0 * fd_epsilon);
  }
  return grad;
}

PredictorBank fd_gradient(const ModelWeights& w, const NoiseSchedule& sched,
                          const PredictorBank& bank, const TrainBatch& batch,
                          const TrainConfig& cfg) {
  return fd_gradient(
      [&](const PredictorBank& b) { return total_loss(w, sched, b, batch, cfg).total; }, bank,
      cfg.fd_epsilon);
}

double lazy_objective(const PredictorBank& bank, const std::vector<ScoreRecord>& records,
                      double rho_attn, double rho_feed, int batch) {
  double total = 0.0;
  for (const ScoreRecord& r : records) {
    const double rho = r.kind == ModuleKind::kAttn ? rho_attn : rho_feed;
    total += rho * (1.0 - lazy_score(r.z, bank.weight(r.layer, r.kind))) / batch;
  }
  return total;
}

PredictorBank analytic_lazy_grad(const PredictorBank& bank,
                                 const std::vector<ScoreRecord>& records, double rho_attn,
                                 double rho_feed, int batch) {
  PredictorBank grad = PredictorBank::zeros(bank.layers(), bank.hidden());
  for (const ScoreRecord& r : records) {
    const double rho = r.kind == ModuleKind::kAttn ? rho_attn : rho_feed;
    const double s = lazy_score(r.z, bank.weight(r.layer, r.kind));
    const double coeff = -rho * s * (1.0 - s) / batch;
    auto g = grad.weight(r.layer, r.kind);
    for (std::size_t i = 0; i < r.z.rows(); ++i)
      for (std::size_t j = 0; j < r.z.cols(); ++j) g[j] += coeff * r.z(i, j);
  }
  return grad;
}

OptimState OptimState::for_bank(const PredictorBank& bank) {
  return {Vec(bank.num_params(), 0.0), Vec(bank.num_params(), 0.0), 0};
}

void adamw_step(PredictorBank& bank, const PredictorBank& grads, OptimState& state,
                const AdamWConfig& cfg) {
  auto w = bank.params();
  auto g = grads.params();
  if (g.size() != w.size() || state.m.size() != w.size() || state.v.size() != w.size()) {
    throw ShapeError("adamw_step: state does not match the predictor bank");
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, state.step);
  const double c2 = 1.0 - std::pow(cfg.beta2, state.step);
  for (std::size_t i = 0; i < w.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    w[i] -= cfg.lr * cfg.weight_decay * w[i];
    w[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

SampleResult evaluate_laziness(const TrainSetup& setup, const PredictorBank& bank,
                               std::uint64_t seed, int batch, std::vector<Mat>* dense_out) {
  const ModelConfig& mc = setup.weights.config;
  Prng rng = Prng(seed).fork(0x6576616c);
  std::vector<Mat> z_init;
  std::vector<int> labels;
  for (int b = 0; b < batch; ++b) {
    labels.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(mc.num_classes))));
    z_init.push_back(Mat::random_normal(static_cast<std::size_t>(mc.patches),
                                        static_cast<std::size_t>(mc.hidden), rng));
  }
  if (dense_out) *dense_out = sample_dense(setup.weights, setup.schedule, setup.plan, z_init, labels);
  return sample_lazy(setup.weights, bank, setup.schedule, setup.plan, z_init, labels);
}

TrainResult train_loop(const TrainSetup& setup, const TrainConfig& cfg,
                       const std::function<void(const LossTraceRow&)>& on_step) {
  cfg.validate();
  const ModelWeights& w = setup.weights;
  TrainResult result;
  result.bank = PredictorBank::zeros(static_cast<int>(w.blocks.size()), w.config.hidden);
  OptimState state = OptimState::for_bank(result.bank);
  const AdamWConfig adam{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};
  const Prng root(cfg.seed);

  Prng eval_rng = root.fork(0xe7a1);
  const TrainBatch eval_batch = make_batch(w, setup.schedule, setup.plan, setup.data, cfg, eval_rng);
  result.initial_eval = total_loss(w, setup.schedule, result.bank, eval_batch, cfg);

  for (int step = 0; step < cfg.steps; ++step) {
    Prng rng = root.fork(static_cast<std::uint64_t>(step));
    const TrainBatch batch = make_batch(w, setup.schedule, setup.plan, setup.data, cfg, rng);
    LossTraceRow row{step, total_loss(w, setup.schedule, result.bank, batch, cfg)};
    const PredictorBank grad = fd_gradient(w, setup.schedule, result.bank, batch, cfg);
    adamw_step(result.bank, grad, state, adam);
    result.trace.push_back(row);
    if (on_step) on_step(row);
  }

  result.final_eval = total_loss(w, setup.schedule, result.bank, eval_batch, cfg);
  const SampleResult sampled = evaluate_laziness(setup, result.bank, cfg.seed, cfg.eval_batch);
  result.gamma_attn = mean_lazy_ratio(sampled.stats, ModuleKind::kAttn);
  result.gamma_feed = mean_lazy_ratio(sampled.stats, ModuleKind::kFeed);
  return result;
}

std::string loss_trace_csv(const std::vector<LossTraceRow>& trace) {
  std::ostringstream os;
  os << "step,total_loss,lazy_loss,distill_loss\n";
  for (const LossTraceRow& r : trace) {
    os << r.step << ',' << format_double(r.loss.total) << ',' << format_double(r.loss.lazy) << ','
       << format_double(r.loss.distill) << '\n';
  }
  return os.str();
}

std::vector<SweepRow> penalty_sweep(const TrainSetup& setup, const TrainConfig& base,
                                    std::vector<double> rhos, bool unequal) {
  if (rhos.empty()) throw DomainError("penalty_sweep: no rho values");
  std::sort(rhos.begin(), rhos.end());
  std::vector<SweepRow> rows;
  auto run = [&](double rho, const char* mode, double ra, double rf) {
    TrainConfig cfg = base;
    cfg.rho_attn = ra;
    cfg.rho_feed = rf;
    const TrainResult trained = train_loop(setup, cfg);
    std::vector<Mat> dense;
    const SampleResult lazy = evaluate_laziness(setup, trained.bank, cfg.seed, cfg.eval_batch, &dense);
    double sq = 0.0;
    std::size_t n = 0;
    for (std::size_t b = 0; b < dense.size(); ++b) {
      const Mat diff = sub(lazy.latents[b], dense[b]);
      for (double x : diff.data()) sq += x * x;
      n += diff.size();
    }
    rows.push_back({rho, mode, ra, rf, mean_lazy_ratio(lazy.stats, ModuleKind::kAttn),
                    mean_lazy_ratio(lazy.stats, ModuleKind::kFeed),
                    n == 0 ? 0.0 : std::sqrt(sq / static_cast<double>(n))});
  };
  for (double rho : rhos) {
    run(rho, "equal", rho, rho);
    if (unequal) run(rho, "unequal", 1.5 * rho, 0.5 * rho);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "rho,mode,rho_attn,rho_feed,gamma_attn,gamma_feed,consistency_error\n";
  for (const SweepRow& r : rows) {
    os << format_double(r.rho) << ',' << r.mode << ',' << format_double(r.rho_attn) << ','
       << format_double(r.rho_feed) << ',' << format_double(r.gamma_attn) << ','
       << format_double(r.gamma_feed) << ',' << format_double(r.consistency_error) << '\n';
  }
  return os.str();
}

}  // namespace lazydit
