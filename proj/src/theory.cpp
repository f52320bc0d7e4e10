#include "lazydit/theory.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <json.hpp>

#include "lazydit/error.hpp"
#include "lazydit/lazy_runtime.hpp"
#include "lazydit/prng.hpp"

namespace lazydit {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Mat& a) {
  return {a.data().data(), static_cast<Eigen::Index>(a.rows()),
          static_cast<Eigen::Index>(a.cols())};
}

Mat with_norm(std::size_t rows, std::size_t cols, double norm, Prng& rng) {
  Mat m = Mat::random_normal(rows, cols, rng);
  const double n = exact_spectral_norm(m);
  return scale(m, norm / n);
}

double ratio_of(double lhs, double rhs) {
  if (rhs > 0.0) return lhs / rhs;
  return lhs == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

// Rejection sampling must terminate; this many draws per accepted trial is plenty.
constexpr int kMaxAttemptsPerTrial = 10000;

void check_attempts(long attempts, int accepted, const std::string& name) {
  if (attempts > static_cast<long>(kMaxAttemptsPerTrial) * std::max(accepted, 1)) {
    throw ConvergenceError(name + ": too many rejected samples", static_cast<double>(accepted));
  }
}

void base_params(BoundReport& r, const TheoryConfig& cfg) {
  r.params["R"] = cfg.radius;
  r.params["N"] = cfg.patches;
  r.params["D"] = cfg.hidden;
  r.params["L"] = cfg.layers;
}

}  // namespace

void BoundReport::observe(double ratio) {
  ++trials;
  if (!(ratio <= worst_ratio)) worst_ratio = ratio;
  pass = pass && ratio <= 1.0 + kBoundTolerance;
}

double exact_spectral_norm(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<RowMajor> svd(view(a));
  return svd.singularValues()(0);
}

RowScaling construct_row_scaling(const Vec& x1, const Vec& x2, double eta) {
  if (x1.size() != x2.size()) throw ShapeError("construct_row_scaling: length mismatch");
  if (!(eta > 0.0 && eta <= 0.1)) throw DomainError("construct_row_scaling: eta must lie in (0, 0.1]");
  const double n1 = vector_norm(x1), n2 = vector_norm(x2);
  if (n1 == 0.0 || n2 == 0.0) throw DomainError("construct_row_scaling: zero input vector");
  RowScaling s;
  s.a.assign(x1.size(), 0.5 * eta / n1);
  s.b.assign(x1.size(), 0.5 * eta / n2);
  s.c.assign(x1.size(), 0.0);
  Vec sum(x1.size());
  for (std::size_t j = 0; j < sum.size(); ++j) sum[j] = s.a[j] * x1[j] + s.b[j] * x2[j] + s.c[j];
  s.residual = vector_norm(sum);
  return s;
}

MatrixScaling construct_matrix_scaling(const Mat& x1, const Mat& x2, double eta) {
  if (x1.rows() != x2.rows() || x1.cols() != x2.cols()) {
    throw ShapeError("construct_matrix_scaling: " + x1.shape_string() + " vs " + x2.shape_string());
  }
  if (!(eta > 0.0 && eta <= 0.1)) {
    throw DomainError("construct_matrix_scaling: eta must lie in (0, 0.1]");
  }
  const std::size_t n = x1.rows(), d = x1.cols();
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r1 = vector_norm(x1.row(i)), r2 = vector_norm(x2.row(i));
    if (r1 == 0.0 || r2 == 0.0) throw DomainError("construct_matrix_scaling: zero row");
    m1 = std::max(m1, r1);
    m2 = std::max(m2, r2);
  }
  MatrixScaling s;
  s.a = Mat(n, d, 0.5 * eta / (static_cast<double>(n) * m1));
  s.b = Mat(n, d, 0.5 * eta / (static_cast<double>(n) * m2));
  s.c = Mat(n, d, 0.0);
  s.residual = frobenius_norm(add(add(hadamard(s.a, x1), hadamard(s.b, x2)), s.c));
  const Mat a_prev = s.a, a_cur = scale(s.b, -1.0);
  const Mat b_cur(n, d, 0.0);
  const Mat b_prev = add(b_cur, s.c);
  s.step_distance =
      frobenius_norm(sub(add(hadamard(a_prev, x1), b_prev), add(hadamard(a_cur, x2), b_cur)));
  return s;
}

std::vector<BlockWeights> sample_composition(const TheoryConfig& cfg, Prng& rng) {
  const std::size_t d = static_cast<std::size_t>(cfg.hidden);
  std::vector<BlockWeights> layers(static_cast<std::size_t>(cfg.layers));
  for (auto& b : layers) {
    b.w_q = with_norm(d, d, rng.uniform(0.25, 1.0) * cfg.radius, rng);
    b.w_k = Mat::identity(d);
    b.w_v = with_norm(d, d, rng.uniform(0.25, 1.0) * cfg.radius, rng);
    b.w_feed = with_norm(d, d, rng.uniform(0.25, 1.0) * cfg.radius, rng);
  }
  return layers;
}

Mat composition_layer(const BlockWeights& b, const Mat& x) {
  return feedforward_forward(attention_forward(x, b), b);
}

std::string_view to_string(ProbeKind kind) {
  switch (kind) {
    case ProbeKind::kAttn: return "attn";
    case ProbeKind::kFeed: return "feed";
    case ProbeKind::kSingleLayer: return "single_layer";
    case ProbeKind::kFullModel: return "full_model";
  }
  return "?";
}

double lipschitz_bound(ProbeKind kind, const TheoryConfig& cfg) {
  const double r = cfg.radius, nd = static_cast<double>(cfg.patches) * cfg.hidden;
  switch (kind) {
    case ProbeKind::kAttn: return 5.0 * std::pow(r, 4) * nd;
    case ProbeKind::kFeed: return r;
    case ProbeKind::kSingleLayer: return 5.0 * std::pow(r, 5) * nd;
    case ProbeKind::kFullModel: return std::pow(5.0 * std::pow(r, 5) * nd, cfg.layers);
  }
  return 0.0;
}

BoundReport construct_scaling_check(const TheoryConfig& cfg, bool matrix) {
  BoundReport r;
  r.name = matrix ? "matrix_scaling" : "row_scaling";
  base_params(r, cfg);
  r.bound_value = 1.0;
  Prng root(cfg.seed);
  Prng rng = root.fork(matrix ? 0x6d73 : 0x7273);
  const std::size_t n = static_cast<std::size_t>(cfg.patches), d = static_cast<std::size_t>(cfg.hidden);
  double worst_step = 0.0;
  for (int i = 0; i < cfg.trials; ++i) {
    const double eta = rng.uniform(1e-6, 0.1 - 1e-12);
    const double scale1 = std::pow(10.0, rng.uniform(-3.0, 3.0));
    const double scale2 = std::pow(10.0, rng.uniform(-3.0, 3.0));
    if (matrix) {
      const Mat x1 = Mat::random_normal(n, d, rng, scale1);
      const Mat x2 = Mat::random_normal(n, d, rng, scale2);
      const MatrixScaling s = construct_matrix_scaling(x1, x2, eta);
      r.observe(s.residual / eta);
      worst_step = std::max(worst_step, s.step_distance / eta);
    } else {
      Vec x1(d), x2(d);
      for (auto& v : x1) v = scale1 * rng.normal();
      for (auto& v : x2) v = scale2 * rng.normal();
      r.observe(construct_row_scaling(x1, x2, eta).residual / eta);
    }
  }
  if (matrix) {
    r.extra["worst_step_distance_ratio"] = worst_step;
    r.pass = r.pass && worst_step <= 1.0 + kBoundTolerance;
  }
  return r;
}

double lipschitz_ratio(ProbeKind kind, const std::vector<BlockWeights>& layers, const Mat& x,
                       const Mat& x_tilde) {
  auto apply = [&](const Mat& in) {
    switch (kind) {
      case ProbeKind::kAttn: return attention_forward(in, layers.at(0));
      case ProbeKind::kFeed: return feedforward_forward(in, layers.at(0));
      case ProbeKind::kSingleLayer: return composition_layer(layers.at(0), in);
      case ProbeKind::kFullModel: {
        Mat h = in;
        for (const auto& b : layers) h = composition_layer(b, h);
        return h;
      }
    }
    return in;
  };
  const double dx = exact_spectral_norm(sub(x, x_tilde));
  if (dx == 0.0) throw DomainError("lipschitz_ratio: X equals X~");
  return exact_spectral_norm(sub(apply(x), apply(x_tilde))) / dx;
}

BoundReport lipschitz_probe(ProbeKind kind, const TheoryConfig& cfg) {
  if (!(cfg.radius > 1.0)) throw DomainError("lipschitz_probe: R must exceed 1");
  BoundReport r;
  r.name = "lipschitz_" + std::string(to_string(kind));
  base_params(r, cfg);
  r.bound_value = lipschitz_bound(kind, cfg);
  Prng rng = Prng(cfg.seed).fork(0x6c6970 + static_cast<std::uint64_t>(kind));
  const std::size_t n = static_cast<std::size_t>(cfg.patches), d = static_cast<std::size_t>(cfg.hidden);
  const double big_r = cfg.radius;
  double worst_raw = 0.0;
  long attempts = 0, rejected = 0;
  while (r.trials < cfg.trials) {
    ++attempts;
    check_attempts(attempts, r.trials, r.name);
    const std::vector<BlockWeights> layers = sample_composition(cfg, rng);
    const Mat x = with_norm(n, d, rng.uniform(0.05, 1.0) * big_r, rng);
    const Mat delta = with_norm(n, d, big_r * std::pow(10.0, -rng.uniform(0.0, 3.0)), rng);
    const Mat xt = add(x, delta);
    if (exact_spectral_norm(xt) > big_r) {
      ++rejected;
      continue;
    }
    if (kind == ProbeKind::kFullModel) {
      // Every layer's attention input must satisfy ||X|| <= R as well.
      bool ok = true;
      Mat h = x, ht = xt;
      for (std::size_t l = 0; l + 1 < layers.size() && ok; ++l) {
        h = composition_layer(layers[l], h);
        ht = composition_layer(layers[l], ht);
        ok = exact_spectral_norm(h) <= big_r && exact_spectral_norm(ht) <= big_r;
      }
      if (!ok) {
        ++rejected;
        continue;
      }
    }
    const double ratio = lipschitz_ratio(kind, layers, x, xt);
    worst_raw = std::max(worst_raw, ratio);
    r.observe(ratio / r.bound_value);
  }
  r.extra["worst_lipschitz"] = worst_raw;
  r.extra["slack"] = worst_raw > 0.0 ? r.bound_value / worst_raw : 0.0;
  r.extra["rejected"] = static_cast<double>(rejected);
  return r;
}

double similarity_alpha(ModuleKind kind, const TheoryConfig& cfg, double r2) {
  const double c = kind == ModuleKind::kAttn
                       ? lipschitz_bound(ProbeKind::kAttn, cfg)
                       : lipschitz_bound(ProbeKind::kFeed, cfg);
  return 0.5 * c * c * r2 * r2 * std::min(cfg.patches, cfg.hidden);
}

BoundReport similarity_floor_check(ModuleKind kind, const TheoryConfig& cfg,
                                   const SimilarityOptions& opts) {
  if (!(cfg.radius > 1.0)) throw DomainError("similarity_floor_check: R must exceed 1");
  if (!(opts.r2 > 0.0)) throw DomainError("similarity_floor_check: R2 must be > 0");
  BoundReport r;
  r.name = "similarity_" + std::string(to_string(kind)) + (opts.normalize ? "" : "_unnormalized");
  base_params(r, cfg);
  r.params["R2"] = opts.r2;
  const double alpha = similarity_alpha(kind, cfg, opts.r2);
  r.bound_value = 1.0 - alpha;
  r.extra["alpha"] = alpha;
  r.extra["vacuous"] = alpha >= 2.0 ? 1.0 : 0.0;

  Prng rng = Prng(cfg.seed).fork(0x73696d + static_cast<std::uint64_t>(index_of(kind)));
  const std::size_t n = static_cast<std::size_t>(cfg.patches), d = static_cast<std::size_t>(cfg.hidden);
  TheoryConfig one = cfg;
  one.layers = 1;
  double worst_f_gap = 0.0, min_f = 1.0;
  long attempts = 0, rejected = 0;
  while (r.trials < cfg.trials) {
    ++attempts;
    check_attempts(attempts, r.trials, r.name);
    const BlockWeights b = sample_composition(one, rng).front();
    const Mat x = with_norm(n, d, rng.uniform(0.5, 1.0) * cfg.radius, rng);
    const Mat xt = add(x, with_norm(n, d, rng.uniform(1e-3, 1.0) * opts.r2, rng));
    if (exact_spectral_norm(xt) > cfg.radius) {
      ++rejected;
      continue;
    }
    Mat y = kind == ModuleKind::kAttn ? attention_forward(x, b) : feedforward_forward(x, b);
    Mat yt = kind == ModuleKind::kAttn ? attention_forward(xt, b) : feedforward_forward(xt, b);
    if (opts.normalize) {
      const double ny = frobenius_norm(y), nyt = frobenius_norm(yt);
      if (ny < 1.0 || nyt < 1.0) {
        ++rejected;
        continue;
      }
      y = scale(y, 1.0 / ny);
      yt = scale(yt, 1.0 / nyt);
    }
    const double dist = frobenius_norm(sub(y, yt));
    const double f = 1.0 - 0.5 * dist * dist;
    if (opts.normalize) worst_f_gap = std::max(worst_f_gap, std::abs(cosine_similarity(y, yt) - f));
    min_f = std::min(min_f, f);
    r.observe(ratio_of(1.0 - f, alpha));
  }
  r.extra["min_f"] = min_f;
  r.extra["rejected"] = static_cast<double>(rejected);
  if (opts.normalize) r.extra["cosine_identity_gap"] = worst_f_gap;
  return r;
}

LinearProbeFit linear_probe_fit(const std::vector<Mat>& z, const Vec& f) {
  if (z.size() != f.size()) throw ShapeError("linear_probe_fit: sample count mismatch");
  if (z.empty()) throw DomainError("linear_probe_fit: no samples");
  const std::size_t p = z.front().size();
  if (z.size() < 2 * p) {
    throw DomainError("linear_probe_fit: need at least " + std::to_string(2 * p) + " samples");
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(z.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(p) + 1;
  Eigen::MatrixXd a(rows, cols);
  Eigen::VectorXd y(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Mat& zi = z[static_cast<std::size_t>(i)];
    if (zi.size() != p) throw ShapeError("linear_probe_fit: inconsistent Z shapes");
    auto data = zi.data();
    for (std::size_t j = 0; j < p; ++j) a(i, static_cast<Eigen::Index>(j)) = data[j];
    a(i, cols - 1) = 1.0;
    y(i) = f[static_cast<std::size_t>(i)];
  }
  LinearProbeFit fit;
  fit.samples = static_cast<int>(rows);
  Eigen::VectorXd coef;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() == cols) {
    coef = qr.solve(y);
  } else {
    fit.regularized = true;
    const Eigen::MatrixXd gram =
        a.transpose() * a + 1e-8 * Eigen::MatrixXd::Identity(cols, cols);
    coef = gram.ldlt().solve(a.transpose() * y);
  }
  fit.weights.assign(coef.data(), coef.data() + p);
  fit.intercept = coef(cols - 1);
  const Eigen::VectorXd resid = y - a * coef;
  const double mean = y.mean();
  const double ss_res = resid.squaredNorm();
  const double ss_tot = (y.array() - mean).square().sum();
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  fit.max_residual = resid.cwiseAbs().maxCoeff();
  return fit;
}

SimilarityTrace record_similarity_trace(const ModelWeights& w, const NoiseSchedule& sched,
                                        const SamplerPlan& plan, const std::vector<Mat>& z_init,
                                        const std::vector<int>& labels, int layer,
                                        ModuleKind kind) {
  SimilarityTrace trace;
  std::map<int, Mat> previous;
  LazySampleOptions opts;
  opts.gate.score_override = constant_score(0.0);
  opts.observer = [&](const ModuleEvent& e) {
    if (e.site.layer != layer || e.site.kind != kind) return;
    auto it = previous.find(e.site.stream);
    if (it != previous.end()) {
      trace.z.push_back(e.z);
      trace.f.push_back(cosine_similarity(it->second, e.output));
    }
    previous[e.site.stream] = e.output;
  };
  const PredictorBank bank(static_cast<int>(w.blocks.size()), w.config.hidden);
  sample_lazy(w, bank, sched, plan, z_init, labels, opts);
  return trace;
}

BoundReport linear_probe_report(const TheoryConfig& cfg) {
  BoundReport r;
  r.name = "linear_probe";
  base_params(r, cfg);
  constexpr double kRecoveryTol = 1e-8;
  r.bound_value = kRecoveryTol;
  Prng rng = Prng(cfg.seed).fork(0x6c696e);
  const std::size_t n = static_cast<std::size_t>(cfg.patches), d = static_cast<std::size_t>(cfg.hidden);
  const int planted = std::max(10, cfg.trials / 100);
  for (int i = 0; i < planted; ++i) {
    const Mat w_true = Mat::random_normal(n, d, rng);
    const double c_true = rng.normal();
    std::vector<Mat> zs;
    Vec fs;
    for (std::size_t k = 0; k < 4 * n * d; ++k) {
      zs.push_back(Mat::random_normal(n, d, rng));
      fs.push_back(trace_inner(w_true, zs.back()) + c_true);
    }
    const LinearProbeFit fit = linear_probe_fit(zs, fs);
    double err = std::abs(fit.intercept - c_true);
    auto wt = w_true.data();
    for (std::size_t j = 0; j < wt.size(); ++j) err = std::max(err, std::abs(fit.weights[j] - wt[j]));
    r.observe(err / kRecoveryTol);
  }

  // Fit quality on real trajectories of a small backbone; logged, not asserted.
  ModelConfig mc;
  mc.layers = cfg.layers;
  mc.patches = cfg.patches;
  mc.hidden = cfg.hidden;
  mc.train_steps = 100;
  mc.weight_clip = 0.5;
  const ModelWeights w = init_model(mc, cfg.seed);
  const NoiseSchedule sched = build_schedule(mc.train_steps);
  const SamplerPlan plan = uniform_plan(mc.train_steps, 20, 1.5);
  std::vector<Mat> z_init;
  std::vector<int> labels;
  for (int b = 0; b < 16; ++b) {
    z_init.push_back(Mat::random_normal(n, d, rng));
    labels.push_back(b % mc.num_classes);
  }
  for (ModuleKind kind : kModuleKinds) {
    const SimilarityTrace trace = record_similarity_trace(w, sched, plan, z_init, labels, 0, kind);
    const LinearProbeFit fit = linear_probe_fit(trace.z, trace.f);
    const std::string k(to_string(kind));
    r.extra["trajectory_r2_" + k] = fit.r_squared;
    r.extra["trajectory_max_residual_" + k] = fit.max_residual;
    r.extra["trajectory_samples_" + k] = fit.samples;
    r.extra["trajectory_regularized_" + k] = fit.regularized ? 1.0 : 0.0;
  }
  return r;
}

BoundReport error_propagation_check(const TheoryConfig& cfg, const PropagationOptions& opts) {
  if (!(cfg.radius > 1.0)) throw DomainError("error_propagation_check: R must exceed 1");
  if (opts.inject_layer != -1 && (opts.inject_layer < 1 || opts.inject_layer > cfg.layers)) {
    throw DomainError("error_propagation_check: inject layer outside [1, L]");
  }
  BoundReport r;
  r.name = "error_propagation";
  base_params(r, cfg);
  const double per_layer = lipschitz_bound(ProbeKind::kSingleLayer, cfg);
  r.bound_value = per_layer;
  Prng rng = Prng(cfg.seed).fork(0x70726f70);
  const std::size_t n = static_cast<std::size_t>(cfg.patches), d = static_cast<std::size_t>(cfg.hidden);
  const double big_r = cfg.radius;
  const NoiseSchedule sched = build_schedule(100);
  double worst_loose = 0.0;
  long attempts = 0, rejected = 0;

  auto clip = [&](const Mat& z) {
    const double nz = exact_spectral_norm(z);
    return nz > big_r ? scale(z, big_r / nz) : z;
  };

  while (r.trials < cfg.trials) {
    ++attempts;
    check_attempts(attempts, r.trials, r.name);
    const int k = opts.inject_layer > 0 ? opts.inject_layer
                                        : 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.layers)));
    const double eps = opts.eps >= 0.0 ? opts.eps : std::pow(10.0, rng.uniform(-3.0, 0.0));
    const int steps = opts.steps > 0 ? opts.steps : 1 + static_cast<int>(rng.below(4));
    const std::vector<BlockWeights> layers = sample_composition(cfg, rng);
    const Mat head = opts.identity_head ? Mat::identity(d) : with_norm(d, d, rng.uniform(0.25, 1.0), rng);
    const SamplerPlan plan = uniform_plan(sched.train_steps, steps, 1.0);
    Mat z = with_norm(n, d, rng.uniform(0.25, 1.0) * big_r, rng);

    double deviation = 0.0;
    bool ok = true;
    for (int i = 0; i < steps && ok; ++i) {
      const Mat x = clip(z);
      std::vector<Mat> h{x};
      for (const auto& b : layers) h.push_back(composition_layer(b, h.back()));
      Mat hp = eps > 0.0 ? add(h[static_cast<std::size_t>(k)], with_norm(n, d, eps, rng))
                         : h[static_cast<std::size_t>(k)];
      for (int l = k; l < cfg.layers && ok; ++l) {
        // Layers after the injection see inputs that must stay within ||X|| <= R.
        ok = exact_spectral_norm(h[static_cast<std::size_t>(l)]) <= big_r &&
             exact_spectral_norm(hp) <= big_r;
        hp = composition_layer(layers[static_cast<std::size_t>(l)], hp);
      }
      const Mat out = matmul(h.back(), head);
      deviation += exact_spectral_norm(sub(matmul(hp, head), out));
      z = ddim_step(z, out, plan.steps[static_cast<std::size_t>(i)],
                    plan.steps[static_cast<std::size_t>(i) + 1], sched);
    }
    if (!ok) {
      ++rejected;
      continue;
    }
    const double bound = steps * std::pow(per_layer, cfg.layers - k) * eps;
    const double ratio = ratio_of(deviation, bound);
    if (ratio > 0.0) worst_loose = std::max(worst_loose, ratio);
    r.observe(ratio);
  }
  r.extra["rejected"] = static_cast<double>(rejected);
  r.extra["looseness_factor"] = worst_loose > 0.0 ? 1.0 / worst_loose : 0.0;
  return r;
}

std::vector<BoundReport> run_suite(const std::string& suite, const TheoryConfig& cfg) {
  const bool all = suite == "all";
  if (!all && suite != "scaling" && suite != "lipschitz" && suite != "similarity" &&
      suite != "linear" && suite != "propagation") {
    throw ConfigError("unknown verification suite '" + suite + "'");
  }
  std::vector<BoundReport> out;
  if (all || suite == "scaling") {
    out.push_back(construct_scaling_check(cfg, false));
    out.push_back(construct_scaling_check(cfg, true));
  }
  if (all || suite == "lipschitz") {
    for (ProbeKind k : {ProbeKind::kFeed, ProbeKind::kAttn, ProbeKind::kSingleLayer,
                        ProbeKind::kFullModel}) {
      out.push_back(lipschitz_probe(k, cfg));
    }
  }
  if (all || suite == "similarity") {
    // R2 per kind keeps alpha inside (0, 0.5) at the default R, N, D.
    out.push_back(similarity_floor_check(ModuleKind::kAttn, cfg, {1e-4, true}));
    out.push_back(similarity_floor_check(ModuleKind::kFeed, cfg, {1e-1, true}));
  }
  if (all || suite == "linear") out.push_back(linear_probe_report(cfg));
  if (all || suite == "propagation") out.push_back(error_propagation_check(cfg));
  return out;
}

std::string reports_json(const std::vector<BoundReport>& reports) {
  nlohmann::ordered_json doc;
  bool pass = true;
  doc["reports"] = nlohmann::ordered_json::array();
  for (const BoundReport& r : reports) {
    nlohmann::ordered_json j;
    j["name"] = r.name;
    j["trials"] = r.trials;
    j["worst_ratio"] = r.worst_ratio;
    j["bound_value"] = r.bound_value;
    j["pass"] = r.pass;
    j["params"] = r.params;
    j["extra"] = r.extra;
    doc["reports"].push_back(std::move(j));
    pass = pass && r.pass;
  }
  doc["pass"] = pass;
  return doc.dump(2) + "\n";
}

}  // namespace lazydit
