#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lazydit/backbone.hpp"
#include "lazydit/linalg.hpp"
#include "lazydit/scheduler.hpp"

namespace lazydit {

// Outcome of checking one inequality over many seeded trials. worst_ratio is the
// largest observed LHS / RHS; the bound holds iff it stays within 1 + 1e-9.
struct BoundReport {
  std::string name;
  int trials = 0;
  double worst_ratio = 0.0;
  double bound_value = 0.0;
  bool pass = true;
  std::map<std::string, double> params;
  std::map<std::string, double> extra;

  void observe(double ratio);
};

inline constexpr double kBoundTolerance = 1e-9;

struct RowScaling {
  Vec a, b, c;
  double residual = 0.0;  // ||a o x1 + b o x2 + c||_2
};

// a = 0.5 eta / ||x1|| 1, b = 0.5 eta / ||x2|| 1, c = 0.
RowScaling construct_row_scaling(const Vec& x1, const Vec& x2, double eta);

struct MatrixScaling {
  Mat a, b, c;            // N x D, each row a copy of the per-row vector
  double residual = 0.0;  // ||A o X1 + B o X2 + C||_F
  // ||(A_prev o X1 + B_prev) - (A_cur o X2 + B_cur)||_F with A_prev = A, A_cur = -B,
  // B_prev - B_cur = C.
  double step_distance = 0.0;
};

// a = 0.5 eta / (N M1) 1_D and b = 0.5 eta / (N M2) 1_D, M the largest row norm.
MatrixScaling construct_matrix_scaling(const Mat& x1, const Mat& x2, double eta);

// Largest singular value, computed by SVD.
double exact_spectral_norm(const Mat& a);

struct TheoryConfig {
  int patches = 4;
  int hidden = 4;
  int layers = 2;
  double radius = 2.0;  // R: bound on ||W||, ||W_V||, ||W_feed|| and ||X||
  int trials = 1000;
  std::uint64_t seed = 0;
};

// Weights of the bare composition F_feed o F_attn per layer: no modulation, no
// residual. W is stored as w_q with w_k = I.
std::vector<BlockWeights> sample_composition(const TheoryConfig& cfg, Prng& rng);
Mat composition_layer(const BlockWeights& b, const Mat& x);

enum class ProbeKind { kAttn, kFeed, kSingleLayer, kFullModel };
std::string_view to_string(ProbeKind kind);

double lipschitz_bound(ProbeKind kind, const TheoryConfig& cfg);

BoundReport construct_scaling_check(const TheoryConfig& cfg, bool matrix);
BoundReport lipschitz_probe(ProbeKind kind, const TheoryConfig& cfg);

// ||F(X) - F(X~)|| / ||X - X~|| for one pair; exposed for constructed cases.
double lipschitz_ratio(ProbeKind kind, const std::vector<BlockWeights>& layers, const Mat& x,
                       const Mat& x_tilde);

struct SimilarityOptions {
  double r2 = 1e-3;  // ||X - X~|| <= R2
  // When set, outputs are scaled to unit Frobenius norm and pairs with a raw
  // output norm below one are resampled, so the scaling cannot expand distances.
  bool normalize = true;
};

// f(Y, Y~) >= 1 - 0.5 C^2 R2^2 min(N, D) for one module kind.
BoundReport similarity_floor_check(ModuleKind kind, const TheoryConfig& cfg,
                                   const SimilarityOptions& opts = {});
double similarity_alpha(ModuleKind kind, const TheoryConfig& cfg, double r2);

struct LinearProbeFit {
  Vec weights;  // over vec(Z), row-major
  double intercept = 0.0;
  double r_squared = 0.0;
  double max_residual = 0.0;
  bool regularized = false;
  int samples = 0;
};

// Least squares f ~ <W, Z> + c. Needs at least 2 N D samples.
LinearProbeFit linear_probe_fit(const std::vector<Mat>& z, const Vec& f);

// (Z_{l,t}, cosine(Y_{l,t-1}, Y_{l,t})) pairs from dense sampling runs.
struct SimilarityTrace {
  std::vector<Mat> z;
  Vec f;
};
SimilarityTrace record_similarity_trace(const ModelWeights& w, const NoiseSchedule& sched,
                                        const SamplerPlan& plan, const std::vector<Mat>& z_init,
                                        const std::vector<int>& labels, int layer,
                                        ModuleKind kind);

BoundReport linear_probe_report(const TheoryConfig& cfg);

struct PropagationOptions {
  int inject_layer = -1;     // k in [1, L]; -1 draws it per trial
  double eps = -1.0;         // -1 draws 10^U(-3, 0) per trial
  int steps = -1;            // T; -1 draws from [1, 4]
  bool identity_head = false;
};

// Sums the per-step model-output deviation caused by a norm-eps perturbation at
// layer k's output along a T-step DDIM trajectory; bound T (5 R^5 N D)^(L-k) eps.
BoundReport error_propagation_check(const TheoryConfig& cfg, const PropagationOptions& opts = {});

std::vector<BoundReport> run_suite(const std::string& suite, const TheoryConfig& cfg);

std::string reports_json(const std::vector<BoundReport>& reports);

}  // namespace lazydit
