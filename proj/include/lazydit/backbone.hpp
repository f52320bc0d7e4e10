#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "lazydit/linalg.hpp"

namespace lazydit {

enum class ModuleKind : int { kAttn = 0, kFeed = 1 };

inline constexpr std::array<ModuleKind, 2> kModuleKinds = {ModuleKind::kAttn, ModuleKind::kFeed};

constexpr int index_of(ModuleKind kind) { return static_cast<int>(kind); }
std::string_view to_string(ModuleKind kind);
ModuleKind module_kind_from_string(std::string_view name);

// Class label value selecting the null (unconditional) token.
inline constexpr int kNullClass = -1;

struct ModelConfig {
  int layers = 2;
  int patches = 8;
  int hidden = 16;
  int train_steps = 1000;
  int num_classes = 4;
  // Spectral-norm cap applied to every weight matrix after initialization.
  std::optional<double> weight_clip;
  // Attention logits above this value raise OverflowError.
  double logit_cap = 60.0;

  void validate() const;
};

// adaLN-style conditioning for one sub-module: scale a, shift b and output gate g,
// each an affine map of the condition vector y_t.
struct Modulation {
  Mat w_scale, w_shift, w_gate;
  Vec v_scale, v_shift, v_gate;
};

struct BlockWeights {
  Mat w_q, w_k, w_v;
  Mat w_feed;
  std::array<Modulation, 2> modulation;  // indexed by ModuleKind

  const Modulation& mod(ModuleKind kind) const { return modulation[index_of(kind)]; }
  Modulation& mod(ModuleKind kind) { return modulation[index_of(kind)]; }
};

// Sinusoidal timestep embedding plus a learned class table whose last row is
// the null token.
struct ConditionEmbedder {
  int hidden = 0;
  Mat class_table;  // (num_classes + 1) x hidden

  Vec timestep_embedding(int t) const;
  Vec class_embedding(int label) const;
};

struct ModelWeights {
  ModelConfig config;
  ConditionEmbedder embedder;
  std::vector<BlockWeights> blocks;
  Mat head;  // hidden x hidden, applied after the last block
};

// Visits every tensor of the model in a fixed declaration order.
// The callback receives (name, data, rows, cols); vectors are reported as 1 x n.
void for_each_tensor(ModelWeights& w,
                     const std::function<void(const std::string&, std::span<double>, std::size_t,
                                              std::size_t)>& fn);
void for_each_tensor(const ModelWeights& w,
                     const std::function<void(const std::string&, std::span<const double>,
                                              std::size_t, std::size_t)>& fn);

// Uniform(-1/sqrt(D), 1/sqrt(D)) weights; scale/gate biases start at one and
// shift biases at zero, so a fresh block applies identity modulation plus noise
// from the weight matrices.
ModelWeights init_model(const ModelConfig& config, std::uint64_t seed);

// Divides w by max(1, ||w|| / cap).
void clip_spectral(Mat& w, double cap);

// y_t = SiLU(emd(t) + emd(c)); t in [0, train_steps), c a class or kNullClass.
Vec embed_condition(const ModelWeights& w, int t, int label);

struct ModulationFactors {
  Vec scale, shift, gate;
};

ModulationFactors modulation_factors(const ModelWeights& w, int layer, ModuleKind kind,
                                     std::span<const double> y);

// Z[i][j] = a[j] * X[i][j] + b[j].
Mat modulate(const Mat& x, std::span<const double> a, std::span<const double> b);

// Single-head exp-kernel attention D^-1 exp(Z W Z^T) Z W_V with W = W_Q W_K^T.
// No 1/sqrt(d) scaling and no output projection.
Mat attention_forward(const Mat& z, const BlockWeights& w, double logit_cap = 60.0);

// Z W_feed.
Mat feedforward_forward(const Mat& z, const BlockWeights& w);

// Dense module evaluation F_l^kind(Z).
Mat module_forward(const ModelWeights& w, int layer, ModuleKind kind, const Mat& z);

// Returns Y for sub-module (layer, kind) given its modulated input Z. Either a
// dense evaluation or a cached substitute supplied by the lazy runtime.
using ModuleEvaluator = std::function<Mat(int layer, ModuleKind kind, const Mat& z)>;

ModuleEvaluator dense_evaluator(const ModelWeights& w);

// For attn then feed: Z = modulate(X, a, b); Y = compute(layer, kind, Z);
// X <- X + g o Y (gate broadcast over rows).
Mat block_forward(const ModelWeights& w, const Mat& x, int layer, std::span<const double> y,
                  const ModuleEvaluator& compute);

// Noise prediction: L blocks followed by the linear head.
Mat model_forward(const ModelWeights& w, const Mat& z, int t, int label,
                  const ModuleEvaluator& compute);

}  // namespace lazydit
