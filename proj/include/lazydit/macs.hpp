#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace lazydit {

// Transformer cost-model descriptor. Counts multiply-accumulates of one network
// evaluation per sampling step.
struct ArchSpec {
  std::string name = "custom";
  int layers = 28;
  int hidden = 1152;
  int tokens = 256;
  int mlp_ratio = 4;
  int patch = 2;
  // Q, K, V and output projections (4 N D^2). When false, the bare Z W and Z W_V
  // products of the toy attention are counted instead (2 N D^2).
  bool has_qkv_proj = true;
  // Adds the N x N score and value products (2 N^2 D) to the attention cost.
  bool count_activation_matmuls = false;
  // Two N x D similarity predictors per layer on every step.
  bool lazy_predictor_overhead = false;

  void validate() const;
};

// tokens = (image_size / vae_factor / patch)^2.
int tokens_for_resolution(int image_size, int vae_factor, int patch);

// "xl2-256" or "xl2-512".
ArchSpec arch_preset(std::string_view name);

struct MacBreakdown {
  double attn = 0.0;        // per step, all layers, skippable
  double feed = 0.0;        // per step, all layers, skippable
  double modulation = 0.0;  // per step, adaLN 6 D^2 per layer, never skipped
  double predictor = 0.0;   // per step, 2 L N D when flagged
  double activation = 0.0;  // per step, 2 L N^2 D; included in attn only when flagged
};

MacBreakdown mac_breakdown(const ArchSpec& arch);

// Total MACs over `steps` evaluations with skippable modules scaled by
// (1 - lazy_ratio).
double mac_count(const ArchSpec& arch, int steps, double lazy_ratio);

inline double to_tmacs(double macs) { return macs / 1e12; }

struct MacReport {
  ArchSpec arch;
  int steps = 0;
  double lazy_ratio = 0.0;
  double tmacs = 0.0;
  double tmacs_with_activations = 0.0;  // same run with 2 N^2 D counted
  double tmacs_dense = 0.0;             // lazy_ratio 0, no predictor
  MacBreakdown per_step;
};

MacReport mac_report(const ArchSpec& arch, int steps, double lazy_ratio);
std::string mac_report_json(const MacReport& report);

}  // namespace lazydit
