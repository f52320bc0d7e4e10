#include "lazydit/macs.hpp"

#include <json.hpp>

#include "lazydit/error.hpp"

namespace lazydit {

void ArchSpec::validate() const {
  if (layers < 1 || hidden < 1 || tokens < 1 || mlp_ratio < 1 || patch < 1) {
    throw ConfigError("arch: layers, hidden, tokens, mlp_ratio and patch must be >= 1");
  }
}

int tokens_for_resolution(int image_size, int vae_factor, int patch) {
  if (image_size < 1 || vae_factor < 1 || patch < 1 || image_size % (vae_factor * patch) != 0) {
    throw ConfigError("arch: image size must be a multiple of vae_factor * patch");
  }
  const int side = image_size / vae_factor / patch;
  return side * side;
}

ArchSpec arch_preset(std::string_view name) {
  ArchSpec a;
  a.layers = 28;
  a.hidden = 1152;
  a.mlp_ratio = 4;
  a.patch = 2;
  if (name == "xl2-256") {
    a.tokens = tokens_for_resolution(256, 8, 2);
  } else if (name == "xl2-512") {
    a.tokens = tokens_for_resolution(512, 8, 2);
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected xl2-256 or xl2-512)");
  }
  a.name = std::string(name);
  return a;
}

MacBreakdown mac_breakdown(const ArchSpec& arch) {
  arch.validate();
  const double l = arch.layers, d = arch.hidden, n = arch.tokens;
  MacBreakdown m;
  m.activation = l * 2.0 * n * n * d;
  m.attn = l * (arch.has_qkv_proj ? 4.0 : 2.0) * n * d * d;
  if (arch.count_activation_matmuls) m.attn += m.activation;
  m.feed = l * 2.0 * arch.mlp_ratio * n * d * d;
  m.modulation = l * 6.0 * d * d;
  m.predictor = arch.lazy_predictor_overhead ? l * 2.0 * n * d : 0.0;
  return m;
}

double mac_count(const ArchSpec& arch, int steps, double lazy_ratio) {
  if (steps < 0) throw DomainError("mac_count: steps must be >= 0");
  if (!(lazy_ratio >= 0.0 && lazy_ratio <= 1.0)) {
    throw DomainError("mac_count: lazy_ratio must lie in [0, 1]");
  }
  const MacBreakdown m = mac_breakdown(arch);
  const double per_step = (m.attn + m.feed) * (1.0 - lazy_ratio) + m.modulation + m.predictor;
  return per_step * steps;
}

MacReport mac_report(const ArchSpec& arch, int steps, double lazy_ratio) {
  MacReport r;
  r.arch = arch;
  r.steps = steps;
  r.lazy_ratio = lazy_ratio;
  r.tmacs = to_tmacs(mac_count(arch, steps, lazy_ratio));
  ArchSpec inclusive = arch;
  inclusive.count_activation_matmuls = true;
  r.tmacs_with_activations = to_tmacs(mac_count(inclusive, steps, lazy_ratio));
  ArchSpec dense = arch;
  dense.lazy_predictor_overhead = false;
  r.tmacs_dense = to_tmacs(mac_count(dense, steps, 0.0));
  r.per_step = mac_breakdown(arch);
  return r;
}

std::string mac_report_json(const MacReport& r) {
  nlohmann::ordered_json j;
  j["preset"] = r.arch.name;
  j["layers"] = r.arch.layers;
  j["hidden"] = r.arch.hidden;
  j["tokens"] = r.arch.tokens;
  j["mlp_ratio"] = r.arch.mlp_ratio;
  j["patch"] = r.arch.patch;
  j["has_qkv_proj"] = r.arch.has_qkv_proj;
  j["count_activation_matmuls"] = r.arch.count_activation_matmuls;
  j["lazy_predictor_overhead"] = r.arch.lazy_predictor_overhead;
  j["steps"] = r.steps;
  j["lazy_ratio"] = r.lazy_ratio;
  j["tmacs"] = r.tmacs;
  j["tmacs_with_activations"] = r.tmacs_with_activations;
  j["tmacs_dense"] = r.tmacs_dense;
  j["per_step_macs"] = {{"attn", r.per_step.attn},
                        {"feed", r.per_step.feed},
                        {"modulation", r.per_step.modulation},
                        {"predictor", r.per_step.predictor},
                        {"activation", r.per_step.activation}};
  return j.dump(2) + "\n";
}

}  // namespace lazydit
