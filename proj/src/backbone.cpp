#include "lazydit/backbone.hpp"

#include <cmath>
#include <string>

#include "lazydit/error.hpp"
#include "lazydit/prng.hpp"

namespace lazydit {

std::string_view to_string(ModuleKind kind) {
  return kind == ModuleKind::kAttn ? "attn" : "feed";
}

ModuleKind module_kind_from_string(std::string_view name) {
  if (name == "attn") return ModuleKind::kAttn;
  if (name == "feed") return ModuleKind::kFeed;
  throw DomainError("unknown module kind '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (layers < 1 || patches < 1 || hidden < 1) {
    throw ConfigError("model: layers, patches and hidden must be >= 1");
  }
  if (train_steps < 1) throw ConfigError("model: train_steps must be >= 1");
  if (num_classes < 1) throw ConfigError("model: num_classes must be >= 1");
  if (weight_clip && !(*weight_clip > 0.0)) throw ConfigError("model: weight_clip must be > 0");
  if (!(logit_cap > 0.0)) throw ConfigError("model: logit_cap must be > 0");
}

Vec ConditionEmbedder::timestep_embedding(int t) const {
  Vec e(hidden);
  const double d = static_cast<double>(hidden);
  for (int i = 0; 2 * i < hidden; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / d);
    e[2 * i] = std::sin(t * freq);
    if (2 * i + 1 < hidden) e[2 * i + 1] = std::cos(t * freq);
  }
  return e;
}

Vec ConditionEmbedder::class_embedding(int label) const {
  const int null_row = static_cast<int>(class_table.rows()) - 1;
  if (label != kNullClass && (label < 0 || label >= null_row)) {
    throw DomainError("class label " + std::to_string(label) + " out of range");
  }
  const int row = label == kNullClass ? null_row : label;
  const auto r = class_table.row(row);
  return Vec(r.begin(), r.end());
}

namespace {

template <typename Data, typename Fn>
void visit_tensors(auto& w, Fn&& fn) {
  auto mat = [&fn](const std::string& name, auto& m) { fn(name, m.data(), m.rows(), m.cols()); };
  auto vec = [&fn](const std::string& name, auto& v) {
    fn(name, Data(v.data(), v.size()), std::size_t{1}, v.size());
  };
  mat("embed.class_table", w.embedder.class_table);
  for (std::size_t l = 0; l < w.blocks.size(); ++l) {
    auto& b = w.blocks[l];
    const std::string p = "blocks." + std::to_string(l) + ".";
    mat(p + "w_q", b.w_q);
    mat(p + "w_k", b.w_k);
    mat(p + "w_v", b.w_v);
    mat(p + "w_feed", b.w_feed);
    for (ModuleKind kind : kModuleKinds) {
      auto& m = b.mod(kind);
      const std::string q = p + std::string(to_string(kind)) + ".";
      mat(q + "w_scale", m.w_scale);
      mat(q + "w_shift", m.w_shift);
      mat(q + "w_gate", m.w_gate);
      vec(q + "v_scale", m.v_scale);
      vec(q + "v_shift", m.v_shift);
      vec(q + "v_gate", m.v_gate);
    }
  }
  mat("head", w.head);
}

}  // namespace

void for_each_tensor(ModelWeights& w,
                     const std::function<void(const std::string&, std::span<double>, std::size_t,
                                              std::size_t)>& fn) {
  visit_tensors<std::span<double>>(w, fn);
}

void for_each_tensor(const ModelWeights& w,
                     const std::function<void(const std::string&, std::span<const double>,
                                              std::size_t, std::size_t)>& fn) {
  visit_tensors<std::span<const double>>(w, fn);
}

void clip_spectral(Mat& w, double cap) {
  const double norm = spectral_norm(w);
  const double factor = std::max(1.0, norm / cap);
  if (factor > 1.0) {
    for (double& x : w.data()) x /= factor;
  }
}

ModelWeights init_model(const ModelConfig& config, std::uint64_t seed) {
  if (config.layers < 0 || config.hidden < 1 || config.num_classes < 1) {
    throw ConfigError("init_model: invalid model shape");
  }
  Prng rng(seed);
  const std::size_t d = static_cast<std::size_t>(config.hidden);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  auto dense = [&]() { return Mat::random_uniform(d, d, -bound, bound, rng); };

  ModelWeights w;
  w.config = config;
  w.embedder.hidden = config.hidden;
  w.embedder.class_table =
      Mat::random_uniform(static_cast<std::size_t>(config.num_classes) + 1, d, -1.0, 1.0, rng);
  w.blocks.resize(static_cast<std::size_t>(config.layers));
  for (auto& b : w.blocks) {
    b.w_q = dense();
    b.w_k = dense();
    b.w_v = dense();
    b.w_feed = dense();
    for (auto& m : b.modulation) {
      m.w_scale = dense();
      m.w_shift = dense();
      m.w_gate = dense();
      m.v_scale.assign(d, 1.0);
      m.v_shift.assign(d, 0.0);
      m.v_gate.assign(d, 1.0);
    }
  }
  w.head = dense();

  if (config.weight_clip) {
    const double cap = *config.weight_clip;
    for (auto& b : w.blocks) {
      for (Mat* m : {&b.w_q, &b.w_k, &b.w_v, &b.w_feed}) clip_spectral(*m, cap);
      for (auto& m : b.modulation) {
        for (Mat* x : {&m.w_scale, &m.w_shift, &m.w_gate}) clip_spectral(*x, cap);
      }
      // The attention bilinear form W = W_Q W_K^T must also respect the cap.
      const double wn = spectral_norm(matmul_nt(b.w_q, b.w_k));
      if (wn > cap) {
        for (double& x : b.w_q.data()) x *= cap / wn;
      }
    }
    clip_spectral(w.head, cap);
  }
  return w;
}

Vec embed_condition(const ModelWeights& w, int t, int label) {
  if (t < 0 || t >= w.config.train_steps) {
    throw DomainError("timestep " + std::to_string(t) + " outside [0, " +
                      std::to_string(w.config.train_steps) + ")");
  }
  return silu(add(w.embedder.timestep_embedding(t), w.embedder.class_embedding(label)));
}

ModulationFactors modulation_factors(const ModelWeights& w, int layer, ModuleKind kind,
                                     std::span<const double> y) {
  if (layer < 0 || static_cast<std::size_t>(layer) >= w.blocks.size()) {
    throw DomainError("layer index " + std::to_string(layer) + " out of range");
  }
  const Modulation& m = w.blocks[static_cast<std::size_t>(layer)].mod(kind);
  return {add(matvec(m.w_scale, y), m.v_scale), add(matvec(m.w_shift, y), m.v_shift),
          add(matvec(m.w_gate, y), m.v_gate)};
}

Mat modulate(const Mat& x, std::span<const double> a, std::span<const double> b) {
  if (a.size() != x.cols() || b.size() != x.cols()) {
    throw ShapeError("modulate: factor length does not match " + x.shape_string());
  }
  Mat z(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) z(i, j) = a[j] * x(i, j) + b[j];
  return z;
}

Mat attention_forward(const Mat& z, const BlockWeights& w, double logit_cap) {
  const Mat bilinear = matmul_nt(w.w_q, w.w_k);  // W_Q W_K^T
  const Mat logits = matmul_nt(matmul(z, bilinear), z);
  const Mat v = matmul(z, w.w_v);
  const std::size_t n = z.rows();

  Mat probs(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = logits.row(i);
    double hi = row[0];
    for (double x : row) {
      if (!(x <= logit_cap)) {
        throw OverflowError("attention logit " + std::to_string(x) + " exceeds cap " +
                            std::to_string(logit_cap));
      }
      hi = std::max(hi, x);
    }
    // exp(x - hi) / sum is the same ratio as exp(x) / sum exp, without underflow.
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      probs(i, j) = std::exp(row[j] - hi);
      total += probs(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) probs(i, j) /= total;
  }
  return matmul(probs, v);
}

Mat feedforward_forward(const Mat& z, const BlockWeights& w) { return matmul(z, w.w_feed); }

Mat module_forward(const ModelWeights& w, int layer, ModuleKind kind, const Mat& z) {
  const BlockWeights& b = w.blocks.at(static_cast<std::size_t>(layer));
  return kind == ModuleKind::kAttn ? attention_forward(z, b, w.config.logit_cap)
                                   : feedforward_forward(z, b);
}

ModuleEvaluator dense_evaluator(const ModelWeights& w) {
  return [&w](int layer, ModuleKind kind, const Mat& z) {
    return module_forward(w, layer, kind, z);
  };
}

Mat block_forward(const ModelWeights& w, const Mat& x, int layer, std::span<const double> y,
                  const ModuleEvaluator& compute) {
  Mat out = x;
  for (ModuleKind kind : kModuleKinds) {
    const ModulationFactors f = modulation_factors(w, layer, kind, y);
    const Mat z = modulate(out, f.scale, f.shift);
    const Mat module_out = compute(layer, kind, z);
    if (module_out.rows() != out.rows() || module_out.cols() != out.cols()) {
      throw ShapeError("block_forward: module output " + module_out.shape_string() +
                       " does not match " + out.shape_string());
    }
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += f.gate[j] * module_out(i, j);
  }
  return out;
}

Mat model_forward(const ModelWeights& w, const Mat& z, int t, int label,
                  const ModuleEvaluator& compute) {
  const Vec y = embed_condition(w, t, label);
  Mat x = z;
  for (std::size_t l = 0; l < w.blocks.size(); ++l) {
    x = block_forward(w, x, static_cast<int>(l), y, compute);
  }
  return matmul(x, w.head);
}

}  // namespace lazydit
