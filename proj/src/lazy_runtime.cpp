#include "lazydit/lazy_runtime.hpp"

#include <sstream>

#include "lazydit/error.hpp"
#include "lazydit/format.hpp"

namespace lazydit {

PredictorBank::PredictorBank(int layers, int hidden)
    : layers_(layers),
      hidden_(hidden),
      params_(static_cast<std::size_t>(layers) * 2 * static_cast<std::size_t>(hidden), 0.0) {
  if (layers < 0 || hidden < 1) throw DomainError("PredictorBank: invalid shape");
}

std::span<const double> PredictorBank::weight(int layer, ModuleKind kind) const {
  if (layer < 0 || layer >= layers_) throw DomainError("PredictorBank: layer out of range");
  const std::size_t off = (static_cast<std::size_t>(layer) * 2 + index_of(kind)) * hidden_;
  return {params_.data() + off, static_cast<std::size_t>(hidden_)};
}

std::span<double> PredictorBank::weight(int layer, ModuleKind kind) {
  if (layer < 0 || layer >= layers_) throw DomainError("PredictorBank: layer out of range");
  const std::size_t off = (static_cast<std::size_t>(layer) * 2 + index_of(kind)) * hidden_;
  return {params_.data() + off, static_cast<std::size_t>(hidden_)};
}

double lazy_logit(const Mat& z, std::span<const double> w) {
  if (z.cols() != w.size()) {
    throw ShapeError("lazy_score: " + z.shape_string() + " x predictor[" +
                     std::to_string(w.size()) + "]");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < z.cols(); ++j) row += z(i, j) * w[j];
    total += row;
  }
  return total;
}

double lazy_score(const Mat& z, std::span<const double> w) { return sigmoid(lazy_logit(z, w)); }

const Mat* StepCache::lookup(const CacheKey& key, int expected_generation) const {
  auto it = entries_.find(key);
  if (it == entries_.end() || it->second.generation != expected_generation) return nullptr;
  return &it->second.value;
}

std::optional<int> StepCache::generation(const CacheKey& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second.generation;
}

void StepCache::store(const CacheKey& key, Mat value, int generation) {
  entries_[key] = Entry{std::move(value), generation};
}

void StepCache::refresh(const CacheKey& key, int generation) {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw DomainError("StepCache::refresh: no entry");
  it->second.generation = generation;
}

RunStats::RunStats(int layers, int steps, int streams)
    : layers_(layers), steps_(steps), streams_(streams) {
  const std::size_t n = static_cast<std::size_t>(layers) * 2 * steps * streams;
  bits_.assign(n, 0);
  seen_.assign(n, 0);
  scores_.assign(n, 0.0);
}

std::size_t RunStats::index(int layer, ModuleKind kind, int step, int stream) const {
  if (layer < 0 || layer >= layers_ || step < 0 || step >= steps_ || stream < 0 ||
      stream >= streams_) {
    throw DomainError("RunStats: index out of range");
  }
  return ((static_cast<std::size_t>(layer) * 2 + index_of(kind)) * steps_ + step) * streams_ +
         stream;
}

void RunStats::record(int layer, ModuleKind kind, int step, int stream, double score,
                      bool skipped) {
  const std::size_t i = index(layer, kind, step, stream);
  bits_[i] = skipped ? 1 : 0;
  seen_[i] = 1;
  scores_[i] = score;
}

bool RunStats::skipped(int layer, ModuleKind kind, int step, int stream) const {
  return bits_[index(layer, kind, step, stream)] != 0;
}

double RunStats::score(int layer, ModuleKind kind, int step, int stream) const {
  return scores_[index(layer, kind, step, stream)];
}

bool RunStats::recorded(int layer, ModuleKind kind, int step, int stream) const {
  return seen_[index(layer, kind, step, stream)] != 0;
}

std::int64_t RunStats::computed_count(ModuleKind kind) const {
  std::int64_t n = 0;
  for (int l = 0; l < layers_; ++l)
    for (int k = 0; k < steps_; ++k)
      for (int s = 0; s < streams_; ++s) {
        const std::size_t i = index(l, kind, k, s);
        n += (seen_[i] && !bits_[i]) ? 1 : 0;
      }
  return n;
}

std::int64_t RunStats::skipped_count(ModuleKind kind) const {
  std::int64_t n = 0;
  for (int l = 0; l < layers_; ++l)
    for (int k = 0; k < steps_; ++k)
      for (int s = 0; s < streams_; ++s) n += bits_[index(l, kind, k, s)];
  return n;
}

Vec lazy_ratio(const RunStats& stats, ModuleKind kind) {
  Vec out(static_cast<std::size_t>(stats.streams()), 0.0);
  const double denom = static_cast<double>(stats.layers()) * stats.steps();
  if (denom == 0.0) return out;
  for (int s = 0; s < stats.streams(); ++s) {
    int count = 0;
    for (int l = 0; l < stats.layers(); ++l)
      for (int k = 0; k < stats.steps(); ++k) count += stats.skipped(l, kind, k, s) ? 1 : 0;
    out[s] = count / denom;
  }
  return out;
}

double mean_lazy_ratio(const RunStats& stats, ModuleKind kind) {
  const Vec r = lazy_ratio(stats, kind);
  if (r.empty()) return 0.0;
  double total = 0.0;
  for (double x : r) total += x;
  return total / static_cast<double>(r.size());
}

std::vector<HeatmapCell> laziness_heatmap(const RunStats& stats) {
  std::vector<HeatmapCell> cells;
  cells.reserve(static_cast<std::size_t>(stats.layers()) * 2 * stats.steps());
  for (ModuleKind kind : kModuleKinds) {
    for (int l = 0; l < stats.layers(); ++l) {
      for (int k = 0; k < stats.steps(); ++k) {
        int count = 0;
        for (int s = 0; s < stats.streams(); ++s) count += stats.skipped(l, kind, k, s) ? 1 : 0;
        const double rate = stats.streams() == 0 ? 0.0 : static_cast<double>(count) / stats.streams();
        cells.push_back({l, kind, k, rate});
      }
    }
  }
  return cells;
}

std::string heatmap_csv(const RunStats& stats) {
  std::ostringstream os;
  os << "layer,kind,step,skip_rate\n";
  for (const HeatmapCell& c : laziness_heatmap(stats)) {
    os << c.layer << ',' << to_string(c.kind) << ',' << c.step << ','
       << format_double(c.skip_rate) << '\n';
  }
  return os.str();
}

ScoreFn constant_score(double s) {
  return [s](const ScoreQuery&) { return s; };
}

BlendResult blended_forward(const ModuleSite& site, const Mat& z, StepCache& cache,
                            const PredictorBank& bank, const ModuleEvaluator& dense) {
  const CacheKey key = site.key();
  Mat fresh = dense(site.layer, site.kind, z);
  const Mat* prev = cache.lookup(key, site.t_prev);
  if (prev == nullptr) {
    cache.store(key, fresh, site.t);
    return {std::move(fresh), std::nullopt};
  }
  const double s = lazy_score(z, bank.weight(site.layer, site.kind));
  Mat y(fresh.rows(), fresh.cols());
  auto f = fresh.data();
  auto p = prev->data();
  auto out = y.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - s) * f[i] + s * p[i];
  cache.store(key, std::move(fresh), site.t);
  return {std::move(y), s};
}

Mat gated_forward(const ModuleSite& site, const Mat& z, StepCache& cache,
                  const PredictorBank& bank, const ModuleEvaluator& dense, RunStats& stats,
                  const GateOptions& opts) {
  const CacheKey key = site.key();
  const double s = opts.score_override ? opts.score_override(ScoreQuery{site, z})
                                       : lazy_score(z, bank.weight(site.layer, site.kind));
  const Mat* prev = cache.lookup(key, site.t_prev);
  if (prev != nullptr && skip_decision(s, opts.threshold)) {
    stats.record(site.layer, site.kind, site.step_index, site.stream, s, true);
    cache.refresh(key, site.t);
    return *prev;
  }
  Mat y = dense(site.layer, site.kind, z);
  cache.store(key, y, site.t);
  stats.record(site.layer, site.kind, site.step_index, site.stream, s, false);
  return y;
}

std::vector<Mat> sample_dense(const ModelWeights& w, const NoiseSchedule& sched,
                              const SamplerPlan& plan, const std::vector<Mat>& z_init,
                              const std::vector<int>& labels) {
  if (z_init.size() != labels.size()) throw ShapeError("sample_dense: batch size mismatch");
  const ModuleEvaluator dense = dense_evaluator(w);
  NoisePredictor predict = [&](const Mat& z, const StepContext& ctx) {
    return model_forward(w, z, ctx.t - 1, ctx.label, dense);
  };
  std::vector<Mat> out;
  out.reserve(z_init.size());
  for (std::size_t b = 0; b < z_init.size(); ++b) {
    out.push_back(sample_loop(z_init[b], plan, sched, predict, labels[b]));
  }
  return out;
}

SampleResult sample_lazy(const ModelWeights& w, const PredictorBank& bank,
                         const NoiseSchedule& sched, const SamplerPlan& plan,
                         const std::vector<Mat>& z_init, const std::vector<int>& labels,
                         const LazySampleOptions& opts) {
  if (z_init.size() != labels.size()) throw ShapeError("sample_lazy: batch size mismatch");
  if (bank.layers() != static_cast<int>(w.blocks.size()) || bank.hidden() != w.config.hidden) {
    throw ShapeError("sample_lazy: predictor bank does not match the model");
  }
  const int batch = static_cast<int>(z_init.size());
  SampleResult result;
  result.stats = RunStats(static_cast<int>(w.blocks.size()), plan.num_steps(), 2 * batch);
  const ModuleEvaluator dense = dense_evaluator(w);
  StepCache cache;

  for (int b = 0; b < batch; ++b) {
    NoisePredictor predict = [&](const Mat& z, const StepContext& ctx) {
      ModuleEvaluator gated = [&](int layer, ModuleKind kind, const Mat& zin) {
        ModuleSite site{layer, kind, 2 * b + ctx.branch, ctx.step_index, ctx.t, ctx.t_prev};
        Mat y = gated_forward(site, zin, cache, bank, dense, result.stats, opts.gate);
        if (opts.observer) {
          opts.observer(ModuleEvent{site, zin, y,
                                    result.stats.score(layer, kind, site.step_index, site.stream),
                                    result.stats.skipped(layer, kind, site.step_index,
                                                         site.stream)});
        }
        return y;
      };
      return model_forward(w, z, ctx.t - 1, ctx.label, gated);
    };
    result.latents.push_back(sample_loop(z_init[b], plan, sched, predict, labels[b]));
  }
  return result;
}

std::int64_t module_macs(const ModelConfig& config, ModuleKind kind) {
  const std::int64_t n = config.patches, d = config.hidden;
  if (kind == ModuleKind::kFeed) return n * d * d;
  // Z W and Z W_V, then the N x N logits and the value mix.
  return 2 * n * d * d + 2 * n * n * d;
}

std::int64_t predictor_macs(const ModelConfig& config) {
  return static_cast<std::int64_t>(config.patches) * config.hidden;
}

}  // namespace lazydit
