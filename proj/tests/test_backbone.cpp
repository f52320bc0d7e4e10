#include <doctest.h>

#include <cmath>

#include "golden.hpp"
#include "lazydit/backbone.hpp"
#include "lazydit/error.hpp"
#include "lazydit/format.hpp"
#include "lazydit/prng.hpp"

using namespace lazydit;

namespace {

ModelConfig tiny(int layers = 2, int patches = 3, int hidden = 4) {
  ModelConfig c;
  c.layers = layers;
  c.patches = patches;
  c.hidden = hidden;
  c.train_steps = 50;
  c.num_classes = 3;
  c.weight_clip = 0.5;
  return c;
}

// Explicit loops over exp and row normalization.
Mat naive_attention(const Mat& z, const Mat& wq, const Mat& wk, const Mat& wv) {
  const std::size_t n = z.rows(), d = z.cols();
  Mat w(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k) w(i, j) += wq(i, k) * wk(j, k);
  Mat v(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k) v(i, j) += z(i, k) * wv(k, j);
  Mat out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> a(n);
    double denom = 0;
    for (std::size_t j = 0; j < n; ++j) {
      double logit = 0;
      for (std::size_t p = 0; p < d; ++p)
        for (std::size_t q = 0; q < d; ++q) logit += z(i, p) * w(p, q) * z(j, q);
      a[j] = std::exp(logit);
      denom += a[j];
    }
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) out(i, c) += a[j] / denom * v(j, c);
  }
  return out;
}

double max_diff(const Mat& a, const Mat& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("embed_condition") {
  const ModelWeights w = init_model(tiny(), 1);
  CHECK(embed_condition(w, 0, 0) == embed_condition(w, 0, 0));
  CHECK_THROWS_AS((void)embed_condition(w, 50, 0), DomainError);
  CHECK_THROWS_AS((void)embed_condition(w, -1, 0), DomainError);
  CHECK_THROWS_AS((void)embed_condition(w, 0, 3), DomainError);
  CHECK_NOTHROW((void)embed_condition(w, 0, kNullClass));
  CHECK(w.embedder.class_table.rows() == 4);

  // emd(0) = (0, 1, 0, 1); cancelling it with the class row gives y = 0.
  ModelWeights z = w;
  const Vec e0 = z.embedder.timestep_embedding(0);
  CHECK(e0 == Vec{0, 1, 0, 1});
  for (int j = 0; j < 4; ++j) z.embedder.class_table(1, j) = -e0[j];
  CHECK(embed_condition(z, 0, 1) == Vec{0, 0, 0, 0});

  for (int j = 0; j < 4; ++j) z.embedder.class_table(2, j) = 10.0 - e0[j];
  for (double v : embed_condition(z, 0, 2)) {
    CHECK(v == doctest::Approx(10.0 / (1.0 + std::exp(-10.0))).epsilon(1e-14));
    CHECK(v == doctest::Approx(10.0).epsilon(1e-3));
  }
}

TEST_CASE("init respects the spectral cap") {
  const ModelWeights w = init_model(tiny(2, 3, 8), 4);
  for (const BlockWeights& b : w.blocks) {
    for (const Mat* m : {&b.w_q, &b.w_k, &b.w_v, &b.w_feed}) CHECK(spectral_norm(*m) <= 0.5 + 1e-9);
    for (ModuleKind k : kModuleKinds) {
      CHECK(spectral_norm(b.mod(k).w_scale) <= 0.5 + 1e-9);
      CHECK(b.mod(k).v_scale == Vec(8, 1.0));
      CHECK(b.mod(k).v_shift == Vec(8, 0.0));
      CHECK(b.mod(k).v_gate == Vec(8, 1.0));
    }
  }
  CHECK(spectral_norm(w.head) <= 0.5 + 1e-9);
  Mat m{{3, 0}, {0, 1}};
  clip_spectral(m, 1.5);
  CHECK(m(0, 0) == doctest::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("modulation factors") {
  ModelWeights w = init_model(tiny(), 2);
  const Vec zero(4, 0.0);
  const ModulationFactors f = modulation_factors(w, 0, ModuleKind::kFeed, zero);
  CHECK(f.scale == w.blocks[0].mod(ModuleKind::kFeed).v_scale);
  CHECK(f.shift == w.blocks[0].mod(ModuleKind::kFeed).v_shift);

  Modulation& m = w.blocks[1].mod(ModuleKind::kAttn);
  m.w_scale = Mat::identity(4);
  m.v_scale = zero;
  const Vec y{0.3, -1.0, 2.0, 0.5};
  CHECK(modulation_factors(w, 1, ModuleKind::kAttn, y).scale == y);

  Prng rng(5);
  Vec r(4);
  for (double& v : r) v = rng.normal();
  const Modulation& g = w.blocks[0].mod(ModuleKind::kAttn);
  const ModulationFactors got = modulation_factors(w, 0, ModuleKind::kAttn, r);
  for (int i = 0; i < 4; ++i) {
    double s = g.v_shift[i], t = g.v_gate[i];
    for (int j = 0; j < 4; ++j) {
      s += g.w_shift(i, j) * r[j];
      t += g.w_gate(i, j) * r[j];
    }
    CHECK(got.shift[i] == doctest::Approx(s).epsilon(1e-14));
    CHECK(got.gate[i] == doctest::Approx(t).epsilon(1e-14));
  }
  CHECK_THROWS_AS((void)modulation_factors(w, 2, ModuleKind::kAttn, r), DomainError);
}

TEST_CASE("modulate") {
  Prng rng(1);
  const Mat x = Mat::random_normal(3, 2, rng);
  const Vec one{1, 1}, zero{0, 0}, b{4, -1};
  CHECK(modulate(x, one, zero) == x);
  const Mat rows = modulate(x, zero, b);
  for (std::size_t i = 0; i < 3; ++i) CHECK(rows(i, 0) == 4.0);
  const Vec a2{2, 1}, b2{0, 1};
  CHECK(modulate(Mat{{1, 1}}, a2, b2) == Mat{{2, 2}});
  const Vec bad{1, 1, 1};
  CHECK_THROWS_AS((void)modulate(x, bad, zero), ShapeError);
}

TEST_CASE("attention forward") {
  Prng rng(12);
  BlockWeights b;
  b.w_q = Mat(2, 2);
  b.w_k = Mat(2, 2);
  b.w_v = Mat::random_normal(2, 2, rng);
  const Mat z = Mat::random_normal(3, 2, rng);
  const Mat v = matmul(z, b.w_v);
  const Mat uni = attention_forward(z, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(uni(i, j) == doctest::Approx((v(0, j) + v(1, j) + v(2, j)) / 3).epsilon(1e-14));

  b.w_q = Mat::random_normal(2, 2, rng);
  b.w_k = Mat::random_normal(2, 2, rng);
  const Mat single = Mat::random_normal(1, 2, rng);
  CHECK(max_diff(attention_forward(single, b), matmul(single, b.w_v)) <= 1e-15);

  for (int trial = 0; trial < 20; ++trial) {
    const Mat zz = Mat::random_normal(3, 2, rng);
    CHECK(max_diff(attention_forward(zz, b), naive_attention(zz, b.w_q, b.w_k, b.w_v)) <= 1e-12);
  }

  b.w_q = scale(Mat::identity(2), 100.0);
  b.w_k = Mat::identity(2);
  CHECK_THROWS_AS((void)attention_forward(Mat{{1, 0}}, b), OverflowError);
}

TEST_CASE("attention rows are convex combinations") {
  Prng rng(13);
  BlockWeights b;
  b.w_q = Mat::random_normal(4, 4, rng, 0.5);
  b.w_k = Mat::random_normal(4, 4, rng, 0.5);
  b.w_v = Mat::identity(4);
  for (int trial = 0; trial < 50; ++trial) {
    Mat z = Mat::random_normal(5, 4, rng);
    // a constant column passes through only if every row of D^-1 A sums to one
    for (std::size_t i = 0; i < 5; ++i) z(i, 3) = 1.0;
    const Mat out = attention_forward(z, b);
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(out(i, 3) - 1.0) <= 1e-12);
    for (std::size_t j = 0; j < 3; ++j) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t i = 0; i < 5; ++i) {
        lo = std::min(lo, z(i, j));
        hi = std::max(hi, z(i, j));
      }
      for (std::size_t i = 0; i < 5; ++i) {
        CHECK(out(i, j) >= lo - 1e-12);
        CHECK(out(i, j) <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("feedforward forward") {
  Prng rng(14);
  BlockWeights b;
  b.w_feed = Mat::identity(3);
  const Mat z = Mat::random_normal(2, 3, rng);
  CHECK(feedforward_forward(z, b) == z);
  b.w_feed = Mat::random_normal(3, 3, rng);
  CHECK(feedforward_forward(Mat(2, 3), b) == Mat(2, 3));
  CHECK(feedforward_forward(z, b) == matmul(z, b.w_feed));
}

TEST_CASE("block forward") {
  ModelWeights w = init_model(tiny(), 6);
  Prng rng(15);
  const Mat x = Mat::random_normal(3, 4, rng);
  const Vec y = embed_condition(w, 7, 1);

  const ModuleEvaluator zero = [](int, ModuleKind, const Mat& z) { return Mat(z.rows(), z.cols()); };
  CHECK(block_forward(w, x, 0, y, zero) == x);

  ModelWeights gated = w;
  for (ModuleKind k : kModuleKinds) {
    gated.blocks[0].mod(k).w_gate = Mat(4, 4);
    gated.blocks[0].mod(k).v_gate = Vec(4, 0.0);
  }
  CHECK(block_forward(gated, x, 0, y, dense_evaluator(gated)) == x);

  // straight-line reference without the evaluator indirection
  const BlockWeights& b = w.blocks[0];
  const ModulationFactors fa = modulation_factors(w, 0, ModuleKind::kAttn, y);
  Mat h = x;
  const Mat ya = attention_forward(modulate(h, fa.scale, fa.shift), b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) h(i, j) += fa.gate[j] * ya(i, j);
  const ModulationFactors ff = modulation_factors(w, 0, ModuleKind::kFeed, y);
  const Mat yf = matmul(modulate(h, ff.scale, ff.shift), b.w_feed);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) h(i, j) += ff.gate[j] * yf(i, j);
  CHECK(max_diff(block_forward(w, x, 0, y, dense_evaluator(w)), h) <= 1e-14);
}

TEST_CASE("model forward") {
  Prng rng(16);
  const Mat z = Mat::random_normal(3, 4, rng);

  ModelWeights empty = init_model(tiny(0), 1);
  empty.head = Mat::identity(4);
  CHECK(model_forward(empty, z, 3, 0, dense_evaluator(empty)) == z);

  ModelWeights w = init_model(tiny(), 9);
  const Mat a = model_forward(w, z, 10, 2, dense_evaluator(w));
  CHECK(model_forward(w, z, 10, 2, dense_evaluator(w)) == a);
  ModelWeights nohead = w;
  nohead.head = Mat(4, 4);
  CHECK(model_forward(nohead, z, 10, 2, dense_evaluator(nohead)) == Mat(3, 4));

  std::string text;
  for (double v : a.data()) text += format_double(v) + "\n";
  CHECK(matches_golden("model_forward.txt", text));
}

TEST_CASE("attention Lipschitz respect on clipped weights") {
  Prng rng(17);
  const double r = 1.5;
  for (int trial = 0; trial < 200; ++trial) {
    BlockWeights b;
    b.w_q = Mat::random_normal(4, 4, rng);
    b.w_k = Mat::identity(4);
    b.w_v = Mat::random_normal(4, 4, rng);
    clip_spectral(b.w_q, r);
    clip_spectral(b.w_v, r);
    Mat x = Mat::random_normal(4, 4, rng), xt = Mat::random_normal(4, 4, rng);
    clip_spectral(x, r);
    clip_spectral(xt, r);
    const double lhs = spectral_norm(sub(attention_forward(x, b), attention_forward(xt, b)));
    CHECK(lhs <= 5 * std::pow(r, 4) * 16 * spectral_norm(sub(x, xt)) * (1 + 1e-9));

    const double ratio = spectral_norm(sub(feedforward_forward(x, BlockWeights{{}, {}, {}, b.w_v, {}}),
                                           feedforward_forward(xt, BlockWeights{{}, {}, {}, b.w_v, {}}))) /
                         spectral_norm(sub(x, xt));
    CHECK(ratio <= spectral_norm(b.w_v) * (1 + 1e-9));
  }
}

TEST_CASE("config validation") {
  ModelConfig c = tiny();
  c.layers = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny();
  c.weight_clip = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(module_kind_from_string("feed") == ModuleKind::kFeed);
  CHECK(to_string(ModuleKind::kAttn) == "attn");
  CHECK_THROWS_AS((void)module_kind_from_string("mlp"), DomainError);
}
