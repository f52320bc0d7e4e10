#include <doctest.h>

#include <cmath>
#include <json.hpp>

#include "lazydit/error.hpp"
#include "lazydit/prng.hpp"
#include "lazydit/theory.hpp"

using namespace lazydit;

namespace {

TheoryConfig quick(int trials = 200) {
  TheoryConfig c;
  c.trials = trials;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("row scaling construction") {
  const RowScaling par = construct_row_scaling({1, 0}, {1, 0}, 0.1);
  CHECK(par.a == Vec{0.05, 0.05});
  CHECK(par.b == Vec{0.05, 0.05});
  CHECK(par.c == Vec{0, 0});
  CHECK(par.residual == doctest::Approx(0.1).epsilon(1e-15));

  CHECK(construct_row_scaling({1, 2}, {-1, -2}, 0.05).residual == 0.0);

  const RowScaling r = construct_row_scaling({3, 4}, {0, 5}, 0.1);
  CHECK(r.a[0] == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(r.b[1] == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(r.residual == doctest::Approx(std::hypot(0.03, 0.09)).epsilon(1e-14));
  CHECK(r.residual <= 0.1);

  CHECK_THROWS_AS((void)construct_row_scaling({0, 0}, {1, 0}, 0.05), DomainError);
  CHECK_THROWS_AS((void)construct_row_scaling({1, 0}, {1, 0}, 0.11), DomainError);
}

TEST_CASE("matrix scaling construction") {
  const MatrixScaling s = construct_matrix_scaling(Mat::identity(2), Mat::identity(2), 0.05);
  CHECK(s.a(0, 0) == doctest::Approx(0.05 / 4).epsilon(1e-15));
  for (std::size_t i = 0; i < 2; ++i) {
    const double row = std::hypot(s.a(i, i) + s.b(i, i), s.c(i, i));
    CHECK(row <= 0.05 / 2 + 1e-15);
  }
  CHECK(s.residual == doctest::Approx(0.025 * std::sqrt(2.0)).epsilon(1e-14));
  CHECK(s.step_distance == doctest::Approx(s.residual).epsilon(1e-14));

  Prng rng(1);
  const Mat x = Mat::random_normal(3, 4, rng);
  const MatrixScaling neg = construct_matrix_scaling(x, scale(x, -2.0), 0.05);
  MESSAGE("cancellation residual " << neg.residual);
  CHECK(neg.residual <= 0.05);

  Mat zero_row = x;
  for (std::size_t j = 0; j < 4; ++j) zero_row(1, j) = 0.0;
  CHECK_THROWS_AS((void)construct_matrix_scaling(zero_row, x, 0.05), DomainError);

  const BoundReport rows = construct_scaling_check(quick(1000), false);
  const BoundReport mats = construct_scaling_check(quick(1000), true);
  CHECK(rows.trials == 1000);
  CHECK(rows.pass);
  CHECK(mats.pass);
  CHECK(mats.worst_ratio <= 1.0);
}

TEST_CASE("exact spectral norm agrees with power iteration") {
  Prng rng(2);
  for (int i = 0; i < 50; ++i) {
    const Mat a = Mat::random_normal(4, 3, rng);
    CHECK(exact_spectral_norm(a) == doctest::Approx(spectral_norm(a)).epsilon(1e-8));
  }
}

TEST_CASE("lipschitz constructed cases") {
  const TheoryConfig cfg = quick();
  const double r = cfg.radius;
  BlockWeights b;
  b.w_feed = Mat(4, 4);
  b.w_feed(0, 0) = r;
  Mat x(4, 4), xt(4, 4);
  xt(0, 0) = 1.0;
  CHECK(lipschitz_ratio(ProbeKind::kFeed, {b}, x, xt) == doctest::Approx(r).epsilon(1e-14));

  Prng rng(4);
  b.w_q = Mat(4, 4);
  b.w_k = Mat::identity(4);
  b.w_v = Mat::random_normal(4, 4, rng);
  clip_spectral(b.w_v, r);
  for (int i = 0; i < 100; ++i) {
    const Mat p = Mat::random_normal(4, 4, rng), q = Mat::random_normal(4, 4, rng);
    const double ratio = lipschitz_ratio(ProbeKind::kAttn, {b}, p, q);
    CHECK(ratio <= exact_spectral_norm(b.w_v) * (1 + 1e-12));
  }
  CHECK_THROWS_AS((void)lipschitz_ratio(ProbeKind::kAttn, {b}, x, x), DomainError);
}

TEST_CASE("lipschitz probes stay within their bounds") {
  const TheoryConfig cfg = quick(1000);
  CHECK(lipschitz_bound(ProbeKind::kAttn, cfg) == 1280.0);
  CHECK(lipschitz_bound(ProbeKind::kSingleLayer, cfg) == 2560.0);
  CHECK(lipschitz_bound(ProbeKind::kFullModel, cfg) == 2560.0 * 2560.0);
  for (ProbeKind k : {ProbeKind::kAttn, ProbeKind::kFeed, ProbeKind::kSingleLayer, ProbeKind::kFullModel}) {
    const BoundReport r = lipschitz_probe(k, cfg);
    CHECK(r.trials == 1000);
    CHECK(r.pass);
    MESSAGE(r.name << " worst ratio " << r.worst_ratio);
  }
  TheoryConfig bad = cfg;
  bad.radius = 1.0;
  CHECK_THROWS_AS((void)lipschitz_probe(ProbeKind::kAttn, bad), DomainError);
}

TEST_CASE("similarity floor") {
  Prng rng(5);
  const Mat y = Mat::random_normal(4, 4, rng);
  const Mat u = scale(y, 1.0 / frobenius_norm(y));
  CHECK(cosine_similarity(u, u) == doctest::Approx(1.0 - 0.5 * std::pow(frobenius_norm(sub(u, u)), 2)));

  TheoryConfig cfg = quick(1000);
  cfg.radius = 1.5;
  CHECK(similarity_alpha(ModuleKind::kFeed, cfg, 1e-3) == doctest::Approx(4.5e-6).epsilon(1e-12));
  const BoundReport feed = similarity_floor_check(ModuleKind::kFeed, cfg, {1e-3, true});
  CHECK(feed.pass);
  CHECK(feed.bound_value == doctest::Approx(1 - 4.5e-6).epsilon(1e-15));
  CHECK(feed.extra.at("cosine_identity_gap") <= 1e-12);

  const BoundReport vac = similarity_floor_check(ModuleKind::kAttn, quick(20), {0.5, true});
  CHECK(vac.extra.at("vacuous") == 1.0);

  const BoundReport attn = similarity_floor_check(ModuleKind::kAttn, quick(1000), {1e-4, true});
  CHECK(attn.pass);

  // without normalization the floor is not implied; the outcome is only recorded
  const BoundReport raw = similarity_floor_check(ModuleKind::kFeed, quick(200), {1e-1, false});
  CHECK(raw.name == "similarity_feed_unnormalized");
  MESSAGE("unnormalized worst ratio " << raw.worst_ratio << " pass " << raw.pass);
}

TEST_CASE("linear probe fit") {
  Prng rng(6);
  std::vector<Mat> z;
  Vec constant, planted;
  const Mat w = Mat::random_normal(2, 3, rng);
  for (int i = 0; i < 40; ++i) {
    z.push_back(Mat::random_normal(2, 3, rng));
    constant.push_back(0.75);
    planted.push_back(trace_inner(w, z.back()) - 0.2);
  }
  const LinearProbeFit c = linear_probe_fit(z, constant);
  CHECK(c.intercept == doctest::Approx(0.75).epsilon(1e-12));
  for (double x : c.weights) CHECK(std::abs(x) <= 1e-12);
  CHECK(c.max_residual <= 1e-12);

  const LinearProbeFit p = linear_probe_fit(z, planted);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(p.weights[i] - w.data()[i]) <= 1e-8);
  CHECK(std::abs(p.intercept + 0.2) <= 1e-8);
  CHECK(p.r_squared == doctest::Approx(1.0).epsilon(1e-10));
  CHECK_FALSE(p.regularized);

  std::vector<Mat> dup(12, z[0]);
  const LinearProbeFit d = linear_probe_fit(dup, Vec(12, 1.0));
  CHECK(d.regularized);

  CHECK_THROWS_AS((void)linear_probe_fit({z[0], z[1]}, {1.0, 2.0}), DomainError);
  CHECK_THROWS_AS((void)linear_probe_fit(z, Vec(3, 0.0)), ShapeError);

  const BoundReport r = linear_probe_report(quick(10));
  CHECK(r.pass);
  CHECK(r.extra.count("trajectory_r2_attn") == 1);
  MESSAGE("trajectory R2 attn " << r.extra.at("trajectory_r2_attn") << " feed "
                                << r.extra.at("trajectory_r2_feed"));
}

TEST_CASE("error propagation") {
  TheoryConfig cfg = quick(100);
  PropagationOptions zero;
  zero.eps = 0.0;
  const BoundReport z = error_propagation_check(cfg, zero);
  CHECK(z.worst_ratio == 0.0);

  PropagationOptions last;
  last.inject_layer = cfg.layers;
  last.steps = 1;
  last.identity_head = true;
  last.eps = 1e-2;
  const BoundReport l = error_propagation_check(cfg, last);
  CHECK(l.pass);
  CHECK(l.worst_ratio == doctest::Approx(1.0).epsilon(1e-12));

  const BoundReport rnd = error_propagation_check(cfg);
  CHECK(rnd.trials == 100);
  CHECK(rnd.pass);
  MESSAGE("looseness factor " << rnd.extra.at("looseness_factor"));

  PropagationOptions bad;
  bad.inject_layer = 0;
  CHECK_THROWS_AS((void)error_propagation_check(cfg, bad), DomainError);
}

TEST_CASE("suite selection and report json") {
  CHECK_THROWS_AS((void)run_suite("everything", quick()), ConfigError);
  const std::vector<BoundReport> reps = run_suite("scaling", quick(50));
  REQUIRE(reps.size() == 2);
  const auto j = nlohmann::json::parse(reports_json(reps));
  CHECK(j["pass"] == true);
  for (const auto& r : j["reports"]) {
    for (const char* key : {"name", "trials", "worst_ratio", "bound_value", "pass"}) CHECK(r.contains(key));
  }
  BoundReport fail;
  fail.observe(1.0 + 1e-8);
  CHECK_FALSE(fail.pass);
  BoundReport edge;
  edge.observe(1.0 + 1e-10);
  CHECK(edge.pass);
}
