#include <doctest.h>

#include <cmath>

#include "lazydit/backbone.hpp"
#include "lazydit/error.hpp"
#include "lazydit/prng.hpp"
#include "lazydit/scheduler.hpp"

using namespace lazydit;

TEST_CASE("schedule boundary and single step") {
  const NoiseSchedule s = build_schedule(1000);
  CHECK(s.alpha[0] == 1.0);
  CHECK(s.sigma[0] == 0.0);
  const NoiseSchedule one = build_schedule(1, 0.02, 0.02);
  CHECK(one.alpha[1] == doctest::Approx(std::sqrt(0.98)).epsilon(1e-15));
  CHECK(one.sigma[1] == doctest::Approx(std::sqrt(0.02)).epsilon(1e-14));
}

TEST_CASE("schedule is variance preserving and monotone") {
  const NoiseSchedule s = build_schedule(1000);
  REQUIRE(s.alpha.size() == 1001);
  for (std::size_t t = 0; t <= 1000; ++t) {
    CHECK(std::abs(s.alpha[t] * s.alpha[t] + s.sigma[t] * s.sigma[t] - 1.0) <= 1e-12);
    if (t > 0) {
      CHECK(s.alpha[t] <= s.alpha[t - 1]);
      CHECK(s.sigma[t] >= s.sigma[t - 1]);
    }
  }
  CHECK_THROWS_AS((void)build_schedule(10, 0.0, 0.02), DomainError);
  CHECK_THROWS_AS((void)build_schedule(10, 0.03, 0.02), DomainError);
  CHECK_THROWS_AS((void)build_schedule(10, 0.01, 1.0), DomainError);
}

TEST_CASE("ddim step examples") {
  const Mat z{{1.0}}, eps{{0.5}};
  const Mat out = ddim_step(z, eps, 0.8, 0.6, 0.9, std::sqrt(0.19));
  CHECK(out(0, 0) == doctest::Approx(0.9 * 0.7 / 0.8 + std::sqrt(0.19) * 0.5).epsilon(1e-14));
  CHECK(out(0, 0) == doctest::Approx(1.005445).epsilon(1e-6));
  const Mat last = ddim_step(z, eps, 0.8, 0.6, 1.0, 0.0);
  CHECK(last(0, 0) == doctest::Approx(0.7 / 0.8).epsilon(1e-15));
  const NoiseSchedule s = build_schedule(100);
  CHECK_THROWS_AS((void)ddim_step(z, eps, 5, 6, s), DomainError);
}

TEST_CASE("ddim identity step is exact") {
  const NoiseSchedule s = build_schedule(1000);
  Prng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Mat z = Mat::random_normal(3, 4, rng), e = Mat::random_normal(3, 4, rng);
    const int t = static_cast<int>(rng.below(1001));
    CHECK(ddim_step(z, e, t, t, s) == z);
  }
}

TEST_CASE("cfg combine") {
  CHECK(cfg_combine(Mat{{1.0}}, Mat{{0.5}}, 1.5)(0, 0) == 1.25);
  Prng rng(6);
  const Mat a = Mat::random_normal(2, 3, rng), b = Mat::random_normal(2, 3, rng);
  CHECK(cfg_combine(a, b, 1.0) == a);
  for (int i = 0; i < 100; ++i) CHECK(cfg_combine(a, a, 1.0 + 10 * rng.uniform()) == a);
  CHECK_THROWS_AS((void)cfg_combine(a, Mat(3, 2), 2.0), ShapeError);
  CHECK_THROWS_AS((void)cfg_combine(a, b, 0.5), DomainError);
}

TEST_CASE("uniform plan") {
  const SamplerPlan p = uniform_plan(100, 20, 1.5);
  CHECK(p.num_steps() == 20);
  CHECK(p.steps.front() == 100);
  CHECK(p.steps.back() == 0);
  for (std::size_t i = 1; i < p.steps.size(); ++i) CHECK(p.steps[i] < p.steps[i - 1]);
  CHECK_THROWS_AS((void)uniform_plan(10, 11, 1.0), DomainError);
  CHECK_THROWS_AS((void)uniform_plan(10, 5, 0.9), DomainError);
  SamplerPlan bad{{10, 10, 0}, 1.0};
  CHECK_THROWS_AS(bad.validate(10), DomainError);
}

TEST_CASE("sample loop with a zero model") {
  const NoiseSchedule s = build_schedule(1000);
  const SamplerPlan p{{700, 0}, 2.0};
  const Mat z{{1.0, -2.0}};
  const NoisePredictor zero = [](const Mat& x, const StepContext&) { return Mat(x.rows(), x.cols()); };
  const Mat out = sample_loop(z, p, s, zero, 0);
  CHECK(out(0, 0) == doctest::Approx(1.0 / s.alpha[700]).epsilon(1e-14));
  CHECK(out(0, 1) == doctest::Approx(-2.0 / s.alpha[700]).epsilon(1e-14));
}

TEST_CASE("sample loop runs both guidance branches in order") {
  const NoiseSchedule s = build_schedule(100);
  const SamplerPlan p = uniform_plan(100, 4, 1.5);
  std::vector<StepContext> seen;
  const NoisePredictor rec = [&](const Mat& x, const StepContext& c) {
    seen.push_back(c);
    return scale(x, 0.1 * (c.branch + 1));
  };
  Prng rng(2);
  const Mat z = Mat::random_normal(2, 2, rng);
  const Mat a = sample_loop(z, p, s, rec, 3);
  REQUIRE(seen.size() == 8);
  for (int k = 0; k < 4; ++k) {
    CHECK(seen[2 * k].branch == 0);
    CHECK(seen[2 * k].label == 3);
    CHECK(seen[2 * k + 1].branch == 1);
    CHECK(seen[2 * k + 1].label == kNullClass);
    CHECK(seen[2 * k].t == p.steps[k]);
    CHECK(seen[2 * k].t_prev == (k == 0 ? -1 : p.steps[k - 1]));
  }
  CHECK(sample_loop(z, p, s, rec, 3) == a);
}
