#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "manigan/acm.hpp"

using namespace manigan;

namespace {

void fill(Tensor& t, float v) {
  std::fill(t.raw().begin(), t.raw().end(), v);
}

// Make a branch emit the constant c regardless of its input.
void force_constant(ConvSpec& last, float c) {
  fill(last.weights, 0.0f);
  fill(last.bias, c);
}

}  // namespace

TEST_CASE("identity-configured branches pass h through bit-exactly") {
  Rng rng(3);
  AcmParams p = AcmParams::create(2, 3, 0, 4, rng);
  force_constant(p.w2, 1.0f);
  force_constant(p.b2, 0.0f);

  Tensor h = Tensor::randn({3, 5, 5}, rng);
  Tensor v = Tensor::randn({2, 5, 5}, rng);
  Tensor out = acm_forward(h, v, p);
  for (int64_t i = 0; i < h.size(); ++i) CHECK(out.at(i) == h.at(i));
}

TEST_CASE("zero h yields the additive branch exactly") {
  Rng rng(5);
  AcmParams p = AcmParams::create(2, 3, 0, 4, rng);
  Tensor h = Tensor::zeros({3, 6, 6});
  Tensor v = Tensor::randn({2, 6, 6}, rng);
  Tensor out = acm_forward(h, v, p);
  AcmMaps maps = acm_inspect(h, v, p);
  for (int64_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == maps.b.at(i));
}

TEST_CASE("scalar arithmetic case h=2 W=3 b=-1") {
  Rng rng(7);
  AcmParams p = AcmParams::create(1, 1, 0, 2, rng);
  force_constant(p.w2, 3.0f);
  force_constant(p.b2, -1.0f);
  Tensor h = Tensor::full({1, 1, 1}, 2.0f);
  Tensor v = Tensor::full({1, 1, 1}, 0.4f);
  CHECK(acm_forward(h, v, p).at(0) == 5.0f);
}

TEST_CASE("inspect recomposes to the forward output exactly") {
  Rng rng(9);
  AcmParams p = AcmParams::create(3, 4, 1, 4, rng);
  Tensor h = Tensor::randn({4, 8, 8}, rng);
  Tensor v = Tensor::randn({3, 4, 4}, rng);
  Tensor out = acm_forward(h, v, p);
  AcmMaps maps = acm_inspect(h, v, p);
  REQUIRE(maps.w.shape() == h.shape());
  REQUIRE(maps.b.shape() == h.shape());
  for (int64_t i = 0; i < out.size(); ++i) {
    CHECK(maps.hw.at(i) == h.at(i) * maps.w.at(i));
    CHECK(out.at(i) == maps.hw.at(i) + maps.b.at(i));
  }
}

TEST_CASE("branch ablations change the output as the algebra says") {
  Rng rng(11);
  AcmParams p = AcmParams::create(2, 3, 0, 4, rng);
  Tensor h = Tensor::randn({3, 5, 5}, rng);
  Tensor v = Tensor::randn({2, 5, 5}, rng);
  AcmMaps maps = acm_inspect(h, v, p);

  // Without W: multiplicative branch pinned to ones leaves h + b(v).
  AcmParams no_w = p;
  no_w.w2 = ConvSpec::create(4, 3, 3, 1, 1, rng);
  force_constant(no_w.w2, 1.0f);
  Tensor out_no_w = acm_forward(h, v, no_w);
  for (int64_t i = 0; i < h.size(); ++i)
    CHECK(out_no_w.at(i) == doctest::Approx(h.at(i) + maps.b.at(i)));

  // Without b: additive branch zeroed leaves h * W(v).
  AcmParams no_b = p;
  no_b.b2 = ConvSpec::create(4, 3, 3, 1, 1, rng);
  force_constant(no_b.b2, 0.0f);
  Tensor out_no_b = acm_forward(h, v, no_b);
  for (int64_t i = 0; i < h.size(); ++i)
    CHECK(out_no_b.at(i) == maps.hw.at(i));
}

TEST_CASE("acm is linear in h for fixed v") {
  Rng rng(13);
  AcmParams p = AcmParams::create(2, 2, 0, 4, rng);
  Tensor h1 = Tensor::randn({2, 4, 4}, rng);
  Tensor h2 = Tensor::randn({2, 4, 4}, rng);
  Tensor v = Tensor::randn({2, 4, 4}, rng);
  const float alpha = 0.7f, beta = -1.3f;

  Tensor mixed = add(scale(h1, alpha), scale(h2, beta));
  Tensor lhs = acm_forward(mixed, v, p);
  AcmMaps m1 = acm_inspect(h1, v, p);
  AcmMaps m2 = acm_inspect(h2, v, p);
  for (int64_t i = 0; i < lhs.size(); ++i) {
    double rhs = alpha * m1.hw.at(i) + beta * m2.hw.at(i) + m1.b.at(i);
    CHECK(lhs.at(i) == doctest::Approx(rhs).epsilon(1e-4));
  }
}

TEST_CASE("upsampling aligns v with larger hidden maps") {
  Rng rng(15);
  AcmParams p = AcmParams::create(3, 2, 2, 4, rng);
  Tensor h = Tensor::randn({2, 8, 8}, rng);
  Tensor v = Tensor::randn({3, 2, 2}, rng);
  Tensor out = acm_forward(h, v, p);
  CHECK(out.shape() == h.shape());
  CHECK(out.all_finite());

  // Wrong spatial size after the configured upsamples.
  Tensor bad_v = Tensor::randn({3, 3, 3}, rng);
  CHECK_THROWS_AS(acm_forward(h, bad_v, p), DimensionError);
  CHECK_THROWS_AS(AcmParams::create(3, 2, -1, 4, rng), ConfigError);
}

TEST_CASE("acm gradients pass the finite-difference check") {
  Rng rng(17);
  AcmParams p = AcmParams::create(2, 2, 0, 4, rng);
  Tensor h = Tensor::randn({2, 3, 3}, rng);
  Tensor v = Tensor::randn({2, 3, 3}, rng);

  double err_h = grad_check(
      [&](const Tensor& x) { return sum(acm_forward(x, v, p)); }, h, 1e-3);
  CHECK(err_h < 1e-3);
  double err_v = grad_check(
      [&](const Tensor& x) { return sum(acm_forward(h, x, p)); }, v, 1e-3);
  CHECK(err_v < 1e-3);
  double err_w = grad_check(
      [&](const Tensor& x) {
        AcmParams q = p;
        q.w1.weights = x;
        return sum(acm_forward(h, v, q));
      },
      p.w1.weights.clone(), 1e-3);
  CHECK(err_w < 1e-3);
  double err_b = grad_check(
      [&](const Tensor& x) {
        AcmParams q = p;
        q.b2.weights = x;
        return sum(acm_forward(h, v, q));
      },
      p.b2.weights.clone(), 1e-3);
  CHECK(err_b < 1e-3);
}
