#include <doctest.h>

#include <cmath>

#include "manigan/tensor.hpp"

using namespace manigan;

TEST_CASE("tensor construction and accessors") {
  Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.shape() == Shape{2, 3});
  CHECK(t.ndim() == 2);
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(1) == 3);
  CHECK(t.size() == 6);
  CHECK(t.at(4) == 5.0f);
  CHECK(Tensor::scalar(3.5f).item() == 3.5f);
  CHECK(Tensor::zeros({4}).at(2) == 0.0f);
  CHECK(Tensor::full({2, 2}, 7.0f).at(3) == 7.0f);

  CHECK_THROWS_AS(Tensor::from_data({2, 3}, {1, 2}), DimensionError);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), DimensionError);
  CHECK_THROWS_AS(t.item(), DimensionError);
}

TEST_CASE("leaf-only mutation rules") {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  Tensor y = add(x, x);
  CHECK_THROWS_AS(y.raw(), StateError);
  CHECK_THROWS_AS(y.set_requires_grad(false), StateError);
  x.raw()[0] = 5.0f;
  CHECK(x.at(0) == 5.0f);
}

TEST_CASE("backward accumulates into leaves and can be reset") {
  Tensor x = Tensor::from_data({3}, {1, -2, 3}, true);
  sum(mul(x, x)).backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0f));
  CHECK(x.grad()[1] == doctest::Approx(-4.0f));
  sum(mul(x, x)).backward();
  CHECK(x.grad()[0] == doctest::Approx(4.0f));
  x.zero_grad();
  CHECK(x.grad()[2] == 0.0f);

  Tensor v = Tensor::from_data({2}, {1, 2}, true);
  CHECK_THROWS_AS(mul(v, v).backward(), DimensionError);
}

TEST_CASE("ops on frozen parents do not build history") {
  Tensor a = Tensor::from_data({2}, {1, 2});
  Tensor b = add(a, a);
  CHECK_FALSE(b.requires_grad());
  Tensor c = b.detach();
  CHECK_FALSE(c.requires_grad());
  Tensor d = a.clone();
  d.raw()[0] = 9.0f;
  CHECK(a.at(0) == 1.0f);
}

TEST_CASE("elementwise arithmetic values") {
  Tensor a = Tensor::from_data({4}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({4}, {10, 20, 30, 40});
  CHECK(add(a, b).at(2) == 33.0f);
  CHECK(sub(b, a).at(3) == 36.0f);
  CHECK(mul(a, b).at(1) == 40.0f);
  CHECK(neg(a).at(0) == -1.0f);
  CHECK(scale(a, 2.5f).at(1) == 5.0f);
  CHECK(offset(a, -1.0f).at(0) == 0.0f);
  CHECK_THROWS_AS(add(a, Tensor::zeros({3})), DimensionError);
}

TEST_CASE("nonlinearity values") {
  Tensor x = Tensor::from_data({5}, {-2, -0.5f, 0, 0.5f, 2});
  CHECK(relu(x).at(0) == 0.0f);
  CHECK(relu(x).at(4) == 2.0f);
  CHECK(leaky_relu(x).at(0) == doctest::Approx(-0.4f));
  CHECK(sigmoid(Tensor::scalar(0.0f)).item() == doctest::Approx(0.5f));
  CHECK(manigan::tanh(Tensor::scalar(1.0f)).item() ==
        doctest::Approx(std::tanh(1.0f)));
  CHECK(manigan::abs(x).at(0) == 2.0f);
  CHECK(square(x).at(4) == 4.0f);
  CHECK(manigan::log(Tensor::scalar(std::exp(1.0f))).item() ==
        doctest::Approx(1.0f));
  CHECK(log_sigmoid(Tensor::scalar(0.0f)).item() ==
        doctest::Approx(std::log(0.5f)));
  // stays finite far into the tails
  CHECK(log_sigmoid(Tensor::scalar(-80.0f)).item() == doctest::Approx(-80.0f));
  CHECK(sigmoid(Tensor::scalar(200.0f)).item() == doctest::Approx(1.0f));
}

TEST_CASE("reductions") {
  Tensor x = Tensor::from_data({2, 2}, {1, -2, 3, -4});
  CHECK(sum(x).item() == doctest::Approx(-2.0f));
  CHECK(mean(x).item() == doctest::Approx(-0.5f));
  CHECK(mean_abs(x).item() == doctest::Approx(2.5f));

  Tensor m = Tensor::from_data({2, 2, 2}, {1, 1, 1, 1, 2, 4, 6, 8});
  Tensor sm = spatial_mean(m);
  CHECK(sm.shape() == Shape{2});
  CHECK(sm.at(0) == doctest::Approx(1.0f));
  CHECK(sm.at(1) == doctest::Approx(5.0f));
}

TEST_CASE("matmul and linear against hand results") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from_data({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c.at(0) == doctest::Approx(58.0f));
  CHECK(c.at(1) == doctest::Approx(64.0f));
  CHECK(c.at(2) == doctest::Approx(139.0f));
  CHECK(c.at(3) == doctest::Approx(154.0f));
  CHECK_THROWS_AS(matmul(a, a), DimensionError);

  Tensor w = Tensor::from_data({2, 3}, {1, 0, 0, 0, 1, 1});
  Tensor bias = Tensor::from_data({2}, {0.5f, -0.5f});
  Tensor y = linear(Tensor::from_data({3}, {3, 4, 5}), w, bias);
  CHECK(y.at(0) == doctest::Approx(3.5f));
  CHECK(y.at(1) == doctest::Approx(8.5f));
  Tensor y2 = linear(Tensor::from_data({3}, {3, 4, 5}), w, Tensor());
  CHECK(y2.at(0) == doctest::Approx(3.0f));
}

TEST_CASE("dot and cosine similarity") {
  Tensor a = Tensor::from_data({3}, {1, 2, 3});
  Tensor b = Tensor::from_data({3}, {4, -5, 6});
  CHECK(dot(a, b).item() == doctest::Approx(12.0f));
  CHECK(cosine_similarity(a, a).item() == doctest::Approx(1.0f));
  CHECK(cosine_similarity(a, neg(a)).item() == doctest::Approx(-1.0f));
  float expect = 12.0f / (std::sqrt(14.0f) * std::sqrt(77.0f));
  CHECK(cosine_similarity(a, b).item() == doctest::Approx(expect));
}

TEST_CASE("shape plumbing") {
  Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = reshape(x, {3, 2});
  CHECK(r.shape() == Shape{3, 2});
  CHECK(r.at(5) == 6.0f);
  CHECK_THROWS_AS(reshape(x, {4, 2}), DimensionError);

  Tensor c = concat({Tensor::from_data({1, 2}, {1, 2}),
                     Tensor::from_data({2, 2}, {3, 4, 5, 6})});
  CHECK(c.shape() == Shape{3, 2});
  CHECK(c.at(4) == 5.0f);
  CHECK_THROWS_AS(concat({x, Tensor::zeros({2, 4})}), DimensionError);

  Tensor rw = row(x, 1);
  CHECK(rw.shape() == Shape{3});
  CHECK(rw.at(0) == 4.0f);
  CHECK_THROWS_AS(row(x, 2), DimensionError);

  Tensor table = Tensor::from_data({3, 2}, {0, 1, 10, 11, 20, 21});
  Tensor e = embed(table, {2, 0, 2});
  CHECK(e.shape() == Shape{3, 2});
  CHECK(e.at(0) == 20.0f);
  CHECK(e.at(3) == 1.0f);
  CHECK_THROWS_AS(embed(table, {3}), EncodingError);

  Tensor tiled = tile_spatial(Tensor::from_data({2}, {3, 4}), 2, 2);
  CHECK(tiled.shape() == Shape{2, 2, 2});
  CHECK(tiled.at(0) == 3.0f);
  CHECK(tiled.at(7) == 4.0f);

  Tensor sc = scale_channels(Tensor::full({2, 1, 2}, 1.0f),
                             Tensor::from_data({2}, {2, 3}));
  CHECK(sc.at(0) == 2.0f);
  CHECK(sc.at(3) == 3.0f);
}

TEST_CASE("softmax rows") {
  Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 1000, 1000, 1000});
  Tensor s = softmax(x);
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(s.at(0) == doctest::Approx(std::exp(1.0) / z));
  CHECK(s.at(2) == doctest::Approx(std::exp(3.0) / z));
  CHECK(s.at(3) == doctest::Approx(1.0 / 3.0));
  CHECK(s.all_finite());
  float sum0 = s.at(0) + s.at(1) + s.at(2);
  CHECK(sum0 == doctest::Approx(1.0f));
}

TEST_CASE("grad_check on simple closed forms") {
  Tensor x = Tensor::from_data({4}, {0.3f, -1.2f, 2.0f, 0.7f});
  double e1 = grad_check([](const Tensor& t) { return sum(t); }, x, 1e-3);
  CHECK(e1 < 1e-6);

  Tensor q = Tensor::from_data({2}, {1, 2}, true);
  sum(square(q)).backward();
  CHECK(q.grad()[0] == doctest::Approx(2.0f));
  CHECK(q.grad()[1] == doctest::Approx(4.0f));
  double e2 =
      grad_check([](const Tensor& t) { return sum(square(t)); }, x, 1e-3);
  CHECK(e2 < 1e-4);
}

TEST_CASE("gradients of every tensor op") {
  for (uint64_t seed : {11u, 22u, 33u}) {
    Rng rng(seed);
    Tensor x = Tensor::randn({3, 4}, rng);
    Tensor y = Tensor::randn({3, 4}, rng);
    Tensor v = Tensor::randn({4}, rng);
    Tensor pos = offset(manigan::abs(Tensor::randn({6}, rng)), 0.5f);
    auto fixed_y = y.detach();

    auto check = [&](auto f, const Tensor& probe, double tol = 1e-3) {
      CHECK(grad_check(f, probe, 1e-3) < tol);
    };

    check([&](const Tensor& t) { return sum(add(t, fixed_y)); }, x);
    check([&](const Tensor& t) { return sum(sub(fixed_y, t)); }, x);
    check([&](const Tensor& t) { return sum(mul(t, fixed_y)); }, x);
    check([&](const Tensor& t) { return sum(mul(t, t)); }, x);
    check([&](const Tensor& t) { return sum(neg(t)); }, x);
    check([&](const Tensor& t) { return sum(scale(t, -1.7f)); }, x);
    check([&](const Tensor& t) { return sum(offset(t, 3.0f)); }, x);
    check([&](const Tensor& t) { return sum(leaky_relu(t)); }, x);
    check([&](const Tensor& t) { return sum(sigmoid(t)); }, x);
    check([&](const Tensor& t) { return sum(manigan::tanh(t)); }, x);
    check([&](const Tensor& t) { return sum(square(t)); }, x);
    check([&](const Tensor& t) { return sum(manigan::log(t)); }, pos);
    check([&](const Tensor& t) { return sum(log_sigmoid(t)); }, x);
    check([&](const Tensor& t) { return mean(t); }, x);
    check([&](const Tensor& t) { return scale(mean_abs(offset(t, 5.0f)), 2.0f); },
          x);
    check([&](const Tensor& t) {
      return sum(mul(spatial_mean(reshape(t, {2, 2, 3})), spatial_mean(reshape(fixed_y, {2, 2, 3}))));
    }, x);
    check([&](const Tensor& t) { return sum(matmul(t, reshape(fixed_y, {4, 3}))); }, x);
    check([&](const Tensor& t) { return sum(matmul(reshape(fixed_y, {3, 4}).detach(), reshape(t, {4, 3}))); }, x);
    check([&](const Tensor& t) {
      return sum(linear(row(t, 0), reshape(fixed_y, {3, 4}).detach(), Tensor()));
    }, x);
    check([&](const Tensor& t) {
      return sum(linear(row(fixed_y, 0).detach(), reshape(t, {3, 4}),
                        spatial_mean(reshape(t, {3, 2, 2}))));
    }, x);
    check([&](const Tensor& t) { return dot(row(t, 0), row(t, 1)); }, x);
    check([&](const Tensor& t) {
      return cosine_similarity(row(t, 0), row(fixed_y, 1).detach());
    }, x);
    check([&](const Tensor& t) {
      return cosine_similarity(row(t, 0), row(t, 2));
    }, x);
    check([&](const Tensor& t) { return sum(square(reshape(t, {12}))); }, x);
    check([&](const Tensor& t) { return sum(square(concat({t, fixed_y}))); }, x);
    check([&](const Tensor& t) {
      return sum(square(embed(t, {0, 2, 0})));
    }, x);
    check([&](const Tensor& t) {
      return sum(mul(tile_spatial(t, 3, 2), tile_spatial(row(fixed_y, 0).detach(), 3, 2)));
    }, v);
    check([&](const Tensor& t) {
      return sum(square(scale_channels(reshape(t, {3, 2, 2}), spatial_mean(reshape(fixed_y, {3, 2, 2})).detach())));
    }, x);
    check([&](const Tensor& t) {
      return sum(square(scale_channels(reshape(fixed_y, {3, 2, 2}).detach(), spatial_mean(reshape(t, {3, 2, 2})))));
    }, x);
    check([&](const Tensor& t) { return sum(mul(softmax(t), fixed_y)); }, x);
    check([&](const Tensor& t) { return abs(mean(relu(offset(t, 0.05f)))); }, x);
  }
}

TEST_CASE("rng determinism and moments") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.uniform() == b.uniform());
    CHECK(a.normal() == b.normal());
    CHECK(a.uniform_index(17) == b.uniform_index(17));
  }
  Rng c(7);
  double m = 0.0, m2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double v = c.normal();
    m += v;
    m2 += v * v;
  }
  m /= n;
  m2 /= n;
  CHECK(std::fabs(m) < 0.05);
  CHECK(std::fabs(m2 - 1.0) < 0.05);
  Rng d(7);
  Rng fork1 = d.fork(1);
  Rng fork2 = d.fork(2);
  CHECK(fork1.uniform() != fork2.uniform());
}

TEST_CASE("non-finite detection") {
  Tensor x = Tensor::from_data({2}, {1.0f, 2.0f});
  CHECK(x.all_finite());
  Tensor big = Tensor::from_data({1}, {3.0e38f});
  CHECK_FALSE(add(big, big).all_finite());
  CHECK_THROWS_AS(
      grad_check([](const Tensor& t) {
        return manigan::log(offset(t, -10.0f));
      }, Tensor::from_data({1}, {5.0f}), 1e-3),
      NumericError);
}
