#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pathtree/optim.hpp"
#include "pathtree/rng.hpp"
#include "pathtree/tensor.hpp"

using namespace pathtree;

namespace {

// Independent naive triple-loop product used as the matmul oracle.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  Tensor out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(k, j);
      out.at(i, j) = acc;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("matmul identity") {
  Rng rng(7);
  const Tensor x = Tensor::normal(4, 4, rng);
  const Tensor y = matmul(Tensor::identity(4), x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("matmul hand arithmetic") {
  const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  const Tensor b = Tensor::from_rows({{1}, {1}});
  const Tensor c = matmul(a, b);
  CHECK(c.at(0, 0) == 3.0);
  CHECK(c.at(1, 0) == 7.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng(11);
  const Tensor a = Tensor::normal(7, 5, rng);
  const Tensor b = Tensor::normal(5, 3, rng);
  const Tensor got = matmul(a, b);
  const Tensor want = matmul_oracle(a, b);
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(std::abs(got[i] - want[i]) < 1e-12);
  }
}

TEST_CASE("matmul shape mismatch") {
  CHECK_THROWS_AS(matmul(Tensor(2, 3), Tensor(2, 3)), Error);
}

TEST_CASE("softmax basics") {
  const auto sym = softmax({0.0, 0.0});
  CHECK(sym[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sym[1] == doctest::Approx(0.5).epsilon(1e-12));

  const auto analytic = softmax({std::log(3.0), 0.0});
  CHECK(analytic[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(analytic[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax stability at extreme logits") {
  const auto p = softmax({1000.0, 0.0});
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p[1] == 0.0);  // underflows cleanly, no overflow anywhere
  CHECK(std::isfinite(p[0]));
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(3);
  const Tensor x = Tensor::uniform(6, 9, -30.0, 30.0, rng);
  const Tensor s = softmax_rows(x);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < s.cols(); ++j) {
      sum += s.at(i, j);
      CHECK(s.at(i, j) > 0.0);
      CHECK(s.at(i, j) <= 1.0);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("softmax of empty row") {
  CHECK_THROWS_AS(softmax({}), Error);
}

TEST_CASE("cosine similarity") {
  const Tensor u = Tensor::row({1.0, 2.0, -1.0});
  CHECK(cosine_sim(u, u) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(cosine_sim(u, scale(u, -1.0)) == doctest::Approx(-1.0).epsilon(1e-14));
  const Tensor e1 = Tensor::row({1.0, 0.0});
  const Tensor e2 = Tensor::row({0.0, 1.0});
  CHECK(cosine_sim(e1, e2) == 0.0);
  CHECK_THROWS_AS(cosine_sim(e1, Tensor::row({0.0, 0.0})), Error);
}

// -------------------------------------------------------------------- Adam

namespace {

// Reference Adam trace, written directly from the update formulas.
struct RefAdam {
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double& w, double grad, const AdamConfig& c) {
    ++t;
    const double g = grad + c.weight_decay * w;
    m = c.beta1 * m + (1 - c.beta1) * g;
    v = c.beta2 * v + (1 - c.beta2) * g * g;
    const double mh = m / (1 - std::pow(c.beta1, t));
    const double vh = v / (1 - std::pow(c.beta2, t));
    w -= c.lr * mh / (std::sqrt(vh) + c.eps);
    return w;
  }
};

}  // namespace

TEST_CASE("adam zero gradient and zero decay leaves value unchanged") {
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Parameter p("w", Tensor::scalar(1.25));
  AdamState st(p);
  adam_step(cfg, st, p);
  CHECK(p.value[0] == 1.25);
}

TEST_CASE("adam first-step magnitude approaches lr") {
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Parameter p("w", Tensor::scalar(0.3));
  p.grad[0] = 0.7;
  AdamState st(p);
  adam_step(cfg, st, p);
  // First bias-corrected step is lr * g/(|g| + eps') -> lr as eps -> 0.
  CHECK(std::abs(std::abs(0.3 - p.value[0]) - cfg.lr) < 1e-9);
}

TEST_CASE("adam matches a scripted reference trace") {
  AdamConfig cfg;  // defaults incl. weight decay
  Parameter p("w", Tensor::scalar(0.5));
  AdamState st(p);
  RefAdam ref;
  double w = 0.5;
  const double grads[3] = {0.3, -1.1, 0.25};
  for (double g : grads) {
    p.grad[0] = g;
    adam_step(cfg, st, p);
    ref.step(w, g, cfg);
    CHECK(std::abs(p.value[0] - w) < 1e-12);
  }
}

TEST_CASE("adam weight decay shrinks values toward zero") {
  AdamConfig cfg;  // weight_decay 1e-4
  Parameter p("w", Tensor::scalar(2.0));
  AdamState st(p);
  double prev = 2.0;
  for (int i = 0; i < 5; ++i) {
    p.zero_grad();
    adam_step(cfg, st, p);
    CHECK(std::abs(p.value[0]) < std::abs(prev));
    prev = p.value[0];
  }
  CHECK(prev > 0.0);
}

TEST_CASE("clip_global_norm") {
  Parameter a("a", Tensor::row({3.0, 0.0}));
  Parameter b("b", Tensor::row({0.0, 4.0}));
  a.grad = Tensor::row({3.0, 0.0});
  b.grad = Tensor::row({0.0, 4.0});
  Parameter* ps[] = {&a, &b};
  const double norm = clip_global_norm(ps, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(a.grad[0] == doctest::Approx(0.6));
  CHECK(b.grad[1] == doctest::Approx(0.8));
}

TEST_CASE("rng streams are order independent") {
  Rng a(99);
  Rng s1 = a.stream("x").stream(4);
  Rng s2 = a.stream("x").stream(4);
  CHECK(s1.next_u64() == s2.next_u64());
  Rng other = a.stream("x").stream(5);
  CHECK(s1.next_u64() != other.next_u64());
}
