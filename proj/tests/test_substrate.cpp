#include <doctest.h>

#include <cmath>
#include <cstring>

#include "stepnet/gradcheck.hpp"
#include "stepnet/gradsuite.hpp"
#include "stepnet/gru.hpp"
#include "stepnet/ops.hpp"

using namespace stepnet;

namespace {

Tensor<double> mat(int64_t r, int64_t c, std::vector<double> v) {
  return Tensor<double>({r, c}, std::move(v));
}

}  // namespace

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor<double>({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor<double>({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  Tensor<double> t({2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(t.numel() == 4);
  CHECK(t.all_finite());
  t[2] = std::nan("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("matmul identity and hand arithmetic") {
  Tape<double> t;
  Var<double> eye = t.leaf(mat(2, 2, {1, 0, 0, 1}));
  Var<double> b = t.leaf(mat(2, 2, {5, 6, 7, 8}));
  Var<double> y = matmul(eye, b);
  for (int64_t i = 0; i < 4; ++i) CHECK(y.value()[i] == b.value()[i]);

  Var<double> a = t.leaf(mat(2, 2, {1, 2, 3, 4}));
  Var<double> v = t.leaf(mat(2, 1, {5, 6}));
  Var<double> p = matmul(a, v);
  CHECK(p.value()[0] == doctest::Approx(17.0));
  CHECK(p.value()[1] == doctest::Approx(39.0));

  CHECK_THROWS_AS(matmul(a, t.leaf(mat(3, 1, {1, 2, 3}))), ShapeError);
  CHECK_THROWS_WITH_AS(matmul(a, t.leaf(mat(3, 1, {1, 2, 3}))),
                       doctest::Contains("2x2"), ShapeError);
}

TEST_CASE("matmul gradient vs finite differences") {
  const double err = check_tape_fn(
      [](Tape<double>& t, const std::vector<Var<double>>& v) {
        return sum_all(matmul(v[0], v[1]));
      },
      {detail::random_tensor({3, 4}, 7), detail::random_tensor({4, 2}, 8)});
  CHECK(err <= 1e-6);
}

TEST_CASE("softmax_rows closed forms") {
  Tape<double> t;
  Var<double> x = t.leaf(mat(2, 2, {0, 0, 0, std::log(3.0)}));
  Var<double> y = softmax_rows(x);
  CHECK(y.value()[0] == doctest::Approx(0.5));
  CHECK(y.value()[1] == doctest::Approx(0.5));
  CHECK(y.value()[2] == doctest::Approx(0.25));
  CHECK(y.value()[3] == doctest::Approx(0.75));
}

TEST_CASE("softmax_rows shift invariance and large spread") {
  Tape<double> t;
  Rng rng(11);
  std::vector<double> base(6);
  for (auto& v : base) v = rng.uniform(-2.0, 2.0);
  std::vector<double> shifted = base;
  for (auto& v : shifted) v += 123.456;
  Var<double> a = softmax_rows(t.leaf(mat(2, 3, base)));
  Var<double> b = softmax_rows(t.leaf(mat(2, 3, shifted)));
  for (int64_t i = 0; i < 6; ++i) CHECK(a.value()[i] == doctest::Approx(b.value()[i]).epsilon(1e-12));

  // spread of 1e3 must neither overflow nor break normalization
  Var<double> big = softmax_rows(t.leaf(mat(1, 3, {0.0, 500.0, 1000.0})));
  double sum = 0;
  for (int64_t i = 0; i < 3; ++i) sum += big.value()[i];
  CHECK(std::abs(sum - 1.0) <= 1e-6);

  Tensor<double> bad = mat(1, 2, {0.0, 1.0});
  bad[1] = std::nan("");
  Var<double> leaf = t.leaf(std::move(bad));
  CHECK_THROWS_AS(softmax_rows(leaf), NumericError);
}

TEST_CASE("softmax row sums stay normalized on random input") {
  Tape<double> t;
  for (uint64_t s = 0; s < 10; ++s) {
    Var<double> y = softmax_rows(t.leaf(detail::random_tensor({4, 7}, s, -100.0, 100.0)));
    for (int64_t r = 0; r < 4; ++r) {
      double sum = 0;
      for (int64_t c = 0; c < 7; ++c) sum += y.value().at2(r, c);
      CHECK(std::abs(sum - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("sigmoid values and derivative") {
  Tape<double> t;
  Var<double> y = sigmoid(t.leaf(mat(1, 3, {0.0, 30.0, -30.0})));
  CHECK(y.value()[0] == doctest::Approx(0.5));
  CHECK(std::abs(y.value()[1] - 1.0) <= 1e-9);
  CHECK(y.value()[2] <= 1e-9);

  // derivative at 0 is 0.25
  const double err = check_tape_fn(
      [](Tape<double>& tp, const std::vector<Var<double>>& v) { return sum_all(sigmoid(v[0])); },
      {mat(1, 1, {0.0})}, 1e-5);
  CHECK(err <= 1e-8);

  Tape<double> t2;
  Var<double> x = t2.leaf(mat(1, 1, {0.0}), true);
  Var<double> s = sum_all(sigmoid(x));
  t2.backward(s);
  CHECK(t2.grad(x.id)[0] == doctest::Approx(0.25));
}

TEST_CASE("mean_pool constant, shapes, gradient") {
  Tape<double> t;
  Var<double> c = t.leaf(Tensor<double>::full({2, 3, 4, 4}, 2.5), true);
  Var<double> pooled = mean_pool(c, {2, 3});
  CHECK(pooled.value().shape() == Shape{2, 3});
  for (int64_t i = 0; i < pooled.value().numel(); ++i) {
    CHECK(pooled.value()[i] == doctest::Approx(2.5));
  }
  Var<double> s = sum_all(pooled);
  t.backward(s);
  for (int64_t i = 0; i < c.value().numel(); ++i) {
    CHECK(t.grad(c.id)[i] == doctest::Approx(1.0 / 16.0));
  }

  CHECK_THROWS_AS(mean_pool(c, {}), ShapeError);
  CHECK_THROWS_AS(mean_pool(c, {2, 2}), ShapeError);
  CHECK_THROWS_AS(mean_pool(c, {7}), ShapeError);
}

TEST_CASE("mean_pool at full-scale map dims") {
  // 16 x 2048 x 16 x 16 over (H, W) -> 16 x 2048
  Tape<float> t;
  Var<float> m = t.leaf(Tensor<float>::full({16, 2048, 16, 16}, 1.0f));
  Var<float> g = mean_pool(m, {2, 3});
  CHECK(g.value().shape() == Shape{16, 2048});
  CHECK(g.value()[0] == doctest::Approx(1.0f));
}

TEST_CASE("affine bias-only and paper width mapping") {
  Tape<double> t;
  Var<double> x = t.leaf(detail::random_tensor({3, 2}, 3));
  Var<double> w = t.leaf(Tensor<double>({2, 4}));
  Var<double> b = t.leaf(Tensor<double>({4}, {1, 2, 3, 4}));
  Var<double> y = affine(x, w, b);
  for (int64_t r = 0; r < 3; ++r) {
    for (int64_t c = 0; c < 4; ++c) CHECK(y.value().at2(r, c) == doctest::Approx(1.0 + c));
  }

  Tape<float> tf;
  Var<float> xf = tf.leaf(Tensor<float>({16, 2048}));
  Var<float> wf = tf.leaf(Tensor<float>({2048, 1024}));
  Var<float> bf = tf.leaf(Tensor<float>({1024}));
  CHECK(affine(xf, wf, bf).value().shape() == Shape{16, 1024});

  const double err = check_tape_fn(
      [](Tape<double>& tp, const std::vector<Var<double>>& v) {
        return weighted_sum(tp, affine(v[0], v[1], v[2]));
      },
      {detail::random_tensor({3, 5}, 4), detail::random_tensor({5, 4}, 5),
       detail::random_tensor({4}, 6)});
  CHECK(err <= 1e-6);
}

TEST_CASE("gru_cell closed forms") {
  auto zeros = [](Shape s) { return Tensor<double>(std::move(s)); };
  const int64_t din = 3, dh = 4;

  Tape<double> t;
  GruCellVars<double> p{t.leaf(zeros({din, dh})), t.leaf(zeros({dh, dh})), t.leaf(zeros({dh})),
                        t.leaf(zeros({din, dh})), t.leaf(zeros({dh, dh})), t.leaf(zeros({dh})),
                        t.leaf(zeros({din, dh})), t.leaf(zeros({dh, dh})), t.leaf(zeros({dh}))};
  Var<double> x = t.leaf(mat(1, din, {0.3, -0.2, 0.9}));
  Var<double> h = t.leaf(mat(1, dh, {1.0, -2.0, 0.5, 4.0}));
  Var<double> next = gru_cell(x, h, p);
  for (int64_t i = 0; i < dh; ++i) {
    CHECK(next.value()[i] == doctest::Approx(0.5 * h.value()[i]));
  }

  // carry gate: z -> 0 keeps the previous state
  Tape<double> t2;
  GruCellVars<double> p2{t2.leaf(zeros({din, dh})), t2.leaf(zeros({dh, dh})),
                         t2.leaf(Tensor<double>::full({dh}, -1e6)),
                         t2.leaf(zeros({din, dh})), t2.leaf(zeros({dh, dh})), t2.leaf(zeros({dh})),
                         t2.leaf(zeros({din, dh})), t2.leaf(zeros({dh, dh})), t2.leaf(zeros({dh}))};
  Var<double> x2 = t2.leaf(mat(1, din, {0.3, -0.2, 0.9}));
  Var<double> h2 = t2.leaf(mat(1, dh, {1.0, -2.0, 0.5, 4.0}));
  Var<double> kept = gru_cell(x2, h2, p2);
  for (int64_t i = 0; i < dh; ++i) CHECK(kept.value()[i] == h2.value()[i]);
}

TEST_CASE("cross_entropy closed forms and exact gradient") {
  Tape<double> t;
  Var<double> uniform = t.leaf(mat(1, 4, {0.7, 0.7, 0.7, 0.7}));
  Var<double> l = cross_entropy(uniform, 2);
  CHECK(l.value()[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Var<double> confident = t.leaf(mat(1, 3, {30.0, 0.0, 0.0}));
  CHECK(cross_entropy(confident, 0).value()[0] <= 1e-9);

  CHECK_THROWS_AS(cross_entropy(uniform, 4), ShapeError);
  CHECK_THROWS_AS(cross_entropy(uniform, -1), ShapeError);

  // gradient equals softmax - onehot, bitwise
  Tape<double> t2;
  Tensor<double> logits = detail::random_tensor({1, 5}, 17, -2.0, 2.0);
  Var<double> q = t2.leaf(logits, true);
  Var<double> loss = cross_entropy(q, 3);
  t2.backward(loss);
  Var<double> probs = softmax_rows(t2.leaf(logits));
  for (int64_t j = 0; j < 5; ++j) {
    const double expect = probs.value()[j] - (j == 3 ? 1.0 : 0.0);
    CHECK(t2.grad(q.id)[j] == expect);
  }
}

TEST_CASE("backward fan-out and non-grad leaves") {
  Tape<double> t;
  Var<double> x = t.leaf(mat(1, 1, {1.5}), true);
  Var<double> y = add(x, x);
  t.backward(sum_all(y));
  CHECK(t.grad(x.id)[0] == 2.0);

  Tape<double> t2;
  Var<double> c = t2.leaf(mat(1, 1, {3.0}), false);
  Var<double> x2 = t2.leaf(mat(1, 1, {2.0}), true);
  Var<double> z = mul(c, x2);
  t2.backward(sum_all(z));
  CHECK(t2.grad(c.id).numel() == 0);  // constants collect nothing
  CHECK(t2.grad(x2.id)[0] == 3.0);
}

TEST_CASE("backward rejects non-scalar seeds") {
  Tape<double> t;
  Var<double> x = t.leaf(mat(2, 2, {1, 2, 3, 4}), true);
  Var<double> y = add(x, x);
  CHECK_THROWS_AS(t.backward(y), ShapeError);
}

TEST_CASE("fan-out gradient scales exactly with use count") {
  // k linear uses accumulate a gradient of exactly k at the reused node
  for (int k = 1; k <= 6; ++k) {
    Tape<double> t;
    Var<double> x = t.leaf(mat(1, 1, {0.37}), true);
    Var<double> f = sigmoid(x);
    Var<double> acc = f;
    for (int i = 1; i < k; ++i) acc = add(acc, f);
    t.backward(sum_all(acc));
    CHECK(t.grad(f.id)[0] == static_cast<double>(k));
    CHECK(t.grad(x.id)[0] ==
          doctest::Approx(static_cast<double>(k) * 0.25 / std::cosh(0.37 / 2) / std::cosh(0.37 / 2))
              .epsilon(1e-12));
  }
}

TEST_CASE("tape replay reproduces values bit-for-bit") {
  Tape<double> t;
  Var<double> a = t.leaf(detail::random_tensor({3, 4}, 21), true);
  Var<double> b = t.leaf(detail::random_tensor({4, 2}, 22), true);
  Var<double> y = softmax_rows(matmul(sigmoid(a), b));
  Var<double> s = sum_all(y);

  std::vector<Tensor<double>> saved;
  for (int id = 0; id < t.size(); ++id) saved.push_back(t.value(id));

  // clobber all non-leaf values, then replay
  for (int id = 0; id < t.size(); ++id) {
    if (t.node(id).replay_fn) t.mutable_value(id).fill(std::nan(""));
  }
  t.replay();
  for (int id = 0; id < t.size(); ++id) {
    const Tensor<double>& got = t.value(id);
    REQUIRE(got.numel() == saved[static_cast<size_t>(id)].numel());
    CHECK(std::memcmp(got.data(), saved[static_cast<size_t>(id)].data(),
                      sizeof(double) * static_cast<size_t>(got.numel())) == 0);
  }

  // backward twice produces bit-identical gradients
  t.backward(s);
  Tensor<double> ga = t.grad(a.id);
  Tensor<double> gb = t.grad(b.id);
  t.zero_grads();
  t.backward(s);
  CHECK(std::memcmp(ga.data(), t.grad(a.id).data(), sizeof(double) * 12) == 0);
  CHECK(std::memcmp(gb.data(), t.grad(b.id).data(), sizeof(double) * 8) == 0);
}

TEST_CASE("finite_diff_check reference behaviors") {
  // linear map: exact up to rounding
  const double lin_err = check_tape_fn(
      [](Tape<double>& t, const std::vector<Var<double>>& v) {
        return weighted_sum(t, affine(v[0], v[1], v[2]));
      },
      {detail::random_tensor({2, 3}, 31), detail::random_tensor({3, 2}, 32),
       detail::random_tensor({2}, 33)});
  CHECK(lin_err <= 1e-10);

  // softmax(matmul) composite
  const double comp_err = check_tape_fn(
      [](Tape<double>& t, const std::vector<Var<double>>& v) {
        return weighted_sum(t, softmax_rows(matmul(v[0], v[1])));
      },
      {detail::random_tensor({3, 4}, 34), detail::random_tensor({4, 3}, 35)});
  CHECK(comp_err <= 1e-6);
}

TEST_CASE("every primitive passes the gradient suite at 1e-5") {
  for (const auto& entry : run_gradient_suite(10)) {
    if (entry.name == "composite_model") continue;  // checked at 1e-4 in acceptance
    INFO(entry.name);
    CHECK(entry.max_rel_err <= 1e-5);
  }
}
