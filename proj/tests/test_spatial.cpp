#include <doctest.h>

#include <cmath>

#include "stepnet/gradcheck.hpp"
#include "stepnet/gradsuite.hpp"
#include "stepnet/sampling.hpp"
#include "stepnet/spatial.hpp"

using namespace stepnet;

TEST_CASE("spatial_partition constants and shapes") {
  Tape<double> t;
  Var<double> m = t.leaf(Tensor<double>::full({2, 3, 4, 4}, 1.3));
  SpatialParts<double> p = spatial_partition(m);
  for (Var<double> v : {p.g_sg, p.h_l, p.h_r, p.h_t, p.h_b}) {
    CHECK(v.value().shape() == Shape{2, 3});
    for (int64_t i = 0; i < v.value().numel(); ++i) CHECK(v.value()[i] == doctest::Approx(1.3));
  }

  Var<double> small = t.leaf(Tensor<double>({2, 3, 1, 4}));
  CHECK_THROWS_AS(spatial_partition(small), ShapeError);
}

TEST_CASE("spatial_partition at full-scale dims") {
  Tape<float> t;
  Var<float> m = t.leaf(Tensor<float>::full({16, 2048, 16, 16}, 0.5f));
  SpatialParts<float> p = spatial_partition(m);
  for (Var<float> v : {p.g_sg, p.h_l, p.h_r, p.h_t, p.h_b}) {
    CHECK(v.value().shape() == Shape{16, 2048});
  }
}

TEST_CASE("even width: (h_l + h_r)/2 equals g_sg") {
  Tape<double> t;
  Var<double> m = t.leaf(detail::random_tensor({3, 4, 4, 4}, 41));
  SpatialParts<double> p = spatial_partition(m);
  for (int64_t i = 0; i < p.g_sg.value().numel(); ++i) {
    const double mean_lr = 0.5 * (p.h_l.value()[i] + p.h_r.value()[i]);
    CHECK(std::abs(mean_lr - p.g_sg.value()[i]) <= 1e-6);
    const double mean_tb = 0.5 * (p.h_t.value()[i] + p.h_b.value()[i]);
    CHECK(std::abs(mean_tb - p.g_sg.value()[i]) <= 1e-6);
  }
}

TEST_CASE("odd width: left stripe takes the extra column") {
  Tape<double> t;
  Tensor<double> m({1, 1, 2, 5});
  for (int64_t y = 0; y < 2; ++y) {
    for (int64_t x = 0; x < 5; ++x) m.at4(0, 0, y, x) = static_cast<double>(x);
  }
  SpatialParts<double> p = spatial_partition(t.leaf(std::move(m)));
  CHECK(p.h_l.value()[0] == doctest::Approx((0 + 1 + 2) / 3.0));
  CHECK(p.h_r.value()[0] == doctest::Approx((3 + 4) / 2.0));
}

TEST_CASE("horizontal flip swaps h_l and h_r bitwise, leaves g_sg/h_t/h_b") {
  Tensor<double> m = detail::random_tensor({3, 4, 8, 8}, 42);
  auto parts_of = [](const Tensor<double>& map) {
    Tape<double> t;
    SpatialParts<double> p = spatial_partition(t.leaf(map));
    struct Out {
      Tensor<double> g_sg, h_l, h_r, h_t, h_b;
    };
    return Out{p.g_sg.value(), p.h_l.value(), p.h_r.value(), p.h_t.value(), p.h_b.value()};
  };
  auto base = parts_of(m);
  auto flipped = parts_of(flip_horizontal(m));
  for (int64_t i = 0; i < base.g_sg.numel(); ++i) {
    CHECK(flipped.h_l[i] == base.h_r[i]);
    CHECK(flipped.h_r[i] == base.h_l[i]);
    CHECK(flipped.g_sg[i] == base.g_sg[i]);
    CHECK(flipped.h_t[i] == base.h_t[i]);
    CHECK(flipped.h_b[i] == base.h_b[i]);
  }
  auto vflipped = parts_of(flip_vertical(m));
  for (int64_t i = 0; i < base.g_sg.numel(); ++i) {
    CHECK(vflipped.h_t[i] == base.h_b[i]);
    CHECK(vflipped.h_b[i] == base.h_t[i]);
    CHECK(vflipped.g_sg[i] == base.g_sg[i]);
    CHECK(vflipped.h_l[i] == base.h_l[i]);
    CHECK(vflipped.h_r[i] == base.h_r[i]);
  }
}

namespace {

GateVars<double> zero_gate(Tape<double>& t, int64_t c, double bias2 = 0.0) {
  const int64_t h = c / 4;
  return {t.leaf(Tensor<double>({c, h})), t.leaf(Tensor<double>({h})),
          t.leaf(Tensor<double>({h, c})), t.leaf(Tensor<double>::full({c}, bias2))};
}

}  // namespace

TEST_CASE("gate closed forms") {
  Tape<double> t;
  const int64_t c = 8;
  Var<double> h = t.leaf(detail::random_tensor({3, c}, 43));

  // zero MLP -> sigmoid(0) = 0.5 gate
  Var<double> g = gate(h, zero_gate(t, c));
  for (int64_t i = 0; i < g.value().numel(); ++i) {
    CHECK(g.value()[i] == doctest::Approx(0.5 * h.value()[i]));
  }

  // zero input -> zero output
  Var<double> zero = t.leaf(Tensor<double>({3, c}));
  Var<double> gz = gate(zero, zero_gate(t, c));
  for (int64_t i = 0; i < gz.value().numel(); ++i) CHECK(gz.value()[i] == 0.0);
}

TEST_CASE("gate magnitude bound |gate(h)| <= |h|") {
  Tape<double> t;
  const int64_t c = 8;
  Var<double> h = t.leaf(detail::random_tensor({4, c}, 44, -2.0, 2.0));
  GateVars<double> p{t.leaf(detail::random_tensor({c, 2}, 45)), t.leaf(detail::random_tensor({2}, 46)),
                     t.leaf(detail::random_tensor({2, c}, 47)), t.leaf(detail::random_tensor({c}, 48))};
  Var<double> g = gate(h, p);
  for (int64_t i = 0; i < g.value().numel(); ++i) {
    CHECK(std::abs(g.value()[i]) <= std::abs(h.value()[i]));
  }
}

TEST_CASE("gate gradients") {
  const double err = check_tape_fn(
      [](Tape<double>& t, const std::vector<Var<double>>& v) {
        GateVars<double> p{v[1], v[2], v[3], v[4]};
        return weighted_sum(t, gate(v[0], p));
      },
      {detail::random_tensor({3, 8}, 49), detail::random_tensor({8, 2}, 50),
       detail::random_tensor({2}, 51), detail::random_tensor({2, 8}, 52),
       detail::random_tensor({8}, 53)});
  CHECK(err <= 1e-5);
}

TEST_CASE("fuse_gated saturation and zero cases") {
  Tape<double> t;
  const int64_t c = 8;
  // saturated gates: huge positive MLP bias makes sigmoid -> 1
  SpatialParts<double> parts = spatial_partition(t.leaf(detail::random_tensor({3, c, 4, 4}, 55)));
  auto [g_lr, g_tb] = fuse_gated(parts, zero_gate(t, c, 1e6), zero_gate(t, c, 1e6),
                                 zero_gate(t, c, 1e6), zero_gate(t, c, 1e6));
  for (int64_t i = 0; i < g_lr.value().numel(); ++i) {
    CHECK(g_lr.value()[i] == doctest::Approx(parts.h_l.value()[i] + parts.h_r.value()[i]));
    CHECK(g_tb.value()[i] == doctest::Approx(parts.h_t.value()[i] + parts.h_b.value()[i]));
  }

  SpatialParts<double> zero_parts = spatial_partition(t.leaf(Tensor<double>({3, c, 4, 4})));
  auto [z_lr, z_tb] = fuse_gated(zero_parts, zero_gate(t, c), zero_gate(t, c), zero_gate(t, c),
                                 zero_gate(t, c));
  for (int64_t i = 0; i < z_lr.value().numel(); ++i) {
    CHECK(z_lr.value()[i] == 0.0);
    CHECK(z_tb.value()[i] == 0.0);
  }
}

namespace {

SpatialAttentionVars<double> random_attention(Tape<double>& t, int64_t c, int64_t d, uint64_t seed) {
  auto w = [&](uint64_t s) { return t.leaf(detail::random_tensor({c, d}, seed + s)); };
  auto b = [&](uint64_t s) { return t.leaf(detail::random_tensor({d}, seed + s)); };
  return {w(0), b(1), w(2), b(3), w(4), b(5), w(6), b(7), w(8), b(9), w(10), b(11)};
}

}  // namespace

TEST_CASE("spatial_attention uniform keys average the values") {
  Tape<double> t;
  const int64_t c = 6, d = 4, T = 3;
  SpatialAttentionVars<double> p = random_attention(t, c, d, 60);
  // zero key maps: every key is the zero vector, so attention is uniform
  p.k_lr_w = t.leaf(Tensor<double>({c, d}));
  p.k_lr_b = t.leaf(Tensor<double>({d}));
  p.k_tb_w = t.leaf(Tensor<double>({c, d}));
  p.k_tb_b = t.leaf(Tensor<double>({d}));
  // identical rows inside each block make the value pool two repeated rows
  Tensor<double> row = detail::random_tensor({1, c}, 61);
  Tensor<double> same({T, c});
  for (int64_t r = 0; r < T; ++r) {
    for (int64_t j = 0; j < c; ++j) same.at2(r, j) = row.at2(0, j);
  }
  Var<double> g_lr = t.leaf(same);
  Var<double> g_tb = t.leaf(same);
  Var<double> g_sg = t.leaf(detail::random_tensor({T, c}, 62));
  Var<double> f_s = spatial_attention(g_sg, g_lr, g_tb, p);

  // expected: mean of V_p rows (all equal) + V_s
  Var<double> v_lr = affine(g_lr, p.v_lr_w, p.v_lr_b);
  Var<double> v_tb = affine(g_tb, p.v_tb_w, p.v_tb_b);
  Var<double> v_s = affine(g_sg, p.v_w, p.v_b);
  for (int64_t r = 0; r < T; ++r) {
    for (int64_t j = 0; j < d; ++j) {
      const double mean_vp = 0.5 * (v_lr.value().at2(0, j) + v_tb.value().at2(0, j));
      CHECK(f_s.value().at2(r, j) == doctest::Approx(mean_vp + v_s.value().at2(r, j)).epsilon(1e-9));
    }
  }
}

TEST_CASE("spatial_attention residual path with zero value maps") {
  Tape<double> t;
  const int64_t c = 6, d = 4, T = 3;
  SpatialAttentionVars<double> p = random_attention(t, c, d, 70);
  p.v_lr_w = t.leaf(Tensor<double>({c, d}));
  p.v_lr_b = t.leaf(Tensor<double>({d}));
  p.v_tb_w = t.leaf(Tensor<double>({c, d}));
  p.v_tb_b = t.leaf(Tensor<double>({d}));
  Var<double> g_lr = t.leaf(detail::random_tensor({T, c}, 71));
  Var<double> g_tb = t.leaf(detail::random_tensor({T, c}, 72));
  Var<double> g_sg = t.leaf(detail::random_tensor({T, c}, 73));
  Var<double> f_s = spatial_attention(g_sg, g_lr, g_tb, p);
  Var<double> v_s = affine(g_sg, p.v_w, p.v_b);
  for (int64_t i = 0; i < f_s.value().numel(); ++i) {
    CHECK(f_s.value()[i] == doctest::Approx(v_s.value()[i]).epsilon(1e-12));
  }
}

TEST_CASE("spatial_attention at full-scale dims") {
  Tape<float> t;
  const int64_t T = 16, c = 2048, d = 1024;
  auto rnd = [&](Shape s, uint64_t seed) {
    Tensor<float> x(std::move(s));
    Rng rng(seed);
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.uniform(-0.05, 0.05));
    return t.leaf(std::move(x));
  };
  SpatialAttentionVars<float> p{rnd({c, d}, 1), rnd({d}, 2), rnd({c, d}, 3), rnd({d}, 4),
                                rnd({c, d}, 5), rnd({d}, 6), rnd({c, d}, 7), rnd({d}, 8),
                                rnd({c, d}, 9), rnd({d}, 10), rnd({c, d}, 11), rnd({d}, 12)};
  Var<float> g_lr = rnd({T, c}, 13);
  Var<float> g_tb = rnd({T, c}, 14);
  Var<float> g_sg = rnd({T, c}, 15);

  Var<float> q = affine(g_sg, p.q_w, p.q_b);
  Var<float> k_p = concat_rows(std::vector<Var<float>>{affine(g_lr, p.k_lr_w, p.k_lr_b),
                                                       affine(g_tb, p.k_tb_w, p.k_tb_b)});
  CHECK(matmul(q, transpose_mat(k_p)).value().shape() == Shape{16, 32});
  CHECK(spatial_attention(g_sg, g_lr, g_tb, p).value().shape() == Shape{16, 1024});
}

TEST_CASE("attention weights are rows of a distribution") {
  Tape<double> t;
  Var<double> scores = t.leaf(detail::random_tensor({4, 6}, 80, -3.0, 3.0));
  Var<double> attn = softmax_rows(scores);
  for (int64_t r = 0; r < 4; ++r) {
    double sum = 0.0;
    for (int64_t c = 0; c < 6; ++c) sum += attn.value().at2(r, c);
    CHECK(std::abs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("whole spatial branch gradients") {
  const int64_t c = 8, d = 4, T = 2;
  const double err = check_tape_fn(
      [&](Tape<double>& t, const std::vector<Var<double>>& v) {
        SpatialParts<double> parts = spatial_partition(v[0]);
        GateVars<double> gl{v[1], v[2], v[3], v[4]};
        GateVars<double> gr{v[5], v[6], v[7], v[8]};
        GateVars<double> gt{v[9], v[10], v[11], v[12]};
        GateVars<double> gb{v[13], v[14], v[15], v[16]};
        auto [g_lr, g_tb] = fuse_gated(parts, gl, gr, gt, gb);
        SpatialAttentionVars<double> p{v[17], v[18], v[19], v[20], v[21], v[22],
                                       v[23], v[24], v[25], v[26], v[27], v[28]};
        return weighted_sum(t, spatial_attention(parts.g_sg, g_lr, g_tb, p));
      },
      {
          detail::random_tensor({T, c, 4, 4}, 90),
          detail::random_tensor({c, 2}, 91), detail::random_tensor({2}, 92),
          detail::random_tensor({2, c}, 93), detail::random_tensor({c}, 94),
          detail::random_tensor({c, 2}, 95), detail::random_tensor({2}, 96),
          detail::random_tensor({2, c}, 97), detail::random_tensor({c}, 98),
          detail::random_tensor({c, 2}, 99), detail::random_tensor({2}, 100),
          detail::random_tensor({2, c}, 101), detail::random_tensor({c}, 102),
          detail::random_tensor({c, 2}, 103), detail::random_tensor({2}, 104),
          detail::random_tensor({2, c}, 105), detail::random_tensor({c}, 106),
          detail::random_tensor({c, d}, 107), detail::random_tensor({d}, 108),
          detail::random_tensor({c, d}, 109), detail::random_tensor({d}, 110),
          detail::random_tensor({c, d}, 111), detail::random_tensor({d}, 112),
          detail::random_tensor({c, d}, 113), detail::random_tensor({d}, 114),
          detail::random_tensor({c, d}, 115), detail::random_tensor({d}, 116),
          detail::random_tensor({c, d}, 117), detail::random_tensor({d}, 118),
      });
  CHECK(err <= 1e-4);
}
