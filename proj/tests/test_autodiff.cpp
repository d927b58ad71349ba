#include <doctest.h>

#include <cmath>
#include <memory>

#include "trtm/tensor/gradcheck.hpp"
#include "trtm/tensor/graph.hpp"
#include "trtm/tensor/params.hpp"
#include "trtm/util/rng.hpp"

using trtm::ad::Graph;
using trtm::ad::ParamSet;
using trtm::ad::SegmentIndex;
using trtm::ad::Tensor;
using trtm::util::Rng;

namespace {

Tensor<double> rnd(Rng& rng, std::vector<int> shape) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("tensor shape validation") {
  CHECK_THROWS(Tensor<double>({2, 3}, std::vector<double>(5)));
  CHECK_THROWS(Tensor<double>({0, 3}));
  CHECK_THROWS(Tensor<double>(std::vector<int>{}));
  Tensor<double> ok({2, 3});
  CHECK(ok.numel() == 6);
}

TEST_CASE("matmul forward matches hand computation") {
  Graph<double> g;
  int a = g.leaf(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  int b = g.leaf(Tensor<double>({2, 2}, {5, 6, 7, 8}));
  int c = g.matmul(a, b);
  CHECK(g.value(c).data[0] == doctest::Approx(19));
  CHECK(g.value(c).data[1] == doctest::Approx(22));
  CHECK(g.value(c).data[2] == doctest::Approx(43));
  CHECK(g.value(c).data[3] == doctest::Approx(50));
  CHECK_THROWS(g.matmul(a, g.leaf(Tensor<double>({3, 2}))));
}

TEST_CASE("elementwise and reduction forwards") {
  Graph<double> g;
  int a = g.leaf(Tensor<double>({2, 2}, {1, -2, 3, -4}));
  int b = g.leaf(Tensor<double>({2, 2}, {2, 2, 2, 2}));
  CHECK(g.value(g.add(a, b)).data[1] == doctest::Approx(0));
  CHECK(g.value(g.sub(a, b)).data[0] == doctest::Approx(-1));
  CHECK(g.value(g.mul(a, b)).data[3] == doctest::Approx(-8));
  CHECK(g.value(g.relu(a)).data[1] == 0.0);
  CHECK(g.value(g.abs(a)).data[3] == doctest::Approx(4));
  CHECK(g.value(g.sum(a)).data[0] == doctest::Approx(-2));
  CHECK(g.value(g.mean(a)).data[0] == doctest::Approx(-0.5));
  CHECK(g.value(g.sigmoid(g.leaf(Tensor<double>({1}, {0.0})))).data[0] ==
        doctest::Approx(0.5));
  CHECK(g.value(g.l1_distance(a, b)).data[0] == doctest::Approx(1 + 4 + 1 + 6));
  CHECK(g.value(g.sq_l2_distance(a, b)).data[0] ==
        doctest::Approx(1 + 16 + 1 + 36));
  int rm = g.row_mean(a);
  CHECK(g.value(rm).shape == std::vector<int>{2});
  CHECK(g.value(rm).data[0] == doctest::Approx(-0.5));
  int rn = g.rows_l2norm(a);
  CHECK(g.value(rn).data[1] == doctest::Approx(5.0));
}

TEST_CASE("structural ops") {
  Graph<double> g;
  int a = g.leaf(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  int b = g.leaf(Tensor<double>({2, 1}, {9, 8}));
  int cc = g.concat_cols({a, b});
  CHECK(g.value(cc).shape == std::vector<int>{2, 3});
  CHECK(g.value(cc).data[2] == doctest::Approx(9));
  CHECK(g.value(cc).data[5] == doctest::Approx(8));

  int gr = g.gather_rows(a, {1, 1, 0});
  CHECK(g.value(gr).shape == std::vector<int>{3, 2});
  CHECK(g.value(gr).data[0] == doctest::Approx(3));
  CHECK(g.value(gr).data[4] == doctest::Approx(1));
  CHECK_THROWS(g.gather_rows(a, {2}));

  int t = g.tile_rows(g.leaf(Tensor<double>({1, 2}, {7, 6})), 3);
  CHECK(g.value(t).shape == std::vector<int>{3, 2});
  CHECK(g.value(t).data[4] == doctest::Approx(7));

  int rs = g.reshape(a, {4, 1});
  CHECK(g.value(rs).shape == std::vector<int>{4, 1});
  CHECK_THROWS(g.reshape(a, {3, 1}));

  int ab = g.add_bias(a, g.leaf(Tensor<double>({2}, {10, 20})));
  CHECK(g.value(ab).data[0] == doctest::Approx(11));
  CHECK(g.value(ab).data[3] == doctest::Approx(24));
}

TEST_CASE("segment softmax normalizes each segment") {
  Graph<double> g;
  auto seg = std::make_shared<SegmentIndex>();
  seg->offsets = {0, 3, 4, 7};
  int x = g.leaf(Tensor<double>({7, 1}, {1, 1, 1, 5, -2, 0, 2}));
  int w = g.segment_softmax(x, seg);
  const auto& v = g.value(w).data;
  CHECK(v[0] == doctest::Approx(1.0 / 3));
  CHECK(v[1] == doctest::Approx(1.0 / 3));
  CHECK(v[3] == doctest::Approx(1.0));
  CHECK(v[4] + v[5] + v[6] == doctest::Approx(1.0));
  // Extreme logits stay finite.
  int x2 = g.leaf(Tensor<double>({7, 1}, {800, -800, 0, 50, 1, 2, 3}));
  const auto& v2 = g.value(g.segment_softmax(x2, seg)).data;
  for (double q : v2) CHECK(std::isfinite(q));

  auto bad = std::make_shared<SegmentIndex>();
  bad->offsets = {0, 3, 3, 7};
  CHECK_THROWS(g.segment_softmax(x, bad));
}

TEST_CASE("segment weighted sum pools rows") {
  Graph<double> g;
  auto seg = std::make_shared<SegmentIndex>();
  seg->offsets = {0, 2, 3};
  int f = g.leaf(Tensor<double>({3, 2}, {1, 2, 3, 4, 5, 6}));
  int w = g.leaf(Tensor<double>({3, 1}, {0.5, 0.5, 2.0}));
  int out = g.segment_weighted_sum(f, w, seg);
  CHECK(g.value(out).shape == std::vector<int>{2, 2});
  CHECK(g.value(out).data[0] == doctest::Approx(2.0));
  CHECK(g.value(out).data[1] == doctest::Approx(3.0));
  CHECK(g.value(out).data[2] == doctest::Approx(10.0));
}

TEST_CASE("conv2d forward matches brute force") {
  Rng rng(7);
  Graph<double> g;
  Tensor<double> xt = rnd(rng, {2, 5, 5});
  Tensor<double> kt = rnd(rng, {3, 2, 3, 3});
  int x = g.leaf(xt);
  int k = g.leaf(kt);
  int y = g.conv2d(x, k, 2, 1);
  CHECK(g.value(y).shape == std::vector<int>{3, 3, 3});
  for (int f = 0; f < 3; ++f)
    for (int oy = 0; oy < 3; ++oy)
      for (int ox = 0; ox < 3; ++ox) {
        double acc = 0.0;
        for (int c = 0; c < 2; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              int sy = oy * 2 + ky - 1, sx = ox * 2 + kx - 1;
              if (sy < 0 || sy >= 5 || sx < 0 || sx >= 5) continue;
              acc += xt.data[(c * 5 + sy) * 5 + sx] *
                     kt.data[((f * 2 + c) * 3 + ky) * 3 + kx];
            }
        CHECK(g.value(y).data[(f * 3 + oy) * 3 + ox] == doctest::Approx(acc));
      }
}

TEST_CASE("replay reproduces forward values bit-exactly") {
  Rng rng(11);
  Graph<double> g;
  auto t = rnd(rng, {4, 3});
  t.requires_grad = true;
  int x = g.leaf(t);
  int y = g.relu(g.matmul(x, g.leaf(rnd(rng, {3, 5}))));
  int loss = g.mean(g.mul(y, y));
  std::vector<double> before = g.value(loss).data;
  std::vector<double> ybefore = g.value(y).data;
  g.replay();
  CHECK(g.value(loss).data == before);
  CHECK(g.value(y).data == ybefore);
}

TEST_CASE("gradient accumulates over multiple consumers") {
  Graph<double> g;
  Tensor<double> t({2, 2}, {1, 2, 3, 4});
  t.requires_grad = true;
  int x = g.leaf(t);
  int loss = g.sum(g.add(x, x));
  g.backward(loss);
  for (double v : g.grad(x).data) CHECK(v == doctest::Approx(2.0));
}

TEST_CASE("relu gradient is zero at zero input") {
  Graph<double> g;
  Tensor<double> t({1, 4}, {0.0, -1.0, 2.0, 0.0});
  t.requires_grad = true;
  int x = g.leaf(t);
  g.backward(g.sum(g.relu(x)));
  CHECK(g.grad(x).data[0] == 0.0);
  CHECK(g.grad(x).data[1] == 0.0);
  CHECK(g.grad(x).data[2] == 1.0);
  CHECK(g.grad(x).data[3] == 0.0);
}

TEST_CASE("backward requires a differentiable scalar root") {
  Graph<double> g;
  int x = g.leaf(Tensor<double>({2, 2}, {1, 2, 3, 4}));  // no grad
  int s = g.sum(x);
  CHECK_THROWS(g.backward(s));
  CHECK_THROWS(g.backward(x));
  CHECK_FALSE(g.has_grad(x));
}

TEST_CASE("gradcheck covers every op") {
  for (const auto& op : trtm::ad::gradcheck_op_names()) {
    double eps = trtm::ad::gradcheck_default_epsilon(op);
    double err = trtm::ad::grad_check(op, "", eps, 3);
    INFO("op ", op, " err ", err);
    CHECK(err < 1e-4);
  }
  CHECK_THROWS(trtm::ad::grad_check("matmul", "", 0.5, 1));
  CHECK_THROWS(trtm::ad::grad_check("no_such_op", "", 1e-5, 1));
}

TEST_CASE("gradcheck matmul on the documented shape is tight") {
  CHECK(trtm::ad::grad_check("matmul", "4x3x2", 1e-5, 1) < 1e-6);
}

TEST_CASE("relu gradcheck with all-negative inputs is exactly zero") {
  Graph<double> g;
  Tensor<double> t({2, 3}, {-1, -2, -3, -0.5, -4, -1.5});
  t.requires_grad = true;
  int x = g.leaf(t);
  g.backward(g.sum(g.relu(x)));
  for (double v : g.grad(x).data) CHECK(v == 0.0);
}

TEST_CASE("adam first step with unit gradient moves by lr") {
  ParamSet<float> params;
  params.add("w", Tensor<float>({2, 2}, {1, 1, 1, 1}));
  trtm::ad::AdamState<float> st;
  st.init(params);
  std::vector<std::vector<float>> grads = {{1, 1, 1, 1}};
  trtm::ad::adam_step(params, grads, st, 1e-3f);
  for (float v : params.at("w").data)
    CHECK(v == doctest::Approx(1.0f - 1e-3f).epsilon(1e-5));
}

TEST_CASE("adam with zero gradient from fresh state leaves params") {
  ParamSet<float> params;
  params.add("w", Tensor<float>({3}, {0.5f, -0.5f, 2.0f}));
  trtm::ad::AdamState<float> st;
  st.init(params);
  std::vector<std::vector<float>> grads = {{0, 0, 0}};
  trtm::ad::adam_step(params, grads, st, 1e-2f);
  CHECK(params.at("w").data[0] == 0.5f);
  CHECK(params.at("w").data[1] == -0.5f);
  CHECK(params.at("w").data[2] == 2.0f);
}

TEST_CASE("adam asymptotic step size approaches lr for constant gradient") {
  ParamSet<double> params;
  params.add("w", Tensor<double>({1}, {0.0}));
  trtm::ad::AdamState<double> st;
  st.init(params);
  std::vector<std::vector<double>> grads = {{2.5}};
  double prev = 0.0;
  double step = 0.0;
  for (int i = 0; i < 200; ++i) {
    prev = params.at("w").data[0];
    trtm::ad::adam_step(params, grads, st, 1e-3);
    step = prev - params.at("w").data[0];
  }
  CHECK(step == doctest::Approx(1e-3).epsilon(1e-3));
}

TEST_CASE("paramset rejects duplicates and keeps order") {
  ParamSet<float> p;
  p.add("a", Tensor<float>({2}));
  p.add("b", Tensor<float>({3}));
  CHECK_THROWS(p.add("a", Tensor<float>({1})));
  CHECK(p.name(0) == "a");
  CHECK(p.name(1) == "b");
  CHECK(p.total_elements() == 5);
  CHECK_THROWS(p.at("zz"));
}

}  // TEST_SUITE
