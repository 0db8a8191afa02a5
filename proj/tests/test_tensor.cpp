#include <cmath>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "magfuse/tensor.hpp"

using namespace magfuse;

TEST_CASE("matmul: identity and hand arithmetic") {
  Graph g;
  Tensor a = Tensor::from_data({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor c = g.matmul(a, eye);
  for (std::size_t i = 0; i < 9; ++i) CHECK(c.data()[i] == a.data()[i]);

  Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor v = Tensor::from_data({2, 1}, {1, 1});
  Tensor mv = g.matmul(m, v);
  CHECK(mv.at(0, 0) == 3.0);
  CHECK(mv.at(1, 0) == 7.0);
}

TEST_CASE("matmul: dimension mismatch reports both shapes") {
  Graph g;
  Tensor a = Tensor::zeros({4, 5});
  Tensor b = Tensor::zeros({3, 2});
  try {
    g.matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[4x5]") != std::string::npos);
    CHECK(msg.find("[3x2]") != std::string::npos);
  }
}

TEST_CASE("matmul: gradient of sum(C) vs finite differences") {
  Rng rng(11);
  auto a = gradcheck::random_tensor({4, 5}, rng);
  auto b = gradcheck::random_tensor({5, 3}, rng);
  auto res = gradcheck::check(
      [](Graph& g, std::vector<Tensor>& in) { return g.sum(g.matmul(in[0], in[1])); },
      {a, b});
  CHECK(res.max_err < 1e-6);
}

TEST_CASE("relu/tanh basics") {
  Graph g;
  Tensor x = Tensor::from_data({3}, {-1, 0, 2});
  Tensor y = g.relu(x);
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == 0.0);
  CHECK(y.data()[2] == 2.0);

  Tensor z = Tensor::scalar(0.0);
  z.set_requires_grad(true);
  Graph g2;
  Tensor t = g2.tanh(z);
  CHECK(t.value() == 0.0);
  g2.backward(t);
  CHECK(z.grad()[0] == doctest::Approx(1.0));
}

TEST_CASE("relu adjoint is 0 at exactly 0") {
  Tensor x = Tensor::from_data({2}, {0.0, 1.0});
  x.set_requires_grad(true);
  Graph g;
  g.backward(g.sum(g.relu(x)));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("elementwise: incompatible shapes raise") {
  Graph g;
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({3, 2});
  CHECK_THROWS_AS(g.add(a, b), ShapeError);
  CHECK_THROWS_AS(g.mul(a, b), ShapeError);
  CHECK_THROWS_AS(g.sub(a, b), ShapeError);
}

TEST_CASE("elementwise: row-vector broadcast over rows") {
  Graph g;
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from_data({3}, {10, 20, 30});
  Tensor c = g.add(a, b);
  CHECK(c.at(0, 0) == 11.0);
  CHECK(c.at(1, 2) == 36.0);

  Rng rng(3);
  auto x = gradcheck::random_tensor({4, 3}, rng);
  auto v = gradcheck::random_tensor({3}, rng);
  auto res = gradcheck::check(
      [](Graph& gg, std::vector<Tensor>& in) {
        return gg.sum(gg.mul(gg.add(in[0], in[1]), in[0]));
      },
      {x, v});
  CHECK(res.max_err < 1e-6);
}

TEST_CASE("mul gradient vs finite differences on random 3x3") {
  Rng rng(7);
  auto a = gradcheck::random_tensor({3, 3}, rng);
  auto b = gradcheck::random_tensor({3, 3}, rng);
  auto res = gradcheck::check(
      [](Graph& g, std::vector<Tensor>& in) { return g.sum(g.mul(in[0], in[1])); },
      {a, b});
  CHECK(res.max_err < 1e-6);
}

TEST_CASE("softmax_rows: symmetry and stability") {
  Graph g;
  Tensor u = g.softmax_rows(Tensor::from_data({1, 3}, {0, 0, 0}));
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(u.data()[j] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  Tensor s = g.softmax_rows(Tensor::from_data({1, 2}, {1000, 0}));
  CHECK(s.data()[0] == doctest::Approx(1.0));
  CHECK(s.data()[1] < 1e-300);
}

TEST_CASE("softmax_rows: rows sum to 1 within 1e-12 up to magnitude 1e3") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    Graph g;
    auto x = gradcheck::random_tensor({3, 5}, rng, -1e3, 1e3);
    Tensor y = g.softmax_rows(x);
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 5; ++j) s += y.at(i, j);
      CHECK(std::fabs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("softmax_rows: Jacobian-vector product vs finite differences") {
  Rng rng(29);
  auto x = gradcheck::random_tensor({2, 4}, rng);
  auto w = gradcheck::random_tensor({2, 4}, rng);  // fixed weights, not perturbed
  w.set_requires_grad(false);
  auto res = gradcheck::check(
      [w](Graph& g, std::vector<Tensor>& in) {
        return g.sum(g.mul(g.softmax_rows(in[0]), w));
      },
      {x});
  CHECK(res.max_err < 1e-6);
}

TEST_CASE("layer_norm: constant row maps to bias") {
  Graph g;
  Tensor x = Tensor::full({2, 4}, 3.7);
  Tensor gain = Tensor::full({4}, 1.0);
  Tensor bias = Tensor::zeros({4});
  Tensor y = g.layer_norm(x, gain, bias, 1e-5);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(0.0));
}

TEST_CASE("layer_norm: row [1,3] normalizes to [-1,1]") {
  Graph g;
  Tensor x = Tensor::from_data({1, 2}, {1, 3});
  Tensor y = g.layer_norm(x, Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-12);
  CHECK(y.data()[0] == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(y.data()[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("layer_norm: gradient vs finite differences") {
  Rng rng(31);
  auto x = gradcheck::random_tensor({3, 6}, rng);
  auto gain = gradcheck::random_tensor({6}, rng, 0.5, 1.5);
  auto bias = gradcheck::random_tensor({6}, rng);
  auto w = gradcheck::random_tensor({3, 6}, rng);
  auto res = gradcheck::check(
      [w](Graph& g, std::vector<Tensor>& in) {
        return g.sum(g.mul(g.layer_norm(in[0], in[1], in[2], 1e-5), w));
      },
      {x, gain, bias});
  CHECK(res.max_err < 1e-5);
}

TEST_CASE("l2_norm and row_l2_norms") {
  Graph g;
  CHECK(g.l2_norm(Tensor::zeros({4})).value() == 0.0);
  CHECK(g.l2_norm(Tensor::from_data({2}, {3, 4})).value() == doctest::Approx(5.0));

  Tensor x = Tensor::from_data({2, 2}, {3, 4, 0, 0});
  Tensor norms = g.row_l2_norms(x);
  CHECK(norms.at(0, 0) == doctest::Approx(5.0));
  CHECK(norms.at(1, 0) == 0.0);

  Rng rng(37);
  auto r = gradcheck::random_tensor({3, 4}, rng, 0.5, 1.5);
  auto res = gradcheck::check(
      [](Graph& gg, std::vector<Tensor>& in) { return gg.sum(gg.row_l2_norms(in[0])); },
      {r});
  CHECK(res.max_err < 1e-6);
}

TEST_CASE("concat/slice/transpose/scale_rows gradients") {
  Rng rng(41);
  auto a = gradcheck::random_tensor({3, 2}, rng);
  auto b = gradcheck::random_tensor({3, 4}, rng);
  auto s = gradcheck::random_tensor({3, 1}, rng);
  auto res = gradcheck::check(
      [](Graph& g, std::vector<Tensor>& in) {
        Tensor cat = g.concat_last(in[0], in[1]);           // [3x6]
        Tensor sl = g.slice_cols(cat, 1, 4);                // [3x4]
        Tensor tr = g.transpose(sl);                        // [4x3]
        Tensor back = g.transpose(tr);                      // [3x4]
        return g.sum(g.scale_rows(back, in[2]));
      },
      {a, b, s});
  CHECK(res.max_err < 1e-6);
}

TEST_CASE("dropout: eval identity, training scaling, argument validation") {
  Graph g;
  Rng rng(5);
  Tensor x = Tensor::from_data({4}, {1, 2, 3, 4});
  Tensor y = g.dropout(x, 0.5, rng, /*training=*/false);
  CHECK(y.node().get() == x.node().get());  // exact identity

  CHECK_THROWS_AS(g.dropout(x, 1.0, rng, true), ConfigError);
  CHECK_THROWS_AS(g.dropout(x, -0.1, rng, true), ConfigError);

  // Monte-Carlo check of inverted-dropout scaling: mean of 1e5 draws of a
  // ones-vector stays within 1.0 +- 0.02.
  Rng mc(97);
  const std::size_t n = 100000;
  Tensor ones = Tensor::full({n}, 1.0);
  Graph g2;
  Tensor dropped = g2.dropout(ones, 0.5, mc, true);
  double mean = 0.0;
  for (double v : dropped.data()) mean += v;
  mean /= static_cast<double>(n);
  CHECK(std::fabs(mean - 1.0) < 0.02);
}

TEST_CASE("dropout: adjoint equals the sampled mask scaling") {
  Rng rng(13);
  Tensor x = Tensor::from_data({6}, {1, 1, 1, 1, 1, 1});
  x.set_requires_grad(true);
  Graph g;
  Tensor y = g.dropout(x, 0.5, rng, true);
  g.backward(g.sum(y));
  for (std::size_t i = 0; i < 6; ++i) {
    // Surviving entries forward 1/(1-p) = 2, dropped entries 0.
    CHECK(x.grad()[i] == y.data()[i]);
  }
}

TEST_CASE("backward: sum and elementwise square") {
  Tensor x = Tensor::from_data({4}, {1, -2, 3, 0.5});
  x.set_requires_grad(true);
  {
    Graph g;
    g.backward(g.sum(x));
    for (std::size_t i = 0; i < 4; ++i) CHECK(x.grad()[i] == 1.0);
    x.zero_grad();
  }
  {
    Graph g;
    g.backward(g.sum(g.mul(x, x)));
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i]));
    x.zero_grad();
  }
}

TEST_CASE("backward: non-scalar loss rejected") {
  Tensor x = Tensor::zeros({3});
  x.set_requires_grad(true);
  Graph g;
  Tensor y = g.relu(x);
  CHECK_THROWS_AS(g.backward(y), ShapeError);
}

TEST_CASE("backward: calling twice without reset accumulates") {
  Tensor x = Tensor::from_data({2}, {1, 2});
  x.set_requires_grad(true);
  Graph g;
  Tensor loss = g.sum(g.mul(x, x));
  g.backward(loss);
  const double first = x.grad()[0];
  g.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0 * first));
}

TEST_CASE("backward: diamond reuse accumulates both paths") {
  Tensor x = Tensor::from_data({2}, {1, 2});
  x.set_requires_grad(true);
  Graph g;
  g.backward(g.sum(g.add(x, x)));
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 2.0);
}

TEST_CASE("finite-value enforcement") {
  CHECK_THROWS_AS(Tensor::from_data({1}, {std::nan("")}), NumericError);
  CHECK_THROWS_AS(Tensor::from_data({1}, {INFINITY}), NumericError);
  Graph g;
  Tensor big = Tensor::full({2, 2}, 1e308);
  CHECK_THROWS_AS(g.matmul(big, big), NumericError);
}

TEST_CASE("per-op gradient property: 100 randomized trials per op") {
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto x = gradcheck::random_tensor({2, 3}, rng);
    auto y = gradcheck::random_tensor({2, 3}, rng);
    auto res = gradcheck::check(
        [](Graph& g, std::vector<Tensor>& in) {
          Tensor t = g.tanh(in[0]);
          t = g.add(t, g.relu(in[1]));
          t = g.sub(t, g.scale(in[0], 0.25));
          t = g.mul(t, g.shift(in[1], 1.5));
          t = g.softmax_rows(t);
          return g.mean(g.abs(g.clamp_max(t, 0.8)));
        },
        {x, y});
    worst = std::max(worst, res.max_err);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("div and clamp_max adjoints") {
  Rng rng(53);
  auto a = gradcheck::random_tensor({3, 1}, rng, 0.5, 2.0);
  auto b = gradcheck::random_tensor({3, 1}, rng, 0.5, 2.0);
  auto res = gradcheck::check(
      [](Graph& g, std::vector<Tensor>& in) {
        return g.sum(g.clamp_max(g.div(in[0], in[1]), 1.2));
      },
      {a, b});
  CHECK(res.max_err < 1e-6);
}

TEST_CASE("gather_rows: lookup and scatter-add adjoint") {
  Tensor table = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
  table.set_requires_grad(true);
  Graph g;
  Tensor rows = g.gather_rows(table, {2, 0, 2});
  CHECK(rows.at(0, 0) == 5.0);
  CHECK(rows.at(1, 1) == 2.0);
  g.backward(g.sum(rows));
  CHECK(table.grad()[0] == 1.0);  // row 0 used once
  CHECK(table.grad()[2] == 0.0);  // row 1 unused
  CHECK(table.grad()[4] == 2.0);  // row 2 used twice

  CHECK_THROWS_AS(g.gather_rows(table, {3}), DataError);
}

TEST_CASE("no-grad graphs record nothing") {
  Tensor x = Tensor::from_data({2}, {1, 2});
  x.set_requires_grad(true);
  Graph g(Graph::Mode::no_grad);
  Tensor y = g.sum(g.mul(x, x));
  CHECK(y.value() == doctest::Approx(5.0));
  CHECK(g.num_ops() == 0);
  CHECK_FALSE(y.requires_grad());
}
