#include "doctest.h"

#include "csclog/gradcheck.hpp"
#include "csclog/layers.hpp"
#include "csclog/optim.hpp"
#include "csclog/tensor.hpp"

#include <cmath>
#include <random>

using namespace csclog;

namespace {

Tensor random_tensor(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  return t;
}

// Reduces any output to a scalar with fixed random weights so every output
// entry contributes a distinct coefficient to the checked gradient.
Var weighted_sum(Tape& tape, Var out, Rng& rng) {
  Tensor w = random_tensor(out.rows(), out.cols(), rng);
  return ops::sum_all(ops::mul(out, tape.constant(w)));
}

// Dense reference: D^{-1/2}(A+I)D^{-1/2} X W computed entry by entry.
Tensor dense_gcn_oracle(const Tensor& x, const Tensor& a, const Tensor& w) {
  const Eigen::Index n = a.rows();
  std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) deg[i] += a(i, j) + (i == j ? 1.0 : 0.0);
  }
  Tensor agg = Tensor::Zero(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double m = a(i, j) + (i == j ? 1.0 : 0.0);
      const double coef = m / std::sqrt(deg[i] * deg[j]);
      for (Eigen::Index c = 0; c < x.cols(); ++c) agg(i, c) += coef * x(j, c);
    }
  }
  Tensor out = Tensor::Zero(n, w.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < w.cols(); ++k)
      for (Eigen::Index c = 0; c < x.cols(); ++c) out(i, k) += agg(i, c) * w(c, k);
  return out;
}

}  // namespace

TEST_CASE("mlp_apply examples") {
  Tape tape;
  SUBCASE("zero weights with relu give zero") {
    Mlp mlp("m", {3, 2}, {Activation::relu});
    Var out = mlp.apply(tape, tape.constant(Tensor::Ones(2, 3)));
    CHECK(out.value().isZero());
  }
  SUBCASE("identity weight passes input through") {
    Mlp mlp("m", {3, 3}, {Activation::identity});
    mlp.layers[0].weight.value = Tensor::Identity(3, 3);
    Tensor x(1, 3);
    x << 1.5, -2.0, 0.25;
    CHECK(mlp.apply(tape, tape.constant(x)).value() == x);
  }
  SUBCASE("affine arithmetic") {
    Mlp mlp("m", {2, 1}, {Activation::identity});
    mlp.layers[0].weight.value << 1, 1;
    mlp.layers[0].bias.value << 0.5;
    Tensor x(1, 2);
    x << 1, 2;
    CHECK(mlp.apply(tape, tape.constant(x)).value()(0, 0) == doctest::Approx(3.5));
  }
  SUBCASE("shape mismatch throws") {
    Mlp mlp("m", {4, 2}, {Activation::relu});
    CHECK_THROWS_AS(mlp.apply(tape, tape.constant(Tensor::Ones(1, 3))), ShapeError);
  }
}

TEST_CASE("lstm_apply") {
  Rng rng(7);
  SUBCASE("all-zero parameters give the zero hidden state") {
    Lstm lstm("lstm", 4, 5, 2);
    Tape tape;
    Var h = lstm.apply(tape, tape.constant(random_tensor(6, 4, rng)));
    CHECK(h.rows() == 1);
    CHECK(h.cols() == 5);
    CHECK(h.value().isZero());
  }
  SUBCASE("empty input gives the zero vector") {
    Lstm lstm("lstm", 4, 3, 2);
    for (Parameter* p : lstm.parameters()) xavier_uniform(p->value, rng);
    Tape tape;
    Var h = lstm.apply(tape, tape.constant(Tensor::Zero(0, 4)));
    CHECK(h.value().isZero());
    CHECK(h.cols() == 3);
  }
  SUBCASE("input width mismatch throws") {
    Lstm lstm("lstm", 4, 3, 2);
    Tape tape;
    CHECK_THROWS_AS(lstm.apply(tape, tape.constant(Tensor::Zero(2, 5))), ShapeError);
  }
  SUBCASE("gradient matches central differences on a 3x4 input") {
    Lstm lstm("lstm", 4, 3, 2);
    for (Parameter* p : lstm.parameters()) xavier_uniform(p->value, rng);
    const Tensor weights = random_tensor(1, 3, rng);
    auto fn = [&](Tape& tape, const std::vector<Var>& in) {
      return ops::sum_all(ops::mul(lstm.apply(tape, in[0]), tape.constant(weights)));
    };
    auto report = grad_check(fn, {random_tensor(3, 4, rng)});
    CHECK(report.max_relative_error < 1e-3);
    auto preport = grad_check_parameters(
        [&](Tape& tape) {
          Var x = tape.constant(Tensor::Constant(3, 4, 0.3));
          return ops::sum_all(ops::mul(lstm.apply(tape, x), tape.constant(weights)));
        },
        lstm.parameters());
    CHECK(preport.max_relative_error < 1e-3);
  }
}

TEST_CASE("gcn_layer") {
  Rng rng(11);
  SUBCASE("no edges and identity weight is the identity map") {
    Tape tape;
    Tensor x = random_tensor(4, 3, rng);
    Var out = gcn_layer(tape.constant(x), tape.constant(Tensor::Zero(4, 4)),
                        tape.constant(Tensor::Identity(3, 3)));
    CHECK((out.value() - x).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("single node reduces to XW") {
    Tape tape;
    Tensor x = random_tensor(1, 3, rng);
    Tensor w = random_tensor(3, 2, rng);
    Var out = gcn_layer(tape.constant(x), tape.constant(Tensor::Zero(1, 1)), tape.constant(w));
    CHECK((out.value() - x * w).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("weighted 3-node graph matches the dense oracle") {
    for (int trial = 0; trial < 20; ++trial) {
      Tensor a = random_tensor(3, 3, rng).cwiseAbs();
      a.diagonal().setZero();
      Tensor x = random_tensor(3, 4, rng);
      Tensor w = random_tensor(4, 2, rng);
      Tape tape;
      Var out = gcn_layer(tape.constant(x), tape.constant(a), tape.constant(w));
      CHECK((out.value() - dense_gcn_oracle(x, a, w)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("non-square adjacency throws") {
    Tape tape;
    CHECK_THROWS_AS(ops::gcn_normalize(tape.constant(Tensor::Zero(2, 3))), ShapeError);
  }
  SUBCASE("gradient w.r.t. features, adjacency and weight") {
    Tensor a = random_tensor(3, 3, rng).cwiseAbs();
    a.diagonal().setZero();
    Rng wr(3);
    const Tensor outw = random_tensor(3, 2, wr);
    auto fn = [&](Tape& tape, const std::vector<Var>& in) {
      return ops::sum_all(ops::mul(gcn_layer(in[0], in[1], in[2]), tape.constant(outw)));
    };
    auto report = grad_check(fn, {random_tensor(3, 4, rng), a, random_tensor(4, 2, rng)});
    CHECK(report.max_relative_error < 1e-3);
  }
}

TEST_CASE("conv_scalar") {
  Rng rng(5);
  Tape tape;
  ConvScalar conv("conv", 6);
  Tensor x = random_tensor(1, 6, rng);
  CHECK(conv.apply(tape, tape.constant(x)).value()(0, 0) == 0.0);
  conv.kernel.value(2, 0) = 1.0;
  conv.bias.value(0, 0) = 0.25;
  Tape tape2;
  CHECK(conv.apply(tape2, tape2.constant(x)).value()(0, 0) == doctest::Approx(x(0, 2) + 0.25));
  Tape tape3;
  CHECK_THROWS_AS(conv.apply(tape3, tape3.constant(Tensor::Zero(1, 5))), ShapeError);

  xavier_uniform(conv.kernel.value, rng);
  auto report = grad_check([&](Tape& t, const std::vector<Var>& in) { return conv.apply(t, in[0]); }, {x});
  CHECK(report.max_relative_error < 1e-3);
  auto preport = grad_check_parameters(
      [&](Tape& t) { return conv.apply(t, t.constant(x)); }, {&conv.kernel, &conv.bias});
  CHECK(preport.max_relative_error < 1e-3);
}

TEST_CASE("softmax and cross entropy") {
  Tape tape;
  Tensor zero = Tensor::Zero(1, 2);
  Var p = ops::softmax_rows(tape.constant(zero));
  CHECK(p.value()(0, 0) == doctest::Approx(0.5));
  CHECK(p.value()(0, 1) == doctest::Approx(0.5));
  CHECK(ops::cross_entropy(p, 0).value()(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Tensor onehot(1, 3);
  onehot << 0.0, 1.0, 0.0;
  CHECK(ops::cross_entropy(tape.constant(onehot), 1).value()(0, 0) == 0.0);

  Tensor bad(1, 2);
  bad << 0.7, 0.7;
  CHECK_THROWS(ops::cross_entropy(tape.constant(bad), 0));
  CHECK_THROWS_AS(ops::cross_entropy(p, 2), std::out_of_range);

  SUBCASE("softmax is a distribution for large logits") {
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
      Tape t;
      Tensor x = random_tensor(1, 7, rng, 300.0);
      Var s = ops::softmax_rows(t.constant(x));
      CHECK(std::abs(s.value().sum() - 1.0) < 1e-12);
      CHECK(s.value().minCoeff() >= 0.0);
      CHECK(s.value().maxCoeff() <= 1.0);
    }
  }
}

TEST_CASE("adam_step") {
  AdamConfig cfg;
  cfg.lr = 1e-3;
  cfg.weight_decay = 0.0;
  SUBCASE("first step moves by about lr against the gradient") {
    Parameter p("p", Tensor::Constant(1, 1, 1.0));
    p.grad(0, 0) = 2.0;
    Adam adam(cfg);
    adam.step({&p});
    CHECK(p.value(0, 0) == doctest::Approx(0.999).epsilon(1e-9));
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    Parameter p("p", Tensor::Constant(2, 2, 0.3));
    Adam adam(cfg);
    adam.step({&p});
    CHECK(p.value.isApprox(Tensor::Constant(2, 2, 0.3)));
  }
  SUBCASE("decoupled weight decay shrinks before the update") {
    AdamConfig wd = cfg;
    wd.weight_decay = 0.5;
    Parameter p("p", Tensor::Constant(1, 1, 2.0));
    Adam adam(wd);
    adam.step({&p});
    CHECK(p.value(0, 0) == doctest::Approx(2.0 * (1.0 - 1e-3 * 0.5)));
  }
  SUBCASE("identical inputs give identical trajectories") {
    Parameter a("a", Tensor::Constant(1, 3, 0.1));
    Parameter b("b", Tensor::Constant(1, 3, 0.1));
    Adam oa(cfg), ob(cfg);
    Rng rng(9);
    for (int s = 0; s < 25; ++s) {
      Tensor g = random_tensor(1, 3, rng);
      a.grad = g;
      b.grad = g;
      oa.step({&a});
      ob.step({&b});
    }
    CHECK(a.value == b.value);
  }
  SUBCASE("non-finite gradient is rejected") {
    Parameter p("p", Tensor::Constant(1, 1, 1.0));
    p.grad(0, 0) = std::nan("");
    Adam adam(cfg);
    CHECK_THROWS_AS(adam.step({&p}), NonFiniteError);
    CHECK(p.value(0, 0) == 1.0);
  }
}

TEST_CASE("dropout") {
  Rng rng(123);
  Tape tape;
  Tensor ones = Tensor::Ones(1, 10000);
  Var x = tape.constant(ones);
  CHECK(dropout(x, 0.0, &rng, true).value() == ones);
  CHECK(dropout(x, 0.7, &rng, false).value() == ones);
  const double mean = dropout(x, 0.5, &rng, true).value().mean();
  CHECK(mean > 0.95);
  CHECK(mean < 1.05);
  CHECK_THROWS(dropout(x, 1.0, &rng, true));
}

TEST_CASE("grad_check harness") {
  Rng rng(17);
  SUBCASE("linear function matches to machine precision") {
    const Tensor w = random_tensor(3, 2, rng);
    auto report = grad_check(
        [&](Tape& t, const std::vector<Var>& in) { return ops::sum_all(ops::matmul(in[0], t.constant(w))); },
        {random_tensor(4, 3, rng)});
    CHECK(report.max_absolute_error < 1e-9);
  }
  SUBCASE("corrupted gradient is reported") {
    auto doubled_square = [](Var a) {
      Tensor out = a.value().cwiseProduct(a.value());
      return a.tape->record(std::move(out), {a.id}, [ai = a.id](Tape& t, int self) {
        // Deliberately wrong: true derivative is 2x.
        t.grad_ref(ai) += t.upstream(self).cwiseProduct(t.value(ai)) * 3.0;
      });
    };
    auto report = grad_check(
        [&](Tape&, const std::vector<Var>& in) { return ops::sum_all(doubled_square(in[0])); },
        {random_tensor(2, 2, rng)});
    CHECK_FALSE(report.passed(1e-3));
    CHECK(report.max_relative_error > 0.3);
  }
}

TEST_CASE("every differentiable op passes grad_check on random small shapes") {
  Rng rng(2024);
  std::uniform_int_distribution<int> ext(1, 8);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index r = ext(rng), c = ext(rng), k = ext(rng);
    Rng wrng(trial);
    auto check = [&](const char* name, const InputFunction& fn, const std::vector<Tensor>& in) {
      auto report = grad_check(fn, in);
      INFO(name << " worst " << report.worst_entry);
      CHECK(report.max_relative_error < 1e-3);
    };
    auto reduce = [&](Tape& t, Var v) {
      Rng local(trial * 31 + 1);
      return weighted_sum(t, v, local);
    };
    check("matmul", [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::matmul(in[0], in[1])); },
          {random_tensor(r, c, rng), random_tensor(c, k, rng)});
    check("add", [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::add(in[0], in[1])); },
          {random_tensor(r, c, rng), random_tensor(r, c, rng)});
    check("add_row", [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::add_row(in[0], in[1])); },
          {random_tensor(r, c, rng), random_tensor(1, c, rng)});
    check("sub", [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::sub(in[0], in[1])); },
          {random_tensor(r, c, rng), random_tensor(r, c, rng)});
    check("mul", [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::mul(in[0], in[1])); },
          {random_tensor(r, c, rng), random_tensor(r, c, rng)});
    check("scale", [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::scale(in[0], -1.7)); },
          {random_tensor(r, c, rng)});
    check("transpose", [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::transpose(in[0])); },
          {random_tensor(r, c, rng)});
    check("relu", [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::relu(in[0])); },
          {random_tensor(r, c, rng)});
    check("sigmoid", [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::sigmoid(in[0])); },
          {random_tensor(r, c, rng, 3.0)});
    check("tanh", [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::tanh(in[0])); },
          {random_tensor(r, c, rng, 2.0)});
    check("softmax_rows", [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::softmax_rows(in[0])); },
          {random_tensor(r, c, rng, 2.0)});
    check("normalize_rows",
          [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::normalize_rows(in[0])); },
          {(random_tensor(r, c, rng).cwiseAbs().array() + 0.5).matrix()});
    check("cross_entropy",
          [&](Tape&, const std::vector<Var>& in) {
            return ops::cross_entropy(ops::softmax_rows(in[0]), static_cast<int>(c - 1));
          },
          {random_tensor(1, c, rng)});
    check("concat_cols",
          [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::concat_cols({in[0], in[1]})); },
          {random_tensor(r, c, rng), random_tensor(r, k, rng)});
    check("concat_rows",
          [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::concat_rows({in[0], in[1]})); },
          {random_tensor(r, c, rng), random_tensor(k, c, rng)});
    check("slice_cols",
          [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::slice_cols(in[0], c - 1, 1)); },
          {random_tensor(r, c, rng)});
    check("slice_rows",
          [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::slice_rows(in[0], 0, r)); },
          {random_tensor(r, c, rng)});
    check("gather_rows",
          [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::gather_rows(in[0], {r - 1, 0, r - 1})); },
          {random_tensor(r, c, rng)});
    check("mean_rows", [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::mean_rows(in[0])); },
          {random_tensor(r, c, rng)});
    std::vector<Eigen::Index> sr, sc;
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j)
        if ((i + j) % 2 == 0) {
          sr.push_back(i);
          sc.push_back(j);
        }
    check("scatter",
          [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::scatter(in[0], sr, sc, r, c)); },
          {random_tensor(static_cast<Eigen::Index>(sr.size()), 1, rng)});
    Tensor adj = random_tensor(r, r, rng).cwiseAbs();
    adj.diagonal().setZero();
    check("gcn_normalize", [&](Tape& t, const std::vector<Var>& in) { return reduce(t, ops::gcn_normalize(in[0])); },
          {adj});
  }
}
