#include <doctest.h>

#include "support.hpp"
#include "tsdf/adam.hpp"
#include "tsdf/parallel.hpp"

using namespace tsdf;
using namespace tsdf::test;

TEST_CASE("product rule: d(xy) at (3, 2) is (2, 3)") {
  Parameter x = make_param("x", Mat::Constant(1, 1, 3.0)), y = make_param("y", Mat::Constant(1, 1, 2.0));
  Tape t;
  Var l = mul(t.parameter(x), t.parameter(y));
  t.backward(l);
  t.flush_param_grads();
  CHECK(x.grad(0, 0) == 2.0);
  CHECK(y.grad(0, 0) == 3.0);
}

TEST_CASE("d exp(x) at 0 is 1") {
  Parameter x = make_param("x", Mat::Zero(1, 1));
  Tape t;
  t.backward(exp(t.parameter(x)));
  t.flush_param_grads();
  CHECK(x.grad(0, 0) == 1.0);
}

TEST_CASE("unused parameters get exactly zero gradient") {
  Parameter x = make_param("x", Mat::Ones(2, 2)), unused = make_param("u", Mat::Ones(2, 2));
  unused.grad = Mat::Zero(2, 2);
  Tape t;
  t.backward(sum(square(t.parameter(x))));
  t.flush_param_grads();
  CHECK(unused.grad.isZero(0.0));
  CHECK(x.grad.isApprox(Mat::Constant(2, 2, 2.0)));
}

TEST_CASE("random composed graph of depth 20 over 50 leaves matches finite differences") {
  std::vector<Parameter> leaves;
  for (int i = 0; i < 50; ++i) leaves.push_back(make_param("leaf", random_mat(1, 3, 100 + i, 0.5, 1.5)));
  std::vector<Parameter*> ptrs;
  for (auto& p : leaves) ptrs.push_back(&p);

  auto build = [&](Tape& t) {
    std::mt19937_64 rng(42);
    std::vector<Var> pool;
    for (auto& p : leaves) pool.push_back(t.parameter(p));
    std::uniform_int_distribution<int> op(0, 9);
    for (int depth = 0; depth < 20; ++depth) {
      std::vector<Var> next;
      for (int k = 0; k < 8; ++k) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        Var a = pool[pick(rng)], b = pool[pick(rng)];
        switch (op(rng)) {
          case 0: next.push_back(add(a, b)); break;
          case 1: next.push_back(sub(a, b)); break;
          case 2: next.push_back(tanh(mul(a, b))); break;
          case 3: next.push_back(div(a, 1.0 + square(b))); break;
          case 4: next.push_back(exp(tanh(a))); break;
          case 5: next.push_back(sigmoid(a) * b); break;
          case 6: next.push_back(softplus(sub(a, b))); break;
          case 7: next.push_back(sqrt(1.0 + square(a))); break;
          case 8: next.push_back(log(1.0 + square(b))); break;
          default: next.push_back(minimum(a, b * 1.37)); break;
        }
      }
      pool.insert(pool.end(), next.begin(), next.end());
    }
    // Fold every node in so every leaf contributes.
    Var total = t.constant(0.0);
    for (Var v : pool) total = add(total, mean(tanh(v)));
    return total;
  };
  const GradReport rep = check_gradients(ptrs, build);
  CHECK(rep.checked == 150);
  CHECK(rep.failed == 0);
  MESSAGE("worst relative error " << rep.worst_rel);
}

TEST_CASE("matrix primitives match finite differences") {
  Parameter a = make_param("a", random_mat(4, 3, 1)), b = make_param("b", random_mat(3, 5, 2)),
            c = make_param("c", random_mat(1, 5, 3));
  Parameter table = make_param("table", random_mat(6, 2, 4)), plane = make_param("plane", random_mat(16, 2, 5));
  Parameter coord = make_param("coord", Mat{{0.3}, {2.7}, {4.2}});
  Parameter coords = make_param("coords", Mat{{0.4, 2.2}, {1.5, 0.7}, {2.9, 1.1}});
  SparseMat sp(2, 4);
  sp.insert(0, 1) = 0.5;
  sp.insert(1, 0) = -1.0;
  sp.insert(1, 3) = 2.0;
  sp.makeCompressed();
  auto build = [&](Tape& t) {
    Var va = t.parameter(a), vb = t.parameter(b), vc = t.parameter(c);
    Var lin = linear(va, vb, vc);                                // 4 x 5
    Var mm = matmul(va, vb);                                     // 4 x 5
    Var cat = concat_cols({lin, slice_cols(mm, 1, 2)});          // 4 x 7
    Var rows = concat_rows(std::vector<Var>{cat, reshape(cat, 4, 7)});
    Var g = gather_rows(rows, {0, 3, 3, 7});
    Var cs = exclusive_cumsum(tanh(g));
    Var gs = group_sum(cs, 2);                                   // 2 x 7
    Var s = spmm(sp, va);                                        // 2 x 3
    Var lg = lerp_gather(t.parameter(table), t.parameter(coord));
    Var bg = bilerp_gather(t.parameter(plane), t.parameter(coords), 4);
    Var cl = clamp(va, -0.5, 0.5);
    return add(add(add(mean(square(gs)), sum(mul(s, s))), add(sum(rowwise_sum(lg)), sum(square(bg)))),
               add(sum(abs(cl)), mean(maximum(mm, neg(mm)))));
  };
  const GradReport rep = check_gradients({&a, &b, &c, &table, &plane, &coord, &coords}, build);
  CHECK(rep.failed == 0);
}

TEST_CASE("broadcasting binary ops") {
  Parameter m = make_param("m", random_mat(3, 4, 7)), row = make_param("row", random_mat(1, 4, 8)),
            col = make_param("col", random_mat(3, 1, 9, 1.0, 2.0)), s = make_param("s", Mat::Constant(1, 1, 1.3));
  auto build = [&](Tape& t) {
    Var vm = t.parameter(m);
    return sum(div(mul(add(vm, t.parameter(row)), t.parameter(s)), t.parameter(col)));
  };
  CHECK(check_gradients({&m, &row, &col, &s}, build).failed == 0);
}

TEST_CASE("explicit output seeds") {
  Parameter x = make_param("x", Mat{{1.0, 2.0}});
  Tape t;
  Var vx = t.parameter(x);
  Var outs[2] = {square(vx), vx * 3.0};
  const Mat seeds[2] = {Mat{{1.0, 1.0}}, Mat{{2.0, 0.0}}};
  t.backward(outs, seeds);
  t.flush_param_grads();
  CHECK(x.grad(0, 0) == doctest::Approx(2.0 + 6.0));
  CHECK(x.grad(0, 1) == doctest::Approx(4.0));
}

TEST_CASE("identical inputs give bit-identical gradients") {
  Parameter a = make_param("a", random_mat(20, 8, 11));
  Mat first;
  for (int rep = 0; rep < 2; ++rep) {
    a.zero_grad();
    Tape t;
    t.backward(mean(softplus(matmul(t.parameter(a), t.constant(random_mat(8, 3, 12))))));
    t.flush_param_grads();
    if (rep == 0) first = a.grad;
    else CHECK((first.array() == a.grad.array()).all());
  }
}

TEST_CASE("log of a non-positive value is flagged as non-finite") {
  Tape t;
  Var l = log(t.constant(Mat::Zero(1, 1)));
  CHECK_FALSE(std::isfinite(l.item()));
}

TEST_CASE("adam: zero gradient and zero weight decay leave parameters unchanged") {
  Parameter p = make_param("p", random_mat(3, 3, 1));
  const Mat before = p.value;
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Adam opt({&p}, cfg);
  opt.zero_grad();
  for (int i = 0; i < 5; ++i) CHECK(opt.step(0.1));
  CHECK((p.value.array() == before.array()).all());
}

TEST_CASE("adam: first step moves against the gradient sign") {
  Parameter p = make_param("p", Mat{{0.0, 0.0, 0.0}});
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Adam opt({&p}, cfg);
  p.grad = Mat{{2.0, -0.5, 1e-3}};
  opt.step(0.01);
  // Bias correction makes the first update exactly lr * sign(g) up to eps.
  CHECK(p.value(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p.value(0, 1) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(p.value(0, 2) == doctest::Approx(-0.01).epsilon(1e-4));
}

TEST_CASE("adam: 100 steps on (x-3)^2 from 0 at lr 0.1 reach 3") {
  Parameter x = make_param("x", Mat::Zero(1, 1));
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Adam opt({&x}, cfg);
  for (int i = 0; i < 100; ++i) {
    opt.zero_grad();
    Tape t;
    t.backward(square(t.parameter(x) - 3.0));
    t.flush_param_grads();
    opt.step(0.1);
  }
  CHECK(std::abs(x.value(0, 0) - 3.0) < 0.1);
}

TEST_CASE("adam: non-finite gradient skips the step") {
  Parameter p = make_param("p", Mat::Ones(1, 2));
  Adam opt({&p});
  p.grad = Mat{{1.0, std::nan("")}};
  CHECK_FALSE(opt.step(0.1));
  CHECK(p.value.isApprox(Mat::Ones(1, 2)));
  CHECK(opt.steps() == 0);
}

TEST_CASE("adam: decoupled weight decay skips decay-exempt parameters") {
  Parameter a = make_param("a", Mat::Ones(1, 1)), b = make_param("b", Mat::Ones(1, 1));
  b.decay = false;
  AdamConfig cfg;
  cfg.weight_decay = 0.5;
  Adam opt({&a, &b}, cfg);
  opt.zero_grad();
  opt.step(0.1);
  CHECK(a.value(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5));
  CHECK(b.value(0, 0) == 1.0);
}

TEST_CASE("cosine schedule closed form") {
  CHECK(cosine_lr(4e-4, 0, 100) == doctest::Approx(4e-4));
  CHECK(cosine_lr(4e-4, 50, 100) == doctest::Approx(2e-4));
  CHECK(cosine_lr(4e-4, 25, 100) == doctest::Approx(4e-4 * (1 + std::cos(M_PI / 4)) / 2));
  CHECK(cosine_lr(4e-4, 100, 100) == doctest::Approx(0.0));
}

TEST_CASE("parallel_for covers the range with deterministic chunks") {
  for (int threads : {1, 3}) {
    set_num_threads(threads);
    std::vector<int> hits(10, 0);
    parallel_for(10, [&](std::size_t b, std::size_t e, std::size_t) {
      for (std::size_t i = b; i < e; ++i) ++hits[i];
    });
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  }
  set_num_threads(1);
}
