#include <random>
#include <doctest.h>

#include "support.hpp"
#include "tsdf/field.hpp"
#include "tsdf/heads.hpp"

using namespace tsdf;
using namespace tsdf::test;

namespace {

Mat random_points(int n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) { return random_mat(n, 3, seed, lo, hi); }

}  // namespace

TEST_CASE("all-zero factors give a zero feature of width 3R") {
  TensorField f(64, 40);
  const Eigen::VectorXd q = f.query(Eigen::Vector3d(0.1, -0.3, 0.7));
  CHECK(q.size() == 120);
  CHECK(q.isZero(0.0));
}

TEST_CASE("all-one factors give all-one features") {
  TensorField f(8, 3);
  for (auto& p : f.vec) p.value.setOnes();
  for (auto& p : f.mat) p.value.setOnes();
  const Mat q = f.query_batch(random_points(20, 3));
  CHECK(q.cols() == 9);
  CHECK((q.array() - 1.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("separable block X equals an independent scalar evaluation") {
  TensorField f(2, 1);
  f.vec[0].value = Mat{{0.3}, {-1.2}};
  f.mat[0].value = Mat{{0.5}, {2.0}, {-0.7}, {1.1}};  // row = iy*2 + iz
  const Mat pts = random_points(5, 9);
  const Mat q = f.query_batch(pts);
  for (int k = 0; k < 5; ++k) {
    const double ux = (pts(k, 0) + 1) / 2, uy = (pts(k, 1) + 1) / 2, uz = (pts(k, 2) + 1) / 2;
    const double fx = (1 - ux) * 0.3 + ux * -1.2;
    const double g = (1 - uy) * (1 - uz) * 0.5 + (1 - uy) * uz * 2.0 + uy * (1 - uz) * -0.7 + uy * uz * 1.1;
    CHECK(q(k, 0) == doctest::Approx(fx * g).epsilon(1e-13));
    CHECK(q(k, 1) == 0.0);
    CHECK(q(k, 2) == 0.0);
  }
}

TEST_CASE("only one nonzero axis block fills only its slot") {
  TensorField f = TensorField::random(6, 2, 0.5, 3);
  f.vec[1].value.setZero();
  f.vec[2].value.setZero();
  const Mat q = f.query_batch(random_points(30, 4));
  CHECK(q.rightCols(4).isZero(0.0));
  CHECK(q.leftCols(2).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("lattice nodes reproduce stored factor products") {
  const int n = 5;
  TensorField f = TensorField::random(n, 2, 1.0, 5);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Eigen::Vector3d p(-1 + 2.0 * i / (n - 1), -1 + 2.0 * j / (n - 1), -1 + 2.0 * k / (n - 1));
        const Eigen::VectorXd q = f.query(p);
        for (int r = 0; r < 2; ++r) {
          CHECK(q(r) == doctest::Approx(f.vec[0].value(i, r) * f.mat[0].value(j * n + k, r)).epsilon(1e-12));
          CHECK(q(2 + r) == doctest::Approx(f.vec[1].value(j, r) * f.mat[1].value(k * n + i, r)).epsilon(1e-12));
          CHECK(q(4 + r) == doctest::Approx(f.vec[2].value(k, r) * f.mat[2].value(i * n + j, r)).epsilon(1e-12));
        }
      }
}

TEST_CASE("query_batch agrees with looped query exactly") {
  TensorField f = TensorField::random(16, 4, 0.3, 11);
  CHECK(f.query_batch(Mat(0, 3)).rows() == 0);
  const Mat pts = random_points(1000, 12, -1.2, 1.2);
  const Mat q = f.query_batch(pts);
  for (int k = 0; k < 1000; ++k) CHECK((q.row(k).transpose().array() == f.query(pts.row(k).transpose()).array()).all());
}

TEST_CASE("seeded init is reproducible, scale 0 is zero, parameter count") {
  TensorField a = TensorField::random(8, 4, 0.1, 7), b = TensorField::random(8, 4, 0.1, 7);
  for (int m = 0; m < 3; ++m) {
    CHECK((a.vec[m].value.array() == b.vec[m].value.array()).all());
    CHECK((a.mat[m].value.array() == b.mat[m].value.array()).all());
    CHECK(a.mat[m].value.cwiseAbs().maxCoeff() <= 0.1);
  }
  TensorField z = TensorField::random(8, 4, 0.0, 7);
  for (auto* p : z.parameters()) CHECK(p->value.isZero(0.0));
  CHECK(TensorField(64, 40).parameter_count() == 3u * 64 * 64 * 40 + 3u * 64 * 40);
  CHECK_THROWS_AS(TensorField::random(1, 4, 0.1, 0), std::invalid_argument);
  CHECK_THROWS_AS(TensorField::random(8, 0, 0.1, 0), std::invalid_argument);
}

TEST_CASE("non-finite points are rejected") {
  TensorField f(4, 1);
  CHECK_THROWS_AS(f.query(Eigen::Vector3d(std::nan(""), 0, 0)), std::invalid_argument);
  Mat pts = Mat::Zero(2, 3);
  pts(1, 2) = INFINITY;
  CHECK_THROWS_AS(f.query_batch(pts), std::invalid_argument);
}

TEST_CASE("small displacements change the feature little") {
  TensorField f = TensorField::random(16, 4, 1.0, 2);
  const Mat pts = random_points(50, 3, -0.99, 0.99);
  for (int k = 0; k < 50; ++k)
    for (int a = 0; a < 3; ++a) {
      Eigen::Vector3d p = pts.row(k).transpose();
      const Eigen::VectorXd q0 = f.query(p);
      p(a) += 1e-6;
      CHECK((f.query(p) - q0).cwiseAbs().maxCoeff() < 1e-3);
    }
}

TEST_CASE("outside points are clamped and carry no positional gradient") {
  TensorField f = TensorField::random(8, 2, 0.5, 1);
  CHECK((f.query(Eigen::Vector3d(3.0, 0.2, -0.1)).array() == f.query(Eigen::Vector3d(1.0, 0.2, -0.1)).array()).all());
  Parameter p = make_param("p", Mat{{1.5, 0.2, -0.1}});
  Tape t;
  t.backward(sum(f.query(t, t.parameter(p))));
  t.flush_param_grads();
  CHECK(p.grad(0, 0) == 0.0);
  CHECK(p.grad(0, 1) != 0.0);
}

TEST_CASE("taped query matches finite differences for factors and points") {
  TensorField f = TensorField::random(5, 2, 0.8, 21);
  Parameter pts = make_param("pts", random_points(6, 22, -0.95, 0.95));
  Mat weights = random_mat(6, 6, 23);
  std::vector<Parameter*> params = f.parameters();
  params.push_back(&pts);
  auto loss = [&](Tape& t) { return sum(mul(f.query(t, t.parameter(pts)), t.constant(weights))); };
  const GradReport rep = check_gradients(params, loss);
  CHECK(rep.failed == 0);
  CHECK(rep.checked == static_cast<long>(f.parameter_count() + 18));
}

// ---------------------------------------------------------------------------

TEST_CASE("zero network outputs zero; bias-only network outputs its bias") {
  MLP net("n", 5, 8, 3, 3, Activation::relu, 1);
  for (auto& w : net.weights) w.value.setZero();
  for (auto& b : net.biases) b.value.setZero();
  const Mat x = random_mat(4, 5, 2);
  CHECK(net.forward(x).isZero(0.0));
  net.biases.back().value = Mat{{0.5, -1.0, 2.0}};
  const Mat y = net.forward(x);
  for (int i = 0; i < 4; ++i) CHECK(y.row(i).isApprox(net.biases.back().value));
}

TEST_CASE("seeded MLP equals a layer-by-layer evaluation") {
  for (Activation act : {Activation::relu, Activation::softplus}) {
    MLP net("n", 7, 16, 2, 4, act, 9);
    const Mat x = random_mat(3, 7, 10);
    Mat h = x;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      h = h * net.weights[l].value;
      h.rowwise() += net.biases[l].value.row(0);
      if (l + 1 < net.weights.size())
        h = act == Activation::relu ? Mat(h.cwiseMax(0.0))
                                    : Mat(h.unaryExpr([](double v) { return std::log1p(std::exp(v)); }));
    }
    CHECK((net.forward(x) - h).cwiseAbs().maxCoeff() < 1e-12);
    Tape t;
    CHECK((net.forward(t, t.constant(x)).value() - h).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("fan-in init bounds and determinism") {
  MLP a("a", 10, 32, 4, 3, Activation::relu, 5), b("b", 10, 32, 4, 3, Activation::relu, 5);
  CHECK(a.weights[0].value.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(10.0));
  CHECK(a.weights[1].value.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(32.0));
  CHECK((a.weights[2].value.array() == b.weights[2].value.array()).all());
}

namespace {

void zero_heads(HeadSet& h) {
  for (auto* p : h.parameters()) p->value.setZero();
}

}  // namespace

TEST_CASE("color heads: zero network gives 0.5 albedo and shading; saturation approaches 1") {
  HeadSet h = HeadSet::init(6, 1);
  zero_heads(h);
  const Mat in = random_mat(5, 9, 3);
  ColorMats c = decode_color(h, in);
  CHECK((c.albedo.array() == 0.5).all());
  CHECK((c.shading.array() == 0.5).all());
  h.color.biases.back().value.setConstant(40.0);
  c = decode_color(h, in);
  CHECK((c.albedo.array() > 1.0 - 1e-12).all());
  CHECK((c.shading.array() > 1.0 - 1e-12).all());
}

TEST_CASE("compose_color is the elementwise product") {
  CHECK(compose_color(Mat{{1.0, 1.0, 1.0}}, Mat{{0.2, 0.4, 0.6}}).isApprox(Mat{{0.2, 0.4, 0.6}}));
  CHECK(compose_color(Mat{{0.3, 0.9, 0.1}}, Mat::Zero(1, 3)).isZero(0.0));
  CHECK(compose_color(Mat{{0.5, 0.2, 1.0}}, Mat{{0.5, 0.5, 0.5}}).isApprox(Mat{{0.25, 0.10, 0.50}}));
}

TEST_CASE("deformation: zero network gives 0 and saturation stays inside h/2") {
  HeadSet h = HeadSet::init(6, 2);
  const Mat in = random_mat(50, 9, 4);
  CHECK(decode_deform(h, in, 0.1).isZero(0.0));  // output layer starts at zero
  h.deform.biases.back().value.setConstant(1e3);
  CHECK((decode_deform(h, in, 0.1).array() < 0.05).all());
  h.deform.biases.back().value.setConstant(-1e3);
  CHECK((decode_deform(h, in, 0.1).array() > -0.05).all());
}

TEST_CASE("weights: zero network gives ln 2; always positive") {
  HeadSet h = HeadSet::init(6, 3);
  const Mat in = random_mat(4, 9, 5);
  const Mat w = decode_weights(h, in);
  CHECK(w.cols() == 8);
  CHECK((w.array() - std::log(2.0)).abs().maxCoeff() < 1e-15);
  HeadSet r = HeadSet::init(6, 4);
  for (auto& p : r.weight.weights) p.value = random_mat(p.value.rows(), p.value.cols(), 6, -3, 3);
  CHECK((decode_weights(r, random_mat(1000, 9, 7, -5, 5)).array() > 0.0).all());
}

TEST_CASE("head gradients match finite differences for parameters and inputs") {
  HeadSet h = HeadSet::init(3, 8);
  // Give the zero-initialised output layers some signal.
  h.deform.weights.back().value = random_mat(HeadSet::kHidden, 1, 1, -0.2, 0.2);
  h.weight.weights.back().value = random_mat(HeadSet::kHidden, 8, 2, -0.2, 0.2);
  Parameter in = make_param("in", random_mat(3, 6, 9));
  std::vector<Parameter*> params = h.parameters();
  params.push_back(&in);
  auto loss = [&](Tape& t) {
    Var x = t.parameter(in);
    ColorVars c = decode_color(h, x);
    Var a = sum(square(decode_sdf(h, x)));
    Var b = sum(compose_color(c.albedo, c.shading));
    Var d = sum(decode_deform(h, x, 0.2));
    Var w = mean(log(decode_weights(h, x)));
    return add(add(a, b), add(d, w));
  };
  const GradReport rep = check_gradients(params, loss, 1e-4, 1e-8, 1e-5, 200);
  CHECK(rep.failed == 0);
  MESSAGE("checked " << rep.checked << ", worst relative error " << rep.worst_rel);
}

TEST_CASE("sdf head starts as a blob centered in the box") {
  for (std::uint64_t seed : {0u, 1u, 7u}) {
    HeadSet h = HeadSet::init(6, seed);
    CHECK(h.input_dim() == 9);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Mat in = Mat::Zero(201, 9);
    in.block(0, 0, 201, 6) = random_mat(201, 6, 9);  // features are ignored at init
    for (int i = 1; i <= 100; ++i) {
      const Eigen::Vector3d d = Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized();
      in.block(i, 6, 1, 3) = (0.4 * d).transpose();
      in.block(100 + i, 6, 1, 3) = (0.95 * d).transpose();
    }
    const Mat s = decode_sdf(h, in);
    CHECK(s(0, 0) < 0.0);
    CHECK((s.col(0).segment(1, 100).array() < 0.0).all());
    CHECK((s.col(0).tail(100).array() > 0.0).all());
    for (int i = 1; i <= 200; ++i)
      CHECK(std::abs(s(i, 0) - (in.block(i, 6, 1, 3).norm() - HeadSet::kSdfBlobRadius)) < 0.1);
  }
}
