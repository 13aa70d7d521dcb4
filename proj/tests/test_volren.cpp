#include <doctest.h>

#include "support.hpp"
#include "tsdf/density.hpp"
#include "tsdf/synth.hpp"
#include "tsdf/volren.hpp"

using namespace tsdf;
using namespace tsdf::test;

TEST_CASE("density spot values") {
  CHECK(std::abs(sdf_to_density(0.0, 0.1) - 5.0) <= 1e-12);
  CHECK(std::abs(sdf_to_density(0.1, 0.1) - 5.0 * std::exp(-1.0)) <= 1e-12);
  CHECK(sdf_to_density(-50.0, 0.1) == doctest::Approx(10.0).epsilon(1e-15));
  CHECK_THROWS_AS(sdf_to_density(0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(sdf_to_density(0.0, -1.0), std::invalid_argument);
}

TEST_CASE("density is continuous at 0 and strictly decreasing") {
  for (double beta : {0.1, 0.01, 1e-3}) {
    // The jump between the one-sided limits, each extrapolated to 0 from
    // +-1e-8 with its own slope. The raw difference sigma(-eps) - sigma(eps)
    // is dominated by the slope itself (eps / beta^2), not by any jump.
    const double eps = 1e-8;
    Parameter s = make_param("s", Mat{{-eps, eps}});
    Tape t;
    Var v = sdf_to_density(t.parameter(s), t.constant(beta));
    t.backward(sum(v));
    t.flush_param_grads();
    const double left = v.value()(0, 0) + eps * s.grad(0, 0);
    const double right = v.value()(0, 1) - eps * s.grad(0, 1);
    CHECK(std::abs(left - right) <= 1e-9 / beta);
    double prev = INFINITY;
    for (int i = 0; i < 1000; ++i) {
      const double s = -5 * beta + 10 * beta * i / 999.0;
      const double v = sdf_to_density(s, beta);
      CHECK(v < prev);
      CHECK(v >= 0.0);
      prev = v;
    }
  }
}

TEST_CASE("density derivatives in s and beta match finite differences") {
  Mat s_values(1, 9);
  s_values << -0.3, -0.1, -0.02, -1e-3, 1e-3, 0.02, 0.05, 0.1, 0.4;
  Parameter s = make_param("s", s_values), beta = make_param("beta", Mat::Constant(1, 1, 0.07));
  auto loss = [&](Tape& t) { return sum(sdf_to_density(t.parameter(s), t.parameter(beta))); };
  const GradReport rep = check_gradients({&s, &beta}, loss, 1e-6, 1e-10, 1e-7);
  CHECK(rep.failed == 0);
  const Mat m = sdf_to_density(s_values, 0.07);
  for (int i = 0; i < 9; ++i) CHECK(m(0, i) == sdf_to_density(s_values(0, i), 0.07));
}

TEST_CASE("linear schedule endpoints are exact") {
  for (double b1 : {0.015, 0.003, 0.001}) {
    BetaSchedule s(BetaMode::linear, 0.1, b1);
    CHECK(s.value(0.0) == 0.1);
    CHECK(s.value(1.0) == b1);
    CHECK(s.value(0.5) < 0.1);
    CHECK(s.value(0.5) > b1);
  }
  BetaSchedule f(BetaMode::fixed, 0.1, 0.001);
  for (double t : {0.0, 0.3, 1.0}) CHECK(f.value(t) == 0.1);
  CHECK(f.value(2.0) == 0.1);  // clamped with a warning
}

TEST_CASE("adaptive beta is learnable, positive and clamped") {
  BetaSchedule a(BetaMode::adaptive, 0.1);
  CHECK(a.learnable());
  CHECK_FALSE(a.log_beta.decay);
  CHECK(a.value(0.7) == doctest::Approx(0.1).epsilon(1e-15));
  a.log_beta.value(0, 0) = std::log(1e-7);
  a.clamp();
  CHECK(a.value(0.0) == doctest::Approx(BetaSchedule::kMinBeta));
  Tape t;
  Var b = a.var(t, 0.0);
  t.backward(b);
  t.flush_param_grads();
  CHECK(a.log_beta.grad(0, 0) == doctest::Approx(BetaSchedule::kMinBeta));
  CHECK(parse_beta_mode("linear") == BetaMode::linear);
  CHECK_THROWS_AS(parse_beta_mode("cubic"), std::invalid_argument);
  CHECK_THROWS_AS(BetaSchedule(BetaMode::fixed, -1.0), std::invalid_argument);
}

// ---------------------------------------------------------------------------

TEST_CASE("camera rays: principal point, symmetry, round trip") {
  const Camera cam = orbit_camera(30, 20, 2.5, 45, 64, 48);
  CHECK_NOTHROW(cam.validate());
  const Ray c = pixel_ray(cam, cam.cx - 0.5, cam.cy - 0.5);
  CHECK((c.dir - cam.rotation().row(2).transpose()).norm() < 1e-12);
  CHECK((cam.center() - c.origin).norm() < 1e-12);
  CHECK(cam.center().norm() == doctest::Approx(2.5));
  // Opposite corners mirror about the forward axis.
  const Ray a = pixel_ray(cam, 0, 0), b = pixel_ray(cam, cam.width - 1, cam.height - 1);
  const Eigen::Vector3d la = cam.rotation() * a.dir, lb = cam.rotation() * b.dir;
  CHECK(la.x() == doctest::Approx(-lb.x()));
  CHECK(la.y() == doctest::Approx(-lb.y()));
  CHECK(la.z() == doctest::Approx(lb.z()));
  for (int k = 0; k < 50; ++k) {
    const double px = (k * 7) % 64, py = (k * 13) % 48;
    const Ray r = pixel_ray(cam, px, py);
    CHECK(r.dir.norm() == doctest::Approx(1.0));
    const Eigen::Vector2d q = project(cam, r.origin + 1.7 * r.dir);
    CHECK(std::abs(q.x() - px) < 1e-6);
    CHECK(std::abs(q.y() - py) < 1e-6);
  }
  Camera bad = cam;
  bad.world_to_camera(0, 0) *= 1.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("camera file round trip is exact") {
  const std::vector<Camera> cams = orbit_cameras(sphere_scene());
  const std::string path = "test_cameras.txt";
  write_cameras(path, cams);
  const std::vector<Camera> back = read_cameras(path);
  REQUIRE(back.size() == cams.size());
  for (std::size_t i = 0; i < cams.size(); ++i) {
    CHECK((back[i].world_to_camera.array() == cams[i].world_to_camera.array()).all());
    CHECK(back[i].fx == cams[i].fx);
    CHECK(back[i].width == cams[i].width);
  }
}

TEST_CASE("sampler: one coarse sample per stratum") {
  const Ray ray{Eigen::Vector3d(0, 0, -3), Eigen::Vector3d(0, 0, 1)};
  for (bool perturb : {false, true}) {
    const RaySamples s = sample_ray(ray, 2.0, 4.0, 16, 0, perturb, 3, {});
    REQUIRE(s.t.size() == 16);
    for (int i = 0; i < 16; ++i) {
      CHECK(s.t[i] >= 2.0 + i * 0.125);
      CHECK(s.t[i] <= 2.0 + (i + 1) * 0.125);
    }
    CHECK(s.delta.back() == doctest::Approx(4.0 - s.t.back()));
  }
  CHECK_THROWS(sample_ray(ray, 2.0, 2.0, 16, 0, false, 0, {}));
}

TEST_CASE("sampler: zero density falls back to uniform fine samples") {
  const Ray ray{Eigen::Vector3d(0, 0, -3), Eigen::Vector3d(0, 0, 1)};
  auto empty = [](const Mat& p) { return Mat::Zero(p.rows(), 1).eval(); };
  const RaySamples s = sample_ray(ray, 0.0, 8.0, 8, 8, false, 0, empty);
  REQUIRE(s.t.size() == 16);
  // Deterministic quantiles of a uniform histogram coincide with the strata midpoints.
  for (int i = 0; i < 16; ++i) CHECK(s.t[i] == doctest::Approx(i / 2 + 0.5));
}

TEST_CASE("sampler: a concentrated histogram draws into its bin") {
  std::vector<double> edges{0, 1, 2, 3, 4, 5}, weights{0, 0, 1, 0, 0};
  long inside = 0, total = 0;
  for (int seed = 0; seed < 1000; ++seed) {
    std::mt19937_64 rng(seed);
    for (double v : importance_samples(edges, weights, 8, true, rng)) {
      ++total;
      inside += v >= 2.0 && v <= 3.0;
    }
  }
  CHECK(static_cast<double>(inside) / total >= 0.8);
}

TEST_CASE("ray_box slab test") {
  double n, f;
  CHECK(ray_box({Eigen::Vector3d(0, 0, -3), Eigen::Vector3d(0, 0, 1)}, Bounds{}, n, f));
  CHECK(n == doctest::Approx(2.0));
  CHECK(f == doctest::Approx(4.0));
  CHECK_FALSE(ray_box({Eigen::Vector3d(0, 2, -3), Eigen::Vector3d(0, 0, 1)}, Bounds{}, n, f));
  CHECK_FALSE(ray_box({Eigen::Vector3d(0, 0, 3), Eigen::Vector3d(0, 0, 1)}, Bounds{}, n, f));
}

namespace {

Composite composite_of(Tape& t, const Mat& sigma, const Mat& delta, const Mat& tt, const Mat& ca, const Mat& cr) {
  return composite(t.constant(sigma), delta, tt, t.constant(ca), t.constant(cr));
}

}  // namespace

TEST_CASE("composite: three samples match the hand quadrature") {
  Tape t;
  const Mat ca{{0.2, 0.4, 0.6}, {0.9, 0.1, 0.5}, {0.3, 0.3, 0.3}};
  const Mat cr{{1, 0.5, 0.25}, {0.5, 0.5, 0.5}, {0.8, 0.6, 0.4}};
  Composite c = composite_of(t, Mat{{1, 2, 3}}, Mat{{0.5, 0.25, 1}}, Mat{{1, 1.5, 1.75}}, ca, cr);
  CHECK(c.weights.value()(0, 0) == doctest::Approx(0.3934693402873666).epsilon(1e-12));
  CHECK(c.weights.value()(0, 1) == doctest::Approx(0.2386512185411911).epsilon(1e-12));
  CHECK(c.weights.value()(0, 2) == doctest::Approx(0.34956380228270817).epsilon(1e-12));
  CHECK(c.mask.item() == doctest::Approx(0.9816843611112658).epsilon(1e-12));
  const Mat rgb{{0.26998222894885926, 0.15354791339542034, 0.16063086195232773}};
  const Mat alb{{0.39834910542935775, 0.2861219986538782, 0.46027635412782797}};
  CHECK((c.rgb.value() - rgb).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((c.albedo.value() - alb).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(c.depth.item() == doctest::Approx(1.3886162152474049).epsilon(1e-12));
}

TEST_CASE("composite: empty space and an opaque sample") {
  Tape t;
  const Mat ca = random_mat(4, 3, 1, 0, 1), cr = random_mat(4, 3, 2, 0, 1);
  Composite e = composite_of(t, Mat::Zero(1, 4), Mat::Constant(1, 4, 0.1), Mat{{1, 1.1, 1.2, 1.3}}, ca, cr);
  CHECK(e.mask.item() == 0.0);
  CHECK(e.rgb.value().isZero(0.0));
  CHECK(e.albedo.value().isZero(0.0));
  Composite o = composite_of(t, Mat{{1e6}}, Mat{{1.0}}, Mat{{2.5}}, ca.topRows(1), cr.topRows(1));
  CHECK(o.mask.item() == 1.0);
  CHECK(o.rgb.value().isApprox(ca.topRows(1).cwiseProduct(cr.topRows(1))));
  CHECK(o.depth.item() == doctest::Approx(2.5));
}

TEST_CASE("composite: weights conserve transmittance; more density never lowers the mask") {
  const Mat sigma = random_mat(50, 12, 3, 0, 20), delta = random_mat(50, 12, 4, 0.01, 0.2);
  const Mat tt = random_mat(50, 12, 5, 0, 1), ca = random_mat(600, 3, 6, 0, 1), cr = random_mat(600, 3, 7, 0, 1);
  Tape t;
  Composite a = composite_of(t, sigma, delta, tt, ca, cr);
  Composite b = composite_of(t, (sigma.array() + 0.5).matrix(), delta, tt, ca, cr);
  CHECK(a.weights.value().minCoeff() >= 0.0);
  CHECK(a.weights.value().maxCoeff() <= 1.0);
  CHECK(a.weights.value().rowwise().sum().maxCoeff() <= 1.0 + 1e-12);
  CHECK(((b.mask.value() - a.mask.value()).array() >= 0.0).all());
  CHECK(((a.rgb.value() - a.albedo.value()).array() <= 1e-12).all());
}

namespace {

Model small_model(std::uint64_t seed) {
  Model m = Model::init(8, 4, 0.5, seed, BetaSchedule(BetaMode::adaptive, 0.1));
  return m;
}

}  // namespace

TEST_CASE("render_rays on a 3-sample ray matches finite differences") {
  Model m = small_model(3);
  const Ray ray{Eigen::Vector3d(0.1, -0.2, -2.0), Eigen::Vector3d(0.05, 0.1, 1.0).normalized()};
  RaySamples s;
  s.t = {1.6, 2.0, 2.3};
  s.delta = {0.4, 0.3, 0.5};
  const Mat wr = random_mat(1, 3, 1), wa = random_mat(1, 3, 2);
  auto loss = [&](Tape& t) {
    Composite c = render_rays(t, m, m.beta.var(t, 0.0), {ray}, {s});
    Var l = add(sum(mul(c.rgb, t.constant(wr))), sum(mul(c.albedo, t.constant(wa))));
    return add(l, add(square(c.mask), c.depth));
  };
  const GradReport rep = check_gradients(m.parameters(), loss, 1e-4, 1e-8, 1e-5);
  CHECK(rep.failed == 0);
  MESSAGE("checked " << rep.checked << ", worst relative error " << rep.worst_rel);
}

TEST_CASE("render_view: empty field gives a zero bundle") {
  Model m = small_model(1);
  m.heads.sdf.biases.back().value.setConstant(100.0);
  const Camera cam = orbit_camera(0, 0, 2.7, 40, 12, 10);
  RenderConfig cfg;
  cfg.n_coarse = cfg.n_fine = 8;
  const RenderBundle b = render_view(m, 0.1, cam, cfg);
  CHECK(b.width == 12);
  CHECK(b.rgb.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(b.mask.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(b.depth.isZero(0.0));
}

TEST_CASE("render_view: a patch equals the crop of the full view") {
  Model m = small_model(2);
  m.heads.sdf.biases.back().value.setConstant(-0.1);
  const Camera cam = orbit_camera(20, 10, 2.7, 40, 16, 12);
  for (bool perturb : {false, true}) {
    RenderConfig cfg;
    cfg.n_coarse = cfg.n_fine = 8;
    cfg.perturb = perturb;
    cfg.seed = 9;
    const RenderBundle full = render_view(m, 0.05, cam, cfg);
    const Rect r{3, 2, 7, 5};
    const RenderBundle patch = render_view(m, 0.05, cam, cfg, r);
    const RenderBundle crop = full.crop(r);
    CHECK((patch.rgb.array() == crop.rgb.array()).all());
    CHECK((patch.mask.array() == crop.mask.array()).all());
    CHECK((patch.depth.array() == crop.depth.array()).all());
  }
  CHECK_THROWS(render_view(m, 0.05, cam, RenderConfig{}, Rect{10, 0, 7, 5}));
}

TEST_CASE("PatchRender forward agrees with render_view and its gradients match finite differences") {
  Model m = small_model(4);
  const Camera cam = orbit_camera(10, 15, 2.7, 40, 6, 6);
  RenderConfig cfg;
  cfg.n_coarse = 6;
  cfg.n_fine = 0;
  const Rect r{2, 2, 2, 2};
  {
    PatchRender pr(m, cam, r, cfg, 0.0);
    const RenderBundle ref = render_view(m, m.beta.value(0.0), cam, cfg, r);
    CHECK((pr.bundle().rgb - ref.rgb).cwiseAbs().maxCoeff() < 1e-12);
  }
  const Mat g_rgb = random_mat(4, 3, 1), g_alb = random_mat(4, 3, 2), g_mask = random_mat(4, 1, 3);
  // The tape below only mirrors the loss value for the checker; gradients
  // come from PatchRender::backward.
  auto loss = [&](Tape& t) {
    PatchRender pr(m, cam, r, cfg, 0.0);
    const RenderBundle& b = pr.bundle();
    return t.constant(b.rgb.cwiseProduct(g_rgb).sum() + b.albedo.cwiseProduct(g_alb).sum() +
                      b.mask.cwiseProduct(g_mask).sum());
  };
  struct Backward {
    Model& m;
    const Camera& cam;
    Rect r;
    RenderConfig cfg;
    void operator()(const Mat& a, const Mat& b, const Mat& c) {
      PatchRender pr(m, cam, r, cfg, 0.0);
      pr.backward(a, b, c, Mat::Zero(4, 1));
    }
  };
  const GradReport rep = check_gradients_external(
      m.parameters(), loss, [&] { Backward{m, cam, r, cfg}(g_rgb, g_alb, g_mask); }, 1e-4, 1e-8, 1e-5, 40);
  CHECK(rep.failed == 0);
  CHECK(rep.checked > 100);
  MESSAGE("checked " << rep.checked << ", kinks " << rep.kinks);
}
