#include <doctest.h>

#include "support.hpp"
#include "tsdf/fit.hpp"
#include "tsdf/metrics.hpp"
#include "tsdf/synth.hpp"

using namespace tsdf;
using namespace tsdf::test;

namespace {

RenderBundle bundle_of(int w, int h, double rgb, double albedo, double mask, double depth) {
  RenderBundle b = RenderBundle::zeros(w, h);
  b.rgb.setConstant(rgb);
  b.albedo.setConstant(albedo);
  b.mask.setConstant(mask);
  b.depth.setConstant(depth);
  return b;
}

std::vector<View> sphere_views(int size) {
  SceneSpec spec = sphere_scene();
  spec.rig.width = spec.rig.height = size;
  std::vector<View> views;
  for (const Camera& c : orbit_cameras(spec)) views.push_back({c, render_gt(spec, c)});
  return views;
}

FitConfig tiny_config() {
  FitConfig c;
  c.stage1_iters = 6;
  c.stage2_iters = 2;
  c.patch = 4;
  c.n_coarse = c.n_fine = 6;
  c.field_resolution = 8;
  c.field_channels = 4;
  c.grid_resolution = 12;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("stage-1 loss: equal bundles give 0, white vs black gives 3") {
  const RenderBundle a = bundle_of(3, 2, 0.3, 0.6, 1.0, 2.0);
  CHECK(loss_stage1(a, a, 2.0) == 0.0);
  CHECK(loss_stage1(bundle_of(1, 1, 1, 1, 1, 0), bundle_of(1, 1, 0, 0, 0, 0), 0.0) == doctest::Approx(3.0));
}

TEST_CASE("stage-2 loss: hand-computed 2x2 example and linearity in lambda_d") {
  RenderBundle pred = RenderBundle::zeros(2, 2), gt = RenderBundle::zeros(2, 2);
  pred.rgb.setConstant(0.5);
  gt.rgb = Mat{{1, 0.5, 0.5}, {0.5, 0.5, 0.5}, {0, 0.5, 0.5}, {0.5, 0.5, 0.5}};
  pred.albedo = gt.albedo = Mat::Constant(4, 3, 0.4);
  pred.mask = Mat{{1}, {1}, {0}, {0.5}};
  gt.mask = Mat{{1}, {1}, {1}, {0}};
  pred.depth = Mat{{2}, {3}, {0}, {1}};
  gt.depth = Mat{{2.5}, {3}, {1}, {0}};
  FitConfig cfg;
  cfg.lambda_vgg = 0.0;
  // rgb 0.5/12, mask 1.25/4, depth 0.5 * (0.5/2), reg 0.005 * 2
  CHECK(loss_stage2(pred, gt, 2.0, cfg) == doctest::Approx(0.5 / 12 + 0.3125 + 0.125 + 0.01).epsilon(1e-14));
  CHECK(loss_stage2(gt, gt, 0.0, cfg) == 0.0);
  const double base = loss_stage2(pred, gt, 0.0, cfg);
  cfg.lambda_d = 1.0;
  CHECK(loss_stage2(pred, gt, 0.0, cfg) - base == doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("taped stage-1 loss matches finite differences including the pyramid term") {
  const RenderBundle gt = [] {
    RenderBundle b = RenderBundle::zeros(5, 4);
    b.rgb = random_mat(20, 3, 1, 0, 1);
    b.albedo = random_mat(20, 3, 2, 0, 1);
    b.mask = random_mat(20, 1, 3, 0, 1);
    return b;
  }();
  Parameter rgb = make_param("rgb", random_mat(20, 3, 4, 0, 1)), alb = make_param("alb", random_mat(20, 3, 5, 0, 1)),
            mask = make_param("mask", random_mat(20, 1, 6, 0, 1));
  auto loss = [&](Tape& t) { return loss_stage1(t.parameter(rgb), t.parameter(alb), t.parameter(mask), gt, 2.0); };
  CHECK(check_gradients({&rgb, &alb, &mask}, loss).failed == 0);
  Tape t;
  RenderBundle pred = gt;
  pred.rgb = rgb.value;
  pred.albedo = alb.value;
  pred.mask = mask.value;
  CHECK(loss(t).item() == doctest::Approx(loss_stage1(pred, gt, 2.0)).epsilon(1e-14));
}

TEST_CASE("eikonal term: constant SDF gives 1, unit-slope SDF gives 0") {
  Model m = Model::init(8, 2, 0.1, 1);
  for (Parameter& w : m.heads.sdf.weights) w.value.setZero();
  for (Parameter& b : m.heads.sdf.biases) b.value.setZero();
  const Mat pts = random_mat(30, 3, 2, -0.9, 0.9);
  Tape t;
  CHECK(eikonal_loss(t, m, pts, 0.01).item() == doctest::Approx(1.0).epsilon(1e-5));
  // s = x + 40 through one chain of hidden units; softplus is the identity
  // there to ~1e-17.
  for (std::size_t l = 0; l < m.heads.sdf.weights.size(); ++l) {
    m.heads.sdf.weights[l].value.setZero();
    m.heads.sdf.biases[l].value.setZero();
  }
  const Eigen::Index px = m.heads.sdf.weights[0].value.rows() - 3;
  m.heads.sdf.weights[0].value(px, 0) = 1.0;
  m.heads.sdf.biases[0].value(0, 0) = 40.0;
  for (std::size_t l = 1; l + 1 < m.heads.sdf.weights.size(); ++l) m.heads.sdf.weights[l].value(0, 0) = 1.0;
  m.heads.sdf.weights.back().value(0, 0) = 1.0;
  Tape t2;
  CHECK(eikonal_loss(t2, m, pts, 0.01).item() < 1e-12);
}

TEST_CASE("eikonal term gradients match finite differences") {
  Model m = Model::init(6, 2, 0.3, 4);
  const Mat pts = random_mat(12, 3, 5, -0.9, 0.9);
  auto loss = [&](Tape& t) { return eikonal_loss(t, m, pts, 0.05); };
  const GradReport rep = check_gradients(m.parameters(), loss, 1e-4, 1e-8, 1e-5, 40);
  CHECK(rep.failed == 0);
  MESSAGE("checked " << rep.checked << ", kinks " << rep.kinks << ", worst " << rep.worst_rel);
}

TEST_CASE("config JSON: defaults, overrides, unknown keys and invariants") {
  const FitConfig d;
  CHECK(d.stage1_iters == 2000);
  CHECK(d.lr == 4e-4);
  CHECK(d.adam.beta2 == 0.95);
  CHECK(d.adam.weight_decay == 0.05);
  CHECK(d.lambda_vgg == 2.0);
  CHECK(d.lambda_d == 0.5);
  CHECK(d.lambda_reg == 0.005);
  CHECK(d.lambda_eik == 0.0);
  CHECK(d.res_start == 192.0);
  const FitConfig c = parse_fit_config(R"({"lr": 1e-3, "beta_mode": "linear", "precision": "f32"})");
  CHECK(c.lr == 1e-3);
  CHECK(c.beta_mode == BetaMode::linear);
  CHECK(c.f32);
  CHECK(c.stage2_iters == 500);
  const FitConfig back = parse_fit_config(fit_config_to_json(c));
  CHECK(fit_config_to_json(back) == fit_config_to_json(c));
  CHECK_THROWS_AS(parse_fit_config(R"({"lrr": 1})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_fit_config(R"({"lambda_d": -1})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_fit_config(R"({"lambda_eik": -0.1})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_fit_config(R"({"eik_points": 0})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_fit_config(R"({"patch": "big"})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_fit_config("[1, 2]"), std::invalid_argument);
}

TEST_CASE("single-pixel patch, no auxiliary terms: loss decreases over the first 10 steps") {
  std::vector<View> views = sphere_views(16);
  views.resize(4);
  FitConfig cfg = tiny_config();
  cfg.stage1_iters = 10;
  cfg.patch = 1;
  cfg.fg_prob = 1.0;
  cfg.lambda_vgg = cfg.lambda_d = cfg.lambda_reg = cfg.lambda_eik = 0.0;
  cfg.lr = 1e-2;
  // Always the same pixel: one view, central pixel.
  for (View& v : views) v = views[0];
  Model model = init_model(cfg);
  const Rect r{8, 8, 1, 1};
  RenderConfig rc;
  rc.n_coarse = rc.n_fine = 6;
  const double before = loss_stage1(render_view(model, model.beta.value(0), views[0].camera, rc, r), views[0].gt.crop(r), 0.0);
  FitLog log;
  fit_stage1(model, views, cfg, log);
  REQUIRE(log.rows.size() == 10);
  for (const LogRow& row : log.rows) CHECK(std::isfinite(row.loss));
  CHECK(log.rows.back().loss < log.rows.front().loss);
  CHECK(loss_stage1(render_view(model, model.beta.value(1), views[0].camera, rc, r), views[0].gt.crop(r), 0.0) < before);
}

TEST_CASE("fit logs follow the cosine schedule and runs are reproducible") {
  const std::vector<View> views = sphere_views(16);
  const FitConfig cfg = tiny_config();
  FitLog a, b;
  const Model ma = fit_scene(views, cfg, a);
  const Model mb = fit_scene(views, cfg, b);
  REQUIRE(a.rows.size() == 8);
  for (int i : {0, 2, 5}) CHECK(a.rows[i].lr == doctest::Approx(cosine_lr(cfg.lr, i, cfg.stage1_iters)).epsilon(1e-15));
  CHECK(a.rows[7].lr == cosine_lr(cfg.lr_stage2, 1, cfg.stage2_iters));
  CHECK(a.rows[7].stage == 2);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].loss == b.rows[i].loss);
    CHECK(a.rows[i].beta == b.rows[i].beta);
  }
  Model x = ma, y = mb;
  auto px = x.parameters(), py = y.parameters();
  for (std::size_t i = 0; i < px.size(); ++i) CHECK((px[i]->value.array() == py[i]->value.array()).all());
}

TEST_CASE("fit rejects too few views and aborts after 50 non-finite steps") {
  std::vector<View> views = sphere_views(16);
  FitConfig cfg = tiny_config();
  FitLog log;
  std::vector<View> three(views.begin(), views.begin() + 3);
  CHECK_THROWS_AS(fit_scene(three, cfg, log), std::invalid_argument);
  cfg.stage1_iters = 60;
  Model m = init_model(cfg);
  m.heads.color.biases.back().value(0, 0) = std::nan("");
  CHECK_THROWS_AS(fit_stage1(m, views, cfg, log), std::runtime_error);
  CHECK(log.rows.size() == 51);
  for (const LogRow& r : log.rows) CHECK(r.skipped);
}

TEST_CASE("f32 mode keeps parameters representable in single precision") {
  const std::vector<View> views = sphere_views(16);
  FitConfig cfg = tiny_config();
  cfg.f32 = true;
  cfg.stage2_iters = 0;
  FitLog log;
  Model m = fit_scene(views, cfg, log);
  for (Parameter* p : m.parameters())
    CHECK((p->value.array() == p->value.cast<float>().cast<double>().array()).all());
}

TEST_CASE("checkpoint round trip is exact for float-valued parameters") {
  Model m = Model::init(8, 4, 0.1, 5, BetaSchedule(BetaMode::adaptive, 0.1));
  round_to_float(m.parameters());
  m.beta.set_beta(0.0371);
  save_checkpoint("test_model.tsdf", m);
  Model back = load_checkpoint("test_model.tsdf");
  auto a = m.parameters(), b = back.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK((a[i]->value.array() == b[i]->value.array()).all());
  CHECK(back.beta.value(0.5) == m.beta.value(0.5));
  CHECK(back.beta.mode() == BetaMode::adaptive);
  save_field("test_field.tsdf", m.field);
  const TensorField f = load_field("test_field.tsdf");
  CHECK((f.mat[2].value.array() == m.field.mat[2].value.array()).all());
  CHECK_THROWS(load_checkpoint("does_not_exist.tsdf"));
}

TEST_CASE("evaluation scores compare a bundle with itself perfectly") {
  const std::vector<View> views = sphere_views(16);
  const ViewScores s = score(views[0].gt, views[0].gt);
  CHECK(s.psnr == 99.0);
  CHECK(s.ssim == doctest::Approx(1.0));
  CHECK(s.pproxy == 0.0);
  CHECK(s.depth_mae == 0.0);
}
