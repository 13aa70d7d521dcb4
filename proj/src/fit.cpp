#include "tsdf/fit.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <stdexcept>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "tsdf/meshren.hpp"
#include "tsdf/metrics.hpp"

namespace tsdf {

using nlohmann::json;

void FitConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (stage1_iters < 0 || stage2_iters < 0) fail("iteration counts must be >= 0");
  if (!(lr >= 0.0) || !(lr_stage2 >= 0.0) || !(field_lr_scale >= 0.0) || !(beta_lr_scale >= 0.0)) fail("learning rates must be >= 0");
  if (!(lambda_vgg >= 0.0 && lambda_d >= 0.0 && lambda_reg >= 0.0 && lambda_eik >= 0.0))
    fail("loss weights must be >= 0");
  if (eik_points < 1) fail("eik_points must be >= 1");
  if (patch < 1) fail("patch must be >= 1");
  if (!(res_start > 0.0 && res_end > 0.0 && res_start <= res_end)) fail("need 0 < res_start <= res_end");
  if (!(fg_prob >= 0.0 && fg_prob <= 1.0)) fail("fg_prob must be in [0, 1]");
  if (n_coarse < 1 || n_fine < 0) fail("sample counts must be n_coarse >= 1, n_fine >= 0");
  if (grid_resolution < 2 || field_resolution < 2 || field_channels < 1) fail("resolutions must be >= 2, channels >= 1");
  if (!(field_init_scale >= 0.0)) fail("field_init_scale must be >= 0");
  if (!(beta0 > 0.0 && beta1 > 0.0)) fail("beta0 and beta1 must be positive");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
}

FitConfig parse_fit_config(const std::string& text, FitConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  static const std::set<std::string> known = {
      "stage1_iters", "stage2_iters", "lr",          "lr_stage2",       "field_lr_scale",   "beta_lr_scale", "adam_beta1",
      "adam_beta2",   "weight_decay", "lambda_vgg",  "lambda_d",        "lambda_reg",       "lambda_eik", "eik_points", "patch",
      "res_start",    "res_end",      "fg_prob",     "n_coarse",        "n_fine",           "grid_resolution",
      "field_resolution", "field_channels", "field_init_scale", "beta_mode", "beta0",       "beta1",
      "seed",         "precision",    "checkpoint_every"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw std::invalid_argument("config: unknown key '" + it.key() + "'");
  try {
    c.stage1_iters = j.value("stage1_iters", c.stage1_iters);
    c.stage2_iters = j.value("stage2_iters", c.stage2_iters);
    c.lr = j.value("lr", c.lr);
    c.lr_stage2 = j.value("lr_stage2", c.lr_stage2);
    c.field_lr_scale = j.value("field_lr_scale", c.field_lr_scale);
    c.beta_lr_scale = j.value("beta_lr_scale", c.beta_lr_scale);
    c.adam.beta1 = j.value("adam_beta1", c.adam.beta1);
    c.adam.beta2 = j.value("adam_beta2", c.adam.beta2);
    c.adam.weight_decay = j.value("weight_decay", c.adam.weight_decay);
    c.lambda_vgg = j.value("lambda_vgg", c.lambda_vgg);
    c.lambda_d = j.value("lambda_d", c.lambda_d);
    c.lambda_reg = j.value("lambda_reg", c.lambda_reg);
    c.lambda_eik = j.value("lambda_eik", c.lambda_eik);
    c.eik_points = j.value("eik_points", c.eik_points);
    c.patch = j.value("patch", c.patch);
    c.res_start = j.value("res_start", c.res_start);
    c.res_end = j.value("res_end", c.res_end);
    c.fg_prob = j.value("fg_prob", c.fg_prob);
    c.n_coarse = j.value("n_coarse", c.n_coarse);
    c.n_fine = j.value("n_fine", c.n_fine);
    c.grid_resolution = j.value("grid_resolution", c.grid_resolution);
    c.field_resolution = j.value("field_resolution", c.field_resolution);
    c.field_channels = j.value("field_channels", c.field_channels);
    c.field_init_scale = j.value("field_init_scale", c.field_init_scale);
    if (j.contains("beta_mode")) c.beta_mode = parse_beta_mode(j["beta_mode"].get<std::string>());
    c.beta0 = j.value("beta0", c.beta0);
    c.beta1 = j.value("beta1", c.beta1);
    c.seed = j.value("seed", c.seed);
    if (j.contains("precision")) {
      const std::string p = j["precision"].get<std::string>();
      if (p != "f32" && p != "f64") throw std::invalid_argument("config: precision must be f32 or f64");
      c.f32 = p == "f32";
    }
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string fit_config_to_json(const FitConfig& c) {
  json j = {{"stage1_iters", c.stage1_iters},
            {"stage2_iters", c.stage2_iters},
            {"lr", c.lr},
            {"lr_stage2", c.lr_stage2},
            {"field_lr_scale", c.field_lr_scale},
            {"beta_lr_scale", c.beta_lr_scale},
            {"adam_beta1", c.adam.beta1},
            {"adam_beta2", c.adam.beta2},
            {"weight_decay", c.adam.weight_decay},
            {"lambda_vgg", c.lambda_vgg},
            {"lambda_d", c.lambda_d},
            {"lambda_reg", c.lambda_reg},
            {"lambda_eik", c.lambda_eik},
            {"eik_points", c.eik_points},
            {"patch", c.patch},
            {"res_start", c.res_start},
            {"res_end", c.res_end},
            {"fg_prob", c.fg_prob},
            {"n_coarse", c.n_coarse},
            {"n_fine", c.n_fine},
            {"grid_resolution", c.grid_resolution},
            {"field_resolution", c.field_resolution},
            {"field_channels", c.field_channels},
            {"field_init_scale", c.field_init_scale},
            {"beta_mode", to_string(c.beta_mode)},
            {"beta0", c.beta0},
            {"beta1", c.beta1},
            {"seed", c.seed},
            {"precision", c.f32 ? "f32" : "f64"},
            {"checkpoint_every", c.checkpoint_every}};
  return j.dump(2);
}

double FitLog::final_loss(int stage, int window) const {
  double sum = 0.0;
  int n = 0;
  for (auto it = rows.rbegin(); it != rows.rend() && n < window; ++it)
    if (it->stage == stage && !it->skipped) {
      sum += it->loss;
      ++n;
    }
  return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

void FitLog::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(10) << "stage,iter,loss,eikonal,beta,psnr,lr,skipped\n";
  for (const LogRow& r : rows)
    out << r.stage << ',' << r.iter << ',' << r.loss << ',' << r.eikonal << ',' << r.beta << ',' << r.psnr << ','
        << r.lr << ',' << (r.skipped ? 1 : 0) << '\n';
}

void FitLog::write_beta_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(10) << "step,beta,loss\n";
  for (const LogRow& r : rows)
    if (r.stage == 1) out << r.iter << ',' << r.beta << ',' << r.loss << '\n';
}

namespace {

const std::vector<SparseMat>& cached_pyramid(int w, int h) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::vector<SparseMat>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find({w, h});
  if (it == cache.end()) it = cache.emplace(std::make_pair(w, h), pyramid_operators(w, h)).first;
  return it->second;
}

Var pproxy_var(Var pred, const Mat& gt, int w, int h) {
  Tape& t = pred.tape();
  Var diff = sub(pred, t.constant(gt));
  const auto& ops = cached_pyramid(w, h);
  Var total = t.constant(0.0);
  for (const SparseMat& op : ops) total = add(total, mean(abs(spmm(op, diff))));
  return total / static_cast<double>(ops.size());
}

Var mse_var(Var pred, const Mat& gt) { return mean(square(sub(pred, pred.tape().constant(gt)))); }

}  // namespace

Var loss_stage1(Var rgb, Var albedo, Var mask, const RenderBundle& gt, double lambda_vgg) {
  if (rgb.rows() != gt.pixels()) throw std::invalid_argument("loss: prediction and ground truth sizes differ");
  Var l = add(add(mse_var(rgb, gt.rgb), mse_var(albedo, gt.albedo)), mse_var(mask, gt.mask));
  if (lambda_vgg > 0.0) l = add(l, pproxy_var(rgb, gt.rgb, gt.width, gt.height) * lambda_vgg);
  return l;
}

double loss_stage1(const RenderBundle& pred, const RenderBundle& gt, double lambda_vgg) {
  Tape t;
  return loss_stage1(t.constant(pred.rgb), t.constant(pred.albedo), t.constant(pred.mask), gt, lambda_vgg).item();
}

namespace {

Mat both_mask(const Mat& pred_mask, const Mat& gt_mask) {
  return ((pred_mask.array() >= 0.5) && (gt_mask.array() >= 0.5)).cast<double>().matrix();
}

}  // namespace

Var loss_stage2(Var rgb, Var albedo, Var mask, Var depth, const RenderBundle& gt, Var reg, const FitConfig& cfg) {
  Tape& t = rgb.tape();
  Var l = loss_stage1(rgb, albedo, mask, gt, cfg.lambda_vgg);
  const Mat m = both_mask(mask.value(), gt.mask);
  const double count = m.sum();
  if (count > 0.0 && cfg.lambda_d > 0.0) {
    Var dl = sum(mul(abs(sub(depth, t.constant(gt.depth))), t.constant(m))) / count;
    l = add(l, dl * cfg.lambda_d);
  }
  if (cfg.lambda_reg > 0.0) l = add(l, reg * cfg.lambda_reg);
  return l;
}

double loss_stage2(const RenderBundle& pred, const RenderBundle& gt, double reg, const FitConfig& cfg) {
  Tape t;
  return loss_stage2(t.constant(pred.rgb), t.constant(pred.albedo), t.constant(pred.mask), t.constant(pred.depth), gt,
                     t.constant(reg), cfg)
      .item();
}

Var eikonal_loss(Tape& tape, Model& model, const Mat& points, double delta) {
  const Eigen::Index b = points.rows();
  Mat all(4 * b, 3);
  all.topRows(b) = points;
  for (int a = 0; a < 3; ++a) {
    all.middleRows((a + 1) * b, b) = points;
    all.middleRows((a + 1) * b, b).col(a).array() += delta;
  }
  Var p = tape.constant(all);
  Var s = decode_sdf(model.heads, head_input(model.field.query(tape, p), p));
  Var s0 = gather_rows(s, [&] {
    std::vector<int> idx(3 * b);
    for (Eigen::Index i = 0; i < 3 * b; ++i) idx[i] = static_cast<int>(i % b);
    return idx;
  }());
  std::vector<int> rest(3 * b);
  for (Eigen::Index i = 0; i < 3 * b; ++i) rest[i] = static_cast<int>(b + i);
  Var d = (gather_rows(s, rest) - s0) / delta;  // 3B x 1, axis-major
  Var g2 = group_sum(reshape(square(d), 3, b), 3);  // 1 x B
  Var norm = sqrt(reshape(g2, b, 1) + 1e-12);
  return mean(square(norm - 1.0));
}

Model init_model(const FitConfig& cfg) {
  cfg.validate();
  return Model::init(cfg.field_resolution, cfg.field_channels, cfg.field_init_scale, cfg.seed,
                     BetaSchedule(cfg.beta_mode, cfg.beta0, cfg.beta1));
}

namespace {

constexpr int kMaxConsecutiveSkips = 50;

void check_views(const std::vector<View>& views) {
  if (views.size() < 4) throw std::invalid_argument("fit: at least 4 views required");
  const int w = views.front().gt.width, h = views.front().gt.height;
  for (const View& v : views) {
    v.camera.validate();
    if (v.gt.width != w || v.gt.height != h || v.camera.width != w || v.camera.height != h)
      throw std::invalid_argument("fit: views must share one resolution matching their cameras");
  }
}

// Leaf gradient, or zeros when nothing reached it.
Mat grad_of(const Tape& t, Var v) {
  const Mat& g = t.grad(v);
  return g.size() ? g : Mat::Zero(v.rows(), v.cols());
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return pixel_seed(a, static_cast<int>(b & 0x7fffffff), static_cast<int>(b >> 31)); }

// Groups parameters by learning-rate multiplier (field factors vs the rest).
struct Optimizers {
  std::unique_ptr<Adam> field, heads, beta;
  double field_scale = 1.0, beta_scale = 1.0;

  Optimizers(Model& m, const AdamConfig& cfg, const FitConfig& fc, bool with_beta)
      : field_scale(fc.field_lr_scale), beta_scale(fc.beta_lr_scale) {
    field = std::make_unique<Adam>(m.field.parameters(), cfg);
    heads = std::make_unique<Adam>(m.heads.parameters(), cfg);
    std::vector<Parameter*> b;
    if (with_beta && m.beta.learnable()) b.push_back(&m.beta.log_beta);
    beta = std::make_unique<Adam>(b, cfg);
  }
  void zero_grad() {
    for (Adam* opt : {field.get(), heads.get(), beta.get()}) opt->zero_grad();
  }
  bool finite() const {
    for (const Adam* opt : {field.get(), heads.get(), beta.get()})
      for (const Parameter* p : opt->params())
        if (!p->grad.allFinite()) return false;
    return true;
  }
  void step(double lr) {
    field->step(lr * field_scale);
    heads->step(lr);
    beta->step(lr * beta_scale);
  }
};

Rect pick_patch(const RenderBundle& gt, int patch, double fg_prob, std::mt19937_64& rng) {
  const int pw = std::min(patch, gt.width), ph = std::min(patch, gt.height);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int cx, cy;
  std::vector<Eigen::Index> fg;
  if (u(rng) < fg_prob) {
    for (Eigen::Index i = 0; i < gt.pixels(); ++i)
      if (gt.mask(i, 0) >= 0.5) fg.push_back(i);
  }
  if (!fg.empty()) {
    const Eigen::Index p = fg[std::uniform_int_distribution<std::size_t>(0, fg.size() - 1)(rng)];
    cx = static_cast<int>(p % gt.width);
    cy = static_cast<int>(p / gt.width);
  } else {
    cx = std::uniform_int_distribution<int>(0, gt.width - 1)(rng);
    cy = std::uniform_int_distribution<int>(0, gt.height - 1)(rng);
  }
  Rect r;
  r.w = pw;
  r.h = ph;
  r.x = std::clamp(cx - pw / 2, 0, gt.width - pw);
  r.y = std::clamp(cy - ph / 2, 0, gt.height - ph);
  return r;
}

}  // namespace

void fit_stage1(Model& model, const std::vector<View>& views, const FitConfig& cfg, FitLog& log,
                const FitCallback& cb) {
  cfg.validate();
  check_views(views);
  if (cfg.stage1_iters == 0) return;
  Optimizers opt(model, cfg.adam, cfg, true);
  std::mt19937_64 rng(mix(cfg.seed, 1));
  std::map<std::tuple<std::size_t, int, int>, RenderBundle> gt_cache;
  const int native_w = views.front().gt.width, native_h = views.front().gt.height;
  const Bounds& bb = model.field.bounds();
  const double eik_delta = 0.5 * (bb.hi - bb.lo).minCoeff() / (model.field.resolution() - 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  int skips = 0;
  for (long it = 0; it < cfg.stage1_iters; ++it) {
    const double t = cfg.stage1_iters > 1 ? static_cast<double>(it) / (cfg.stage1_iters - 1) : 1.0;
    const double lr = cosine_lr(cfg.lr, it, cfg.stage1_iters);
    const std::size_t vi = std::uniform_int_distribution<std::size_t>(0, views.size() - 1)(rng);
    const double scale = (cfg.res_start + (cfg.res_end - cfg.res_start) * t) / cfg.res_end;
    const int w = std::max(1, static_cast<int>(std::lround(native_w * scale)));
    const int h = std::max(1, static_cast<int>(std::lround(native_h * scale)));
    auto key = std::make_tuple(vi, w, h);
    auto git = gt_cache.find(key);
    if (git == gt_cache.end()) git = gt_cache.emplace(key, views[vi].gt.resample(w, h)).first;
    const RenderBundle& gt_full = git->second;
    const Camera cam = views[vi].camera.resized(w, h);
    const Rect rect = pick_patch(gt_full, cfg.patch, cfg.fg_prob, rng);
    const RenderBundle gt = gt_full.crop(rect);

    RenderConfig rcfg;
    rcfg.n_coarse = cfg.n_coarse;
    rcfg.n_fine = cfg.n_fine;
    rcfg.perturb = true;
    rcfg.seed = mix(cfg.seed, static_cast<std::uint64_t>(it) + 2);

    LogRow row;
    row.stage = 1;
    row.iter = it;
    row.lr = lr;
    opt.zero_grad();
    row.beta = model.beta.value(t);  // the value this step renders with
    PatchRender pr(model, cam, rect, rcfg, t);
    Tape lt;
    Var vr = lt.variable(pr.bundle().rgb), va = lt.variable(pr.bundle().albedo), vm = lt.variable(pr.bundle().mask);
    Var loss = loss_stage1(vr, va, vm, gt, cfg.lambda_vgg);
    row.loss = loss.item();
    if (cfg.lambda_eik > 0.0) {
      // Points stay delta short of the upper faces so every difference sees the field.
      Mat pts(cfg.eik_points, 3);
      for (Eigen::Index i = 0; i < pts.rows(); ++i)
        for (int a = 0; a < 3; ++a) pts(i, a) = bb.lo[a] + u01(rng) * (bb.hi[a] - bb.lo[a] - eik_delta);
      Var eik = eikonal_loss(lt, model, pts, eik_delta);
      row.eikonal = eik.item();
      loss = loss + eik * cfg.lambda_eik;
    }
    row.psnr = psnr(pr.bundle().rgb, gt.rgb);
    const bool finite = std::isfinite(loss.item());
    if (finite) {
      lt.backward(loss);
      lt.flush_param_grads();
      pr.backward(grad_of(lt, vr), grad_of(lt, va), grad_of(lt, vm), Mat::Zero(vr.rows(), 1));
    }
    row.skipped = !finite || !opt.finite();
    if (row.skipped) {
      if (++skips > kMaxConsecutiveSkips) {
        log.rows.push_back(row);
        throw std::runtime_error("fit: more than 50 consecutive non-finite steps at stage-1 iteration " + std::to_string(it));
      }
      spdlog::warn("stage 1 iteration {}: non-finite loss or gradient, step skipped", it);
    } else {
      skips = 0;
      opt.step(lr);
      model.beta.clamp();
      if (cfg.f32) round_to_float(model.parameters());
    }
    log.rows.push_back(row);
    if (cb) cb(row, model);
  }
}

void fit_stage2(Model& model, const std::vector<View>& views, const FitConfig& cfg, FitLog& log,
                const FitCallback& cb) {
  cfg.validate();
  check_views(views);
  if (cfg.stage2_iters == 0) return;
  Optimizers opt(model, cfg.adam, cfg, false);
  std::mt19937_64 rng(mix(cfg.seed, 3));
  int skips = 0;
  for (long it = 0; it < cfg.stage2_iters; ++it) {
    const double lr = cosine_lr(cfg.lr_stage2, it, cfg.stage2_iters);
    const View& view = views[std::uniform_int_distribution<std::size_t>(0, views.size() - 1)(rng)];
    LogRow row;
    row.stage = 2;
    row.iter = it;
    row.lr = lr;
    opt.zero_grad();
    Tape et;
    FlexSurface surf = flexicubes_extract(et, model, cfg.grid_resolution);
    MeshRender mr(surf.mesh, model, view.camera);
    Tape lt;
    Var vr = lt.variable(mr.bundle().rgb), va = lt.variable(mr.bundle().albedo);
    Var vm = lt.constant(mr.bundle().mask), vd = lt.variable(mr.bundle().depth);
    Var vreg = lt.variable(surf.reg.value());
    Var loss = loss_stage2(vr, va, vm, vd, view.gt, vreg, cfg);
    row.loss = loss.item();
    row.psnr = psnr(mr.bundle().rgb, view.gt.rgb);
    if (std::isfinite(row.loss)) {
      lt.backward(loss);
      const Mat gv = mr.backward(grad_of(lt, vr), grad_of(lt, va), grad_of(lt, vd));
      if (!surf.mesh.empty()) {
        const Var outs[2] = {surf.vertices, surf.reg};
        const Mat seeds[2] = {gv, grad_of(lt, vreg)};
        et.backward(outs, seeds);
        et.flush_param_grads();
      }
    }
    row.skipped = !std::isfinite(row.loss) || !opt.finite();
    if (row.skipped) {
      if (++skips > kMaxConsecutiveSkips) {
        row.beta = model.beta.value(1.0);
        log.rows.push_back(row);
        throw std::runtime_error("fit: more than 50 consecutive non-finite steps at stage-2 iteration " + std::to_string(it));
      }
      spdlog::warn("stage 2 iteration {}: non-finite loss or gradient, step skipped", it);
    } else {
      skips = 0;
      opt.step(lr);
      if (cfg.f32) round_to_float(model.parameters());
    }
    row.beta = model.beta.value(1.0);
    log.rows.push_back(row);
    if (cb) cb(row, model);
  }
}

Model fit_scene(const std::vector<View>& views, const FitConfig& cfg, FitLog& log, const FitCallback& cb) {
  Model model = init_model(cfg);
  fit_stage1(model, views, cfg, log, cb);
  fit_stage2(model, views, cfg, log, cb);
  return model;
}

std::vector<BetaRun> beta_experiment(const std::vector<View>& views, const FitConfig& base) {
  struct Setting {
    const char* name;
    BetaMode mode;
    double beta0;
  };
  const Setting settings[] = {{"fixed", BetaMode::fixed, 0.1},
                              {"linear", BetaMode::linear, 0.1},
                              {"adaptive", BetaMode::adaptive, 0.1},
                              {"fixed_small", BetaMode::fixed, 0.003}};
  std::vector<BetaRun> runs;
  for (const Setting& st : settings) {
    FitConfig cfg = base;
    cfg.stage2_iters = 0;
    cfg.beta_mode = st.mode;
    cfg.beta0 = st.beta0;
    BetaRun r;
    r.name = st.name;
    fit_scene(views, cfg, r.log);
    r.final_loss = r.log.final_loss(1, std::max(1, cfg.stage1_iters / 10));
    r.beta_start = r.log.rows.front().beta;
    r.beta_end = r.log.rows.back().beta;
    spdlog::info("beta experiment {}: final loss {:.5f}, beta {:.5f} -> {:.5f}", r.name, r.final_loss, r.beta_start,
                 r.beta_end);
    runs.push_back(std::move(r));
  }
  return runs;
}

ViewScores score(const RenderBundle& pred, const RenderBundle& gt) {
  ViewScores s;
  s.psnr = psnr(pred.rgb, gt.rgb);
  s.albedo_psnr = psnr(pred.albedo, gt.albedo);
  s.ssim = ssim(pred.rgb, gt.rgb, gt.width, gt.height);
  s.pproxy = pproxy(pred.rgb, gt.rgb, gt.width, gt.height);
  const Mat m = both_mask(pred.mask, gt.mask);
  const double n = m.sum();
  s.depth_mae = n > 0.0 ? (pred.depth - gt.depth).cwiseAbs().cwiseProduct(m).sum() / n : 0.0;
  return s;
}

namespace {

ViewScores mean_scores(const std::vector<ViewScores>& all) {
  ViewScores m;
  for (const ViewScores& s : all) {
    m.psnr += s.psnr;
    m.ssim += s.ssim;
    m.pproxy += s.pproxy;
    m.depth_mae += s.depth_mae;
    m.albedo_psnr += s.albedo_psnr;
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, all.size()));
  m.psnr /= n;
  m.ssim /= n;
  m.pproxy /= n;
  m.depth_mae /= n;
  m.albedo_psnr /= n;
  return m;
}

}  // namespace

ViewScores evaluate_volume(const Model& model, const std::vector<View>& views, const RenderConfig& rcfg, double beta) {
  std::vector<ViewScores> all;
  for (const View& v : views) all.push_back(score(render_view(model, beta, v.camera, rcfg), v.gt));
  return mean_scores(all);
}

ViewScores evaluate_mesh(const Model& model, const Mesh& mesh, const std::vector<View>& views) {
  std::vector<ViewScores> all;
  for (const View& v : views) all.push_back(score(raycast_view(mesh, model, v.camera), v.gt));
  return mean_scores(all);
}

}  // namespace tsdf
