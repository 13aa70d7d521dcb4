// tsdf: synthesize scenes, fit them, extract meshes, render and evaluate.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "tsdf/checkpoint.hpp"
#include "tsdf/extract.hpp"
#include "tsdf/fit.hpp"
#include "tsdf/meshren.hpp"
#include "tsdf/metrics.hpp"
#include "tsdf/parallel.hpp"
#include "tsdf/synth.hpp"

namespace fs = std::filesystem;
using namespace tsdf;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string view_name(const std::string& prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu", prefix.c_str(), i);
  return buf;
}

SceneSpec scene_from_arg(const std::string& arg) {
  if (arg == "sphere") return sphere_scene();
  if (arg == "torus") return torus_scene();
  if (arg == "box") return box_scene();
  return load_scene(arg);
}

std::vector<View> load_views(const fs::path& dir, const std::string& set) {
  const std::vector<Camera> cams = read_cameras((dir / (set + "_cameras.txt")).string());
  std::vector<View> views;
  for (std::size_t i = 0; i < cams.size(); ++i) views.push_back({cams[i], load_bundle(dir.string(), view_name(set, i))});
  return views;
}

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string precision = "f64";
};

// ---- synth

struct SynthArgs {
  std::string scene = "sphere", out;
};

void cmd_synth(const SynthArgs& a) {
  const SceneSpec spec = scene_from_arg(a.scene);
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "scene.json", scene_to_json(spec));
  for (const auto& [set, cams] : {std::pair{std::string("train"), orbit_cameras(spec)},
                                   std::pair{std::string("heldout"), heldout_cameras(spec)}}) {
    write_cameras((fs::path(a.out) / (set + "_cameras.txt")).string(), cams);
    for (std::size_t i = 0; i < cams.size(); ++i) save_bundle(render_gt(spec, cams[i]), a.out, view_name(set, i));
  }
  spdlog::info("wrote {} training and {} held-out views to {}", spec.rig.views, spec.heldout_views, a.out);
}

// ---- fit

struct FitArgs {
  std::string data, config, out;
  int stage1 = -1, stage2 = -1, patch = -1, samples = -1;
  double lr = -1.0;
  std::string beta_mode;
};

FitConfig merged_config(const FitArgs& a, const Globals& g) {
  FitConfig c;
  c.seed = g.seed;
  c.f32 = g.precision == "f32";
  if (a.stage1 >= 0) c.stage1_iters = a.stage1;
  if (a.stage2 >= 0) c.stage2_iters = a.stage2;
  if (a.patch > 0) c.patch = a.patch;
  if (a.samples > 0) c.n_coarse = c.n_fine = a.samples;
  if (a.lr >= 0.0) c.lr = a.lr;
  if (!a.beta_mode.empty()) c.beta_mode = parse_beta_mode(a.beta_mode);
  if (!a.config.empty()) c = parse_fit_config(read_text(a.config), c);
  c.validate();
  return c;
}

void cmd_fit(const FitArgs& a, const Globals& g) {
  const FitConfig cfg = merged_config(a, g);
  const std::vector<View> views = load_views(a.data, "train");
  const fs::path out(a.out);
  fs::create_directories(out);
  write_text(out / "config.json", fit_config_to_json(cfg));
  FitLog log;
  Model model = init_model(cfg);
  auto cb = [&](const LogRow& row, Model& m) {
    if (row.iter % 50 == 0)
      spdlog::info("stage {} iter {} loss {:.5f} psnr {:.2f} beta {:.4f}", row.stage, row.iter, row.loss, row.psnr, row.beta);
    if (cfg.checkpoint_every > 0 && (row.iter + 1) % cfg.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "ckpt_s%d_%06ld.tsdf", row.stage, row.iter + 1);
      save_checkpoint((out / name).string(), m);
    }
  };
  fit_stage1(model, views, cfg, log, cb);
  save_checkpoint((out / "stage1.tsdf").string(), model);
  fit_stage2(model, views, cfg, log, cb);
  save_checkpoint((out / "model.tsdf").string(), model);
  log.write_csv((out / "log.csv").string());
  log.write_beta_csv((out / "beta.csv").string());
  Mesh mesh = flexicubes_extract(sample_grid(model, cfg.grid_resolution));
  attach_colors(mesh, model);
  write_obj((out / "mesh.obj").string(), mesh, &mesh.albedo);
}

// ---- extract

struct ExtractArgs {
  std::string checkpoint, mode = "flexi", out;
  int resolution = 64;
};

void write_colored_mesh(const std::string& path, Mesh& mesh, const Model& model) {
  attach_colors(mesh, model);
  write_obj(path, mesh, &mesh.albedo);
  std::ofstream side(path + ".shading");
  if (!side) throw std::runtime_error("cannot write " + path + ".shading");
  side << std::setprecision(9);
  for (Eigen::Index i = 0; i < mesh.shading.rows(); ++i)
    side << mesh.shading(i, 0) << ' ' << mesh.shading(i, 1) << ' ' << mesh.shading(i, 2) << '\n';
}

Mesh extract_mesh(const Model& model, const std::string& mode, int resolution) {
  if (resolution < 2) throw std::invalid_argument("resolution must be >= 2");
  if (mode == "mc") return marching_cubes(sample_sdf_grid(model, resolution));
  if (mode == "flexi") return flexicubes_extract(sample_grid(model, resolution));
  throw std::invalid_argument("mode must be mc or flexi");
}

void cmd_extract(const ExtractArgs& a) {
  const Model model = load_checkpoint(a.checkpoint);
  Mesh mesh = extract_mesh(model, a.mode, a.resolution);
  write_colored_mesh(a.out, mesh, model);
  spdlog::info("{} vertices, {} triangles, watertight {}", mesh.num_vertices(), mesh.triangles.size(), is_watertight(mesh));
}

// ---- render

struct RenderArgs {
  std::string checkpoint, cameras, out, mode = "volume", mesh;
  int samples = 64, resolution = 64;
  std::string prefix = "view";
};

void cmd_render(const RenderArgs& a) {
  const Model model = load_checkpoint(a.checkpoint);
  const std::vector<Camera> cams = read_cameras(a.cameras);
  fs::create_directories(a.out);
  Mesh mesh;
  if (a.mode == "mesh") mesh = a.mesh.empty() ? extract_mesh(model, "flexi", a.resolution) : read_obj(a.mesh);
  else if (a.mode != "volume") throw std::invalid_argument("mode must be volume or mesh");
  RenderConfig rcfg;
  rcfg.n_coarse = rcfg.n_fine = a.samples;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const RenderBundle b =
        a.mode == "mesh" ? raycast_view(mesh, model, cams[i]) : render_view(model, model.beta.value(1.0), cams[i], rcfg);
    save_bundle(b, a.out, view_name(a.prefix, i));
  }
}

// ---- eval

struct EvalArgs {
  std::string pred, gt, report, prefix = "heldout", pred_prefix;
  std::string pred_mesh, gt_mesh, gt_scene, pred_scene, checkpoint;
  int samples = 100000, iou_resolution = 128, gt_resolution = 128;
};

BatchSdf scene_batch(const SceneSpec& spec) {
  return [spec](const Mat& p) {
    Mat s(p.rows(), 1);
    for (Eigen::Index i = 0; i < p.rows(); ++i) s(i, 0) = scene_sdf(spec, p.row(i).transpose());
    return s;
  };
}

void cmd_eval(const EvalArgs& a, const Globals& g) {
  std::ostringstream rep;
  rep << std::setprecision(8);
  if (!a.pred.empty() || !a.gt.empty()) {
    if (a.pred.empty() || a.gt.empty()) throw std::invalid_argument("--pred and --gt go together");
    const std::string pp = a.pred_prefix.empty() ? a.prefix : a.pred_prefix;
    ViewScores m;
    std::size_t n = 0;
    while (fs::exists(fs::path(a.gt) / (view_name(a.prefix, n) + "_rgb.png"))) {
      const ViewScores s = score(load_bundle(a.pred, view_name(pp, n)), load_bundle(a.gt, view_name(a.prefix, n)));
      m.psnr += s.psnr;
      m.ssim += s.ssim;
      m.pproxy += s.pproxy;
      m.depth_mae += s.depth_mae;
      m.albedo_psnr += s.albedo_psnr;
      ++n;
    }
    if (n == 0) throw std::runtime_error("no " + a.prefix + " views in " + a.gt);
    rep << "views: " << n << '\n'
        << "psnr: " << m.psnr / n << '\n'
        << "ssim: " << m.ssim / n << '\n'
        << "pyramid_l1: " << m.pproxy / n << '\n'
        << "depth_mae: " << m.depth_mae / n << '\n'
        << "albedo_psnr: " << m.albedo_psnr / n << '\n';
  }
  std::optional<SceneSpec> gt_scene, pred_scene;
  if (!a.gt_scene.empty()) gt_scene = scene_from_arg(a.gt_scene);
  if (!a.pred_scene.empty()) pred_scene = scene_from_arg(a.pred_scene);
  std::optional<Model> model;
  if (!a.checkpoint.empty()) model = load_checkpoint(a.checkpoint);

  auto analytic_mesh = [&](const SceneSpec& s) {
    FlexGrid grid = FlexGrid::from_sdf(a.gt_resolution, Bounds{}, [&](const Eigen::Vector3d& p) { return scene_sdf(s, p); });
    return marching_cubes(grid);
  };
  std::optional<Mesh> pm, gm;
  if (!a.pred_mesh.empty()) pm = read_obj(a.pred_mesh);
  else if (pred_scene) pm = analytic_mesh(*pred_scene);
  if (!a.gt_mesh.empty()) gm = read_obj(a.gt_mesh);
  else if (gt_scene) gm = analytic_mesh(*gt_scene);
  if (pm && gm) rep << "chamfer: " << chamfer(*pm, *gm, a.samples, g.seed) << '\n';

  BatchSdf pred_sdf, gt_sdf;
  if (pred_scene) pred_sdf = scene_batch(*pred_scene);
  else if (model) pred_sdf = [&](const Mat& p) { return decode_sdf(model->heads, head_input(model->field.query_batch(p), p)); };
  if (gt_scene) gt_sdf = scene_batch(*gt_scene);
  if (pred_sdf && gt_sdf) rep << "volume_iou: " << volume_iou(pred_sdf, gt_sdf, a.iou_resolution) << '\n';

  if (rep.str().empty()) throw std::invalid_argument("nothing to evaluate: give --pred/--gt and/or mesh or scene inputs");
  if (a.report.empty()) std::cout << rep.str();
  else write_text(a.report, rep.str());
}

// ---- beta experiment

struct BetaArgs {
  std::string scene = "torus", out, data, config;
  int iters = 300, patch = 16, samples = 32;
};

void cmd_beta_experiment(const BetaArgs& a, const Globals& g) {
  fs::create_directories(a.out);
  std::vector<View> views;
  if (!a.data.empty()) {
    views = load_views(a.data, "train");
  } else {
    const SceneSpec spec = scene_from_arg(a.scene);
    for (const Camera& c : orbit_cameras(spec)) views.push_back({c, render_gt(spec, c)});
  }
  FitConfig cfg;
  cfg.seed = g.seed;
  cfg.f32 = g.precision == "f32";
  cfg.stage1_iters = a.iters;
  cfg.patch = a.patch;
  cfg.n_coarse = cfg.n_fine = a.samples;
  if (!a.config.empty()) cfg = parse_fit_config(read_text(a.config), cfg);
  std::ostringstream summary;
  summary << std::setprecision(8);
  for (const BetaRun& r : beta_experiment(views, cfg)) {
    r.log.write_beta_csv((fs::path(a.out) / ("beta_" + r.name + ".csv")).string());
    summary << r.name << "_final_loss: " << r.final_loss << '\n'
            << r.name << "_beta_start: " << r.beta_start << '\n'
            << r.name << "_beta_end: " << r.beta_end << '\n';
  }
  write_text(fs::path(a.out) / "summary.txt", summary.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensorial SDF reconstruction toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--precision", g.precision, "Parameter precision")->check(CLI::IsMember({"f32", "f64"}))->capture_default_str();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Render ground-truth views of an analytic scene");
  synth->add_option("--scene", sa.scene, "sphere, torus, box or a scene JSON path")->capture_default_str();
  synth->add_option("--out", sa.out, "Output directory")->required();

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit field and heads to a synthesized data directory");
  fit->add_option("--data", fa.data, "Directory written by synth")->required()->check(CLI::ExistingDirectory);
  fit->add_option("--config", fa.config, "JSON config (overrides flags)")->check(CLI::ExistingFile);
  fit->add_option("--out", fa.out, "Run directory")->required();
  fit->add_option("--stage1-iters", fa.stage1);
  fit->add_option("--stage2-iters", fa.stage2);
  fit->add_option("--patch", fa.patch);
  fit->add_option("--samples", fa.samples, "Coarse and fine samples per ray");
  fit->add_option("--lr", fa.lr);
  fit->add_option("--beta-mode", fa.beta_mode)->check(CLI::IsMember({"fixed", "linear", "adaptive"}));

  ExtractArgs ea;
  auto* extract = app.add_subcommand("extract", "Extract a mesh from a checkpoint");
  extract->add_option("--checkpoint", ea.checkpoint)->required()->check(CLI::ExistingFile);
  extract->add_option("--mode", ea.mode)->check(CLI::IsMember({"mc", "flexi"}))->capture_default_str();
  extract->add_option("--resolution", ea.resolution)->capture_default_str();
  extract->add_option("--out", ea.out, "OBJ path")->required();

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "Render a checkpoint from the given cameras");
  render->add_option("--checkpoint", ra.checkpoint)->required()->check(CLI::ExistingFile);
  render->add_option("--cameras", ra.cameras)->required()->check(CLI::ExistingFile);
  render->add_option("--out", ra.out)->required();
  render->add_option("--mode", ra.mode)->check(CLI::IsMember({"volume", "mesh"}))->capture_default_str();
  render->add_option("--mesh", ra.mesh, "OBJ to render in mesh mode (default: extract)")->check(CLI::ExistingFile);
  render->add_option("--samples", ra.samples)->capture_default_str();
  render->add_option("--resolution", ra.resolution, "Extraction resolution in mesh mode")->capture_default_str();
  render->add_option("--prefix", ra.prefix)->capture_default_str();

  EvalArgs va;
  auto* eval = app.add_subcommand("eval", "Compute metrics");
  eval->add_option("--pred", va.pred, "Directory of predicted bundles")->check(CLI::ExistingDirectory);
  eval->add_option("--gt", va.gt, "Directory of ground-truth bundles")->check(CLI::ExistingDirectory);
  eval->add_option("--prefix", va.prefix, "Ground-truth view prefix")->capture_default_str();
  eval->add_option("--pred-prefix", va.pred_prefix, "Predicted view prefix (default: same)");
  eval->add_option("--pred-mesh", va.pred_mesh)->check(CLI::ExistingFile);
  eval->add_option("--gt-mesh", va.gt_mesh)->check(CLI::ExistingFile);
  eval->add_option("--pred-scene", va.pred_scene, "Scene name or JSON");
  eval->add_option("--gt-scene", va.gt_scene, "Scene name or JSON");
  eval->add_option("--checkpoint", va.checkpoint, "Predicted SDF for volume IoU")->check(CLI::ExistingFile);
  eval->add_option("--samples", va.samples, "Chamfer samples per mesh")->capture_default_str();
  eval->add_option("--iou-resolution", va.iou_resolution)->capture_default_str();
  eval->add_option("--gt-resolution", va.gt_resolution, "MC resolution for analytic meshes")->capture_default_str();
  eval->add_option("--report", va.report, "Report path (default: stdout)");

  BetaArgs ba;
  auto* beta = app.add_subcommand("beta-experiment", "Compare beta schedules on one scene");
  beta->add_option("--scene", ba.scene)->capture_default_str();
  beta->add_option("--data", ba.data, "Use training views from a synth directory instead")->check(CLI::ExistingDirectory);
  beta->add_option("--out", ba.out)->required();
  beta->add_option("--iters", ba.iters)->capture_default_str();
  beta->add_option("--patch", ba.patch)->capture_default_str();
  beta->add_option("--samples", ba.samples)->capture_default_str();
  beta->add_option("--config", ba.config, "Base fit configuration (JSON); overrides the flags above")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.get_exit_code();
  }
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);
  set_num_threads(g.threads);
  try {
    if (*synth) cmd_synth(sa);
    else if (*fit) cmd_fit(fa, g);
    else if (*extract) cmd_extract(ea);
    else if (*render) cmd_render(ra);
    else if (*eval) cmd_eval(va, g);
    else if (*beta) cmd_beta_experiment(ba, g);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
