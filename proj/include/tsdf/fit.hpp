#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tsdf/adam.hpp"
#include "tsdf/camera.hpp"
#include "tsdf/checkpoint.hpp"
#include "tsdf/extract.hpp"
#include "tsdf/image.hpp"
#include "tsdf/volren.hpp"

namespace tsdf {

struct FitConfig {
  int stage1_iters = 2000;
  int stage2_iters = 500;
  double lr = 4e-4;
  double lr_stage2 = 1e-5;
  /// Multiplier on the learning rate of the field factors (heads use lr as is).
  double field_lr_scale = 1.0;
  /// Multiplier on the learning rate of log beta in adaptive mode.
  double beta_lr_scale = 1.0;
  AdamConfig adam;

  double lambda_vgg = 2.0;
  double lambda_d = 0.5;
  double lambda_reg = 0.005;
  /// Stage-1 eikonal weight, applied at eik_points uniform box points per step.
  /// Off by default; the loss is then exactly loss_stage1.
  double lambda_eik = 0.0;
  int eik_points = 512;

  int patch = 128;
  /// Stage-1 source resolution ramps linearly from res_start to res_end; the
  /// views are rendered at native * current / res_end.
  double res_start = 192.0;
  double res_end = 512.0;
  double fg_prob = 0.8;

  int n_coarse = 64;
  int n_fine = 64;
  int grid_resolution = 64;

  int field_resolution = 64;
  int field_channels = 40;
  double field_init_scale = 0.1;

  BetaMode beta_mode = BetaMode::adaptive;
  double beta0 = 0.1;
  double beta1 = 0.001;

  std::uint64_t seed = 0;
  bool f32 = false;  // round parameters to float32 after every step
  int checkpoint_every = 0;

  void validate() const;
};

/// JSON object with the field names above; unknown keys are rejected and
/// missing keys keep the values already in `base`.
FitConfig parse_fit_config(const std::string& json_text, FitConfig base = {});
std::string fit_config_to_json(const FitConfig& cfg);

struct View {
  Camera camera;
  RenderBundle gt;
};

struct LogRow {
  int stage = 1;
  long iter = 0;
  double loss = 0.0;     // loss_stage1 or loss_stage2
  double eikonal = 0.0;  // unweighted eikonal term (stage 1, 0 when disabled)
  double beta = 0.0;
  double psnr = 0.0;
  double lr = 0.0;
  bool skipped = false;
};

struct FitLog {
  std::vector<LogRow> rows;
  /// Final accepted loss of a stage, or NaN if it never ran.
  double final_loss(int stage, int window = 1) const;
  void write_csv(const std::string& path) const;
  /// step,beta,loss for stage 1.
  void write_beta_csv(const std::string& path) const;
};

/// Stage-1 objective: MSE(rgb) + MSE(albedo) + MSE(mask) + lambda_vgg * pyramid
/// L1 proxy on rgb. Inputs are P x C images of a width x height patch.
Var loss_stage1(Var rgb, Var albedo, Var mask, const RenderBundle& gt, double lambda_vgg);
double loss_stage1(const RenderBundle& pred, const RenderBundle& gt, double lambda_vgg);

/// Stage-2 objective: loss_stage1 + lambda_d * mean |depth - gt depth| over
/// pixels where both masks are >= 0.5 + lambda_reg * reg.
Var loss_stage2(Var rgb, Var albedo, Var mask, Var depth, const RenderBundle& gt, Var reg, const FitConfig& cfg);
double loss_stage2(const RenderBundle& pred, const RenderBundle& gt, double reg, const FitConfig& cfg);

/// mean((|grad s| - 1)^2) at `points` (B x 3), with grad s taken as a forward
/// difference of step `delta` along each axis.
Var eikonal_loss(Tape& tape, Model& model, const Mat& points, double delta);

struct BetaRun {
  std::string name;  // fixed, linear, adaptive, fixed_small
  FitLog log;
  double final_loss = 0.0;  // mean stage-1 loss over the last 10% of iterations
  double beta_start = 0.0;
  double beta_end = 0.0;
};

/// Stage-1 fits of the same views and seed under fixed beta 0.1, linear
/// 0.1 -> base.beta1, adaptive from 0.1 and fixed beta 0.003. Everything else
/// comes from `base`.
std::vector<BetaRun> beta_experiment(const std::vector<View>& views, const FitConfig& base);

/// Called after every iteration with the current row.
using FitCallback = std::function<void(const LogRow&, Model&)>;

Model init_model(const FitConfig& cfg);
void fit_stage1(Model& model, const std::vector<View>& views, const FitConfig& cfg, FitLog& log,
                const FitCallback& cb = {});
void fit_stage2(Model& model, const std::vector<View>& views, const FitConfig& cfg, FitLog& log,
                const FitCallback& cb = {});
/// Both stages from a fresh model.
Model fit_scene(const std::vector<View>& views, const FitConfig& cfg, FitLog& log, const FitCallback& cb = {});

struct ViewScores {
  double psnr = 0.0;
  double ssim = 0.0;
  double pproxy = 0.0;
  double depth_mae = 0.0;  // over pixels where both masks >= 0.5
  double albedo_psnr = 0.0;
};

/// Mean scores of volume renders (deterministic sampling) against the views.
ViewScores evaluate_volume(const Model& model, const std::vector<View>& views, const RenderConfig& rcfg, double beta);
/// Mean scores of mesh renders against the views.
ViewScores evaluate_mesh(const Model& model, const Mesh& mesh, const std::vector<View>& views);
ViewScores score(const RenderBundle& pred, const RenderBundle& gt);

}  // namespace tsdf
