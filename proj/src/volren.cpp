#include "tsdf/volren.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tsdf/parallel.hpp"

namespace tsdf {

bool ray_box(const Ray& ray, const Bounds& box, double& near, double& far) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a], d = ray.dir[a];
    if (d == 0.0) {
      if (o < box.lo[a] || o > box.hi[a]) return false;
      continue;
    }
    double ta = (box.lo[a] - o) / d, tb = (box.hi[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t1 > t0)) return false;
  near = t0;
  far = t1;
  return true;
}

std::uint64_t pixel_seed(std::uint64_t base, int px, int py) {
  // splitmix64 over the packed coordinates
  std::uint64_t z = base ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(px)) << 32 |
                            static_cast<std::uint32_t>(py));
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<double> importance_samples(const std::vector<double>& edges, const std::vector<double>& weights,
                                       int n, bool perturb, std::mt19937_64& rng) {
  const std::size_t bins = weights.size();
  if (edges.size() != bins + 1 || bins == 0) throw std::invalid_argument("importance_samples: bad histogram");
  std::vector<double> cdf(bins + 1, 0.0);
  double total = 0.0;
  for (double w : weights) total += std::max(w, 0.0);
  const bool uniform = !(total > 1e-12);
  for (std::size_t i = 0; i < bins; ++i)
    cdf[i + 1] = cdf[i] + (uniform ? 1.0 / bins : std::max(weights[i], 0.0) / total);
  cdf[bins] = 1.0;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double u = perturb ? unif(rng) : (k + 0.5) / n;
    std::size_t i = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    i = std::clamp<std::size_t>(i, 1, bins) - 1;
    while (i + 1 < bins && cdf[i + 1] - cdf[i] <= 0.0) ++i;
    const double span = cdf[i + 1] - cdf[i];
    const double f = span > 0.0 ? std::clamp((u - cdf[i]) / span, 0.0, 1.0) : 0.5;
    out.push_back(edges[i] + f * (edges[i + 1] - edges[i]));
  }
  return out;
}

namespace {

void finish_deltas(RaySamples& s, double far) {
  std::sort(s.t.begin(), s.t.end());
  s.delta.resize(s.t.size());
  for (std::size_t i = 0; i + 1 < s.t.size(); ++i) s.delta[i] = s.t[i + 1] - s.t[i];
  if (!s.t.empty()) s.delta.back() = std::max(far - s.t.back(), 0.0);
}

RaySamples coarse_samples(double near, double far, int n, bool perturb, std::mt19937_64& rng) {
  RaySamples s;
  s.t.resize(n);
  const double step = (far - near) / n;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < n; ++i) s.t[i] = near + (i + (perturb ? unif(rng) : 0.5)) * step;
  finish_deltas(s, far);
  return s;
}

std::vector<double> coarse_weights(const RaySamples& s, const double* sigma) {
  std::vector<double> w(s.t.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    const double tau = sigma[i] * s.delta[i];
    w[i] = std::exp(-acc) * (1.0 - std::exp(-tau));
    acc += tau;
  }
  return w;
}

// Shared by the single-ray and batched samplers; densities of the coarse
// samples are supplied by the caller.
RaySamples refine(const RaySamples& coarse, const std::vector<double>& sigma, double near, double far, int n_fine,
                  bool perturb, std::mt19937_64& rng) {
  const int n = static_cast<int>(coarse.t.size());
  std::vector<double> edges(n + 1);
  for (int i = 0; i <= n; ++i) edges[i] = near + (far - near) * i / n;
  const std::vector<double> w = coarse_weights(coarse, sigma.data());
  std::vector<double> fine = importance_samples(edges, w, n_fine, perturb, rng);
  RaySamples s;
  s.t = coarse.t;
  s.t.insert(s.t.end(), fine.begin(), fine.end());
  finish_deltas(s, far);
  return s;
}

Mat sample_points(const Ray& ray, const std::vector<double>& t) {
  Mat p(static_cast<Eigen::Index>(t.size()), 3);
  for (std::size_t k = 0; k < t.size(); ++k) p.row(static_cast<Eigen::Index>(k)) = (ray.origin + t[k] * ray.dir).transpose();
  return p;
}

Mat untaped_density(const Model& m, double beta, const Mat& pts) {
  const Mat feat = m.field.query_batch(pts);
  return sdf_to_density(decode_sdf(m.heads, head_input(feat, pts)), beta);
}

struct RayBatch {
  std::vector<Ray> rays;
  std::vector<RaySamples> samples;
  std::vector<Eigen::Index> rows;  // output pixel row of each ray
};

// Builds samples for the rays of `pixels` that hit the box, running the coarse
// density pass for all of them at once.
RayBatch prepare(const Model& m, double beta, const Camera& cam, const std::vector<Eigen::Vector2i>& pixels,
                 const std::vector<Eigen::Index>& rows, const RenderConfig& cfg) {
  RayBatch batch;
  std::vector<RaySamples> coarse;
  std::vector<std::pair<double, double>> ranges;
  std::vector<std::mt19937_64> rngs;
  for (std::size_t k = 0; k < pixels.size(); ++k) {
    const Ray ray = pixel_ray(cam, pixels[k].x(), pixels[k].y());
    double near, far;
    if (!ray_box(ray, m.field.bounds(), near, far)) continue;
    rngs.emplace_back(pixel_seed(cfg.seed, pixels[k].x(), pixels[k].y()));
    coarse.push_back(coarse_samples(near, far, cfg.n_coarse, cfg.perturb, rngs.back()));
    ranges.emplace_back(near, far);
    batch.rays.push_back(ray);
    batch.rows.push_back(rows[k]);
  }
  if (cfg.n_fine <= 0) {
    batch.samples = std::move(coarse);
    return batch;
  }
  const Eigen::Index nc = cfg.n_coarse;
  Mat pts(static_cast<Eigen::Index>(batch.rays.size()) * nc, 3);
  for (std::size_t r = 0; r < batch.rays.size(); ++r)
    pts.middleRows(static_cast<Eigen::Index>(r) * nc, nc) = sample_points(batch.rays[r], coarse[r].t);
  const Mat sigma = pts.rows() ? untaped_density(m, beta, pts) : Mat();
  for (std::size_t r = 0; r < batch.rays.size(); ++r) {
    std::vector<double> s(sigma.data() + r * nc, sigma.data() + (r + 1) * nc);
    batch.samples.push_back(
        refine(coarse[r], s, ranges[r].first, ranges[r].second, cfg.n_fine, cfg.perturb, rngs[r]));
  }
  return batch;
}

void stack_samples(const std::vector<Ray>& rays, const std::vector<RaySamples>& samples, Mat& pts, Mat& delta,
                   Mat& t) {
  const Eigen::Index b = static_cast<Eigen::Index>(rays.size());
  const Eigen::Index k = b ? static_cast<Eigen::Index>(samples[0].t.size()) : 0;
  pts.resize(b * k, 3);
  delta.resize(b, k);
  t.resize(b, k);
  for (Eigen::Index r = 0; r < b; ++r) {
    if (static_cast<Eigen::Index>(samples[r].t.size()) != k) throw std::invalid_argument("render: ragged samples");
    pts.middleRows(r * k, k) = sample_points(rays[r], samples[r].t);
    for (Eigen::Index j = 0; j < k; ++j) {
      delta(r, j) = samples[r].delta[j];
      t(r, j) = samples[r].t[j];
    }
  }
}

std::vector<Eigen::Vector2i> rect_pixels(const Rect& r, std::vector<Eigen::Index>& rows) {
  std::vector<Eigen::Vector2i> px;
  for (int y = 0; y < r.h; ++y)
    for (int x = 0; x < r.w; ++x) {
      px.emplace_back(r.x + x, r.y + y);
      rows.push_back(static_cast<Eigen::Index>(y) * r.w + x);
    }
  return px;
}

void check_rect(const Camera& cam, const Rect& r) {
  if (r.x < 0 || r.y < 0 || r.w <= 0 || r.h <= 0 || r.x + r.w > cam.width || r.y + r.h > cam.height)
    throw std::out_of_range("render: patch outside image");
}

}  // namespace

RaySamples sample_ray(const Ray& ray, double near, double far, int n_coarse, int n_fine, bool perturb,
                      std::uint64_t seed, const DensityFn& density) {
  if (!(near < far) || !std::isfinite(near) || !std::isfinite(far)) throw std::invalid_argument("sample_ray: need near < far");
  if (n_coarse < 1 || n_fine < 0) throw std::invalid_argument("sample_ray: bad sample counts");
  std::mt19937_64 rng(seed);
  RaySamples coarse = coarse_samples(near, far, n_coarse, perturb, rng);
  if (n_fine == 0) return coarse;
  const Mat sigma = density(sample_points(ray, coarse.t));
  std::vector<double> s(sigma.data(), sigma.data() + sigma.size());
  return refine(coarse, s, near, far, n_fine, perturb, rng);
}

Composite composite(Var sigma, const Mat& delta, const Mat& t, Var albedo, Var shading) {
  Tape& tape = sigma.tape();
  const Eigen::Index b = sigma.rows(), k = sigma.cols();
  if (delta.rows() != b || delta.cols() != k || t.rows() != b || t.cols() != k)
    throw std::invalid_argument("composite: sample layout mismatch");
  Var tau = mul(sigma, tape.constant(delta));
  Var trans = exp(neg(exclusive_cumsum(tau)));
  Var alpha = 1.0 - exp(neg(tau));
  Var w = mul(trans, alpha);
  Var wcol = reshape(w, b * k, 1);
  Composite out;
  out.weights = w;
  out.rgb = group_sum(mul(wcol, compose_color(albedo, shading)), k);
  out.albedo = group_sum(mul(wcol, albedo), k);
  out.mask = rowwise_sum(w);
  out.depth = div(rowwise_sum(mul(w, tape.constant(t))), maximum(out.mask, tape.constant(1e-6)));
  return out;
}

Composite render_rays(Tape& tape, Model& model, Var beta, const std::vector<Ray>& rays,
                      const std::vector<RaySamples>& samples) {
  if (rays.empty() || rays.size() != samples.size()) throw std::invalid_argument("render_rays: need one sample set per ray");
  Mat pts, delta, t;
  stack_samples(rays, samples, pts, delta, t);
  Var p = tape.constant(std::move(pts));
  Var in = head_input(model.field.query(tape, p), p);
  Var sigma = reshape(sdf_to_density(decode_sdf(model.heads, in), beta), delta.rows(), delta.cols());
  ColorVars c = decode_color(model.heads, in);
  return composite(sigma, delta, t, c.albedo, c.shading);
}

RenderBundle render_view(const Model& model, double beta, const Camera& cam, const RenderConfig& cfg,
                         std::optional<Rect> patch) {
  const Rect r = patch.value_or(Rect{0, 0, cam.width, cam.height});
  check_rect(cam, r);
  std::vector<Eigen::Index> rows;
  const std::vector<Eigen::Vector2i> px = rect_pixels(r, rows);
  RenderBundle out = RenderBundle::zeros(r.w, r.h);
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, cfg.chunk_rays));
  const std::size_t n_chunks = (px.size() + chunk - 1) / chunk;
  parallel_for(n_chunks, [&](std::size_t cb, std::size_t ce, std::size_t) {
    for (std::size_t c = cb; c < ce; ++c) {
      const std::size_t b = c * chunk, e = std::min(px.size(), b + chunk);
      std::vector<Eigen::Vector2i> sub_px(px.begin() + b, px.begin() + e);
      std::vector<Eigen::Index> sub_rows(rows.begin() + b, rows.begin() + e);
      RayBatch batch = prepare(model, beta, cam, sub_px, sub_rows, cfg);
      if (batch.rays.empty()) continue;
      Mat pts, delta, t;
      stack_samples(batch.rays, batch.samples, pts, delta, t);
      const Mat in = head_input(model.field.query_batch(pts), pts);
      const Mat sigma = sdf_to_density(decode_sdf(model.heads, in), beta).reshaped<Eigen::RowMajor>(delta.rows(), delta.cols());
      const ColorMats col = decode_color(model.heads, in);
      const Eigen::Index k = delta.cols();
      for (Eigen::Index i = 0; i < delta.rows(); ++i) {
        double acc = 0.0, mask = 0.0, dsum = 0.0;
        Eigen::RowVector3d rgb = Eigen::RowVector3d::Zero(), alb = Eigen::RowVector3d::Zero();
        for (Eigen::Index j = 0; j < k; ++j) {
          const double tau = sigma(i, j) * delta(i, j);
          const double w = std::exp(-acc) * (1.0 - std::exp(-tau));
          acc += tau;
          const Eigen::Index row = i * k + j;
          rgb += w * col.albedo.row(row).cwiseProduct(col.shading.row(row));
          alb += w * col.albedo.row(row);
          mask += w;
          dsum += w * t(i, j);
        }
        const Eigen::Index o = batch.rows[i];
        out.rgb.row(o) = rgb;
        out.albedo.row(o) = alb;
        out.mask(o, 0) = mask;
        out.depth(o, 0) = mask >= 0.5 ? dsum / std::max(mask, 1e-6) : 0.0;
      }
    }
  });
  return out;
}

struct PatchRender::Chunk {
  Tape tape;
  std::vector<Eigen::Index> rows;
  Composite out;
};

PatchRender::PatchRender(Model& model, const Camera& cam, const Rect& patch, const RenderConfig& cfg,
                         double progress) {
  check_rect(cam, patch);
  std::vector<Eigen::Index> rows;
  const std::vector<Eigen::Vector2i> px = rect_pixels(patch, rows);
  bundle_ = RenderBundle::zeros(patch.w, patch.h);
  const double beta = model.beta.value(progress);
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, cfg.chunk_rays));
  const std::size_t n_chunks = (px.size() + chunk - 1) / chunk;
  chunks_.resize(n_chunks);
  parallel_for(n_chunks, [&](std::size_t cb, std::size_t ce, std::size_t) {
    for (std::size_t c = cb; c < ce; ++c) {
      const std::size_t b = c * chunk, e = std::min(px.size(), b + chunk);
      std::vector<Eigen::Vector2i> sub_px(px.begin() + b, px.begin() + e);
      std::vector<Eigen::Index> sub_rows(rows.begin() + b, rows.begin() + e);
      RayBatch batch = prepare(model, beta, cam, sub_px, sub_rows, cfg);
      if (batch.rays.empty()) continue;
      auto ch = std::make_unique<Chunk>();
      ch->rows = batch.rows;
      ch->out = render_rays(ch->tape, model, model.beta.var(ch->tape, progress), batch.rays, batch.samples);
      for (std::size_t i = 0; i < ch->rows.size(); ++i) {
        const Eigen::Index o = ch->rows[i], ii = static_cast<Eigen::Index>(i);
        bundle_.rgb.row(o) = ch->out.rgb.value().row(ii);
        bundle_.albedo.row(o) = ch->out.albedo.value().row(ii);
        bundle_.mask(o, 0) = ch->out.mask.value()(ii, 0);
        bundle_.depth(o, 0) = ch->out.depth.value()(ii, 0);
      }
      chunks_[c] = std::move(ch);
    }
  });
}

PatchRender::~PatchRender() = default;

void PatchRender::backward(const Mat& g_rgb, const Mat& g_albedo, const Mat& g_mask, const Mat& g_depth) {
  const Eigen::Index p = bundle_.pixels();
  if (g_rgb.rows() != p || g_albedo.rows() != p || g_mask.rows() != p || g_depth.rows() != p)
    throw std::invalid_argument("PatchRender::backward: gradient shape mismatch");
  parallel_for(chunks_.size(), [&](std::size_t cb, std::size_t ce, std::size_t) {
    for (std::size_t c = cb; c < ce; ++c) {
      Chunk* ch = chunks_[c].get();
      if (!ch) continue;
      const Eigen::Index n = static_cast<Eigen::Index>(ch->rows.size());
      Mat seeds[4] = {Mat(n, 3), Mat(n, 3), Mat(n, 1), Mat(n, 1)};
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index o = ch->rows[i];
        seeds[0].row(i) = g_rgb.row(o);
        seeds[1].row(i) = g_albedo.row(o);
        seeds[2](i, 0) = g_mask(o, 0);
        seeds[3](i, 0) = g_depth(o, 0);
      }
      const Var outs[4] = {ch->out.rgb, ch->out.albedo, ch->out.mask, ch->out.depth};
      ch->tape.backward(outs, seeds);
    }
  });
  for (auto& ch : chunks_)
    if (ch) ch->tape.flush_param_grads();
}

}  // namespace tsdf
