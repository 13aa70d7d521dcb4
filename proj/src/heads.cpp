#include "tsdf/heads.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "tsdf/adam.hpp"

namespace tsdf {

namespace {

constexpr double kDeformShrink = 1.0 - 1e-6;

double softplus_scalar(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }
double sigmoid_scalar(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void check_input(const MLP& mlp, Eigen::Index cols) {
  if (cols != mlp.in_dim()) throw std::invalid_argument("heads: input width does not match network");
}

// Fits the SDF head to |p| - r on random points of [-1, 1]^3 with the feature
// rows of the first layer held at zero, so the initial surface is a sphere
// regardless of the field. Deterministic for a given seed.
void sphere_init(MLP& mlp, int feature_dim, double r, std::uint64_t seed) {
  constexpr int kSteps = 600;
  constexpr int kBatch = 256;
  std::mt19937_64 rng(seed ^ 0x5d1f00d5ULL);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  // Fan-in scaling leaves softplus nearly linear over the box; a larger first
  // layer gives the fit enough curvature to escape the constant solution.
  mlp.weights[0].value.topRows(feature_dim).setZero();
  mlp.weights[0].value.bottomRows(3) *= 4.0;
  mlp.biases.back().value.setConstant(-r);

  std::vector<Parameter*> params;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    params.push_back(&mlp.weights[l]);
    params.push_back(&mlp.biases[l]);
  }
  Adam opt(params, AdamConfig{0.9, 0.99, 1e-8, 0.0});
  Mat x = Mat::Zero(kBatch, mlp.in_dim());
  Mat target(kBatch, 1);
  for (int step = 0; step < kSteps; ++step) {
    for (int i = 0; i < kBatch; ++i) {
      // Half the points are radially uniform so the interior is well covered.
      Eigen::Vector3d p(u(rng), u(rng), u(rng));
      if (i % 2 == 1) p = p.normalized() * (0.5 * (u(rng) + 1.0));
      x.block(i, feature_dim, 1, 3) = p.transpose();
      target(i, 0) = p.norm() - r;
    }
    Tape tape;
    Var loss = mean(square(mlp.forward(tape, tape.constant(x)) - tape.constant(target)));
    opt.zero_grad();
    tape.backward(loss);
    tape.flush_param_grads();
    opt.step(cosine_lr(1e-2, step, kSteps));
  }
  mlp.weights[0].value.topRows(feature_dim).setZero();
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace

MLP::MLP(const std::string& name, int in_dim, int hidden_dim, int out_dim, int layers, Activation hidden,
         std::uint64_t seed)
    : act_(hidden) {
  if (layers < 1 || in_dim < 1 || out_dim < 1) throw std::invalid_argument("MLP: bad shape");
  std::mt19937_64 rng(seed);
  weights.reserve(layers);
  biases.reserve(layers);
  for (int l = 0; l < layers; ++l) {
    const int fan_in = l == 0 ? in_dim : hidden_dim;
    const int fan_out = l == layers - 1 ? out_dim : hidden_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Parameter w, b;
    w.name = name + ".w" + std::to_string(l);
    b.name = name + ".b" + std::to_string(l);
    w.value.resize(fan_in, fan_out);
    b.value.resize(1, fan_out);
    for (Eigen::Index k = 0; k < w.value.size(); ++k) w.value.data()[k] = u(rng);
    for (Eigen::Index k = 0; k < b.value.size(); ++k) b.value.data()[k] = u(rng);
    w.zero_grad();
    b.zero_grad();
    weights.push_back(std::move(w));
    biases.push_back(std::move(b));
  }
}

Var MLP::forward(Tape& tape, Var x) {
  check_input(*this, x.cols());
  for (std::size_t l = 0; l < weights.size(); ++l) {
    x = linear(x, tape.parameter(weights[l]), tape.parameter(biases[l]));
    if (l + 1 < weights.size()) x = act_ == Activation::relu ? relu(x) : softplus(x);
  }
  return x;
}

Mat MLP::forward(const Mat& x_in) const {
  check_input(*this, x_in.cols());
  Mat x = x_in;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Mat y(x.rows(), weights[l].value.cols());
    y.noalias() = x * weights[l].value;
    y.rowwise() += biases[l].value.row(0);
    if (l + 1 < weights.size()) {
      if (act_ == Activation::relu)
        y = y.cwiseMax(0.0);
      else
        y = y.unaryExpr(&softplus_scalar);
    }
    x = std::move(y);
  }
  return x;
}

namespace {

HeadSet make_heads(int feature_dim, std::uint64_t seed) {
  const int in = feature_dim + 3;
  constexpr int hid = HeadSet::kHidden;
  HeadSet h;
  h.sdf = MLP("head.sdf", in, hid, 1, 4, Activation::softplus, seed * 4 + 0);
  h.color = MLP("head.color", in, hid, 6, 4, Activation::relu, seed * 4 + 1);
  h.deform = MLP("head.deform", in, hid, 1, 2, Activation::relu, seed * 4 + 2);
  h.weight = MLP("head.weight", in, hid, 8, 2, Activation::relu, seed * 4 + 3);
  return h;
}

}  // namespace

HeadSet HeadSet::allocate(int feature_dim) { return make_heads(feature_dim, 0); }

HeadSet HeadSet::init(int feature_dim, std::uint64_t seed) {
  HeadSet h = make_heads(feature_dim, seed);
  sphere_init(h.sdf, feature_dim, kSdfBlobRadius, seed);
  for (MLP* m : {&h.deform, &h.weight}) {
    m->weights.back().value.setZero();
    m->biases.back().value.setZero();
  }
  return h;
}

std::vector<Parameter*> HeadSet::parameters() {
  std::vector<Parameter*> out;
  for (MLP* m : {&sdf, &color, &deform, &weight})
    for (std::size_t l = 0; l < m->weights.size(); ++l) {
      out.push_back(&m->weights[l]);
      out.push_back(&m->biases[l]);
    }
  return out;
}

Var head_input(Var feature, Var p) { return concat_cols({feature, p}); }

Mat head_input(const Mat& feature, const Mat& p) {
  if (feature.rows() != p.rows()) throw std::invalid_argument("heads: feature/point row mismatch");
  Mat x(feature.rows(), feature.cols() + p.cols());
  x << feature, p;
  return x;
}

Var decode_sdf(HeadSet& heads, Var input) { return heads.sdf.forward(input.tape(), input); }
Mat decode_sdf(const HeadSet& heads, const Mat& input) { return heads.sdf.forward(input); }

ColorVars decode_color(HeadSet& heads, Var input) {
  Var c = sigmoid(heads.color.forward(input.tape(), input));
  return {slice_cols(c, 0, 3), slice_cols(c, 3, 3)};
}

ColorMats decode_color(const HeadSet& heads, const Mat& input) {
  Mat c = heads.color.forward(input).unaryExpr(&sigmoid_scalar);
  return {c.leftCols(3), c.rightCols(3)};
}

Var compose_color(Var albedo, Var shading) { return mul(albedo, shading); }
Mat compose_color(const Mat& albedo, const Mat& shading) { return albedo.cwiseProduct(shading); }

Var decode_deform(HeadSet& heads, Var input, double h) {
  return tanh(heads.deform.forward(input.tape(), input)) * (0.5 * h * kDeformShrink);
}

Mat decode_deform(const HeadSet& heads, const Mat& input, double h) {
  return (heads.deform.forward(input).array().tanh() * (0.5 * h * kDeformShrink)).matrix();
}

Var decode_weights(HeadSet& heads, Var input) { return softplus(heads.weight.forward(input.tape(), input)); }

Mat decode_weights(const HeadSet& heads, const Mat& input) {
  return heads.weight.forward(input).unaryExpr(&softplus_scalar);
}

}  // namespace tsdf
