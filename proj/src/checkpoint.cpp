#include "tsdf/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tsdf {

Model Model::init(int resolution, int channels, double field_scale, std::uint64_t seed, BetaSchedule beta) {
  Model m{TensorField::random(resolution, channels, field_scale, seed), HeadSet::init(3 * channels, seed + 1),
          std::move(beta)};
  return m;
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out = field.parameters();
  for (Parameter* p : heads.parameters()) out.push_back(p);
  if (beta.learnable()) out.push_back(&beta.log_beta);
  return out;
}

namespace {

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path);
  }
  void tag(const char* s) { out_.write(s, static_cast<std::streamsize>(std::strlen(s))); }
  void i32(std::int32_t v) { out_.write(reinterpret_cast<const char*>(&v), 4); }
  void f64(double v) { out_.write(reinterpret_cast<const char*>(&v), 8); }
  void floats(const Mat& m) {
    std::vector<float> buf(m.size());
    for (Eigen::Index k = 0; k < m.size(); ++k) buf[k] = static_cast<float>(m.data()[k]);
    out_.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  }
  void finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed: " + path_);
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw std::runtime_error("cannot open " + path);
  }
  bool try_tag(const char* s) {
    const std::size_t n = std::strlen(s);
    std::string buf(n, '\0');
    const auto pos = in_.tellg();
    if (!in_.read(buf.data(), static_cast<std::streamsize>(n)) || buf != s) {
      in_.clear();
      in_.seekg(pos);
      return false;
    }
    return true;
  }
  void tag(const char* s) {
    if (!try_tag(s)) fail(std::string("missing section ") + s);
  }
  std::int32_t i32() {
    std::int32_t v;
    read(&v, 4);
    return v;
  }
  double f64() {
    double v;
    read(&v, 8);
    return v;
  }
  void floats(Mat& m) {
    std::vector<float> buf(m.size());
    read(buf.data(), buf.size() * 4);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = buf[k];
    if (!m.allFinite()) fail("non-finite parameter value");
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
  [[noreturn]] void fail(const std::string& what) { throw std::runtime_error(path_ + ": " + what); }

 private:
  void read(void* dst, std::size_t n) {
    if (!in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n))) fail("truncated file");
  }
  std::ifstream in_;
  std::string path_;
};

void write_field(Writer& w, const TensorField& f) {
  w.tag("TSDF1");
  w.i32(f.resolution());
  w.i32(f.channels());
  for (int m = 0; m < 3; ++m) w.floats(f.vec[m].value);
  for (int m = 0; m < 3; ++m) w.floats(f.mat[m].value);
}

TensorField read_field(Reader& r) {
  r.tag("TSDF1");
  const int n = r.i32(), c = r.i32();
  if (n < 2 || c < 1 || n > 4096 || c > 4096) r.fail("invalid field dimensions");
  TensorField f(n, c);
  for (int m = 0; m < 3; ++m) r.floats(f.vec[m].value);
  for (int m = 0; m < 3; ++m) r.floats(f.mat[m].value);
  return f;
}

void write_mlp(Writer& w, const MLP& mlp) {
  w.i32(static_cast<std::int32_t>(mlp.weights.size()));
  w.i32(mlp.activation() == Activation::relu ? 0 : 1);
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    w.i32(static_cast<std::int32_t>(mlp.weights[l].value.rows()));
    w.i32(static_cast<std::int32_t>(mlp.weights[l].value.cols()));
    w.floats(mlp.weights[l].value);
    w.floats(mlp.biases[l].value);
  }
}

void read_mlp(Reader& r, MLP& mlp) {
  const int layers = r.i32();
  const int act = r.i32();
  if (layers != static_cast<int>(mlp.weights.size())) r.fail("head layer count mismatch");
  if (act != (mlp.activation() == Activation::relu ? 0 : 1)) r.fail("head activation mismatch");
  for (int l = 0; l < layers; ++l) {
    const int rows = r.i32(), cols = r.i32();
    if (rows != mlp.weights[l].value.rows() || cols != mlp.weights[l].value.cols()) r.fail("head layer shape mismatch");
    r.floats(mlp.weights[l].value);
    r.floats(mlp.biases[l].value);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
  Writer w(path);
  write_field(w, model.field);
  w.tag("HEAD");
  w.i32(4);
  for (const MLP* m : {&model.heads.sdf, &model.heads.color, &model.heads.deform, &model.heads.weight}) write_mlp(w, *m);
  w.tag("BETA");
  w.i32(static_cast<std::int32_t>(model.beta.mode()));
  w.f64(model.beta.beta0());
  w.f64(model.beta.beta1());
  w.f64(model.beta.log_beta.value(0, 0));
  w.finish();
}

Model load_checkpoint(const std::string& path) {
  Reader r(path);
  TensorField field = read_field(r);
  HeadSet heads = HeadSet::allocate(field.feature_dim());
  r.tag("HEAD");
  if (r.i32() != 4) r.fail("expected 4 head networks");
  for (MLP* m : {&heads.sdf, &heads.color, &heads.deform, &heads.weight}) read_mlp(r, *m);
  BetaSchedule beta;
  if (r.try_tag("BETA")) {
    const int mode = r.i32();
    if (mode < 0 || mode > 2) r.fail("invalid beta mode");
    const double b0 = r.f64(), b1 = r.f64(), lb = r.f64();
    beta = BetaSchedule(static_cast<BetaMode>(mode), b0, b1);
    beta.log_beta.value(0, 0) = lb;
  }
  if (!r.at_end()) r.fail("trailing bytes");
  return Model{std::move(field), std::move(heads), std::move(beta)};
}

void save_field(const std::string& path, const TensorField& field) {
  Writer w(path);
  write_field(w, field);
  w.finish();
}

TensorField load_field(const std::string& path) {
  Reader r(path);
  TensorField f = read_field(r);
  if (!r.at_end()) r.fail("trailing bytes");
  return f;
}

void round_to_float(const std::vector<Parameter*>& params) {
  for (Parameter* p : params)
    for (Eigen::Index k = 0; k < p->value.size(); ++k) p->value.data()[k] = static_cast<float>(p->value.data()[k]);
}

}  // namespace tsdf
