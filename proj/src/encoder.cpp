#include "gh/encoder.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>

#include "gh/error.hpp"
#include "gh/text_format.hpp"

namespace gh {

Encoder init_encoder(Rng& rng, const EncoderDims& dims) {
  if (dims.input == 0 || dims.hidden == 0 || dims.output == 0) {
    throw Error(Errc::invalid_argument, "encoder dimensions must be positive");
  }
  Encoder enc;
  enc.seed = rng.seed();
  enc.w1 = Matrix(dims.hidden, dims.input);
  enc.b1 = Vector(dims.hidden, 0.0);
  enc.w2 = Matrix(dims.output, dims.hidden);
  enc.b2 = Vector(dims.output, 0.0);
  const Real s1 = 1.0 / std::sqrt(static_cast<Real>(dims.input));
  const Real s2 = 1.0 / std::sqrt(static_cast<Real>(dims.hidden));
  for (auto& w : enc.w1.data()) w = rng.uniform(-s1, s1);
  for (auto& w : enc.w2.data()) w = rng.uniform(-s2, s2);
  return enc;
}

ForwardResult forward(const Encoder& enc, const Matrix& batch) {
  const EncoderDims dims = enc.dims();
  if (batch.rows() != dims.input) {
    throw Error(Errc::invalid_argument, "forward: input width " + std::to_string(batch.rows()) +
                                            " != encoder input " + std::to_string(dims.input));
  }
  const std::size_t n = batch.cols();
  ForwardResult res;
  ForwardCache& c = res.cache;
  c.input = batch;
  c.pre = enc.w1 * batch;
  for (std::size_t r = 0; r < dims.hidden; ++r)
    for (auto& x : c.pre.row(r)) x += enc.b1[r];
  c.hidden = c.pre;
  for (auto& x : c.hidden.data()) x = x > 0.0 ? x : 0.0;
  c.z = enc.w2 * c.hidden;
  for (std::size_t r = 0; r < dims.output; ++r)
    for (auto& x : c.z.row(r)) x += enc.b2[r];
  c.norms.resize(n);
  res.embeddings = c.z;
  for (std::size_t i = 0; i < n; ++i) {
    const Real nrm = column_norm(c.z, i);
    if (!(nrm >= 1e-12)) {
      throw Error(Errc::degenerate_embedding, "forward: output norm below 1e-12 for column " + std::to_string(i));
    }
    c.norms[i] = nrm;
    for (std::size_t r = 0; r < dims.output; ++r) res.embeddings(r, i) /= nrm;
  }
  return res;
}

EncoderGrads& EncoderGrads::operator+=(const EncoderGrads& other) {
  w1 += other.w1;
  w2 += other.w2;
  for (std::size_t i = 0; i < b1.size(); ++i) b1[i] += other.b1[i];
  for (std::size_t i = 0; i < b2.size(); ++i) b2[i] += other.b2[i];
  return *this;
}

EncoderGrads zero_grads(const EncoderDims& dims) {
  return {Matrix(dims.hidden, dims.input), Vector(dims.hidden, 0.0), Matrix(dims.output, dims.hidden),
          Vector(dims.output, 0.0)};
}

EncoderGrads backward(const Encoder& enc, const ForwardCache& cache, const Matrix& grad_embeddings) {
  const EncoderDims dims = enc.dims();
  const std::size_t n = cache.z.cols();
  if (grad_embeddings.rows() != dims.output || grad_embeddings.cols() != n) {
    throw Error(Errc::invalid_argument, "backward: upstream gradient shape mismatch");
  }
  // Through the normalization: dL/dz = (I - e e^T) g / ‖z‖.
  Matrix dz(dims.output, n);
  for (std::size_t i = 0; i < n; ++i) {
    const Real nrm = cache.norms[i];
    Real radial = 0.0;
    for (std::size_t r = 0; r < dims.output; ++r) radial += grad_embeddings(r, i) * cache.z(r, i) / nrm;
    for (std::size_t r = 0; r < dims.output; ++r) {
      dz(r, i) = (grad_embeddings(r, i) - radial * cache.z(r, i) / nrm) / nrm;
    }
  }
  EncoderGrads g;
  g.w2 = dz * cache.hidden.transpose();
  g.b2 = Vector(dims.output, 0.0);
  for (std::size_t r = 0; r < dims.output; ++r)
    for (Real x : dz.row(r)) g.b2[r] += x;
  Matrix dpre = enc.w2.transpose() * dz;
  for (std::size_t i = 0; i < dpre.data().size(); ++i)
    if (!(cache.pre.data()[i] > 0.0)) dpre.data()[i] = 0.0;
  g.w1 = dpre * cache.input.transpose();
  g.b1 = Vector(dims.hidden, 0.0);
  for (std::size_t r = 0; r < dims.hidden; ++r)
    for (Real x : dpre.row(r)) g.b1[r] += x;
  return g;
}

SgdState::SgdState(const EncoderDims& dims, Real lr_max, Real lr_min, std::size_t horizon, Real momentum,
                   Real weight_decay)
    : lr_max_(lr_max),
      lr_min_(lr_min),
      horizon_(horizon),
      momentum_(momentum),
      weight_decay_(weight_decay),
      velocity_(zero_grads(dims)) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(Errc::invalid_argument, "momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw Error(Errc::invalid_argument, "weight decay must be nonnegative");
}

Real SgdState::lr(std::size_t epoch) const {
  if (horizon_ == 0 || epoch >= horizon_) return epoch == 0 && horizon_ == 0 ? lr_max_ : lr_min_;
  const Real progress = static_cast<Real>(epoch) / static_cast<Real>(horizon_);
  return lr_min_ + 0.5 * (lr_max_ - lr_min_) * (1.0 + std::cos(std::numbers::pi * progress));
}

void SgdState::reschedule(Real lr_max, Real lr_min, std::size_t horizon) {
  lr_max_ = lr_max;
  lr_min_ = lr_min;
  horizon_ = horizon;
}

namespace {
void update_tensor(std::span<Real> param, std::span<const Real> grad, std::span<Real> vel, Real mom, Real wd,
                   Real lr) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    vel[i] = mom * vel[i] + grad[i] + wd * param[i];
    param[i] -= lr * vel[i];
  }
}
}  // namespace

void SgdState::step(Encoder& enc, const EncoderGrads& grads, std::size_t epoch) {
  if (grads.w1.rows() != enc.w1.rows() || grads.w1.cols() != enc.w1.cols() || grads.w2.rows() != enc.w2.rows() ||
      grads.w2.cols() != enc.w2.cols() || grads.b1.size() != enc.b1.size() || grads.b2.size() != enc.b2.size()) {
    throw Error(Errc::invalid_argument, "sgd_step: gradient shapes do not match the encoder");
  }
  const Real rate = lr(epoch);
  update_tensor(enc.w1.data(), grads.w1.data(), velocity_.w1.data(), momentum_, weight_decay_, rate);
  update_tensor(enc.b1, grads.b1, velocity_.b1, momentum_, weight_decay_, rate);
  update_tensor(enc.w2.data(), grads.w2.data(), velocity_.w2.data(), momentum_, weight_decay_, rate);
  update_tensor(enc.b2, grads.b2, velocity_.b2, momentum_, weight_decay_, rate);
}

void sgd_step(Encoder& enc, const EncoderGrads& grads, SgdState& state, std::size_t epoch) {
  state.step(enc, grads, epoch);
}

namespace {
constexpr const char* kCheckpointMagic = "gh-encoder-checkpoint v1";

void write_values(std::ostream& out, std::span<const Real> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out << ' ';
    out << format_real(values[i]);
  }
  out << '\n';
}

void read_values(std::istream& in, std::span<Real> values) {
  for (auto& v : values) {
    std::string tok;
    if (!(in >> tok)) throw Error(Errc::io, "checkpoint: truncated tensor data");
    v = parse_real(tok);
  }
}
}  // namespace

void write_checkpoint(std::ostream& out, const Encoder& enc) {
  const EncoderDims dims = enc.dims();
  out << kCheckpointMagic << '\n';
  out << dims.input << ' ' << dims.hidden << ' ' << dims.output << ' ' << enc.seed << '\n';
  write_values(out, enc.w1.data());
  write_values(out, enc.b1);
  write_values(out, enc.w2.data());
  write_values(out, enc.b2);
}

Encoder read_checkpoint(std::istream& in) {
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) throw Error(Errc::io, "checkpoint: unrecognized header '" + magic + "'");
  EncoderDims dims;
  Encoder enc;
  if (!(in >> dims.input >> dims.hidden >> dims.output >> enc.seed)) throw Error(Errc::io, "checkpoint: bad dims line");
  enc.w1 = Matrix(dims.hidden, dims.input);
  enc.b1 = Vector(dims.hidden);
  enc.w2 = Matrix(dims.output, dims.hidden);
  enc.b2 = Vector(dims.output);
  read_values(in, enc.w1.data());
  read_values(in, enc.b1);
  read_values(in, enc.w2.data());
  read_values(in, enc.b2);
  return enc;
}

void save_checkpoint(const std::string& path, const Encoder& enc) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot write " + path);
  write_checkpoint(out, enc);
}

Encoder load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot read " + path);
  return read_checkpoint(in);
}

}  // namespace gh
