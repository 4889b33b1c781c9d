#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "gh/numerics.hpp"

namespace gh {

struct EncoderDims {
  std::size_t input = 2;
  std::size_t hidden = 20;
  std::size_t output = 2;
};

/// x -> normalize(W2 relu(W1 x + b1) + b2).
struct Encoder {
  Matrix w1;  // hidden × input
  Vector b1;
  Matrix w2;  // output × hidden
  Vector b2;
  std::uint64_t seed = 0;

  EncoderDims dims() const { return {w1.cols(), w1.rows(), w2.rows()}; }
  bool operator==(const Encoder&) const = default;
};

/// Weights uniform in ±1/sqrt(fan_in), zero biases.
Encoder init_encoder(Rng& rng, const EncoderDims& dims);

struct ForwardCache {
  Matrix input;   // m × B
  Matrix pre;     // h × B, W1 x + b1
  Matrix hidden;  // h × B, relu(pre)
  Matrix z;       // d × B, unnormalized output
  Vector norms;   // ‖z_i‖
};

struct ForwardResult {
  Matrix embeddings;
  ForwardCache cache;
};

/// Throws Errc::degenerate_embedding if some ‖z_i‖ < 1e-12.
ForwardResult forward(const Encoder& enc, const Matrix& batch);

/// Parameter gradients; same layout as Encoder.
struct EncoderGrads {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;

  EncoderGrads& operator+=(const EncoderGrads& other);
};

EncoderGrads zero_grads(const EncoderDims& dims);

EncoderGrads backward(const Encoder& enc, const ForwardCache& cache, const Matrix& grad_embeddings);

/// Cosine-annealed SGD with heavy-ball momentum and coupled weight decay.
class SgdState {
 public:
  SgdState(const EncoderDims& dims, Real lr_max, Real lr_min, std::size_t horizon, Real momentum = 0.9,
           Real weight_decay = 5e-4);

  /// lr_min + (lr_max - lr_min)(1 + cos(pi t / horizon)) / 2, clamped at the horizon.
  Real lr(std::size_t epoch) const;
  /// Switch to a new annealing phase; velocity buffers are kept.
  void reschedule(Real lr_max, Real lr_min, std::size_t horizon);

  Real lr_max() const noexcept { return lr_max_; }
  Real lr_min() const noexcept { return lr_min_; }
  std::size_t horizon() const noexcept { return horizon_; }
  Real momentum() const noexcept { return momentum_; }
  Real weight_decay() const noexcept { return weight_decay_; }

  void step(Encoder& enc, const EncoderGrads& grads, std::size_t epoch);

 private:
  Real lr_max_;
  Real lr_min_;
  std::size_t horizon_;
  Real momentum_;
  Real weight_decay_;
  EncoderGrads velocity_;
};

void sgd_step(Encoder& enc, const EncoderGrads& grads, SgdState& state, std::size_t epoch);

/// Text checkpoint: magic line, dims and seed, then each tensor, all values
/// in shortest round-trip decimal form.
void write_checkpoint(std::ostream& out, const Encoder& enc);
Encoder read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Encoder& enc);
Encoder load_checkpoint(const std::string& path);

}  // namespace gh
