#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "gh/geometry.hpp"
#include "gh/numerics.hpp"

namespace gh {

/// Column i is softmax(M^T f_i / gamma_gh).
struct GeometricPredictions {
  Matrix q;
  Real gamma_gh = 0.1;
};

GeometricPredictions geometric_predict(const Matrix& embeddings, const GeometricStructure& structure,
                                       Real gamma_gh);

/// Per-sample exponential moving average of geometric predictions.
class MomentumTracker {
 public:
  explicit MomentumTracker(Real beta);

  Real beta() const noexcept { return beta_; }
  bool empty() const noexcept { return q_m_.empty(); }
  const Matrix& q_m() const noexcept { return q_m_; }

  /// q_m <- beta q_m + (1 - beta) q. An empty tracker adopts `fresh` as is.
  void update(const GeometricPredictions& fresh);

 private:
  Real beta_;
  Matrix q_m_;
};

MomentumTracker momentum_update(MomentumTracker tracker, const GeometricPredictions& fresh);

struct ClassPrior {
  Vector pi;
  Real floor = 0.0;
};

/// Default floor used by the trainer: 1e-4 / K.
Real default_prior_floor(std::size_t k);

/// Column-mean of q_m with small entries lifted to `floor`; the others are
/// rescaled so that pi sums to 1 while every entry stays >= floor.
ClassPrior estimate_prior(const MomentumTracker& tracker, Real floor);
ClassPrior estimate_prior(const Matrix& predictions, Real floor);
ClassPrior uniform_prior(std::size_t k);

struct SinkhornConfig {
  Real lambda = 20.0;
  std::size_t max_iters = 300;
  Real stop_eps = 1e-6;
};

struct AssignmentResult {
  Matrix q_hat;
  std::size_t iterations_used = 0;
  Real final_criterion = 0.0;
  bool converged = false;
  /// criterion value after every sweep, in order
  std::vector<Real> criterion_trace;
};

inline constexpr Real kProbabilityClip = 1e-30;

/// Entropic optimal transport of predictions (K×N) onto row marginals N*pi
/// and unit column sums. Iterates in the log domain on the kernel
/// lambda*log(Q); the returned plan is N * diag(e^u) Q^lambda diag(e^v).
AssignmentResult sinkhorn_allocate(const Matrix& predictions, const ClassPrior& prior,
                                   const SinkhornConfig& config = {});

/// sum_i |u_new_i / u_old_i - 1| for scaling vectors in the multiplicative domain.
Real convergence_criterion(std::span<const Real> u_new, std::span<const Real> u_old);

/// Per-column argmax, lowest index on ties.
std::vector<int> hard_labels(const Matrix& q_hat);

/// `sample_index,argmax_label,q_hat_0..q_hat_{K-1}`
void write_assignment_csv(std::ostream& out, const AssignmentResult& result);

}  // namespace gh
