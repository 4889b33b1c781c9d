#include "gh/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "gh/error.hpp"
#include "gh/text_format.hpp"

namespace gh {

GeometricPredictions geometric_predict(const Matrix& embeddings, const GeometricStructure& structure,
                                       Real gamma_gh) {
  if (!(gamma_gh > 0.0)) throw Error(Errc::invalid_argument, "geometric_predict: gamma_gh must be positive");
  const Matrix& m = structure.vertices();
  if (embeddings.rows() != m.rows()) {
    throw Error(Errc::invalid_argument, "geometric_predict: embedding dim " + std::to_string(embeddings.rows()) +
                                            " != structure dim " + std::to_string(m.rows()));
  }
  for (std::size_t i = 0; i < embeddings.cols(); ++i) {
    if (std::abs(column_norm(embeddings, i) - 1.0) > 1e-6) {
      throw Error(Errc::invalid_argument, "geometric_predict: embedding column " + std::to_string(i) +
                                              " is not unit-norm");
    }
  }
  const std::size_t k = m.cols();
  const Matrix logits = m.transpose() * embeddings;
  GeometricPredictions out{Matrix(k, embeddings.cols()), gamma_gh};
  Vector column(k);
  for (std::size_t i = 0; i < embeddings.cols(); ++i) {
    for (std::size_t r = 0; r < k; ++r) column[r] = logits(r, i);
    out.q.set_col(i, softmax(column, gamma_gh));
  }
  return out;
}

MomentumTracker::MomentumTracker(Real beta) : beta_(beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(Errc::invalid_argument, "momentum beta must lie in [0, 1]");
}

void MomentumTracker::update(const GeometricPredictions& fresh) {
  if (q_m_.empty()) {
    q_m_ = fresh.q;
    return;
  }
  if (q_m_.rows() != fresh.q.rows() || q_m_.cols() != fresh.q.cols()) {
    throw Error(Errc::invalid_argument, "momentum_update: shape mismatch");
  }
  auto dst = q_m_.data();
  auto src = fresh.q.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = beta_ * dst[i] + (1.0 - beta_) * src[i];
}

MomentumTracker momentum_update(MomentumTracker tracker, const GeometricPredictions& fresh) {
  tracker.update(fresh);
  return tracker;
}

Real default_prior_floor(std::size_t k) { return 1e-4 / static_cast<Real>(k); }

ClassPrior estimate_prior(const Matrix& predictions, Real floor) {
  if (predictions.empty()) throw Error(Errc::invalid_argument, "estimate_prior: no predictions");
  const std::size_t k = predictions.rows();
  if (!(floor >= 0.0) || floor * static_cast<Real>(k) > 1.0) {
    throw Error(Errc::invalid_argument, "estimate_prior: floor must lie in [0, 1/K]");
  }
  Vector mean(k, 0.0);
  const Real n = static_cast<Real>(predictions.cols());
  for (std::size_t r = 0; r < k; ++r) {
    Real s = 0.0;
    for (Real x : predictions.row(r)) s += x;
    mean[r] = s / n;
  }
  // Floored entries sit exactly at the floor; the others share the remaining
  // mass in proportion to their means. Fixing one entry can push another
  // below the floor, hence the loop.
  std::vector<bool> pinned(k, false);
  ClassPrior prior{Vector(k, floor), floor};
  for (bool changed = true; changed;) {
    changed = false;
    Real free_sum = 0.0;
    std::size_t n_pinned = 0;
    for (std::size_t r = 0; r < k; ++r) {
      if (pinned[r]) ++n_pinned;
      else free_sum += mean[r];
    }
    const Real free_mass = 1.0 - static_cast<Real>(n_pinned) * floor;
    if (n_pinned == k) break;
    if (!(free_sum > 0.0)) {
      // nothing left to share proportionally: spread evenly
      for (std::size_t r = 0; r < k; ++r)
        if (!pinned[r]) prior.pi[r] = free_mass / static_cast<Real>(k - n_pinned);
      break;
    }
    for (std::size_t r = 0; r < k; ++r) {
      if (pinned[r]) continue;
      prior.pi[r] = mean[r] * free_mass / free_sum;
      if (prior.pi[r] < floor) {
        pinned[r] = true;
        prior.pi[r] = floor;
        changed = true;
      }
    }
  }
  return prior;
}

ClassPrior estimate_prior(const MomentumTracker& tracker, Real floor) {
  return estimate_prior(tracker.q_m(), floor);
}

ClassPrior uniform_prior(std::size_t k) {
  return ClassPrior{Vector(k, 1.0 / static_cast<Real>(k)), 0.0};
}

Real convergence_criterion(std::span<const Real> u_new, std::span<const Real> u_old) {
  if (u_new.size() != u_old.size()) throw Error(Errc::invalid_argument, "convergence_criterion: length mismatch");
  Real e = 0.0;
  for (std::size_t i = 0; i < u_new.size(); ++i) e += std::abs(u_new[i] / u_old[i] - 1.0);
  return e;
}

namespace {

// Same quantity as convergence_criterion with both vectors given as logs.
Real log_domain_criterion(const Vector& log_new, const Vector& log_old) {
  Real e = 0.0;
  for (std::size_t i = 0; i < log_new.size(); ++i) e += std::abs(std::expm1(log_new[i] - log_old[i]));
  return e;
}

}  // namespace

AssignmentResult sinkhorn_allocate(const Matrix& predictions, const ClassPrior& prior,
                                   const SinkhornConfig& config) {
  const std::size_t k = predictions.rows();
  const std::size_t n = predictions.cols();
  if (k == 0 || n == 0) throw Error(Errc::degenerate_input, "sinkhorn_allocate: empty prediction matrix");
  if (prior.pi.size() != k) {
    throw Error(Errc::invalid_argument, "sinkhorn_allocate: prior has " + std::to_string(prior.pi.size()) +
                                            " entries, predictions have " + std::to_string(k) + " rows");
  }
  if (!(config.lambda > 0.0)) throw Error(Errc::invalid_argument, "sinkhorn_allocate: lambda must be positive");
  Real pi_total = 0.0;
  for (Real p : prior.pi) {
    if (!(p > 0.0) || !std::isfinite(p)) {
      throw Error(Errc::degenerate_input, "sinkhorn_allocate: prior entries must be positive (infeasible row marginal)");
    }
    pi_total += p;
  }
  if (std::abs(pi_total - 1.0) > 1e-8) {
    throw Error(Errc::degenerate_input, "sinkhorn_allocate: prior does not sum to 1");
  }
  if (!all_finite(predictions.data())) throw Error(Errc::invalid_argument, "sinkhorn_allocate: non-finite predictions");

  // log kernel lambda * log(max(Q, clip)); all-clipped rows or columns carry no mass.
  Matrix log_kernel(k, n);
  std::vector<bool> row_has_mass(k, false), col_has_mass(n, false);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t i = 0; i < n; ++i) {
      const Real q = predictions(r, i);
      if (q > kProbabilityClip) {
        row_has_mass[r] = true;
        col_has_mass[i] = true;
      }
      log_kernel(r, i) = config.lambda * std::log(std::max(q, kProbabilityClip));
    }
  for (std::size_t r = 0; r < k; ++r)
    if (!row_has_mass[r]) throw Error(Errc::degenerate_input, "sinkhorn_allocate: row " + std::to_string(r) + " has zero mass");
  for (std::size_t i = 0; i < n; ++i)
    if (!col_has_mass[i]) throw Error(Errc::degenerate_input, "sinkhorn_allocate: column " + std::to_string(i) + " has zero mass");

  Vector log_c(k), log_r(n, -std::log(static_cast<Real>(n)));
  for (std::size_t r = 0; r < k; ++r) log_c[r] = std::log(prior.pi[r]);

  Vector u(k, -std::log(static_cast<Real>(k)));
  Vector v(n, -std::log(static_cast<Real>(n)));
  Vector scratch(std::max(k, n));

  // Column-stabilized kernel: exp(logK - column max) lies in [0, 1], so both
  // half-sweeps become products with only O(N + K) exponentials. A row or
  // column whose sum sinks toward underflow is redone in the log domain.
  constexpr Real kUnderflowGuard = 1e-250;
  Vector col_max(n);
  for (std::size_t i = 0; i < n; ++i) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t r = 0; r < k; ++r) mx = std::max(mx, log_kernel(r, i));
    col_max[i] = mx;
  }
  Matrix kernel(k, n);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t i = 0; i < n; ++i) kernel(r, i) = std::exp(log_kernel(r, i) - col_max[i]);

  Vector w(n), a(k), sums(std::max(k, n));
  auto update_u = [&](Vector& out) {
    Real w_max = -std::numeric_limits<Real>::infinity();
    for (std::size_t i = 0; i < n; ++i) w_max = std::max(w_max, col_max[i] + v[i]);
    for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(col_max[i] + v[i] - w_max);
    for (std::size_t r = 0; r < k; ++r) {
      auto row = kernel.row(r);
      Real s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += row[i] * w[i];
      if (s > kUnderflowGuard) {
        out[r] = log_c[r] - (w_max + std::log(s));
      } else {
        auto log_row = log_kernel.row(r);
        for (std::size_t i = 0; i < n; ++i) scratch[i] = log_row[i] + v[i];
        out[r] = log_c[r] - log_sum_exp(std::span<const Real>(scratch.data(), n));
      }
    }
  };
  auto update_v = [&]() {
    const Real u_max = *std::max_element(u.begin(), u.end());
    for (std::size_t r = 0; r < k; ++r) a[r] = std::exp(u[r] - u_max);
    std::fill(sums.begin(), sums.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
    for (std::size_t r = 0; r < k; ++r) {
      auto row = kernel.row(r);
      for (std::size_t i = 0; i < n; ++i) sums[i] += row[i] * a[r];
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (sums[i] > kUnderflowGuard) {
        v[i] = log_r[i] - (col_max[i] + u_max + std::log(sums[i]));
      } else {
        for (std::size_t r = 0; r < k; ++r) scratch[r] = log_kernel(r, i) + u[r];
        v[i] = log_r[i] - log_sum_exp(std::span<const Real>(scratch.data(), k));
      }
    }
  };
  auto check_finite = [&](std::size_t iteration) {
    if (!all_finite(u) || !all_finite(v)) {
      throw Error(Errc::numerical_failure, "sinkhorn_allocate: non-finite scaling at iteration " + std::to_string(iteration));
    }
  };

  AssignmentResult result;
  update_u(u);
  Vector u_next(k);
  for (std::size_t it = 1; it <= config.max_iters; ++it) {
    update_v();
    // The criterion for sweep `it` compares the row scaling this sweep's v
    // induces with the one it was computed from.
    update_u(u_next);
    check_finite(it);
    const Real e = log_domain_criterion(u_next, u);
    u.swap(u_next);
    result.criterion_trace.push_back(e);
    result.iterations_used = it;
    result.final_criterion = e;
    if (e < config.stop_eps) {
      result.converged = true;
      break;
    }
  }

  // u was refreshed last, so row sums are exact and column sums carry the residual.
  result.q_hat = Matrix(k, n);
  const Real scale = static_cast<Real>(n);
  for (std::size_t r = 0; r < k; ++r) {
    auto src = log_kernel.row(r);
    auto dst = result.q_hat.row(r);
    for (std::size_t i = 0; i < n; ++i) dst[i] = scale * std::exp(u[r] + src[i] + v[i]);
  }
  if (!all_finite(result.q_hat.data())) {
    throw Error(Errc::numerical_failure, "sinkhorn_allocate: non-finite plan after " +
                                             std::to_string(result.iterations_used) + " iterations");
  }
  return result;
}

std::vector<int> hard_labels(const Matrix& q_hat) {
  std::vector<int> labels(q_hat.cols(), 0);
  for (std::size_t i = 0; i < q_hat.cols(); ++i) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < q_hat.rows(); ++r)
      if (q_hat(r, i) > q_hat(best, i)) best = r;
    labels[i] = static_cast<int>(best);
  }
  return labels;
}

void write_assignment_csv(std::ostream& out, const AssignmentResult& result) {
  const Matrix& q = result.q_hat;
  out << "sample_index,argmax_label";
  for (std::size_t r = 0; r < q.rows(); ++r) out << ",q_hat_" << r;
  out << '\n';
  const auto labels = hard_labels(q);
  for (std::size_t i = 0; i < q.cols(); ++i) {
    out << i << ',' << labels[i];
    for (std::size_t r = 0; r < q.rows(); ++r) out << ',' << format_real(q(r, i));
    out << '\n';
  }
}

}  // namespace gh
