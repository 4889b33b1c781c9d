#include "gh/losses.hpp"

#include <cmath>

#include "gh/error.hpp"

namespace gh {

std::string to_string(BaseLoss kind) { return kind == BaseLoss::infonce ? "infonce" : "focal"; }

BaseLoss parse_base_loss(const std::string& text) {
  if (text == "infonce") return BaseLoss::infonce;
  if (text == "focal") return BaseLoss::focal;
  throw Error(Errc::invalid_argument, "unknown loss kind '" + text + "'");
}

namespace {

void check_views(const BatchViews& views) {
  if (views.a.rows() != views.b.rows() || views.a.cols() != views.b.cols()) {
    throw Error(Errc::invalid_argument, "views must have identical shapes");
  }
  if (views.a.cols() < 2) throw Error(Errc::invalid_argument, "contrastive loss needs B >= 2 (no negatives otherwise)");
}

// Per-anchor softmax over the 2B-1 other embeddings at temperature t.
struct ContrastiveTerms {
  std::size_t n = 0;       // 2B
  Matrix z;                // d × 2B, [a | b]
  Matrix prob;             // n × n, row i = softmax over j != i (diagonal 0)
  Vector log_p_pos;        // log likelihood of each anchor's positive
};

std::size_t partner(std::size_t i, std::size_t b) { return i < b ? i + b : i - b; }

ContrastiveTerms contrastive_terms(const BatchViews& views, Real t) {
  const std::size_t b = views.a.cols();
  const std::size_t d = views.a.rows();
  ContrastiveTerms terms;
  terms.n = 2 * b;
  terms.z = Matrix(d, terms.n);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t j = 0; j < b; ++j) {
      terms.z(r, j) = views.a(r, j);
      terms.z(r, j + b) = views.b(r, j);
    }
  const Matrix sim = terms.z.transpose() * terms.z;
  terms.prob = Matrix(terms.n, terms.n);
  terms.log_p_pos.resize(terms.n);
  Vector logits(terms.n - 1);
  for (std::size_t i = 0; i < terms.n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < terms.n; ++j)
      if (j != i) logits[c++] = sim(i, j) / t;
    const Real lse = log_sum_exp(logits);
    for (std::size_t j = 0; j < terms.n; ++j)
      if (j != i) terms.prob(i, j) = std::exp(sim(i, j) / t - lse);
    terms.log_p_pos[i] = sim(i, partner(i, b)) / t - lse;
  }
  return terms;
}

// Gradient of sum_i c_i * (-log p_i) w.r.t. every embedding, split back into views.
void accumulate_weighted_nce_grad(const ContrastiveTerms& terms, const Vector& c, Real t, PairLoss& out) {
  const std::size_t n = terms.n;
  const std::size_t b = n / 2;
  const std::size_t d = terms.z.rows();
  // coef(i, j): weight of z_j in dL/dz_i
  Matrix coef(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = partner(i, b);
    coef(i, p) -= c[i] + c[p];
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) coef(i, j) += c[i] * terms.prob(i, j) + c[j] * terms.prob(j, i);
  }
  // coef is symmetric, so z * coef^T == z * coef.
  const Matrix g = terms.z * coef;  // d × n
  out.grad_a = Matrix(d, b);
  out.grad_b = Matrix(d, b);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t j = 0; j < b; ++j) {
      out.grad_a(r, j) = g(r, j) / t;
      out.grad_b(r, j) = g(r, j + b) / t;
    }
}

}  // namespace

PairLoss infonce_loss(const BatchViews& views, const LossConfig& cfg) {
  check_views(views);
  if (!(cfg.gamma_cl > 0.0)) throw Error(Errc::invalid_argument, "gamma_cl must be positive");
  const ContrastiveTerms terms = contrastive_terms(views, cfg.gamma_cl);
  const Real inv_n = 1.0 / static_cast<Real>(terms.n);
  PairLoss out;
  for (Real lp : terms.log_p_pos) out.loss -= lp * inv_n;
  accumulate_weighted_nce_grad(terms, Vector(terms.n, inv_n), cfg.gamma_cl, out);
  return out;
}

PairLoss focal_loss(const BatchViews& views, const LossConfig& cfg) {
  check_views(views);
  if (!(cfg.gamma_f > 0.0)) throw Error(Errc::invalid_argument, "gamma_f must be positive");
  const Real g = cfg.gamma_f;
  const ContrastiveTerms terms = contrastive_terms(views, g);
  const Real inv_n = 1.0 / static_cast<Real>(terms.n);
  PairLoss out;
  Vector c(terms.n);
  for (std::size_t i = 0; i < terms.n; ++i) {
    const Real log_p = terms.log_p_pos[i];
    const Real p = std::exp(log_p);
    const Real one_minus = -std::expm1(log_p);
    out.loss -= std::pow(one_minus, g) * log_p * inv_n;
    // d loss_i / d log p_i = g p (1-p)^(g-1) log p - (1-p)^g; as a weight on -log p it flips sign.
    const Real d_dlogp = g * p * std::pow(one_minus, g - 1.0) * log_p - std::pow(one_minus, g);
    c[i] = -d_dlogp * inv_n;
  }
  accumulate_weighted_nce_grad(terms, c, g, out);
  return out;
}

PairLoss base_loss(const BatchViews& views, const LossConfig& cfg) {
  return cfg.base == BaseLoss::infonce ? infonce_loss(views, cfg) : focal_loss(views, cfg);
}

SingleLoss gh_loss(const Matrix& embeddings, const Matrix& surrogate, const GeometricStructure& structure,
                   const LossConfig& cfg) {
  const Matrix& m = structure.vertices();
  const std::size_t k = m.cols();
  const std::size_t b = embeddings.cols();
  if (embeddings.rows() != m.rows() || surrogate.rows() != k || surrogate.cols() != b) {
    throw Error(Errc::invalid_argument, "gh_loss: shape mismatch between embeddings, surrogate labels and structure");
  }
  if (b == 0) throw Error(Errc::invalid_argument, "gh_loss: empty batch");
  if (!(cfg.gamma_gh > 0.0)) throw Error(Errc::invalid_argument, "gamma_gh must be positive");
  const Real t = cfg.gamma_gh;
  const Matrix logits = m.transpose() * embeddings;
  // dL/dlogits, scaled so that grad = M * dlogits
  Matrix dlogits(k, b);
  SingleLoss out;
  Vector column(k);
  const Real inv_b = 1.0 / static_cast<Real>(b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t r = 0; r < k; ++r) column[r] = logits(r, i) / t;
    const Real lse = log_sum_exp(column);
    Real mass = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
      out.loss -= surrogate(r, i) * (column[r] - lse) * inv_b;
      mass += surrogate(r, i);
    }
    for (std::size_t r = 0; r < k; ++r) {
      dlogits(r, i) = (mass * std::exp(column[r] - lse) - surrogate(r, i)) * inv_b / t;
    }
  }
  out.grad = m * dlogits;
  return out;
}

PairLoss combined_loss(const BatchViews& views, const Matrix& surrogate_a, const Matrix& surrogate_b,
                       const GeometricStructure& structure, const LossConfig& cfg) {
  PairLoss out = base_loss(views, cfg);
  if (cfg.w_gh == 0.0) return out;
  // Cross-supervision: each view's surrogate labels supervise the other view.
  const SingleLoss on_b = gh_loss(views.b, surrogate_a, structure, cfg);
  const SingleLoss on_a = gh_loss(views.a, surrogate_b, structure, cfg);
  const Real w = 0.5 * cfg.w_gh;
  out.loss += w * (on_a.loss + on_b.loss);
  for (std::size_t i = 0; i < out.grad_a.data().size(); ++i) {
    out.grad_a.data()[i] += w * on_a.grad.data()[i];
    out.grad_b.data()[i] += w * on_b.grad.data()[i];
  }
  return out;
}

}  // namespace gh
