#pragma once

#include <string>

#include "gh/geometry.hpp"
#include "gh/numerics.hpp"

namespace gh {

enum class BaseLoss { infonce, focal };

std::string to_string(BaseLoss kind);
BaseLoss parse_base_loss(const std::string& text);

struct LossConfig {
  Real gamma_cl = 0.2;
  Real gamma_gh = 0.1;
  Real w_gh = 1.0;
  /// Focal loss uses this both as similarity temperature and focusing exponent.
  Real gamma_f = 2.0;
  BaseLoss base = BaseLoss::infonce;
};

/// Two augmented views of B anchors, as d×B matrices of unit embeddings.
struct BatchViews {
  Matrix a;
  Matrix b;
};

struct PairLoss {
  Real loss = 0.0;
  Matrix grad_a;
  Matrix grad_b;
};

struct SingleLoss {
  Real loss = 0.0;
  Matrix grad;
};

/// Symmetric NT-Xent over the 2B embeddings: each one's positive is its paired
/// view, the other 2B-2 are negatives.
PairLoss infonce_loss(const BatchViews& views, const LossConfig& cfg);

/// Cross-entropy of softmax(M^T f / gamma_gh) against fixed surrogate labels.
SingleLoss gh_loss(const Matrix& embeddings, const Matrix& surrogate, const GeometricStructure& structure,
                   const LossConfig& cfg);

/// mean of -(1 - p)^gamma_f log p, p the in-batch positive likelihood at temperature gamma_f.
PairLoss focal_loss(const BatchViews& views, const LossConfig& cfg);

PairLoss base_loss(const BatchViews& views, const LossConfig& cfg);

/// base + w_gh * (gh(view_b, q_hat_a) + gh(view_a, q_hat_b)) / 2.
PairLoss combined_loss(const BatchViews& views, const Matrix& surrogate_a, const Matrix& surrogate_b,
                       const GeometricStructure& structure, const LossConfig& cfg);

}  // namespace gh
