#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gh/numerics.hpp"

namespace gh {

/// Per-class arithmetic means of embeddings. Classes without samples have
/// count 0 and a zero column; distance-based metrics skip them.
struct ClassMeans {
  Matrix mu;  // d × L
  std::vector<std::size_t> counts;

  std::size_t num_classes() const noexcept { return counts.size(); }
  bool present(std::size_t l) const { return counts[l] > 0; }
};

ClassMeans class_means(const Matrix& embeddings, std::span<const int> labels, std::size_t classes);

/// Mean pairwise distance between distinct class means.
Real inter_class_uniformity(const ClassMeans& means);

/// Mean over classes of (sum of the k smallest distances to other class means) / k.
Real neighborhood_uniformity(const ClassMeans& means, std::size_t k);

/// I(a;b) / sqrt(H(a) H(b)), natural logs.
Real nmi(std::span<const int> labels_a, std::span<const int> labels_b);

/// Smallest pairwise distance among the given classes' means.
Real minority_collapse_score(const ClassMeans& means, std::span<const std::size_t> tail_classes);

/// The floor(L/2) least-populous classes (ties resolved toward higher index).
std::vector<std::size_t> tail_classes(std::span<const std::size_t> class_counts);

/// Many / medium / few groups: classes sorted by descending cardinality,
/// split into terciles of sizes ceil(L/3), then the rest halved (larger first).
std::vector<int> cardinality_groups(std::span<const std::size_t> class_counts);

struct GroupReport {
  Real many_acc = 0.0;
  Real med_acc = 0.0;
  Real few_acc = 0.0;
  /// population standard deviation of the three group accuracies
  Real std = 0.0;
  /// mean per-class accuracy
  Real avg = 0.0;
  std::vector<Real> per_class;
};

GroupReport group_report(std::span<const Real> per_class_accuracy, std::span<const std::size_t> class_counts);

struct ProbeConfig {
  std::size_t max_iters = 10000;
  Real grad_tol = 1e-6;
  Real lr = 0.5;
};

/// Multinomial logistic regression on frozen features (with bias), full-batch
/// gradient descent. `train_class_counts` are the long-tailed training
/// cardinalities used for grouping. Throws if the probe training set is not
/// class-balanced.
GroupReport linear_probe(const Matrix& train_feats, std::span<const int> train_labels, const Matrix& test_feats,
                         std::span<const int> test_labels, std::size_t classes,
                         std::span<const std::size_t> train_class_counts, const ProbeConfig& cfg = {});

/// Greedy bijective matching of unit-normalized class means to vertices by
/// descending cosine; returns the cosine each class received (NaN if absent).
std::vector<Real> matched_vertex_cosines(const ClassMeans& means, const Matrix& vertices);

}  // namespace gh
