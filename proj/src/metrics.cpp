#include "gh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "gh/error.hpp"

namespace gh {

ClassMeans class_means(const Matrix& embeddings, std::span<const int> labels, std::size_t classes) {
  if (labels.size() != embeddings.cols()) throw Error(Errc::invalid_argument, "class_means: label count mismatch");
  ClassMeans out{Matrix(embeddings.rows(), classes), std::vector<std::size_t>(classes, 0)};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw Error(Errc::invalid_argument, "class_means: label " + std::to_string(l) + " out of range");
    }
    ++out.counts[static_cast<std::size_t>(l)];
    for (std::size_t r = 0; r < embeddings.rows(); ++r) out.mu(r, static_cast<std::size_t>(l)) += embeddings(r, i);
  }
  for (std::size_t l = 0; l < classes; ++l)
    if (out.counts[l] > 0)
      for (std::size_t r = 0; r < embeddings.rows(); ++r) out.mu(r, l) /= static_cast<Real>(out.counts[l]);
  return out;
}

namespace {

Real mean_distance(const ClassMeans& means, std::size_t i, std::size_t j) {
  Real s = 0.0;
  for (std::size_t r = 0; r < means.mu.rows(); ++r) {
    const Real diff = means.mu(r, i) - means.mu(r, j);
    s += diff * diff;
  }
  return std::sqrt(s);
}

std::vector<std::size_t> present_classes(const ClassMeans& means) {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < means.num_classes(); ++l)
    if (means.present(l)) out.push_back(l);
  return out;
}

}  // namespace

Real inter_class_uniformity(const ClassMeans& means) {
  const auto cls = present_classes(means);
  if (cls.size() < 2) throw Error(Errc::invalid_argument, "inter_class_uniformity: need at least 2 classes");
  Real total = 0.0;
  for (std::size_t a : cls)
    for (std::size_t b : cls)
      if (a != b) total += mean_distance(means, a, b);
  const Real l = static_cast<Real>(cls.size());
  return total / (l * (l - 1.0));
}

Real neighborhood_uniformity(const ClassMeans& means, std::size_t k) {
  const auto cls = present_classes(means);
  if (k == 0 || k >= cls.size()) {
    throw Error(Errc::invalid_argument, "neighborhood_uniformity: need 1 <= k < L, got k=" + std::to_string(k));
  }
  Real total = 0.0;
  Vector dists;
  for (std::size_t a : cls) {
    dists.clear();
    for (std::size_t b : cls)
      if (a != b) dists.push_back(mean_distance(means, a, b));
    std::partial_sort(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k), dists.end());
    total += std::accumulate(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k), 0.0);
  }
  return total / (static_cast<Real>(cls.size()) * static_cast<Real>(k));
}

namespace {
Real entropy_of(const std::map<int, std::size_t>& counts, Real n) {
  Real h = 0.0;
  for (const auto& [_, c] : counts) {
    const Real p = static_cast<Real>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}
}  // namespace

Real nmi(std::span<const int> labels_a, std::span<const int> labels_b) {
  if (labels_a.size() != labels_b.size()) throw Error(Errc::invalid_argument, "nmi: labelings differ in length");
  if (labels_a.empty()) throw Error(Errc::invalid_argument, "nmi: empty labelings");
  const Real n = static_cast<Real>(labels_a.size());
  std::map<int, std::size_t> ca, cb;
  std::map<std::pair<int, int>, std::size_t> joint;
  for (std::size_t i = 0; i < labels_a.size(); ++i) {
    ++ca[labels_a[i]];
    ++cb[labels_b[i]];
    ++joint[{labels_a[i], labels_b[i]}];
  }
  const Real ha = entropy_of(ca, n);
  const Real hb = entropy_of(cb, n);
  if (ha <= 0.0 || hb <= 0.0) {
    // With a constant labeling the pair are mutual functions only when both are constant.
    return (ca.size() == 1 && cb.size() == 1) ? 1.0 : 0.0;
  }
  // Terms are summed in sorted order so that nmi(a, b) == nmi(b, a) bitwise.
  Vector terms;
  terms.reserve(joint.size());
  for (const auto& [key, c] : joint) {
    const Real pab = static_cast<Real>(c) / n;
    const Real pa = static_cast<Real>(ca[key.first]) / n;
    const Real pb = static_cast<Real>(cb[key.second]) / n;
    terms.push_back(pab * std::log(pab / (pa * pb)));
  }
  std::sort(terms.begin(), terms.end());
  const Real mi = std::accumulate(terms.begin(), terms.end(), 0.0);
  const Real value = mi / std::sqrt(ha * hb);
  return std::clamp(value, 0.0, 1.0);
}

Real minority_collapse_score(const ClassMeans& means, std::span<const std::size_t> tail) {
  if (tail.size() < 2) throw Error(Errc::invalid_argument, "minority_collapse_score: need at least 2 tail classes");
  Real best = std::numeric_limits<Real>::infinity();
  for (std::size_t i = 0; i < tail.size(); ++i)
    for (std::size_t j = i + 1; j < tail.size(); ++j) best = std::min(best, mean_distance(means, tail[i], tail[j]));
  return best;
}

std::vector<std::size_t> tail_classes(std::span<const std::size_t> class_counts) {
  std::vector<std::size_t> order(class_counts.size());
  std::iota(order.begin(), order.end(), 0);
  // ascending count; among equal counts the higher index counts as "more tail"
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (class_counts[a] != class_counts[b]) return class_counts[a] < class_counts[b];
    return a > b;
  });
  order.resize(class_counts.size() / 2);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<int> cardinality_groups(std::span<const std::size_t> class_counts) {
  const std::size_t l = class_counts.size();
  std::vector<std::size_t> order(l);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return class_counts[a] > class_counts[b]; });
  const std::size_t many = (l + 2) / 3;
  const std::size_t med = (l - many + 1) / 2;
  std::vector<int> group(l, 2);
  for (std::size_t i = 0; i < l; ++i) group[order[i]] = i < many ? 0 : (i < many + med ? 1 : 2);
  return group;
}

GroupReport group_report(std::span<const Real> per_class_accuracy, std::span<const std::size_t> class_counts) {
  if (per_class_accuracy.size() != class_counts.size() || per_class_accuracy.empty()) {
    throw Error(Errc::invalid_argument, "group_report: accuracy and count vectors differ");
  }
  const auto groups = cardinality_groups(class_counts);
  Real sums[3] = {0, 0, 0};
  std::size_t counts[3] = {0, 0, 0};
  GroupReport rep;
  rep.per_class.assign(per_class_accuracy.begin(), per_class_accuracy.end());
  for (std::size_t l = 0; l < groups.size(); ++l) {
    sums[groups[l]] += per_class_accuracy[l];
    ++counts[groups[l]];
    rep.avg += per_class_accuracy[l];
  }
  rep.avg /= static_cast<Real>(per_class_accuracy.size());
  Real acc[3];
  for (int g = 0; g < 3; ++g) acc[g] = counts[g] ? sums[g] / static_cast<Real>(counts[g]) : 0.0;
  rep.many_acc = acc[0];
  rep.med_acc = acc[1];
  rep.few_acc = acc[2];
  const Real mean = (acc[0] + acc[1] + acc[2]) / 3.0;
  Real var = 0.0;
  for (Real a : acc) var += (a - mean) * (a - mean);
  rep.std = std::sqrt(var / 3.0);
  return rep;
}

GroupReport linear_probe(const Matrix& train_feats, std::span<const int> train_labels, const Matrix& test_feats,
                         std::span<const int> test_labels, std::size_t classes,
                         std::span<const std::size_t> train_class_counts, const ProbeConfig& cfg) {
  const std::size_t d = train_feats.rows();
  const std::size_t n = train_feats.cols();
  if (train_labels.size() != n || test_labels.size() != test_feats.cols() || test_feats.rows() != d) {
    throw Error(Errc::invalid_argument, "linear_probe: feature/label shape mismatch");
  }
  if (train_class_counts.size() != classes) throw Error(Errc::invalid_argument, "linear_probe: class count mismatch");
  std::vector<std::size_t> probe_counts(classes, 0);
  for (int l : train_labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) throw Error(Errc::invalid_argument, "linear_probe: label out of range");
    ++probe_counts[static_cast<std::size_t>(l)];
  }
  if (std::adjacent_find(probe_counts.begin(), probe_counts.end(), std::not_equal_to<>()) != probe_counts.end()) {
    throw Error(Errc::degenerate_input, "linear_probe: probe training set is not class-balanced");
  }

  // weights: classes × (d + 1), last column is the bias
  Matrix w(classes, d + 1);
  Matrix grad(classes, d + 1);
  Vector logits(classes);
  const Real inv_n = 1.0 / static_cast<Real>(n);
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    std::fill(grad.data().begin(), grad.data().end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < classes; ++c) {
        Real s = w(c, d);
        for (std::size_t r = 0; r < d; ++r) s += w(c, r) * train_feats(r, i);
        logits[c] = s;
      }
      const Vector p = softmax(logits);
      for (std::size_t c = 0; c < classes; ++c) {
        const Real delta = (p[c] - (static_cast<std::size_t>(train_labels[i]) == c ? 1.0 : 0.0)) * inv_n;
        for (std::size_t r = 0; r < d; ++r) grad(c, r) += delta * train_feats(r, i);
        grad(c, d) += delta;
      }
    }
    if (norm2(grad.data()) < cfg.grad_tol) break;
    for (std::size_t j = 0; j < w.data().size(); ++j) w.data()[j] -= cfg.lr * grad.data()[j];
  }

  std::vector<std::size_t> correct(classes, 0), total(classes, 0);
  for (std::size_t i = 0; i < test_feats.cols(); ++i) {
    std::size_t best = 0;
    Real best_score = -std::numeric_limits<Real>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      Real s = w(c, d);
      for (std::size_t r = 0; r < d; ++r) s += w(c, r) * test_feats(r, i);
      if (s > best_score) {
        best_score = s;
        best = c;
      }
    }
    const auto truth = static_cast<std::size_t>(test_labels[i]);
    ++total[truth];
    if (best == truth) ++correct[truth];
  }
  Vector per_class(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c)
    per_class[c] = total[c] ? static_cast<Real>(correct[c]) / static_cast<Real>(total[c]) : 0.0;
  return group_report(per_class, train_class_counts);
}

std::vector<Real> matched_vertex_cosines(const ClassMeans& means, const Matrix& vertices) {
  const std::size_t l = means.num_classes();
  const std::size_t k = vertices.cols();
  struct Candidate {
    Real cosine;
    std::size_t cls;
    std::size_t vertex;
  };
  std::vector<Candidate> candidates;
  for (std::size_t c = 0; c < l; ++c) {
    if (!means.present(c)) continue;
    const Real mn = column_norm(means.mu, c);
    for (std::size_t v = 0; v < k; ++v) {
      Real s = 0.0;
      for (std::size_t r = 0; r < vertices.rows(); ++r) s += means.mu(r, c) * vertices(r, v);
      const Real cosine = mn > 0.0 ? s / (mn * column_norm(vertices, v)) : -1.0;
      candidates.push_back({cosine, c, v});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.cosine > b.cosine; });
  std::vector<Real> out(l, std::numeric_limits<Real>::quiet_NaN());
  std::vector<bool> class_done(l, false), vertex_used(k, false);
  for (const auto& cand : candidates) {
    if (class_done[cand.cls] || vertex_used[cand.vertex]) continue;
    class_done[cand.cls] = true;
    vertex_used[cand.vertex] = true;
    out[cand.cls] = cand.cosine;
  }
  return out;
}

}  // namespace gh
