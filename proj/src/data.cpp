#include "gh/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "gh/error.hpp"
#include "gh/text_format.hpp"

namespace gh {

std::vector<std::size_t> long_tail_counts(std::size_t classes, std::size_t n_max, Real ratio) {
  if (classes < 2) throw Error(Errc::invalid_argument, "need at least 2 classes");
  if (!(ratio >= 1.0) || !std::isfinite(ratio)) throw Error(Errc::invalid_argument, "imbalance ratio must be >= 1");
  if (n_max < classes) throw Error(Errc::invalid_argument, "n_max must be at least the number of classes");
  std::vector<std::size_t> counts(classes);
  for (std::size_t i = 0; i < classes; ++i) {
    const Real exponent = -static_cast<Real>(i) / static_cast<Real>(classes - 1);
    // The tolerance keeps exact powers such as 512 * 64^(-1/3) = 128 from flooring to 127.
    const Real raw = static_cast<Real>(n_max) * std::pow(ratio, exponent);
    counts[i] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(raw + 1e-9)));
  }
  return counts;
}

Matrix circle_means(std::size_t classes) {
  Matrix means(2, classes);
  for (std::size_t l = 0; l < classes; ++l) {
    const Real angle = std::numbers::pi / 4.0 + 2.0 * std::numbers::pi * static_cast<Real>(l) / static_cast<Real>(classes);
    means(0, l) = std::cos(angle);
    means(1, l) = std::sin(angle);
  }
  return means;
}

LongTailDataset generate(Rng& rng, const GenerateConfig& cfg) {
  if (!(cfg.blob_std >= 0.0)) throw Error(Errc::invalid_argument, "blob_std must be nonnegative");
  LongTailDataset ds;
  ds.class_counts = cfg.counts_override.empty() ? long_tail_counts(cfg.classes, cfg.n_max, cfg.ratio)
                                                : cfg.counts_override;
  if (ds.class_counts.size() != cfg.classes) throw Error(Errc::invalid_argument, "counts override has wrong length");
  ds.ratio = cfg.ratio;
  ds.blob_std = cfg.blob_std;
  ds.seed = rng.seed();

  const Matrix means = cfg.layout == ClassLayout::circle ? circle_means(cfg.classes) : cfg.custom_means;
  if (means.cols() != cfg.classes) throw Error(Errc::invalid_argument, "custom means must have one column per class");
  std::size_t total = 0;
  for (auto c : ds.class_counts) total += c;
  const std::size_t m = means.rows();
  ds.points = Matrix(m, total);
  ds.labels.reserve(total);
  std::size_t col = 0;
  for (std::size_t l = 0; l < cfg.classes; ++l) {
    for (std::size_t s = 0; s < ds.class_counts[l]; ++s, ++col) {
      for (std::size_t r = 0; r < m; ++r) ds.points(r, col) = means(r, l) + cfg.blob_std * rng.normal();
      ds.labels.push_back(static_cast<int>(l));
    }
  }
  return ds;
}

ProbeSets balanced_probe_sets(const LongTailDataset& source, std::size_t per_class) {
  if (per_class == 0) throw Error(Errc::invalid_argument, "probe sets need at least one sample per class");
  GenerateConfig g;
  g.classes = source.num_classes();
  g.blob_std = source.blob_std;
  g.counts_override.assign(g.classes, per_class);
  Rng train_rng = Rng(source.seed).split(101);
  Rng test_rng = Rng(source.seed).split(202);
  ProbeSets sets{generate(train_rng, g), generate(test_rng, g)};
  sets.train.seed = sets.test.seed = source.seed;
  return sets;
}

AugmentedPair augment_pair(Rng& rng, const Matrix& points, const AugmentConfig& cfg) {
  if (!(cfg.noise_std >= 0.0)) throw Error(Errc::invalid_argument, "noise_std must be nonnegative");
  AugmentedPair pair{points, points};
  if (cfg.noise_std == 0.0) return pair;
  // Column-major draw order: view a then view b for each sample.
  for (std::size_t i = 0; i < points.cols(); ++i) {
    for (std::size_t r = 0; r < points.rows(); ++r) pair.a(r, i) += cfg.noise_std * rng.normal();
    for (std::size_t r = 0; r < points.rows(); ++r) pair.b(r, i) += cfg.noise_std * rng.normal();
  }
  return pair;
}

namespace {
std::vector<std::size_t> permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  // Fisher-Yates with the project Rng (std::shuffle is implementation-defined).
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}
}  // namespace

std::vector<std::vector<std::size_t>> epoch_batches(Rng& rng, std::size_t n, std::size_t batch_size,
                                                    std::size_t min_batch) {
  if (batch_size == 0) throw Error(Errc::invalid_argument, "batch size must be positive");
  const auto perm = permutation(rng, n);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    if (end - start < min_batch) break;
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start), perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

SampledBatch sample_batch(Rng& rng, const LongTailDataset& dataset, std::size_t batch_size) {
  if (batch_size > dataset.size()) throw Error(Errc::invalid_argument, "batch size exceeds dataset size");
  auto perm = permutation(rng, dataset.size());
  perm.resize(batch_size);
  SampledBatch out;
  out.points = dataset.points.gather_cols(perm);
  out.indices = std::move(perm);
  return out;
}

void write_dataset_csv(std::ostream& out, const LongTailDataset& ds) {
  out << "# classes=" << ds.num_classes() << " ratio=" << format_real(ds.ratio) << " seed=" << ds.seed
      << " blob_std=" << format_real(ds.blob_std) << '\n';
  for (std::size_t r = 0; r < ds.points.rows(); ++r) out << 'x' << r << ',';
  out << "label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t r = 0; r < ds.points.rows(); ++r) out << format_real(ds.points(r, i)) << ',';
    out << ds.labels[i] << '\n';
  }
}

LongTailDataset read_dataset_csv(std::istream& in) {
  LongTailDataset ds;
  std::string line;
  std::size_t classes = 0;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw Error(Errc::io, "dataset: missing header line");
  {
    std::istringstream header(line.substr(2));
    std::string field;
    while (header >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
      if (key == "classes") classes = std::stoul(value);
      else if (key == "ratio") ds.ratio = parse_real(value);
      else if (key == "seed") ds.seed = std::stoull(value);
      else if (key == "blob_std") ds.blob_std = parse_real(value);
    }
  }
  if (!std::getline(in, line)) throw Error(Errc::io, "dataset: missing column header");
  const std::size_t m = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (m == 0) throw Error(Errc::io, "dataset: no feature columns");
  std::vector<Real> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    for (std::size_t r = 0; r < m; ++r) {
      if (!std::getline(row, cell, ',')) throw Error(Errc::io, "dataset: short row '" + line + "'");
      values.push_back(parse_real(cell));
    }
    if (!std::getline(row, cell)) throw Error(Errc::io, "dataset: missing label in '" + line + "'");
    const int label = std::stoi(cell);
    if (label < 0) throw Error(Errc::io, "dataset: negative label");
    ds.labels.push_back(label);
  }
  const std::size_t n = ds.labels.size();
  ds.points = Matrix(m, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < m; ++r) ds.points(r, i) = values[i * m + r];
  for (int l : ds.labels) classes = std::max(classes, static_cast<std::size_t>(l) + 1);
  ds.class_counts.assign(classes, 0);
  for (int l : ds.labels) ++ds.class_counts[static_cast<std::size_t>(l)];
  return ds;
}

void save_dataset(const std::string& path, const LongTailDataset& dataset) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot write " + path);
  write_dataset_csv(out, dataset);
}

LongTailDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot read dataset " + path);
  return read_dataset_csv(in);
}

}  // namespace gh
