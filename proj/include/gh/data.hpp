#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gh/numerics.hpp"

namespace gh {

enum class ClassLayout { circle, custom };

struct GenerateConfig {
  std::size_t classes = 4;
  std::size_t n_max = 512;
  Real ratio = 1.0;
  Real blob_std = 0.1;
  ClassLayout layout = ClassLayout::circle;
  /// m × L, used when layout == custom
  Matrix custom_means;
  /// Per-class sample counts override (balanced probe sets, tests); empty = exponential law.
  std::vector<std::size_t> counts_override;
};

/// Labeled synthetic samples. Labels are ground truth for evaluation only;
/// training code receives `points` alone.
struct LongTailDataset {
  Matrix points;  // m × N
  std::vector<int> labels;
  std::vector<std::size_t> class_counts;
  Real ratio = 1.0;
  Real blob_std = 0.1;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t num_classes() const noexcept { return class_counts.size(); }
};

/// n_i = floor(n_max * R^(-i/(L-1))), at least 1.
std::vector<std::size_t> long_tail_counts(std::size_t classes, std::size_t n_max, Real ratio);

/// Class means at angles pi/4 + 2 pi l / L on the unit circle.
Matrix circle_means(std::size_t classes);

LongTailDataset generate(Rng& rng, const GenerateConfig& cfg);

struct AugmentConfig {
  Real noise_std = 0.05;
};

struct AugmentedPair {
  Matrix a;
  Matrix b;
};

struct ProbeSets {
  LongTailDataset train;
  LongTailDataset test;
};

/// Fresh class-balanced probe sets drawn with the blob parameters of `source`,
/// seeded from source.seed so evaluation is reproducible.
ProbeSets balanced_probe_sets(const LongTailDataset& source, std::size_t per_class);

/// Two independent Gaussian-noise copies of each column.
AugmentedPair augment_pair(Rng& rng, const Matrix& points, const AugmentConfig& cfg);

/// One epoch of instance-balanced sampling: a random permutation of [0, n)
/// cut into consecutive batches of `batch_size`. A trailing remainder smaller
/// than `min_batch` is dropped.
std::vector<std::vector<std::size_t>> epoch_batches(Rng& rng, std::size_t n, std::size_t batch_size,
                                                    std::size_t min_batch = 2);

struct SampledBatch {
  std::vector<std::size_t> indices;
  Matrix points;
};

/// First `batch_size` entries of a fresh permutation.
SampledBatch sample_batch(Rng& rng, const LongTailDataset& dataset, std::size_t batch_size);

/// `x0,...,x{m-1},label` rows after a `# classes=.. ratio=.. seed=.. blob_std=..` header.
void write_dataset_csv(std::ostream& out, const LongTailDataset& dataset);
LongTailDataset read_dataset_csv(std::istream& in);
void save_dataset(const std::string& path, const LongTailDataset& dataset);
LongTailDataset load_dataset(const std::string& path);

}  // namespace gh
