#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gh/allocation.hpp"
#include "gh/data.hpp"
#include "gh/encoder.hpp"
#include "gh/geometry.hpp"
#include "gh/losses.hpp"

namespace gh {

/// Which predictions feed the per-batch Sinkhorn allocation.
enum class AllocationSource {
  per_view,        // fresh predictions of each augmented view
  epoch_fresh,     // epoch-start predictions of the batch samples
  epoch_momentum,  // momentum-smoothed predictions of the batch samples
};

std::string to_string(AllocationSource source);
AllocationSource parse_allocation_source(const std::string& text);

enum class StructureChoice {
  toy_square,  // the four normalized vertices (±1, ±1)
  automatic,   // ETF when K <= d, approximation otherwise
};

struct TrainConfig {
  std::size_t epochs = 400;
  std::size_t warmup_epochs = 200;
  std::size_t batch_size = 256;
  EncoderDims dims{2, 20, 2};
  StructureChoice structure = StructureChoice::toy_square;
  std::size_t k = 4;
  /// Toy profile: a heavier GH weight than the loss default; see README.
  LossConfig loss{0.2, 0.1, 1.5};
  SinkhornConfig sinkhorn{};
  Real beta = 0.5;
  std::size_t prior_refresh_epochs = 1;
  /// 0 selects default_prior_floor(K)
  Real prior_floor = 0.0;
  AllocationSource allocation_source = AllocationSource::per_view;
  Real warmup_lr_max = 0.5;
  Real warmup_lr_min = 0.3;
  Real lr_max = 0.3;
  Real lr_min = 1e-6;
  Real momentum = 0.9;
  Real weight_decay = 5e-4;
  AugmentConfig augment{};
  std::uint64_t seed = 1;
  /// 0 keeps only the final checkpoint
  std::size_t checkpoint_every = 100;

  void validate() const;
  Real effective_prior_floor() const;
};

/// One row per epoch of trace.csv.
struct TraceRow {
  std::size_t epoch = 0;
  Real loss = 0.0;
  Real u = 0.0;
  Real u1 = 0.0;
  Real nmi = 0.0;
  Real collapse = 0.0;
  Vector pi;
};

struct EpochStats {
  Real mean_loss = 0.0;
  std::size_t batches = 0;
  std::size_t skipped_batches = 0;
  Real mean_sinkhorn_iters = 0.0;
  std::size_t sinkhorn_fallbacks = 0;
};

/// Mutable state owned by the single training thread.
struct TrainState {
  Encoder encoder;
  SgdState sgd;
  MomentumTracker tracker;
  std::optional<ClassPrior> prior;
  Rng rng;
};

struct EpochRefresh {
  GeometricPredictions q;
  ClassPrior prior;
  AssignmentResult q_hat;
};

GeometricStructure make_structure(const TrainConfig& cfg);
TrainState init_state(const TrainConfig& cfg);

/// E_w epochs of base-loss training on a cosine schedule from warmup_lr_max to warmup_lr_min.
std::vector<EpochStats> warmup(const TrainConfig& cfg, const Matrix& points, TrainState& state);

/// One base-loss epoch (no geometric term), used by warm-up.
EpochStats base_epoch(const TrainConfig& cfg, const Matrix& points, TrainState& state, std::size_t phase_epoch);

/// Full-dataset predictions, momentum update, prior refresh on cadence, and
/// the epoch-level allocation used for fallback and diagnostics.
/// `gh_epoch` counts epochs since the end of warm-up.
EpochRefresh epoch_refresh(const Encoder& encoder, const Matrix& points, const GeometricStructure& structure,
                           MomentumTracker& tracker, std::optional<ClassPrior>& prior, const TrainConfig& cfg,
                           std::size_t gh_epoch);

/// Mini-batch bi-level updates: allocate surrogate labels per view with
/// Sinkhorn against the epoch prior, then step on the combined loss.
EpochStats train_epoch(const TrainConfig& cfg, const Matrix& points, const GeometricStructure& structure,
                       const EpochRefresh& refresh, TrainState& state, std::size_t phase_epoch);

struct TrainRun {
  TrainConfig config;
  GeometricStructure structure;
  Encoder encoder;
  MomentumTracker tracker;
  ClassPrior prior;
  std::vector<TraceRow> trace;
  std::vector<EpochStats> stats;
  Matrix final_embeddings;
  std::vector<int> final_surrogate_labels;
  bool failed = false;
  std::string failure;
};

/// Snapshot metrics of an encoder on a labeled dataset.
struct Evaluation {
  Matrix embeddings;
  GeometricPredictions q;
  AssignmentResult q_hat;
  Real u = 0.0;
  Real u1 = 0.0;
  Real nmi = 0.0;
  Real collapse = 0.0;
};

Evaluation evaluate_snapshot(const Encoder& encoder, const LongTailDataset& dataset,
                             const GeometricStructure& structure, const ClassPrior* prior, const TrainConfig& cfg);

/// Whole procedure: warm-up, then per epoch refresh + train, with a trace row
/// per epoch. When `run_dir` is given the run directory is written there.
TrainRun run(const TrainConfig& cfg, const LongTailDataset& dataset, const std::optional<std::string>& run_dir = {});

std::string trace_csv_header(std::size_t k);
std::string trace_csv_row(const TraceRow& row);

}  // namespace gh
