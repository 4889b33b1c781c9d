#include "gh/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gh/error.hpp"
#include "gh/metrics.hpp"
#include "gh/run_io.hpp"
#include "gh/text_format.hpp"

namespace gh {

std::string to_string(AllocationSource source) {
  switch (source) {
    case AllocationSource::per_view:
      return "per_view";
    case AllocationSource::epoch_fresh:
      return "epoch_fresh";
    case AllocationSource::epoch_momentum:
      return "epoch_momentum";
  }
  return "unknown";
}

AllocationSource parse_allocation_source(const std::string& text) {
  if (text == "per_view") return AllocationSource::per_view;
  if (text == "epoch_fresh") return AllocationSource::epoch_fresh;
  if (text == "epoch_momentum") return AllocationSource::epoch_momentum;
  throw Error(Errc::invalid_argument, "unknown allocation source '" + text + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(Errc::invalid_argument, "train config: " + msg); };
  if (epochs == 0) fail("epochs must be positive");
  if (warmup_epochs >= epochs) fail("warm-up epochs must be fewer than total epochs");
  if (batch_size < 2) fail("batch size must be at least 2");
  if (k < 2) fail("K must be at least 2");
  if (!(loss.gamma_cl > 0.0) || !(loss.gamma_gh > 0.0) || !(loss.gamma_f > 0.0)) fail("temperatures must be positive");
  if (!(loss.w_gh >= 0.0)) fail("w_gh must be nonnegative");
  if (!(sinkhorn.lambda > 0.0)) fail("lambda must be positive");
  if (sinkhorn.max_iters == 0) fail("sinkhorn iterations must be positive");
  if (!(beta >= 0.0 && beta <= 1.0)) fail("beta must lie in [0, 1]");
  if (prior_refresh_epochs == 0) fail("prior refresh cadence must be positive");
  if (structure == StructureChoice::toy_square && (k != 4 || dims.output != 2)) {
    fail("the toy square structure needs K = 4 and a 2-D output");
  }
}

Real TrainConfig::effective_prior_floor() const { return prior_floor > 0.0 ? prior_floor : default_prior_floor(k); }

GeometricStructure make_structure(const TrainConfig& cfg) {
  if (cfg.structure == StructureChoice::toy_square) return toy_square_structure();
  Rng rng = Rng(cfg.seed).split(2);
  return choose_structure(rng, cfg.dims.output, cfg.k);
}

TrainState init_state(const TrainConfig& cfg) {
  Rng master(cfg.seed);
  Rng init_rng = master.split(1);
  Encoder enc = init_encoder(init_rng, cfg.dims);
  enc.seed = cfg.seed;
  SgdState sgd(cfg.dims, cfg.warmup_lr_max, cfg.warmup_lr_min, cfg.warmup_epochs, cfg.momentum, cfg.weight_decay);
  return TrainState{std::move(enc), std::move(sgd), MomentumTracker(cfg.beta), std::nullopt, master.split(3)};
}

namespace {

struct ViewForward {
  ForwardResult a;
  ForwardResult b;
};

// Both views through the encoder; nullopt when a degenerate embedding shows up.
std::optional<ViewForward> forward_views(const Encoder& enc, const AugmentedPair& pair) {
  try {
    return ViewForward{forward(enc, pair.a), forward(enc, pair.b)};
  } catch (const Error& e) {
    if (e.code() != Errc::degenerate_embedding) throw;
    return std::nullopt;
  }
}

void apply_step(TrainState& state, const ViewForward& fw, const PairLoss& loss, std::size_t phase_epoch) {
  EncoderGrads grads = backward(state.encoder, fw.a.cache, loss.grad_a);
  grads += backward(state.encoder, fw.b.cache, loss.grad_b);
  state.sgd.step(state.encoder, grads, phase_epoch);
}

}  // namespace

EpochStats base_epoch(const TrainConfig& cfg, const Matrix& points, TrainState& state, std::size_t phase_epoch) {
  EpochStats stats;
  Real loss_sum = 0.0;
  for (const auto& batch : epoch_batches(state.rng, points.cols(), cfg.batch_size)) {
    const AugmentedPair pair = augment_pair(state.rng, points.gather_cols(batch), cfg.augment);
    const auto fw = forward_views(state.encoder, pair);
    if (!fw) {
      ++stats.skipped_batches;
      continue;
    }
    const PairLoss loss = base_loss(BatchViews{fw->a.embeddings, fw->b.embeddings}, cfg.loss);
    apply_step(state, *fw, loss, phase_epoch);
    loss_sum += loss.loss;
    ++stats.batches;
  }
  stats.mean_loss = stats.batches ? loss_sum / static_cast<Real>(stats.batches) : 0.0;
  return stats;
}

std::vector<EpochStats> warmup(const TrainConfig& cfg, const Matrix& points, TrainState& state) {
  state.sgd.reschedule(cfg.warmup_lr_max, cfg.warmup_lr_min, cfg.warmup_epochs);
  std::vector<EpochStats> out;
  out.reserve(cfg.warmup_epochs);
  for (std::size_t e = 0; e < cfg.warmup_epochs; ++e) out.push_back(base_epoch(cfg, points, state, e));
  return out;
}

EpochRefresh epoch_refresh(const Encoder& encoder, const Matrix& points, const GeometricStructure& structure,
                           MomentumTracker& tracker, std::optional<ClassPrior>& prior, const TrainConfig& cfg,
                           std::size_t gh_epoch) {
  const Matrix embeddings = forward(encoder, points).embeddings;
  GeometricPredictions q = geometric_predict(embeddings, structure, cfg.loss.gamma_gh);
  tracker.update(q);
  if (!prior || gh_epoch % cfg.prior_refresh_epochs == 0) prior = estimate_prior(tracker, cfg.effective_prior_floor());
  AssignmentResult q_hat = sinkhorn_allocate(q.q, *prior, cfg.sinkhorn);
  return EpochRefresh{std::move(q), *prior, std::move(q_hat)};
}

EpochStats train_epoch(const TrainConfig& cfg, const Matrix& points, const GeometricStructure& structure,
                       const EpochRefresh& refresh, TrainState& state, std::size_t phase_epoch) {
  if (cfg.loss.w_gh == 0.0) return base_epoch(cfg, points, state, phase_epoch);

  EpochStats stats;
  Real loss_sum = 0.0;
  std::size_t allocations = 0;
  Real iter_sum = 0.0;

  // Allocation result for one view; falls back to the epoch-level plan on failure.
  auto allocate = [&](const Matrix& predictions, const std::vector<std::size_t>& batch) -> Matrix {
    try {
      AssignmentResult res = sinkhorn_allocate(predictions, refresh.prior, cfg.sinkhorn);
      ++allocations;
      iter_sum += static_cast<Real>(res.iterations_used);
      return std::move(res.q_hat);
    } catch (const Error& e) {
      if (e.code() != Errc::numerical_failure && e.code() != Errc::degenerate_input) throw;
      ++stats.sinkhorn_fallbacks;
      return refresh.q_hat.q_hat.gather_cols(batch);
    }
  };

  for (const auto& batch : epoch_batches(state.rng, points.cols(), cfg.batch_size)) {
    const AugmentedPair pair = augment_pair(state.rng, points.gather_cols(batch), cfg.augment);
    const auto fw = forward_views(state.encoder, pair);
    if (!fw) {
      ++stats.skipped_batches;
      continue;
    }
    const BatchViews views{fw->a.embeddings, fw->b.embeddings};
    Matrix q_hat_a, q_hat_b;
    switch (cfg.allocation_source) {
      case AllocationSource::per_view: {
        q_hat_a = allocate(geometric_predict(views.a, structure, cfg.loss.gamma_gh).q, batch);
        q_hat_b = allocate(geometric_predict(views.b, structure, cfg.loss.gamma_gh).q, batch);
        break;
      }
      case AllocationSource::epoch_fresh:
        q_hat_a = allocate(refresh.q.q.gather_cols(batch), batch);
        q_hat_b = q_hat_a;
        break;
      case AllocationSource::epoch_momentum:
        q_hat_a = allocate(state.tracker.q_m().gather_cols(batch), batch);
        q_hat_b = q_hat_a;
        break;
    }
    // Surrogate labels enter as constants: combined_loss has no gradient path into them.
    const PairLoss loss = combined_loss(views, q_hat_a, q_hat_b, structure, cfg.loss);
    apply_step(state, *fw, loss, phase_epoch);
    loss_sum += loss.loss;
    ++stats.batches;
  }
  stats.mean_loss = stats.batches ? loss_sum / static_cast<Real>(stats.batches) : 0.0;
  stats.mean_sinkhorn_iters = allocations ? iter_sum / static_cast<Real>(allocations) : 0.0;
  return stats;
}

Evaluation evaluate_snapshot(const Encoder& encoder, const LongTailDataset& dataset,
                             const GeometricStructure& structure, const ClassPrior* prior, const TrainConfig& cfg) {
  Evaluation ev;
  ev.embeddings = forward(encoder, dataset.points).embeddings;
  const ClassMeans means = class_means(ev.embeddings, dataset.labels, dataset.num_classes());
  ev.u = inter_class_uniformity(means);
  ev.u1 = neighborhood_uniformity(means, 1);
  const auto tail = tail_classes(dataset.class_counts);
  ev.collapse = tail.size() >= 2 ? minority_collapse_score(means, tail) : 0.0;
  ev.q = geometric_predict(ev.embeddings, structure, cfg.loss.gamma_gh);
  const ClassPrior fallback = prior ? ClassPrior{} : estimate_prior(ev.q.q, cfg.effective_prior_floor());
  ev.q_hat = sinkhorn_allocate(ev.q.q, prior ? *prior : fallback, cfg.sinkhorn);
  ev.nmi = nmi(hard_labels(ev.q_hat.q_hat), dataset.labels);
  return ev;
}

std::string trace_csv_header(std::size_t k) {
  std::string out = "epoch,loss,U,U1,nmi,collapse_score";
  for (std::size_t i = 0; i < k; ++i) out += ",pi_" + std::to_string(i);
  return out;
}

std::string trace_csv_row(const TraceRow& row) {
  std::ostringstream out;
  out << row.epoch << ',' << format_real(row.loss) << ',' << format_real(row.u) << ',' << format_real(row.u1) << ','
      << format_real(row.nmi) << ',' << format_real(row.collapse);
  for (Real p : row.pi) out << ',' << format_real(p);
  return out.str();
}

TrainRun run(const TrainConfig& cfg, const LongTailDataset& dataset, const std::optional<std::string>& run_dir) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  std::optional<RunWriter> writer;
  if (run_dir) writer.emplace(*run_dir, cfg);

  TrainRun result{cfg, make_structure(cfg), Encoder{}, MomentumTracker(cfg.beta), ClassPrior{}, {}, {}, Matrix{}, {}, false, ""};
  if (writer) writer->write_structure(result.structure);
  TrainState state = init_state(cfg);
  const Matrix& points = dataset.points;  // training never sees dataset.labels

  auto record = [&](std::size_t epoch, const EpochStats& stats, const ClassPrior* prior) {
    const Evaluation ev = evaluate_snapshot(state.encoder, dataset, result.structure, prior, cfg);
    TraceRow row{epoch, stats.mean_loss, ev.u, ev.u1, ev.nmi, ev.collapse,
                 prior ? prior->pi : estimate_prior(ev.q.q, cfg.effective_prior_floor()).pi};
    result.trace.push_back(row);
    result.stats.push_back(stats);
    if (writer) {
      writer->append_trace(row, stats);
      if (cfg.checkpoint_every && epoch % cfg.checkpoint_every == 0) writer->write_checkpoint(epoch, state.encoder);
    }
    return ev;
  };

  try {
    state.sgd.reschedule(cfg.warmup_lr_max, cfg.warmup_lr_min, cfg.warmup_epochs);
    std::size_t epoch = 0;
    for (std::size_t e = 0; e < cfg.warmup_epochs; ++e) {
      const EpochStats stats = base_epoch(cfg, points, state, e);
      record(++epoch, stats, nullptr);
    }
    state.sgd.reschedule(cfg.lr_max, cfg.lr_min, cfg.epochs - cfg.warmup_epochs);
    std::optional<Evaluation> last;
    for (std::size_t g = 0; epoch < cfg.epochs; ++g) {
      const EpochRefresh refresh =
          epoch_refresh(state.encoder, points, result.structure, state.tracker, state.prior, cfg, g);
      const EpochStats stats = train_epoch(cfg, points, result.structure, refresh, state, g);
      last = record(++epoch, stats, &*state.prior);
    }
    if (!last) last = evaluate_snapshot(state.encoder, dataset, result.structure, nullptr, cfg);
    result.encoder = state.encoder;
    result.tracker = state.tracker;
    result.prior = state.prior ? *state.prior : estimate_prior(last->q.q, cfg.effective_prior_floor());
    result.final_embeddings = last->embeddings;
    result.final_surrogate_labels = hard_labels(last->q_hat.q_hat);
    if (writer) {
      writer->write_checkpoint(cfg.epochs, state.encoder);
      writer->write_embeddings(result.final_embeddings, dataset.labels);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      writer->write_manifest(result, seconds, false, "");
    }
  } catch (const Error& e) {
    result.failed = true;
    result.failure = e.what();
    if (writer) {
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      writer->write_manifest(result, seconds, true, e.what());
    }
    throw;
  }
  return result;
}

}  // namespace gh
