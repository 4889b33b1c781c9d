#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gh/error.hpp"
#include "gh/trainer.hpp"

using namespace gh;

namespace {

LongTailDataset small_dataset(std::uint64_t seed, Real ratio = 64.0, std::size_t n_max = 64) {
  Rng rng(seed);
  GenerateConfig g;
  g.n_max = n_max;
  g.ratio = ratio;
  LongTailDataset ds = generate(rng, g);
  ds.seed = seed;
  return ds;
}

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 12;
  c.warmup_epochs = 6;
  c.batch_size = 32;
  c.prior_refresh_epochs = 2;
  c.checkpoint_every = 0;
  return c;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("config validation") {
    auto rejects = [](auto edit) {
      TrainConfig c = small_config();
      edit(c);
      try {
        c.validate();
      } catch (const Error& e) {
        return e.code() == Errc::invalid_argument;
      }
      return false;
    };
    CHECK_NOTHROW(small_config().validate());
    CHECK(rejects([](TrainConfig& c) { c.warmup_epochs = c.epochs; }));
    CHECK(rejects([](TrainConfig& c) { c.batch_size = 1; }));
    CHECK(rejects([](TrainConfig& c) { c.loss.gamma_gh = 0.0; }));
    CHECK(rejects([](TrainConfig& c) { c.sinkhorn.lambda = -1.0; }));
    CHECK(rejects([](TrainConfig& c) { c.beta = 1.5; }));
    CHECK(rejects([](TrainConfig& c) { c.k = 5; }));
    CHECK(parse_allocation_source(to_string(AllocationSource::epoch_momentum)) == AllocationSource::epoch_momentum);
    CHECK_THROWS_AS(parse_allocation_source("sometimes"), Error);
  }

  TEST_CASE("zero warm-up leaves the initialization untouched") {
    TrainConfig c = small_config();
    c.warmup_epochs = 0;
    const LongTailDataset ds = small_dataset(1);
    TrainState s = init_state(c);
    const Encoder before = s.encoder;
    CHECK(warmup(c, ds.points, s).empty());
    CHECK(s.encoder == before);
  }

  TEST_CASE("warm-up reduces the base loss") {
    int improved = 0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
      TrainConfig c = small_config();
      c.seed = seed;
      c.warmup_epochs = 20;
      c.epochs = 21;
      const LongTailDataset ds = small_dataset(seed);
      TrainState s = init_state(c);
      const auto stats = warmup(c, ds.points, s);
      if (stats.back().mean_loss < stats.front().mean_loss) ++improved;
    }
    MESSAGE("warm-up lowered the loss on " << improved << " of 50 seeds");
    CHECK(improved > 25);
  }

  TEST_CASE("first refresh prior is the mean of the fresh predictions") {
    TrainConfig c = small_config();
    const LongTailDataset ds = small_dataset(2, 1.0, 32);
    TrainState s = init_state(c);
    const GeometricStructure st = make_structure(c);
    const EpochRefresh r = epoch_refresh(s.encoder, ds.points, st, s.tracker, s.prior, c, 0);
    const ClassPrior direct = estimate_prior(r.q.q, c.effective_prior_floor());
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(r.prior.pi[k] - direct.pi[k]) < 1e-15);

    // off-cadence epochs carry the prior over
    const ClassPrior first = *s.prior;
    const EpochRefresh r1 = epoch_refresh(s.encoder, ds.points, st, s.tracker, s.prior, c, 1);
    CHECK(r1.prior.pi == first.pi);
  }

  TEST_CASE("beta one freezes the prior") {
    TrainConfig c = small_config();
    c.beta = 1.0;
    c.prior_refresh_epochs = 1;
    const LongTailDataset ds = small_dataset(3);
    TrainState s = init_state(c);
    const GeometricStructure st = make_structure(c);
    const EpochRefresh r0 = epoch_refresh(s.encoder, ds.points, st, s.tracker, s.prior, c, 0);
    warmup(TrainConfig{c}, ds.points, s);  // moves the encoder
    TrainState moved = init_state(c);
    c.warmup_epochs = 5;
    warmup(c, ds.points, moved);
    const EpochRefresh r1 = epoch_refresh(moved.encoder, ds.points, st, s.tracker, s.prior, c, 1);
    CHECK(r1.prior.pi == r0.prior.pi);
  }

  TEST_CASE("zero GH weight reproduces warm-up-style training") {
    TrainConfig c = small_config();
    c.loss.w_gh = 0.0;
    const LongTailDataset ds = small_dataset(4);
    const TrainRun r = run(c, ds);

    TrainState s = init_state(c);
    warmup(c, ds.points, s);
    s.sgd.reschedule(c.lr_max, c.lr_min, c.epochs - c.warmup_epochs);
    std::vector<Real> losses;
    for (std::size_t g = 0; g < c.epochs - c.warmup_epochs; ++g) losses.push_back(base_epoch(c, ds.points, s, g).mean_loss);
    CHECK(s.encoder == r.encoder);
    for (std::size_t g = 0; g < losses.size(); ++g) CHECK(r.trace[c.warmup_epochs + g].loss == losses[g]);
  }

  TEST_CASE("a full-size batch is one step per epoch") {
    TrainConfig c = small_config();
    const LongTailDataset ds = small_dataset(5);
    c.batch_size = ds.size();
    const TrainRun r = run(c, ds);
    for (const EpochStats& s : r.stats) CHECK(s.batches == 1);
  }

  TEST_CASE("run records a valid trace") {
    TrainConfig c = small_config();
    const LongTailDataset ds = small_dataset(6);
    const TrainRun r = run(c, ds);
    REQUIRE(r.trace.size() == c.epochs);
    CHECK_FALSE(r.failed);
    const Real floor = c.effective_prior_floor();
    for (std::size_t e = 0; e < r.trace.size(); ++e) {
      const TraceRow& row = r.trace[e];
      CHECK(row.epoch == e + 1);
      REQUIRE(row.pi.size() == 4);
      CHECK(std::abs(std::accumulate(row.pi.begin(), row.pi.end(), 0.0) - 1.0) < 1e-12);
      for (Real p : row.pi) CHECK(p >= floor);
      CHECK(row.nmi >= 0.0);
      CHECK(row.nmi <= 1.0);
      CHECK(std::isfinite(row.loss));
    }
    CHECK(r.final_surrogate_labels.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(std::abs(column_norm(r.final_embeddings, i) - 1.0) < 1e-12);
    for (const EpochStats& s : std::span(r.stats).subspan(c.warmup_epochs)) CHECK(s.mean_sinkhorn_iters > 0.0);
  }

  TEST_CASE("runs are deterministic for every allocation source") {
    for (AllocationSource src :
         {AllocationSource::per_view, AllocationSource::epoch_fresh, AllocationSource::epoch_momentum}) {
      TrainConfig c = small_config();
      c.allocation_source = src;
      const LongTailDataset ds = small_dataset(7);
      const TrainRun a = run(c, ds);
      const TrainRun b = run(c, ds);
      CHECK(a.encoder == b.encoder);
      REQUIRE(a.trace.size() == b.trace.size());
      for (std::size_t e = 0; e < a.trace.size(); ++e) CHECK(trace_csv_row(a.trace[e]) == trace_csv_row(b.trace[e]));
      c.seed = 8;
      CHECK_FALSE(run(c, ds).encoder == a.encoder);
    }
  }

  TEST_CASE("automatic structure on a wider embedding") {
    TrainConfig c = small_config();
    c.structure = StructureChoice::automatic;
    c.dims.output = 3;
    c.k = 4;
    const GeometricStructure s = make_structure(c);
    CHECK(s.kind() == StructureKind::approximate);
    c.dims.output = 4;
    CHECK(make_structure(c).kind() == StructureKind::analytic_etf);
    const TrainRun r = run(c, small_dataset(9));
    CHECK(r.trace.size() == c.epochs);
  }

  TEST_CASE("trace csv formatting") {
    CHECK(trace_csv_header(2) == "epoch,loss,U,U1,nmi,collapse_score,pi_0,pi_1");
    TraceRow row{3, 0.5, 1.0, 0.25, 1.0, 0.0, {0.75, 0.25}};
    CHECK(trace_csv_row(row) == "3,0.5,1,0.25,1,0,0.75,0.25");
  }
}
