#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gh/error.hpp"
#include "gh/run_io.hpp"
#include "gh/trainer.hpp"

using namespace gh;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gh_run_io_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("run_io") {
  TEST_CASE("config json round trip") {
    TrainConfig c;
    c.epochs = 77;
    c.loss.w_gh = 0.25;
    c.loss.base = BaseLoss::focal;
    c.allocation_source = AllocationSource::epoch_fresh;
    c.structure = StructureChoice::automatic;
    c.dims = {3, 11, 5};
    c.augment.noise_std = 0.123;
    c.seed = 99;
    const TrainConfig back = config_from_json(config_to_json(c), TrainConfig{});
    CHECK(config_to_json(back) == config_to_json(c));

    const TrainConfig partial = config_from_json(nlohmann::json{{"epochs", 5}}, c);
    CHECK(partial.epochs == 5);
    CHECK(partial.seed == 99);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"epochs", "many"}}, c), Error);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"structure", "cube"}}, c), Error);
  }

  TEST_CASE("run directory contents and byte-identical reruns") {
    TrainConfig c;
    c.epochs = 6;
    c.warmup_epochs = 3;
    c.batch_size = 32;
    c.checkpoint_every = 2;
    Rng rng(1);
    GenerateConfig g;
    g.n_max = 40;
    g.ratio = 8.0;
    const LongTailDataset ds = generate(rng, g);

    const fs::path a = scratch("a"), b = scratch("b");
    run(c, ds, a.string());
    run(c, ds, b.string());
    for (const char* f : {"config.json", "manifest.json", "trace.csv", "stats.csv", "structure.txt", "embeddings_final.csv"})
      CHECK_MESSAGE(fs::exists(a / f), f);
    for (const char* f : {"trace.csv", "stats.csv", "structure.txt", "embeddings_final.csv", "config.json"})
      CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
    for (std::size_t e : {2, 4, 6}) {
      const fs::path ck = fs::path("checkpoints") / checkpoint_name(e);
      REQUIRE(fs::exists(a / ck));
      CHECK(slurp(a / ck) == slurp(b / ck));
    }

    const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
    CHECK(manifest.at("status") == "complete");
    CHECK(manifest.at("seed") == 1);
    CHECK(manifest.at("epochs_completed") == 6);

    // the manifest's config reproduces the run
    const TrainConfig again = config_from_json(manifest.at("config"), TrainConfig{});
    const fs::path r = scratch("r");
    run(again, ds, r.string());
    CHECK(slurp(r / "trace.csv") == slurp(a / "trace.csv"));

    const EmbeddingDump dump = load_embeddings((a / "embeddings_final.csv").string());
    CHECK(dump.labels == ds.labels);
    CHECK(dump.embeddings.rows() == 2);
    const Encoder last = load_checkpoint((a / "checkpoints" / checkpoint_name(6)).string());
    CHECK(forward(last, ds.points).embeddings == dump.embeddings);

    for (const auto& p : {a, b, r}) fs::remove_all(p);
  }

  TEST_CASE("io failures") {
    try {
      RunWriter w("/proc/gh_cannot_create_this", TrainConfig{});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::io);
    }
    CHECK_THROWS_AS(load_embeddings("/nonexistent/embeddings.csv"), Error);
  }
}
