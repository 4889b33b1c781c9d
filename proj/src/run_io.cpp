#include "gh/run_io.hpp"

#include <algorithm>
#include <sstream>

#include "gh/error.hpp"
#include "gh/text_format.hpp"
#include "gh/trainer.hpp"

namespace gh {

namespace fs = std::filesystem;
using nlohmann::json;

json config_to_json(const TrainConfig& cfg) {
  return json{
      {"epochs", cfg.epochs},
      {"warmup_epochs", cfg.warmup_epochs},
      {"batch_size", cfg.batch_size},
      {"dims", {{"input", cfg.dims.input}, {"hidden", cfg.dims.hidden}, {"output", cfg.dims.output}}},
      {"structure", cfg.structure == StructureChoice::toy_square ? "toy_square" : "automatic"},
      {"k", cfg.k},
      {"gamma_cl", cfg.loss.gamma_cl},
      {"gamma_gh", cfg.loss.gamma_gh},
      {"w_gh", cfg.loss.w_gh},
      {"gamma_f", cfg.loss.gamma_f},
      {"loss_kind", to_string(cfg.loss.base)},
      {"lambda", cfg.sinkhorn.lambda},
      {"sinkhorn_iters", cfg.sinkhorn.max_iters},
      {"stop_eps", cfg.sinkhorn.stop_eps},
      {"beta", cfg.beta},
      {"prior_refresh_epochs", cfg.prior_refresh_epochs},
      {"prior_floor", cfg.effective_prior_floor()},
      {"allocation_source", to_string(cfg.allocation_source)},
      {"warmup_lr_max", cfg.warmup_lr_max},
      {"warmup_lr_min", cfg.warmup_lr_min},
      {"lr_max", cfg.lr_max},
      {"lr_min", cfg.lr_min},
      {"momentum", cfg.momentum},
      {"weight_decay", cfg.weight_decay},
      {"noise_std", cfg.augment.noise_std},
      {"seed", cfg.seed},
      {"checkpoint_every", cfg.checkpoint_every},
  };
}

TrainConfig config_from_json(const json& j, TrainConfig c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  try {
    get("epochs", c.epochs);
    get("warmup_epochs", c.warmup_epochs);
    get("batch_size", c.batch_size);
    if (j.contains("dims")) {
      const auto& d = j.at("dims");
      c.dims = {d.value("input", c.dims.input), d.value("hidden", c.dims.hidden), d.value("output", c.dims.output)};
    }
    if (j.contains("structure")) {
      const auto s = j.at("structure").get<std::string>();
      if (s == "toy_square") c.structure = StructureChoice::toy_square;
      else if (s == "automatic") c.structure = StructureChoice::automatic;
      else throw Error(Errc::invalid_argument, "unknown structure choice '" + s + "'");
    }
    get("k", c.k);
    get("gamma_cl", c.loss.gamma_cl);
    get("gamma_gh", c.loss.gamma_gh);
    get("w_gh", c.loss.w_gh);
    get("gamma_f", c.loss.gamma_f);
    if (j.contains("loss_kind")) c.loss.base = parse_base_loss(j.at("loss_kind").get<std::string>());
    get("lambda", c.sinkhorn.lambda);
    get("sinkhorn_iters", c.sinkhorn.max_iters);
    get("stop_eps", c.sinkhorn.stop_eps);
    get("beta", c.beta);
    get("prior_refresh_epochs", c.prior_refresh_epochs);
    get("prior_floor", c.prior_floor);
    if (j.contains("allocation_source"))
      c.allocation_source = parse_allocation_source(j.at("allocation_source").get<std::string>());
    get("warmup_lr_max", c.warmup_lr_max);
    get("warmup_lr_min", c.warmup_lr_min);
    get("lr_max", c.lr_max);
    get("lr_min", c.lr_min);
    get("momentum", c.momentum);
    get("weight_decay", c.weight_decay);
    get("noise_std", c.augment.noise_std);
    get("seed", c.seed);
    get("checkpoint_every", c.checkpoint_every);
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("config: ") + e.what());
  }
  return c;
}

std::string checkpoint_name(std::size_t epoch) { return "epoch_" + std::to_string(epoch); }

RunWriter::RunWriter(const fs::path& dir, const TrainConfig& cfg) : dir_(dir) {
  std::error_code ec;
  fs::create_directories(dir_ / "checkpoints", ec);
  if (ec) throw Error(Errc::io, "cannot create run directory " + dir_.string() + ": " + ec.message());
  {
    std::ofstream out(dir_ / "config.json");
    if (!out) throw Error(Errc::io, "cannot write config.json in " + dir_.string());
    out << config_to_json(cfg).dump(2) << '\n';
  }
  trace_.open(dir_ / "trace.csv");
  stats_.open(dir_ / "stats.csv");
  if (!trace_ || !stats_) throw Error(Errc::io, "cannot open trace files in " + dir_.string());
  trace_ << trace_csv_header(cfg.k) << '\n';
  stats_ << "epoch,batches,skipped_batches,mean_sinkhorn_iters,sinkhorn_fallbacks\n";
}

void RunWriter::write_structure(const GeometricStructure& structure) {
  save_structure((dir_ / "structure.txt").string(), structure);
}

void RunWriter::append_trace(const TraceRow& row, const EpochStats& stats) {
  trace_ << trace_csv_row(row) << '\n';
  stats_ << row.epoch << ',' << stats.batches << ',' << stats.skipped_batches << ','
         << format_real(stats.mean_sinkhorn_iters) << ',' << stats.sinkhorn_fallbacks << '\n';
  trace_.flush();
  stats_.flush();
}

void RunWriter::write_checkpoint(std::size_t epoch, const Encoder& enc) {
  save_checkpoint((dir_ / "checkpoints" / checkpoint_name(epoch)).string(), enc);
}

void RunWriter::write_embeddings(const Matrix& embeddings, const std::vector<int>& labels) {
  std::ofstream out(dir_ / "embeddings_final.csv");
  if (!out) throw Error(Errc::io, "cannot write embeddings_final.csv");
  for (std::size_t r = 0; r < embeddings.rows(); ++r) out << 'e' << r << ',';
  out << "label\n";
  for (std::size_t i = 0; i < embeddings.cols(); ++i) {
    for (std::size_t r = 0; r < embeddings.rows(); ++r) out << format_real(embeddings(r, i)) << ',';
    out << labels[i] << '\n';
  }
}

void RunWriter::write_manifest(const TrainRun& run, double seconds, bool failed, const std::string& failure) {
  json m{
      {"format", "gh-run v1"},
      {"seed", run.config.seed},
      {"baseline", run.config.loss.w_gh == 0.0},
      {"status", failed ? "failed" : "complete"},
      {"epochs_completed", run.trace.size()},
      {"structure_kind", to_string(run.structure.kind())},
      {"wall_seconds", seconds},
      {"compiler", __VERSION__},
      {"cxx_standard", __cplusplus},
      {"config", config_to_json(run.config)},
  };
  if (failed) m["failure"] = failure;
  if (!run.prior.pi.empty()) m["final_prior"] = run.prior.pi;
  std::ofstream out(dir_ / "manifest.json");
  if (!out) throw Error(Errc::io, "cannot write manifest.json");
  out << m.dump(2) << '\n';
}

EmbeddingDump load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::io, "empty embeddings file " + path);
  const std::size_t d = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  std::vector<Real> values;
  EmbeddingDump dump;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    for (std::size_t r = 0; r < d; ++r) {
      if (!std::getline(row, cell, ',')) throw Error(Errc::io, "embeddings: short row");
      values.push_back(parse_real(cell));
    }
    std::getline(row, cell);
    dump.labels.push_back(std::stoi(cell));
  }
  dump.embeddings = Matrix(d, dump.labels.size());
  for (std::size_t i = 0; i < dump.labels.size(); ++i)
    for (std::size_t r = 0; r < d; ++r) dump.embeddings(r, i) = values[i * d + r];
  return dump;
}

}  // namespace gh
