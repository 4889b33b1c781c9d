// Command-line front end: dataset synthesis, structures, standalone Sinkhorn,
// training, evaluation and SVG export.

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "gh/allocation.hpp"
#include "gh/data.hpp"
#include "gh/encoder.hpp"
#include "gh/error.hpp"
#include "gh/geometry.hpp"
#include "gh/metrics.hpp"
#include "gh/plot.hpp"
#include "gh/run_io.hpp"
#include "gh/text_format.hpp"
#include "gh/trainer.hpp"

namespace fs = std::filesystem;
using namespace gh;

namespace {

std::uint64_t resolve_seed(std::uint64_t flag_seed) {
  if (const char* env = std::getenv("GH_SEED"); env && *env) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw Error(Errc::invalid_argument, std::string("GH_SEED is not an unsigned integer: ") + env);
    }
  }
  return flag_seed;
}

std::string join(const std::vector<std::size_t>& v) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  out << ']';
  return out.str();
}

// ---- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  std::size_t classes = 4;
  std::size_t n_max = 512;
  double ratio = 1.0;
  double blob_std = 0.1;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
  Rng rng(resolve_seed(a.seed));
  GenerateConfig cfg;
  cfg.classes = a.classes;
  cfg.n_max = a.n_max;
  cfg.ratio = a.ratio;
  cfg.blob_std = a.blob_std;
  const LongTailDataset ds = generate(rng, cfg);
  save_dataset(a.out, ds);
  const double achieved = static_cast<double>(ds.class_counts.front()) / static_cast<double>(ds.class_counts.back());
  std::cout << "counts " << join(ds.class_counts) << "\n"
            << "samples " << ds.size() << "\n"
            << "ratio_achieved " << format_real(achieved) << "\n";
  return 0;
}

// ---- build-structure --------------------------------------------------------

struct StructureArgs {
  std::size_t d = 2;
  std::size_t k = 4;
  std::string kind = "auto";
  std::uint64_t seed = 1;
  double tau_u = 0.1;
  std::size_t steps = 2000;
  double lr = 0.1;
  std::string out;
};

int cmd_build_structure(const StructureArgs& a) {
  Rng rng(resolve_seed(a.seed));
  ApproximateParams params{a.tau_u, a.steps, a.lr, 1e-3};
  std::optional<GeometricStructure> s;
  if (a.kind == "auto") s = choose_structure(rng, a.d, a.k, params);
  else if (a.kind == "etf") s = build_etf(rng, a.d, a.k);
  else if (a.kind == "approximate") s = build_approximate(rng, a.d, a.k, params);
  else if (a.kind == "toy") s = toy_square_structure();
  else throw Error(Errc::invalid_argument, "unknown structure kind '" + a.kind + "'");
  const StructureReport rep = validate(*s);
  if (a.out.empty()) write_structure(std::cout, *s);
  else save_structure(a.out, *s);
  std::cerr << "kind " << to_string(s->kind()) << " C " << format_real(s->target_cosine()) << " max_norm_err "
            << format_real(rep.max_norm_err) << " max_offdiag " << format_real(rep.max_offdiag_deviation) << "\n";
  return 0;
}

// ---- sinkhorn ---------------------------------------------------------------

struct SinkhornArgs {
  std::string input;
  std::string prior = "uniform";
  double lambda = 20.0;
  std::size_t iters = 300;
  double eps = 1e-6;
  std::string out;
};

// One row per sample, K probabilities per row; a non-numeric first line is a header.
Matrix read_prediction_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot read " + path);
  std::vector<Vector> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string cell;
    Vector row;
    try {
      while (std::getline(ss, cell, ',')) row.push_back(parse_real(cell));
    } catch (const Error&) {
      if (first) {
        first = false;
        continue;
      }
      throw;
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size()) throw Error(Errc::io, "ragged prediction CSV " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(Errc::io, "no predictions in " + path);
  Matrix q(rows.front().size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) q.set_col(i, rows[i]);
  return q;
}

ClassPrior read_prior(const std::string& source, const Matrix& q) {
  if (source == "uniform") return uniform_prior(q.rows());
  if (source == "auto") return estimate_prior(q, default_prior_floor(q.rows()));
  std::ifstream in(source);
  if (!in) throw Error(Errc::io, "cannot read prior file " + source);
  ClassPrior prior;
  std::string tok;
  while (in >> tok) {
    std::istringstream ss(tok);
    std::string cell;
    while (std::getline(ss, cell, ','))
      if (!cell.empty()) prior.pi.push_back(parse_real(cell));
  }
  if (prior.pi.size() != q.rows()) {
    throw Error(Errc::degenerate_input, "prior has " + std::to_string(prior.pi.size()) + " entries for K=" +
                                            std::to_string(q.rows()));
  }
  return prior;
}

int cmd_sinkhorn(const SinkhornArgs& a) {
  const Matrix q = read_prediction_csv(a.input);
  const ClassPrior prior = read_prior(a.prior, q);
  const AssignmentResult res = sinkhorn_allocate(q, prior, SinkhornConfig{a.lambda, a.iters, a.eps});
  if (a.out.empty()) {
    write_assignment_csv(std::cout, res);
  } else {
    std::ofstream out(a.out);
    if (!out) throw Error(Errc::io, "cannot write " + a.out);
    write_assignment_csv(out, res);
  }
  std::cerr << "iterations_used " << res.iterations_used << "\n"
            << "final_criterion " << format_real(res.final_criterion) << "\n"
            << "converged " << (res.converged ? "true" : "false") << "\n";
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config;
  std::optional<std::size_t> epochs, warmup, batch_size, k, hidden, dim, sinkhorn_iters, prior_refresh,
      checkpoint_every;
  std::optional<double> w_gh, gamma_gh, gamma_cl, gamma_f, lambda, beta, noise_std, lr_max, lr_min, warmup_lr_max,
      warmup_lr_min, stop_eps, prior_floor;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> loss, structure, allocation_source;
};

TrainConfig resolve_train_config(const TrainArgs& a) {
  // built-in defaults < config file < flags < GH_SEED
  TrainConfig cfg;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw Error(Errc::io, "cannot read config " + a.config);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::invalid_argument, std::string("config file: ") + e.what());
    }
    cfg = config_from_json(j, cfg);
  }
  auto set = [](auto& field, const auto& opt) {
    if (opt) field = *opt;
  };
  set(cfg.epochs, a.epochs);
  set(cfg.warmup_epochs, a.warmup);
  set(cfg.batch_size, a.batch_size);
  set(cfg.k, a.k);
  set(cfg.dims.hidden, a.hidden);
  set(cfg.dims.output, a.dim);
  set(cfg.sinkhorn.max_iters, a.sinkhorn_iters);
  set(cfg.prior_refresh_epochs, a.prior_refresh);
  set(cfg.checkpoint_every, a.checkpoint_every);
  set(cfg.loss.w_gh, a.w_gh);
  set(cfg.loss.gamma_gh, a.gamma_gh);
  set(cfg.loss.gamma_cl, a.gamma_cl);
  set(cfg.loss.gamma_f, a.gamma_f);
  set(cfg.sinkhorn.lambda, a.lambda);
  set(cfg.sinkhorn.stop_eps, a.stop_eps);
  set(cfg.beta, a.beta);
  set(cfg.augment.noise_std, a.noise_std);
  set(cfg.lr_max, a.lr_max);
  set(cfg.lr_min, a.lr_min);
  set(cfg.warmup_lr_max, a.warmup_lr_max);
  set(cfg.warmup_lr_min, a.warmup_lr_min);
  set(cfg.prior_floor, a.prior_floor);
  set(cfg.seed, a.seed);
  if (a.loss) cfg.loss.base = parse_base_loss(*a.loss);
  if (a.allocation_source) cfg.allocation_source = parse_allocation_source(*a.allocation_source);
  if (a.structure) {
    if (*a.structure == "toy") cfg.structure = StructureChoice::toy_square;
    else if (*a.structure == "auto") cfg.structure = StructureChoice::automatic;
    else throw Error(Errc::invalid_argument, "--structure must be toy or auto");
  }
  cfg.seed = resolve_seed(cfg.seed);
  cfg.dims.input = 2;
  return cfg;
}

int cmd_train(const TrainArgs& a) {
  if (!fs::exists(a.data)) throw Error(Errc::io, "dataset not found: " + a.data);
  const LongTailDataset ds = load_dataset(a.data);
  TrainConfig cfg = resolve_train_config(a);
  cfg.dims.input = ds.points.rows();
  const TrainRun result = run(cfg, ds, a.out);
  const TraceRow& last = result.trace.back();
  std::cout << "epochs " << result.trace.size() << "\n"
            << "final_loss " << format_real(last.loss) << "\n"
            << "U " << format_real(last.u) << "\n"
            << "U1 " << format_real(last.u1) << "\n"
            << "nmi " << format_real(last.nmi) << "\n"
            << "collapse_score " << format_real(last.collapse) << "\n"
            << "run_dir " << a.out << "\n";
  return 0;
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string run_dir;
  std::string checkpoint;
  std::string data;
  std::string probe_train;
  std::string probe_test;
  std::size_t probe_per_class = 200;
  std::string csv;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const fs::path dir(a.run_dir);
  TrainConfig cfg;
  {
    std::ifstream in(dir / "config.json");
    if (!in) throw Error(Errc::io, "cannot read " + (dir / "config.json").string());
    nlohmann::json j;
    in >> j;
    cfg = config_from_json(j, cfg);
  }
  const std::string ckpt =
      a.checkpoint.empty() ? (dir / "checkpoints" / checkpoint_name(cfg.epochs)).string() : a.checkpoint;
  const Encoder enc = load_checkpoint(ckpt);
  const GeometricStructure structure = load_structure((dir / "structure.txt").string());
  if (!fs::exists(a.data)) throw Error(Errc::io, "dataset not found: " + a.data);
  const LongTailDataset train = load_dataset(a.data);

  LongTailDataset probe_train, probe_test;
  if (!a.probe_train.empty()) {
    probe_train = load_dataset(a.probe_train);
    probe_test = a.probe_test.empty() ? probe_train : load_dataset(a.probe_test);
  } else {
    ProbeSets sets = balanced_probe_sets(train, a.probe_per_class);
    probe_train = std::move(sets.train);
    probe_test = std::move(sets.test);
  }

  const Evaluation ev = evaluate_snapshot(enc, train, structure, nullptr, cfg);
  const Matrix train_feats = forward(enc, probe_train.points).embeddings;
  const Matrix test_feats = forward(enc, probe_test.points).embeddings;
  const GroupReport rep = linear_probe(train_feats, probe_train.labels, test_feats, probe_test.labels,
                                       train.num_classes(), train.class_counts);
  std::cout << "many_acc " << format_real(rep.many_acc) << "\n"
            << "med_acc " << format_real(rep.med_acc) << "\n"
            << "few_acc " << format_real(rep.few_acc) << "\n"
            << "std " << format_real(rep.std) << "\n"
            << "avg " << format_real(rep.avg) << "\n"
            << "U " << format_real(ev.u) << "\n"
            << "U1 " << format_real(ev.u1) << "\n"
            << "nmi " << format_real(ev.nmi) << "\n"
            << "collapse_score " << format_real(ev.collapse) << "\n";
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    if (!out) throw Error(Errc::io, "cannot write " + a.csv);
    out << "many_acc,med_acc,few_acc,std,avg,U,U1,nmi,collapse_score\n"
        << format_real(rep.many_acc) << ',' << format_real(rep.med_acc) << ',' << format_real(rep.few_acc) << ','
        << format_real(rep.std) << ',' << format_real(rep.avg) << ',' << format_real(ev.u) << ','
        << format_real(ev.u1) << ',' << format_real(ev.nmi) << ',' << format_real(ev.collapse) << '\n';
  }
  return 0;
}

// ---- export-plot ------------------------------------------------------------

struct ExportArgs {
  std::string embeddings;
  std::string structure;
  std::string out;
};

int cmd_export_plot(const ExportArgs& a) {
  const EmbeddingDump dump = load_embeddings(a.embeddings);
  std::optional<GeometricStructure> s;
  if (!a.structure.empty()) s = load_structure(a.structure);
  std::ofstream out(a.out);
  if (!out) throw Error(Errc::io, "cannot write " + a.out);
  write_embedding_svg(out, dump.embeddings, dump.labels, s ? &*s : nullptr);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometric harmonization for long-tailed self-supervised learning (toy scale)"};
  app.require_subcommand(1, 1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Synthesize a long-tailed 2-D Gaussian blob dataset");
  gen_cmd->add_option("--classes", gen.classes, "Number of classes L")->check(CLI::Range(2, 1000000));
  gen_cmd->add_option("--n-max", gen.n_max, "Size of the largest class");
  gen_cmd->add_option("--ratio", gen.ratio, "Imbalance ratio R = n_max / n_min")->check(CLI::Range(1.0, 1e12));
  gen_cmd->add_option("--blob-std", gen.blob_std, "Per-class Gaussian std")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--seed", gen.seed, "RNG seed (GH_SEED overrides)");
  gen_cmd->add_option("--out", gen.out, "Output CSV")->required();

  StructureArgs st;
  auto* st_cmd = app.add_subcommand("build-structure", "Build a geometric uniform structure");
  st_cmd->add_option("--d", st.d, "Embedding dimension")->check(CLI::PositiveNumber);
  st_cmd->add_option("--k", st.k, "Number of vertices")->check(CLI::Range(2, 1000000));
  st_cmd->add_option("--kind", st.kind, "auto | etf | approximate | toy");
  st_cmd->add_option("--seed", st.seed, "RNG seed (GH_SEED overrides)");
  st_cmd->add_option("--tau-u", st.tau_u, "Approximation temperature")->check(CLI::PositiveNumber);
  st_cmd->add_option("--steps", st.steps, "Approximation steps")->check(CLI::PositiveNumber);
  st_cmd->add_option("--lr", st.lr, "Approximation learning rate")->check(CLI::PositiveNumber);
  st_cmd->add_option("--out", st.out, "Output file (stdout if omitted)");

  SinkhornArgs sk;
  auto* sk_cmd = app.add_subcommand("sinkhorn", "Allocate surrogate labels for a prediction matrix");
  sk_cmd->add_option("--input", sk.input, "CSV, one row of K probabilities per sample")->required();
  sk_cmd->add_option("--prior", sk.prior, "uniform | auto | <file with K values>");
  sk_cmd->add_option("--lambda", sk.lambda, "Entropic regularization coefficient")->check(CLI::PositiveNumber);
  sk_cmd->add_option("--iters", sk.iters, "Maximum Sinkhorn iterations")->check(CLI::PositiveNumber);
  sk_cmd->add_option("--eps", sk.eps, "Stopping threshold on the scaling criterion")->check(CLI::NonNegativeNumber);
  sk_cmd->add_option("--out", sk.out, "Output CSV (stdout if omitted)");

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train an encoder and write a run directory");
  tr_cmd->add_option("--data", tr.data, "Dataset CSV")->required();
  tr_cmd->add_option("--out", tr.out, "Run directory")->required();
  tr_cmd->add_option("--config", tr.config, "JSON config file (flags override it)");
  tr_cmd->add_option("--epochs", tr.epochs, "Total epochs E");
  tr_cmd->add_option("--warmup", tr.warmup, "Warm-up epochs E_w");
  tr_cmd->add_option("--batch-size", tr.batch_size, "Mini-batch size B");
  tr_cmd->add_option("--k", tr.k, "Number of geometric vertices K");
  tr_cmd->add_option("--hidden", tr.hidden, "Hidden units");
  tr_cmd->add_option("--dim", tr.dim, "Embedding dimension d");
  tr_cmd->add_option("--structure", tr.structure, "toy | auto");
  tr_cmd->add_option("--w-gh", tr.w_gh, "Weight of the geometric term (0 = baseline)");
  tr_cmd->add_option("--gamma-gh", tr.gamma_gh, "Geometric prediction temperature");
  tr_cmd->add_option("--gamma-cl", tr.gamma_cl, "Contrastive temperature");
  tr_cmd->add_option("--gamma-f", tr.gamma_f, "Focal temperature/exponent");
  tr_cmd->add_option("--loss", tr.loss, "infonce | focal");
  tr_cmd->add_option("--lambda", tr.lambda, "Sinkhorn regularization coefficient");
  tr_cmd->add_option("--sinkhorn-iters", tr.sinkhorn_iters, "Sinkhorn iterations E_s");
  tr_cmd->add_option("--stop-eps", tr.stop_eps, "Sinkhorn stopping threshold");
  tr_cmd->add_option("--beta", tr.beta, "Momentum of tracked predictions");
  tr_cmd->add_option("--prior-refresh", tr.prior_refresh, "Epochs between prior refreshes");
  tr_cmd->add_option("--prior-floor", tr.prior_floor, "Minimum prior entry");
  tr_cmd->add_option("--allocation-source", tr.allocation_source, "per_view | epoch_fresh | epoch_momentum");
  tr_cmd->add_option("--noise-std", tr.noise_std, "Augmentation noise std");
  tr_cmd->add_option("--lr-max", tr.lr_max, "Peak learning rate after warm-up");
  tr_cmd->add_option("--lr-min", tr.lr_min, "Final learning rate");
  tr_cmd->add_option("--warmup-lr-max", tr.warmup_lr_max, "Warm-up starting learning rate");
  tr_cmd->add_option("--warmup-lr-min", tr.warmup_lr_min, "Warm-up final learning rate");
  tr_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "Epochs between checkpoints (0 = final only)");
  tr_cmd->add_option("--seed", tr.seed, "RNG seed (GH_SEED overrides)");

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Probe and uniformity metrics for a trained run");
  ev_cmd->add_option("--run", ev.run_dir, "Run directory")->required();
  ev_cmd->add_option("--data", ev.data, "Training dataset CSV")->required();
  ev_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file (default: final)");
  ev_cmd->add_option("--probe-train", ev.probe_train, "Balanced probe training CSV");
  ev_cmd->add_option("--probe-test", ev.probe_test, "Probe test CSV");
  ev_cmd->add_option("--probe-per-class", ev.probe_per_class, "Samples per class for generated probe sets");
  ev_cmd->add_option("--csv", ev.csv, "Also write metrics as CSV");

  ExportArgs ex;
  auto* ex_cmd = app.add_subcommand("export-plot", "SVG scatter of 2-D embeddings");
  ex_cmd->add_option("--embeddings", ex.embeddings, "embeddings_final.csv")->required();
  ex_cmd->add_option("--structure", ex.structure, "structure.txt for the vertex overlay");
  ex_cmd->add_option("--out", ex.out, "Output SVG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*st_cmd) return cmd_build_structure(st);
    if (*sk_cmd) return cmd_sinkhorn(sk);
    if (*tr_cmd) return cmd_train(tr);
    if (*ev_cmd) return cmd_evaluate(ev);
    if (*ex_cmd) return cmd_export_plot(ex);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
