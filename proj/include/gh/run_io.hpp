#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gh/encoder.hpp"
#include "gh/geometry.hpp"
#include "gh/numerics.hpp"

namespace gh {

struct TrainConfig;
struct TraceRow;
struct EpochStats;
struct TrainRun;

nlohmann::json config_to_json(const TrainConfig& cfg);
/// Fields missing from `j` keep the values already in `base`.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base);

/// Run directory layout:
///   config.json, manifest.json, trace.csv, stats.csv, structure.txt,
///   checkpoints/epoch_<n>, embeddings_final.csv
class RunWriter {
 public:
  RunWriter(const std::filesystem::path& dir, const TrainConfig& cfg);

  void write_structure(const GeometricStructure& structure);
  void append_trace(const TraceRow& row, const EpochStats& stats);
  void write_checkpoint(std::size_t epoch, const Encoder& enc);
  void write_embeddings(const Matrix& embeddings, const std::vector<int>& labels);
  void write_manifest(const TrainRun& run, double seconds, bool failed, const std::string& failure);

 private:
  std::filesystem::path dir_;
  std::ofstream trace_;
  std::ofstream stats_;
};

struct EmbeddingDump {
  Matrix embeddings;
  std::vector<int> labels;
};

EmbeddingDump load_embeddings(const std::string& path);

std::string checkpoint_name(std::size_t epoch);

}  // namespace gh
