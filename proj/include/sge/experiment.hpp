// One config object that pins a complete toy experiment: the fixed conv
// stack, the gate layer settings, the data generator, and the SGD schedule.
// Checkpoints store this config as JSON, so the reporting tools can rebuild
// the exact model and dataset from the file alone.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sge/dataset.hpp"
#include "sge/nn.hpp"

namespace sge {

// Name build_model assigns to the gate layer in the toy stack.
inline constexpr const char* kGateLayerName = "sge1";

struct ExperimentConfig {
  bool use_gate = true;     // false drops the gate layer, all else equal
  int groups = 1;
  double gamma_init = 0.0;
  double beta_init = 1.0;
  bool normalize = true;    // gate-internal standardization on/off
  std::uint64_t seed = 0;   // sole seed; substreams derive from it
  TrainConfig train;
  ToyDataConfig data;

  void validate() const;
};

// conv(8,3) relu maxpool(2) conv(16,3) relu [sge(G)] gap dense(4).
// The gate sits after the last convolution block; with use_gate=false the
// stack is identical minus that one layer.
std::vector<LayerSpec> toy_layer_specs(const ExperimentConfig& cfg);

// Builds the stack for the config's image size and draws initial weights
// from the seed's "weights" stream; the gate layer (which draws nothing)
// then gets gamma_init/beta_init. A gateless config yields bitwise the same
// conv/dense weights as a gated one with the same seed.
Model<float> build_experiment_model(const ExperimentConfig& cfg);

// Train/test splits from the config's seed and generator settings.
std::pair<Dataset<float>, Dataset<float>> make_experiment_data(
    const ExperimentConfig& cfg);

struct ExperimentResult {
  Model<float> model;
  TrainReport report;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// JSON round trip used by checkpoint headers.
nlohmann::json experiment_config_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

// Flat key=value pairs (resolved config + seed) for artifact metadata rows
// and console echo.
std::vector<std::pair<std::string, std::string>> experiment_metadata(
    const ExperimentConfig& cfg);

}  // namespace sge
