#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cimsec/netcore/dataset.hpp"
#include "cimsec/shufflekey/key.hpp"

namespace cimsec::expcli {

enum class ExperimentKind { kBaseline, kOffsetSensitivity, kRetrain, kCloneAttack, kKeyAttack, kSweep, kBounds, kCost };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& name);
std::vector<std::string> experiment_kinds();

// Dataset root override; relative dataset paths resolve against it.
inline constexpr const char* kDataRootEnv = "CIMSEC_DATA_ROOT";

struct DatasetConfig {
  std::string id = "synthetic";
  std::string path;
  netcore::SyntheticSpec synthetic;
};

struct TrainConfig {
  int epochs = 5;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int batch_size = 32;
  bool quantization_aware = true;
};

struct AdcSection {
  std::string kind = "sar";
  std::string wl = "WL5";
  int bits = 5;
  double level_spacing = 1.0;
  std::string pass_rate_file;  // overrides the preset curve when set
};

struct RetrainConfig {
  int epochs = 2;
  double learning_rate = 0.05;
  int repeats = 1;
  std::size_t train_limit = 0;
  bool control = true;  // also retrain against zero-offset ADCs
};

struct KeyConfig {
  std::vector<int> layers;  // empty = first eligible conv layer
  int zeros = 0;
  std::vector<int> planes;  // empty = all planes
  int trials = 20;
};

struct SweepConfig {
  std::string axis = "layer_count";
  std::vector<int> points;
};

struct BoundsConfig {
  int N = 128;
  int k = 16;
  int max_n = 20;
  std::uint64_t trials = 100000;
};

struct CostConfig {
  std::vector<int> weight_bits{2, 4, 8};
  int sharing = 1;
  std::string table;
};

struct OffsetConfig {
  std::vector<std::string> kinds{"flash", "sar"};
  std::vector<std::string> wl{"WL6", "WL5", "WL4"};
  std::vector<int> weight_bits{2, 4, 8};
  int chips = 10;
  int models = 1;  // independently trained models per weight width
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kBaseline;
  std::string id;
  std::uint64_t master_seed = 1;
  DatasetConfig dataset;
  std::string network = "mlp";
  int weight_bits = 4;
  std::string mapping = "subkernel";
  std::string model_path;  // load instead of training
  TrainConfig train;
  AdcSection adc;
  int population = 21;
  RetrainConfig retrain;
  KeyConfig keys;
  SweepConfig sweep;
  BoundsConfig bounds;
  CostConfig cost;
  OffsetConfig offset;
  std::size_t eval_limit = 1000;
  std::string output_dir = "results";
};

/// Config problem; the message names the field and, when known, the line.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ExperimentConfig parse_config(const std::string& text, const std::string& origin = "config");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Fully resolved config (every default written out).
nlohmann::ordered_json to_json(const ExperimentConfig& config);

/// Hex FNV-1a of the resolved config minus output_dir.
std::string config_hash(const ExperimentConfig& config);

/// Long-format result line.
struct ResultRow {
  std::string axis;
  double point = 0.0;
  std::string label;
  std::string metric;
  int sample = 0;
  std::uint64_t seed = 0;
  double value = 0.0;
};

struct Check {
  std::string name;
  double value = 0.0;
  std::string op;  // "<=", ">=", "==", "in"
  double threshold = 0.0;
  double threshold_hi = 0.0;  // upper end for "in"
  bool pass = false;
};

struct RunResult {
  std::vector<ResultRow> rows;
  std::vector<Check> checks;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  std::vector<shufflekey::ShuffleKey> keys;  // written to keys.txt

  bool all_pass() const;
};

inline constexpr const char* kCsvHeader = "experiment,config_hash,master_seed,axis,point,label,metric,sample,seed,value";

RunResult run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

std::string csv_text(const ExperimentConfig& config, const RunResult& result);

/// Writes results.csv, summary.json and config.json into `dir`.
void write_results(const ExperimentConfig& config, const RunResult& result, const std::filesystem::path& dir);

/// Human-readable tables for every result set under `dir`. Throws
/// std::runtime_error when nothing is found or a file is damaged.
std::string report(const std::filesystem::path& dir);

std::string list_presets();

/// Resolves the dataset location, honouring the root override.
std::filesystem::path resolve_dataset_path(const DatasetConfig& dataset);

}  // namespace cimsec::expcli
