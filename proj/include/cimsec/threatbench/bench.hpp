#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cimsec/adcvar/adc.hpp"
#include "cimsec/netcore/dataset.hpp"
#include "cimsec/netcore/network.hpp"
#include "cimsec/netcore/train.hpp"
#include "cimsec/xbar/engine.hpp"

namespace cimsec::threatbench {

/// Chips sharing one ADC design; the victim is the chip the model is bound to.
struct ChipPopulation {
  std::vector<std::uint64_t> seeds;
  adcvar::AdcConfig config;
  std::size_t victim = 0;

  void validate() const;
  static ChipPopulation make(std::uint64_t master_seed, std::size_t count, const adcvar::AdcConfig& config);
};

struct SweepPoint {
  std::string label;
  double axis_value = 0.0;
  std::vector<double> samples;  // accuracies in [0, 1]
};

struct Summary {
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

Summary summarize(std::vector<double> samples);

/// Accuracy distributions along one axis (chips, random keys, shuffled layer
/// count or location, bit planes, matched digits, ADC configuration).
struct SweepResult {
  std::string axis;
  std::vector<SweepPoint> points;
};

/// Shared knobs of every hardware evaluation in an experiment.
struct HwSetup {
  xbar::ProgramOptions program;
  std::size_t eval_limit = 0;  // test images per accuracy (0 = all)
};

/// Chip-independent hardware: quantized inference on zero-offset ADCs.
double baseline_accuracy(const netcore::NetworkSpec& net, const netcore::FloatModel& model,
                         const netcore::Dataset& data, const adcvar::AdcConfig& config, const HwSetup& setup);

double chip_accuracy(const netcore::NetworkSpec& net, const netcore::FloatModel& model, const netcore::Dataset& data,
                     const adcvar::AdcConfig& config, std::uint64_t chip_seed, const HwSetup& setup);

struct RetrainResult {
  netcore::FloatModel model;
  double initial_accuracy = 0.0;
  std::vector<double> curve;  // hardware accuracy after each epoch
};

/// Hybrid retraining: inference on the (simulated) chip, loss, gradients and
/// SGD updates in floating point with straight-through quantizers; weights
/// are requantized and reprogrammed every batch. A null fingerprint retrains
/// against zero-offset ADCs. At most two epochs.
RetrainResult retrain_on_chip(const netcore::NetworkSpec& net, const netcore::FloatModel& model,
                              const netcore::Dataset& data, const adcvar::AdcConfig& config,
                              const adcvar::ChipFingerprint* fingerprint, int epochs,
                              const netcore::Hyperparams& hyper, std::uint64_t seed, const HwSetup& setup,
                              std::size_t train_limit = 0);

/// Same weights evaluated under every chip of the population; the victim
/// is reported as the first point, the clones after it.
SweepResult clone_attack(const netcore::NetworkSpec& net, const netcore::FloatModel& bound_model,
                         const netcore::Dataset& data, const ChipPopulation& population, const HwSetup& setup);

/// Shuffle defence under test: layers, zero insertion and bit planes.
struct ShuffleSpec {
  std::vector<int> layers;
  int zeros = 0;
  std::vector<int> planes;  // empty = all planes of the layer
  std::uint64_t key_seed = 1;
};

std::vector<std::optional<shufflekey::ShuffleKey>> make_keys(const netcore::NetworkSpec& net, const ShuffleSpec& spec);

/// Conv layers eligible for shuffling: every conv layer except the first.
std::vector<int> default_shuffle_layers(const netcore::NetworkSpec& net);

/// Accuracy with the true key (point 0) followed by `trials` uniformly
/// random adversary keys. Throws std::invalid_argument without a shuffled layer.
SweepResult random_key_attack(const netcore::NetworkSpec& net, const netcore::FloatModel& model,
                              const netcore::Dataset& data, const xbar::Chip& chip, const ShuffleSpec& shuffle,
                              int trials, std::uint64_t seed, const HwSetup& setup);

enum class SweepAxis { kLayerCount, kLayerLocation, kBitPlanes, kMatchedDigits };
SweepAxis parse_sweep_axis(const std::string& name);
std::string to_string(SweepAxis axis);

/// Random-key accuracy along one shuffle-configuration axis. For matched
/// digits, `points` lists the n values (defaults to an even spread over 0..N);
/// for bit planes, the MSB plane counts (defaults to all).
SweepResult sweep_shuffle_config(const netcore::NetworkSpec& net, const netcore::FloatModel& model,
                                 const netcore::Dataset& data, const xbar::Chip& chip, SweepAxis axis,
                                 const ShuffleSpec& base, int trials, std::uint64_t seed, const HwSetup& setup,
                                 std::vector<int> points = {});

/// One cell of the offset-sensitivity grid.
struct OffsetCell {
  adcvar::AdcKind kind = adcvar::AdcKind::kSar;
  std::string wl_label;
  int weight_bits = 4;
};

/// Accuracy drop (baseline minus chip accuracy) of un-retrained models over
/// `chips` chips per cell. Every model whose weight width matches the cell is
/// evaluated on the same chips and the drops are pooled, so one unlucky
/// training run does not decide an ordering.
struct OffsetSensitivity {
  SweepResult result;                     // samples are accuracies, model-major
  std::vector<double> baseline;           // per cell, mean over its models
  std::vector<std::vector<double>> drop;  // per cell, aligned with samples
};

OffsetSensitivity offset_sensitivity(const netcore::Dataset& data,
                                     const std::vector<std::pair<netcore::NetworkSpec, netcore::FloatModel>>& models,
                                     const std::vector<OffsetCell>& cells, int chips, std::uint64_t seed,
                                     const HwSetup& setup, double level_spacing = 0.0);

}  // namespace cimsec::threatbench
