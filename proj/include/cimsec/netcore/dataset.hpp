#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cimsec::netcore {

/// Images are CHW floats in [0, 1].
struct Dataset {
  std::string id;
  int channels = 0;
  int height = 0;
  int width = 0;
  int classes = 10;
  std::vector<float> train_x;
  std::vector<std::uint8_t> train_y;
  std::vector<float> test_x;
  std::vector<std::uint8_t> test_y;

  std::size_t image_size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  std::size_t train_count() const { return train_y.size(); }
  std::size_t test_count() const { return test_y.size(); }
  std::span<const float> train_image(std::size_t i) const {
    return {train_x.data() + i * image_size(), image_size()};
  }
  std::span<const float> test_image(std::size_t i) const {
    return {test_x.data() + i * image_size(), image_size()};
  }
  void validate() const;
};

struct SyntheticSpec {
  std::uint64_t seed = 1;
  std::size_t train_count = 4000;
  std::size_t test_count = 1000;
  int channels = 3;
  int height = 12;
  int width = 12;
  int classes = 10;
  double noise = 0.25;
  double background = -0.2;  // pixel offset before clamping to [0, 1]; negative gives sparse inputs
};

/// Procedural image task: each class is a fixed mixture of oriented
/// gratings and blobs; samples add translation, contrast jitter, a
/// distractor from another class and pixel noise.
Dataset make_synthetic(const SyntheticSpec& spec);

// Parses raw CIFAR-10 binary records (1 label byte + 3072 pixel bytes each).
void parse_cifar10_records(std::span<const std::uint8_t> bytes, std::vector<float>& images,
                           std::vector<std::uint8_t>& labels);

// Parses one IDX file; returns dimensions and raw payload bytes.
struct IdxFile {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};
IdxFile parse_idx(std::span<const std::uint8_t> bytes);

/// Reads data_batch_{1..5}.bin and test_batch.bin from `dir`.
Dataset load_cifar10(const std::filesystem::path& dir);

/// Reads the four standard IDX files from `dir`.
Dataset load_mnist(const std::filesystem::path& dir);

/// Dispatch on id in {cifar10, mnist, synthetic}. For synthetic, `path` is
/// ignored and `synthetic` configures the generator.
Dataset load_dataset(const std::string& id, const std::filesystem::path& path,
                     const SyntheticSpec& synthetic = {});

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace cimsec::netcore
