#pragma once

#include <filesystem>
#include <stdexcept>

#include "cimsec/netcore/network.hpp"

namespace cimsec::netcore {

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kModelFormatVersion = 1;

/// Writes a text manifest at `path` and the little-endian float32 weight
/// blob at `path` + ".bin".
void save_model(const NetworkSpec& net, const FloatModel& model, const std::filesystem::path& path);

struct LoadedModel {
  NetworkSpec net;
  FloatModel model;
};

/// Throws ModelFormatError on version, shape, length or checksum mismatch.
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace cimsec::netcore
