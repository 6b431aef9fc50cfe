#include "cimsec/netcore/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cimsec/netcore/dataset.hpp"
#include "cimsec/netcore/qtensor.hpp"
#include "cimsec/rng.hpp"

namespace cimsec::netcore {

namespace {

std::size_t blob_floats(const NetworkSpec& net) {
  std::size_t n = 0;
  for (const auto& l : net.layers) n += l.weight_count() + static_cast<std::size_t>(l.c_out);
  return n;
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(u >> (8 * b)));
}

float get_f32(const std::uint8_t* p) {
  std::uint32_t u = 0;
  for (int b = 0; b < 4; ++b) u |= std::uint32_t{p[b]} << (8 * b);
  return std::bit_cast<float>(u);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p += ".bin";
  return p;
}

template <typename T>
T expect_field(std::istringstream& in, const std::string& key, int line) {
  std::string k;
  T v{};
  if (!(in >> k) || k != key || !(in >> v)) {
    throw ModelFormatError("manifest line " + std::to_string(line) + ": expected '" + key + "'");
  }
  return v;
}

}  // namespace

void save_model(const NetworkSpec& net, const FloatModel& model, const std::filesystem::path& path) {
  model.validate(net);
  std::vector<std::uint8_t> blob;
  blob.reserve(blob_floats(net) * 4);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    for (double w : model.weights[i]) put_f32(blob, w);
    for (double b : model.biases[i]) put_f32(blob, b);
  }
  const auto checksum = fnv1a64(blob.data(), blob.size());

  std::ostringstream m;
  m << "cimsec-model " << kModelFormatVersion << "\n";
  m << "name " << net.name << "\n";
  m << "dataset " << net.dataset << "\n";
  m << "classes " << net.classes << "\n";
  m << "layers " << net.layers.size() << "\n";
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    double s = 0.0;
    for (double w : model.weights[i]) s = std::max(s, std::abs(w));
    m << "layer " << (l.is_conv() ? "conv" : "fc") << " c_in " << l.c_in << " c_out " << l.c_out
      << " k1 " << l.k1 << " k2 " << l.k2 << " h " << l.h_in << " w " << l.w_in << " bits "
      << l.weight_bits << " pool " << (net.pool_after[i] ? 1 : 0) << " scale "
      << fmt(weight_step(s, l.weight_bits)) << "\n";
  }
  const auto& h = model.hyper;
  m << "hyper lr " << fmt(h.learning_rate) << " momentum " << fmt(h.momentum) << " decay "
    << fmt(h.weight_decay) << " batch " << h.batch_size << " epochs " << h.epochs << " qat "
    << (h.quantization_aware ? 1 : 0) << "\n";
  m << "blob_floats " << blob_floats(net) << "\n";
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016" PRIx64, checksum);
  m << "checksum " << hex << "\n";

  std::ofstream mf(path);
  if (!mf) throw std::runtime_error("cannot write " + path.string());
  mf << m.str();
  std::ofstream bf(blob_path(path), std::ios::binary);
  if (!bf) throw std::runtime_error("cannot write " + blob_path(path).string());
  bf.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream mf(path);
  if (!mf) throw ModelFormatError("cannot open " + path.string());
  LoadedModel out;
  auto& net = out.net;
  std::string line;
  int lineno = 0;
  auto next = [&]() -> std::istringstream {
    if (!std::getline(mf, line)) throw ModelFormatError("manifest truncated after line " + std::to_string(lineno));
    ++lineno;
    return std::istringstream(line);
  };

  {
    auto in = next();
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "cimsec-model") throw ModelFormatError("not a cimsec model manifest");
    if (version != kModelFormatVersion) {
      throw ModelFormatError("unsupported model format version " + std::to_string(version) +
                             " (expected " + std::to_string(kModelFormatVersion) + ")");
    }
  }
  { auto in = next(); net.name = expect_field<std::string>(in, "name", lineno); }
  { auto in = next(); net.dataset = expect_field<std::string>(in, "dataset", lineno); }
  { auto in = next(); net.classes = expect_field<int>(in, "classes", lineno); }
  std::size_t layer_count = 0;
  { auto in = next(); layer_count = expect_field<std::size_t>(in, "layers", lineno); }
  for (std::size_t i = 0; i < layer_count; ++i) {
    auto in = next();
    LayerSpec l;
    const auto kind = expect_field<std::string>(in, "layer", lineno);
    if (kind != "conv" && kind != "fc") throw ModelFormatError("unknown layer kind " + kind);
    l.kind = kind == "conv" ? LayerKind::kConv : LayerKind::kFullyConnected;
    l.c_in = expect_field<int>(in, "c_in", lineno);
    l.c_out = expect_field<int>(in, "c_out", lineno);
    l.k1 = expect_field<int>(in, "k1", lineno);
    l.k2 = expect_field<int>(in, "k2", lineno);
    l.h_in = expect_field<int>(in, "h", lineno);
    l.w_in = expect_field<int>(in, "w", lineno);
    l.weight_bits = expect_field<int>(in, "bits", lineno);
    net.pool_after.push_back(expect_field<int>(in, "pool", lineno) != 0);
    net.layers.push_back(l);
  }
  {
    auto in = next();
    auto& h = out.model.hyper;
    std::string tag;
    in >> tag;
    if (tag != "hyper") throw ModelFormatError("manifest line " + std::to_string(lineno) + ": expected 'hyper'");
    h.learning_rate = expect_field<double>(in, "lr", lineno);
    h.momentum = expect_field<double>(in, "momentum", lineno);
    h.weight_decay = expect_field<double>(in, "decay", lineno);
    h.batch_size = expect_field<int>(in, "batch", lineno);
    h.epochs = expect_field<int>(in, "epochs", lineno);
    h.quantization_aware = expect_field<int>(in, "qat", lineno) != 0;
  }
  std::size_t floats = 0;
  { auto in = next(); floats = expect_field<std::size_t>(in, "blob_floats", lineno); }
  std::string checksum_hex;
  { auto in = next(); checksum_hex = expect_field<std::string>(in, "checksum", lineno); }

  try {
    net.validate();
  } catch (const std::invalid_argument& e) {
    throw ModelFormatError(std::string("manifest describes an invalid network: ") + e.what());
  }
  if (floats != blob_floats(net)) {
    throw ModelFormatError("shape mismatch: manifest declares " + std::to_string(floats) +
                           " floats, layers need " + std::to_string(blob_floats(net)));
  }
  std::vector<std::uint8_t> blob;
  try {
    blob = read_file(blob_path(path));
  } catch (const std::runtime_error& e) {
    throw ModelFormatError(e.what());
  }
  if (blob.size() != floats * 4) {
    throw ModelFormatError("blob length " + std::to_string(blob.size()) + " bytes, manifest declares " +
                           std::to_string(floats * 4));
  }
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016" PRIx64, fnv1a64(blob.data(), blob.size()));
  if (checksum_hex != hex) throw ModelFormatError("checksum failure: blob does not match manifest");

  const std::uint8_t* p = blob.data();
  for (const auto& l : net.layers) {
    std::vector<double> w(l.weight_count());
    for (auto& v : w) {
      v = get_f32(p);
      p += 4;
    }
    std::vector<double> b(static_cast<std::size_t>(l.c_out));
    for (auto& v : b) {
      v = get_f32(p);
      p += 4;
    }
    out.model.weights.push_back(std::move(w));
    out.model.biases.push_back(std::move(b));
  }
  return out;
}

}  // namespace cimsec::netcore
