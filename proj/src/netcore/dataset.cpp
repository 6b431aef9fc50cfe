#include "cimsec/netcore/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

#include "cimsec/rng.hpp"

namespace cimsec::netcore {

void Dataset::validate() const {
  if (channels < 1 || height < 1 || width < 1) throw std::invalid_argument("Dataset: bad geometry");
  if (train_x.size() != train_y.size() * image_size() || test_x.size() != test_y.size() * image_size()) {
    throw std::invalid_argument("Dataset: image/label count mismatch");
  }
  for (auto y : train_y) {
    if (y >= classes) throw std::invalid_argument("Dataset: label out of range");
  }
  for (auto y : test_y) {
    if (y >= classes) throw std::invalid_argument("Dataset: label out of range");
  }
}

namespace {

// One smooth pattern component evaluated at continuous pixel coordinates.
struct Component {
  double cx, cy, radius;
  double angle, freq, phase;
  bool grating;

  double operator()(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double env = std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
    if (!grating) return env;
    const double u = dx * std::cos(angle) + dy * std::sin(angle);
    return env * std::cos(freq * u + phase);
  }
};

using Prototype = std::vector<std::vector<Component>>;  // [channel][component]

Prototype make_prototype(const SyntheticSpec& s, int cls) {
  CounterRng rng{s.seed, 0x9e07ULL, static_cast<std::uint64_t>(cls)};
  Prototype p(static_cast<std::size_t>(s.channels));
  const double extent = std::min(s.height, s.width);
  for (auto& comps : p) {
    for (int k = 0; k < 3; ++k) {
      Component c;
      c.cx = (0.2 + 0.6 * rng.uniform()) * s.width;
      c.cy = (0.2 + 0.6 * rng.uniform()) * s.height;
      c.radius = (0.15 + 0.2 * rng.uniform()) * extent;
      c.angle = rng.uniform() * std::numbers::pi;
      c.freq = 0.6 + 1.2 * rng.uniform();
      c.phase = rng.uniform() * 2.0 * std::numbers::pi;
      c.grating = k != 2;
      // Sign of the component so classes differ in polarity too.
      if (rng.coin()) c.phase += std::numbers::pi;
      comps.push_back(c);
    }
  }
  return p;
}

double eval(const Prototype& p, int channel, double x, double y) {
  double v = 0.0;
  for (const auto& c : p[channel]) v += c(x, y);
  return v / static_cast<double>(p[channel].size());
}

void render(const SyntheticSpec& s, const std::vector<Prototype>& protos, std::uint64_t stream,
            std::size_t count, std::vector<float>& images, std::vector<std::uint8_t>& labels) {
  const std::size_t isz = static_cast<std::size_t>(s.channels) * s.height * s.width;
  images.resize(count * isz);
  labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    CounterRng rng{s.seed, stream, i};
    const int cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.classes)));
    int other = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.classes - 1)));
    if (other >= cls) ++other;
    const double shift_x = 3.0 * rng.uniform() - 1.5;
    const double shift_y = 3.0 * rng.uniform() - 1.5;
    const double contrast = 0.7 + 0.6 * rng.uniform();
    const double distract = 0.6 * rng.uniform();
    labels[i] = static_cast<std::uint8_t>(cls);
    float* img = images.data() + i * isz;
    for (int c = 0; c < s.channels; ++c) {
      for (int y = 0; y < s.height; ++y) {
        for (int x = 0; x < s.width; ++x) {
          const double px = x - shift_x;
          const double py = y - shift_y;
          double v = contrast * eval(protos[cls], c, px, py) + distract * eval(protos[other], c, x, y);
          v = s.background + 0.9 * v + s.noise * rng.normal();
          img[(static_cast<std::size_t>(c) * s.height + y) * s.width + x] =
              static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

}  // namespace

Dataset make_synthetic(const SyntheticSpec& s) {
  if (s.classes < 2 || s.channels < 1 || s.height < 2 || s.width < 2) {
    throw std::invalid_argument("make_synthetic: bad geometry");
  }
  Dataset d;
  d.id = "synthetic";
  d.channels = s.channels;
  d.height = s.height;
  d.width = s.width;
  d.classes = s.classes;
  std::vector<Prototype> protos;
  for (int k = 0; k < s.classes; ++k) protos.push_back(make_prototype(s, k));
  render(s, protos, 0x7a11ULL, s.train_count, d.train_x, d.train_y);
  render(s, protos, 0x7e57ULL, s.test_count, d.test_x, d.test_y);
  return d;
}

void parse_cifar10_records(std::span<const std::uint8_t> bytes, std::vector<float>& images,
                           std::vector<std::uint8_t>& labels) {
  constexpr std::size_t kRecord = 3073;
  if (bytes.empty()) throw std::runtime_error("CIFAR-10: empty file");
  if (bytes.size() % kRecord != 0) {
    throw std::runtime_error("CIFAR-10: truncated record (file size " + std::to_string(bytes.size()) +
                             " is not a multiple of 3073)");
  }
  const std::size_t n = bytes.size() / kRecord;
  const std::size_t base_img = images.size();
  images.resize(base_img + n * 3072);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * kRecord;
    if (rec[0] > 9) throw std::runtime_error("CIFAR-10: label out of range in record " + std::to_string(i));
    labels.push_back(rec[0]);
    for (std::size_t k = 0; k < 3072; ++k) images[base_img + i * 3072 + k] = rec[1 + k] / 255.0f;
  }
}

IdxFile parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || bytes[0] != 0 || bytes[1] != 0) throw std::runtime_error("IDX: bad magic");
  if (bytes[2] != 0x08) throw std::runtime_error("IDX: only unsigned byte payloads are supported");
  const int ndims = bytes[3];
  if (ndims < 1 || bytes.size() < 4 + 4 * static_cast<std::size_t>(ndims)) {
    throw std::runtime_error("IDX: truncated header");
  }
  IdxFile f;
  std::size_t total = 1;
  for (int d = 0; d < ndims; ++d) {
    f.dims.push_back(be32(bytes.data() + 4 + 4 * d));
    total *= f.dims.back();
  }
  const std::size_t off = 4 + 4 * static_cast<std::size_t>(ndims);
  if (bytes.size() - off != total) {
    throw std::runtime_error("IDX: payload has " + std::to_string(bytes.size() - off) +
                             " bytes, header declares " + std::to_string(total));
  }
  f.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(off), bytes.end());
  return f;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

Dataset load_cifar10(const std::filesystem::path& dir) {
  Dataset d;
  d.id = "cifar10";
  d.channels = 3;
  d.height = d.width = 32;
  for (int b = 1; b <= 5; ++b) {
    parse_cifar10_records(read_file(dir / ("data_batch_" + std::to_string(b) + ".bin")), d.train_x, d.train_y);
  }
  parse_cifar10_records(read_file(dir / "test_batch.bin"), d.test_x, d.test_y);
  d.validate();
  return d;
}

namespace {

void load_mnist_split(const std::filesystem::path& images, const std::filesystem::path& labels,
                      std::vector<float>& x, std::vector<std::uint8_t>& y) {
  const IdxFile img = parse_idx(read_file(images));
  const IdxFile lab = parse_idx(read_file(labels));
  if (img.dims.size() != 3 || img.dims[1] != 28 || img.dims[2] != 28) {
    throw std::runtime_error("MNIST: image file must be n x 28 x 28");
  }
  if (lab.dims.size() != 1 || lab.dims[0] != img.dims[0]) {
    throw std::runtime_error("MNIST: label count does not match image count");
  }
  for (auto v : lab.data) {
    if (v > 9) throw std::runtime_error("MNIST: label out of range");
  }
  x.resize(img.data.size());
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = img.data[k] / 255.0f;
  y = lab.data;
}

}  // namespace

Dataset load_mnist(const std::filesystem::path& dir) {
  Dataset d;
  d.id = "mnist";
  d.channels = 1;
  d.height = d.width = 28;
  load_mnist_split(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", d.train_x, d.train_y);
  load_mnist_split(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", d.test_x, d.test_y);
  d.validate();
  return d;
}

Dataset load_dataset(const std::string& id, const std::filesystem::path& path,
                     const SyntheticSpec& synthetic) {
  if (id == "cifar10") return load_cifar10(path);
  if (id == "mnist") return load_mnist(path);
  if (id == "synthetic") return make_synthetic(synthetic);
  throw std::invalid_argument("unknown dataset id '" + id + "'");
}

}  // namespace cimsec::netcore
