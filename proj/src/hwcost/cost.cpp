#include "cimsec/hwcost/cost.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cimsec/netcore/qtensor.hpp"

namespace cimsec::hwcost {

namespace {

constexpr int kTileSize = 128;
constexpr int kInputCycles = netcore::kActivationBits;

bool has_prefix(const std::string& s, const std::string& prefix) {
  return s.compare(0, prefix.size(), prefix) == 0;
}

long long ceil_div(long long a, long long b) { return (a + b - 1) / b; }

long long tile_positions(const netcore::LayerSpec& l) {
  return ceil_div(l.rows(), kTileSize) * ceil_div(l.c_out, kTileSize);
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream os;
  os << std::setprecision(17) << *v;
  return os.str();
}

}  // namespace

const CostRecord& CostModel::lookup(const std::string& name) const {
  for (const auto& r : records) {
    if (r.name == name) return r;
  }
  throw std::invalid_argument("unknown cost component '" + name + "'");
}

std::vector<CostRecord> CostModel::components(const std::string& prefix) const {
  std::vector<CostRecord> out;
  for (const auto& r : records) {
    if (has_prefix(r.name, prefix + ".") && r.name != prefix + ".total") out.push_back(r);
  }
  return out;
}

CostRecord CostModel::component_sum(const std::string& prefix) const {
  CostRecord sum{prefix + ".sum", 0.0, 0.0, 0.0};
  for (const auto& r : components(prefix)) {
    sum.area += r.area;
    *sum.latency += r.latency.value_or(0.0);
    *sum.energy += r.energy.value_or(0.0);
  }
  return sum;
}

void CostModel::validate() const {
  if (sharing < 1) throw std::invalid_argument("cost model: sharing factor must be >= 1");
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.name).second) throw std::invalid_argument("cost model: duplicate component '" + r.name + "'");
    if (r.area < 0.0 || r.latency.value_or(0.0) < 0.0 || r.energy.value_or(0.0) < 0.0) {
      throw std::invalid_argument("cost model: negative value for '" + r.name + "'");
    }
  }
  for (const char* name : {"rram.total", "sram.total"}) {
    const auto& t = lookup(name);
    if (!(t.area > 0.0) || !(t.latency.value_or(0.0) > 0.0) || !(t.energy.value_or(0.0) > 0.0)) {
      throw std::invalid_argument(std::string("cost model: ") + name + " needs positive area, latency and energy");
    }
  }
}

CostModel default_cost_model() {
  CostModel m;
  m.records = {
      {"rram.array", 855.436, 32.027, 55.2594},
      {"rram.wswitch", 350.644, std::nullopt, std::nullopt},
      {"rram.sswitch", 236.357, std::nullopt, std::nullopt},
      {"rram.adc", 5221.339, 112.945, 85.174},  // 16 x 5-bit SAR
      {"rram.shiftadd", 1012.92, 0.84, 10.07},  // 16 x 14-bit
      {"rram.total", 7029.7, 145.813, 150.5},
      {"sram.array", 5994.12, 1.251, 3.3},
      {"sram.wswitch", 1293.773, std::nullopt, 2.825},
      {"sram.precharger", 511.527, std::nullopt, 5.176},
      {"sram.writedriver", 511.527, std::nullopt, 0.0},
      {"sram.senseamp", 334.705, 0.12, 23.552},  // 128 x 1-bit
      {"sram.total", 8645.652, 1.371, 34.853},
  };
  return m;
}

CostModel load_cost_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open cost table " + path.string());
  CostModel m;
  std::string line;
  int line_no = 0;
  auto number = [&](const std::string& tok) -> std::optional<double> {
    if (tok == "-") return std::nullopt;
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used == tok.size()) return v;
    } catch (const std::exception&) {
    }
    throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad number '" + tok + "'");
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok[0] == "sharing" && tok.size() == 2) {
      m.sharing = static_cast<int>(*number(tok[1]));
      continue;
    }
    if (tok.size() != 4) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected `name area latency energy`");
    }
    const auto area = number(tok[1]);
    if (!area) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": area cannot be blank");
    m.records.push_back({tok[0], *area, number(tok[2]), number(tok[3])});
  }
  m.validate();
  return m;
}

void save_cost_table(const std::filesystem::path& path, const CostModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write cost table " + path.string());
  out << "# name area latency_ns energy_pj\n";
  out << "sharing " << model.sharing << "\n";
  for (const auto& r : model.records) {
    out << r.name << ' ' << cell(r.area) << ' ' << cell(r.latency) << ' ' << cell(r.energy) << "\n";
  }
}

TileCount tile_count(const netcore::NetworkSpec& net, int weight_bits) {
  if (weight_bits < 1) throw std::invalid_argument("tile_count: weight_bits must be >= 1");
  TileCount tc;
  for (const auto& l : net.layers) {
    tc.per_layer.push_back(tile_positions(l) * weight_bits);
    tc.total += tc.per_layer.back();
  }
  return tc;
}

ShuffleOverhead shuffle_overhead(const netcore::NetworkSpec& net, int weight_bits,
                                 const std::vector<int>& shuffled_layers, int shuffled_planes,
                                 const CostModel& model) {
  model.validate();
  if (weight_bits < 1) throw std::invalid_argument("shuffle_overhead: weight_bits must be >= 1");
  if (shuffled_planes < 0 || shuffled_planes > weight_bits) {
    throw std::invalid_argument("shuffle_overhead: shuffled planes must be in 0.." + std::to_string(weight_bits));
  }
  std::set<int> shuffled;
  for (int li : shuffled_layers) {
    if (li < 0 || li >= static_cast<int>(net.layers.size())) {
      throw std::invalid_argument("shuffle_overhead: layer " + std::to_string(li) + " does not exist");
    }
    shuffled.insert(li);
  }
  const auto& rram = model.lookup("rram.total");
  const auto& sram = model.lookup("sram.total");
  const double rram_sum_area = model.component_sum("rram").area;

  ShuffleOverhead o;
  double vmm_cycles = 0.0;
  double shuffle_time = 0.0;
  for (int li = 0; li < static_cast<int>(net.layers.size()); ++li) {
    const auto& l = net.layers[li];
    const long long tp = tile_positions(l);
    const double cycles = static_cast<double>(l.positions()) * kInputCycles;
    o.weight_tiles += tp * weight_bits;
    o.weight_ops += static_cast<double>(tp * weight_bits) * cycles;
    vmm_cycles += cycles;
    if (!shuffled.count(li)) continue;
    o.shuffle_arrays += ceil_div(tp, model.sharing);
    o.shuffle_ops += static_cast<double>(tp * shuffled_planes) * cycles;
    shuffle_time += cycles * model.sharing * shuffled_planes * sram.latency.value_or(0.0);
  }
  const double shuffle_area = static_cast<double>(o.shuffle_arrays) * sram.area;
  o.area_pct = 100.0 * shuffle_area / (static_cast<double>(o.weight_tiles) * rram.area);
  o.area_pct_component_basis = 100.0 * shuffle_area / (static_cast<double>(o.weight_tiles) * rram_sum_area);
  o.energy_pct = 100.0 * o.shuffle_ops * sram.energy.value_or(0.0) / (o.weight_ops * rram.energy.value_or(0.0));
  o.latency_pct = 100.0 * shuffle_time / (vmm_cycles * rram.latency.value_or(0.0));
  return o;
}

}  // namespace cimsec::hwcost
