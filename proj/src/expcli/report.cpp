#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "cimsec/adcvar/adc.hpp"
#include "cimsec/expcli/experiment.hpp"
#include "cimsec/netcore/network.hpp"
#include "cimsec/threatbench/bench.hpp"

namespace cimsec::expcli {

using json = nlohmann::ordered_json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string one_result(const std::filesystem::path& dir) {
  json summary;
  try {
    summary = json::parse(slurp(dir / "summary.json"));
  } catch (const json::exception& e) {
    throw std::runtime_error((dir / "summary.json").string() + ": corrupt summary: " + e.what());
  }
  const auto csv_path = dir / "results.csv";
  std::istringstream csv(slurp(csv_path));
  std::string line;
  if (!std::getline(csv, line) || line != kCsvHeader) {
    throw std::runtime_error(csv_path.string() + ": unexpected header");
  }
  // (axis, point, label, metric) -> samples, in file order.
  using Key = std::tuple<std::string, double, std::string, std::string>;
  std::vector<Key> order;
  std::map<Key, std::vector<double>> groups;
  int line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    const auto f = split(line, ',');
    if (f.size() != 10) throw std::runtime_error(csv_path.string() + ":" + std::to_string(line_no) + ": expected 10 fields");
    Key k;
    double v = 0;
    try {
      k = {f[3], std::stod(f[4]), f[5], f[6]};
      v = std::stod(f[9]);
    } catch (const std::exception&) {
      throw std::runtime_error(csv_path.string() + ":" + std::to_string(line_no) + ": bad number");
    }
    if (!groups.count(k)) order.push_back(k);
    groups[k].push_back(v);
  }

  std::ostringstream out;
  out << "== " << summary.value("id", std::string("?")) << " (" << summary.value("experiment", std::string("?"))
      << ")  config " << summary.value("config_hash", std::string("?")) << "  seed "
      << summary.value("master_seed", 0ULL) << "\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-18s %8s %-22s %-24s %5s %10s %10s %10s\n", "axis", "point", "label", "metric", "n",
                "min", "median", "max");
  out << buf;
  for (const auto& k : order) {
    const auto s = threatbench::summarize(groups[k]);
    std::snprintf(buf, sizeof buf, "%-18s %8g %-22s %-24s %5zu %10.4f %10.4f %10.4f\n", std::get<0>(k).c_str(),
                  std::get<1>(k), std::get<2>(k).c_str(), std::get<3>(k).c_str(), s.count, s.min, s.median, s.max);
    out << buf;
  }
  if (summary.contains("checks")) {
    for (const auto& c : summary["checks"]) {
      std::snprintf(buf, sizeof buf, "  [%s] %s = %.6g\n", c.value("pass", false) ? "pass" : "FAIL",
                    c.value("name", std::string("?")).c_str(), c.value("value", 0.0));
      out << buf;
    }
  }
  return out.str();
}

}  // namespace

std::string report(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error(dir.string() + ": not a directory");
  std::vector<std::filesystem::path> found;
  if (std::filesystem::exists(dir / "summary.json")) found.push_back(dir);
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_directory() && std::filesystem::exists(e.path() / "summary.json")) found.push_back(e.path());
  }
  if (found.empty()) throw std::runtime_error("no results in " + dir.string());
  std::sort(found.begin() + (found.front() == dir ? 1 : 0), found.end());
  std::string out;
  for (const auto& d : found) out += one_result(d) + "\n";
  return out;
}

std::string list_presets() {
  std::ostringstream out;
  auto line = [&](const std::string& what, const std::vector<std::string>& items) {
    out << what << ":";
    for (const auto& i : items) out << ' ' << i;
    out << "\n";
  };
  line("networks", netcore::network_presets());
  line("pass-rate curves", adcvar::passrate_presets());
  line("adc kinds", {"flash", "sar"});
  line("experiments", experiment_kinds());
  line("sweep axes", {"layer_count", "layer_location", "bit_planes", "matched_digits"});
  line("datasets", {"synthetic", "cifar10", "mnist"});
  return out.str();
}

}  // namespace cimsec::expcli
