#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "cimsec/adcvar/adc.hpp"
#include "cimsec/expcli/experiment.hpp"
#include "cimsec/netcore/network.hpp"
#include "cimsec/rng.hpp"
#include "cimsec/threatbench/bench.hpp"

namespace cimsec::expcli {

using json = nlohmann::ordered_json;

namespace {

const std::vector<std::pair<ExperimentKind, std::string>>& kind_names() {
  static const std::vector<std::pair<ExperimentKind, std::string>> names = {
      {ExperimentKind::kBaseline, "baseline"},         {ExperimentKind::kOffsetSensitivity, "offset-sensitivity"},
      {ExperimentKind::kRetrain, "retrain"},           {ExperimentKind::kCloneAttack, "clone-attack"},
      {ExperimentKind::kKeyAttack, "key-attack"},      {ExperimentKind::kSweep, "sweep"},
      {ExperimentKind::kBounds, "bounds"},             {ExperimentKind::kCost, "cost"},
  };
  return names;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
  return out;
}

// Walks one JSON object, remembering which keys were read so leftovers can
// be reported as unknown fields.
class Reader {
 public:
  Reader(const json& obj, std::string path, const std::string& text, const std::string& origin)
      : obj_(obj), path_(std::move(path)), text_(text), origin_(origin) {
    if (!obj_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
    std::string where = origin_;
    if (const int line = line_of(field); line > 0) where += ":" + std::to_string(line);
    throw ConfigError(where + ": " + field + ": " + msg);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw std::invalid_argument("expected true or false");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw std::invalid_argument("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->is_number_integer() && !it->is_number_unsigned() && it->template get<long long>() < 0) {
            throw std::invalid_argument("must not be negative");
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw std::invalid_argument("expected a string");
      } else {
        if (!it->is_array()) throw std::invalid_argument("expected an array");
      }
      out = it->template get<T>();
    } catch (const std::exception& e) {
      fail(field(key), e.what());
    }
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    static const json empty = json::object();
    return Reader(it == obj_.end() ? empty : *it, field(key), text_, origin_);
  }

  void finish() const {
    for (const auto& item : obj_.items()) {
      if (!seen_.count(item.key())) fail(field(item.key()), "unknown field");
    }
  }

 private:
  int line_of(const std::string& dotted) const {
    const std::string key = "\"" + dotted.substr(dotted.rfind('.') + 1) + "\"";
    const auto pos = text_.find(key);
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
  }

  const json& obj_;
  std::string path_;
  const std::string& text_;
  const std::string& origin_;
  std::set<std::string> seen_;
};

}  // namespace

std::string to_string(ExperimentKind kind) {
  for (const auto& [k, name] : kind_names()) {
    if (k == kind) return name;
  }
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (const auto& [k, n] : kind_names()) {
    if (n == name) return k;
  }
  throw std::invalid_argument("unknown experiment '" + name + "' (expected one of " + join(experiment_kinds()) + ")");
}

std::vector<std::string> experiment_kinds() {
  std::vector<std::string> out;
  for (const auto& kv : kind_names()) out.push_back(kv.second);
  return out;
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t at = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(at > 0 ? at - 1 : 0), '\n');
    const auto line_start = text.rfind('\n', at > 1 ? at - 2 : 0);
    const auto column = at - (line_start == std::string::npos ? 0 : line_start + 1);
    throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(column) +
                      ": syntax error: " + e.what());
  }

  ExperimentConfig c;
  Reader root(doc, "", text, origin);
  auto check = [](Reader& r, const std::string& field, bool ok, const std::string& msg) {
    if (!ok) r.fail(field, msg);
  };

  std::string kind;
  root.get("experiment", kind);
  if (kind.empty()) root.fail("experiment", "missing (expected one of " + join(experiment_kinds()) + ")");
  try {
    c.kind = parse_experiment_kind(kind);
  } catch (const std::invalid_argument& e) {
    root.fail("experiment", e.what());
  }
  c.id = kind;
  root.get("id", c.id);
  check(root, "id", !c.id.empty() && c.id.find_first_of(",\n\"") == std::string::npos,
        "must be non-empty without commas or quotes");
  root.get("master_seed", c.master_seed);
  root.get("network", c.network);
  const auto presets = netcore::network_presets();
  check(root, "network", std::find(presets.begin(), presets.end(), c.network) != presets.end(),
        "unknown network preset '" + c.network + "' (known: " + join(presets) + ")");
  root.get("weight_bits", c.weight_bits);
  check(root, "weight_bits", c.weight_bits >= 2 && c.weight_bits <= 8, "must be in 2..8");
  root.get("mapping", c.mapping);
  check(root, "mapping", c.mapping == "subkernel" || c.mapping == "conventional",
        "expected subkernel or conventional");
  root.get("model", c.model_path);
  root.get("population", c.population);
  check(root, "population", c.population >= 1, "must be >= 1");
  root.get("eval_limit", c.eval_limit);
  root.get("output_dir", c.output_dir);

  {
    Reader d = root.child("dataset");
    d.get("id", c.dataset.id);
    check(d, d.field("id"), c.dataset.id == "synthetic" || c.dataset.id == "cifar10" || c.dataset.id == "mnist",
          "unknown dataset '" + c.dataset.id + "' (known: synthetic, cifar10, mnist)");
    d.get("path", c.dataset.path);
    auto& s = c.dataset.synthetic;
    d.get("seed", s.seed);
    d.get("train_count", s.train_count);
    d.get("test_count", s.test_count);
    d.get("channels", s.channels);
    d.get("height", s.height);
    d.get("width", s.width);
    d.get("classes", s.classes);
    d.get("noise", s.noise);
    d.get("background", s.background);
    check(d, d.field("classes"), s.classes >= 2, "must be >= 2");
    check(d, d.field("noise"), s.noise >= 0.0, "must be >= 0");
    d.finish();
  }
  {
    Reader t = root.child("train");
    t.get("epochs", c.train.epochs);
    t.get("learning_rate", c.train.learning_rate);
    t.get("momentum", c.train.momentum);
    t.get("weight_decay", c.train.weight_decay);
    t.get("batch_size", c.train.batch_size);
    t.get("quantization_aware", c.train.quantization_aware);
    check(t, t.field("epochs"), c.train.epochs >= 0, "must be >= 0");
    check(t, t.field("learning_rate"), c.train.learning_rate > 0.0, "must be > 0");
    check(t, t.field("batch_size"), c.train.batch_size >= 1, "must be >= 1");
    t.finish();
  }
  {
    Reader a = root.child("adc");
    a.get("kind", c.adc.kind);
    try {
      adcvar::parse_adc_kind(c.adc.kind);
    } catch (const std::invalid_argument& e) {
      a.fail(a.field("kind"), e.what());
    }
    a.get("wl", c.adc.wl);
    a.get("bits", c.adc.bits);
    a.get("level_spacing", c.adc.level_spacing);
    a.get("pass_rate_file", c.adc.pass_rate_file);
    const auto wl = adcvar::passrate_presets();
    check(a, a.field("wl"), !c.adc.pass_rate_file.empty() || std::find(wl.begin(), wl.end(), c.adc.wl) != wl.end(),
          "unknown pass-rate preset '" + c.adc.wl + "' (known: " + join(wl) + ")");
    check(a, a.field("bits"), c.adc.bits >= 1 && c.adc.bits <= 7, "must be in 1..7");
    check(a, a.field("level_spacing"), c.adc.level_spacing > 0.0, "must be > 0");
    a.finish();
  }
  {
    Reader r = root.child("retrain");
    r.get("epochs", c.retrain.epochs);
    r.get("learning_rate", c.retrain.learning_rate);
    r.get("repeats", c.retrain.repeats);
    r.get("train_limit", c.retrain.train_limit);
    r.get("control", c.retrain.control);
    check(r, r.field("epochs"), c.retrain.epochs >= 0 && c.retrain.epochs <= 2, "must be in 0..2");
    check(r, r.field("learning_rate"), c.retrain.learning_rate > 0.0, "must be > 0");
    check(r, r.field("repeats"), c.retrain.repeats >= 1, "must be >= 1");
    r.finish();
  }
  {
    Reader k = root.child("keys");
    k.get("layers", c.keys.layers);
    k.get("zeros", c.keys.zeros);
    k.get("planes", c.keys.planes);
    k.get("trials", c.keys.trials);
    check(k, k.field("zeros"), c.keys.zeros >= 0, "must be >= 0");
    check(k, k.field("trials"), c.keys.trials >= 1, "must be >= 1");
    for (int p : c.keys.planes) check(k, k.field("planes"), p >= 0 && p < c.weight_bits, "plane out of range");
    k.finish();
  }
  {
    Reader s = root.child("sweep");
    s.get("axis", c.sweep.axis);
    try {
      threatbench::parse_sweep_axis(c.sweep.axis);
    } catch (const std::invalid_argument& e) {
      s.fail(s.field("axis"), e.what());
    }
    s.get("points", c.sweep.points);
    s.finish();
  }
  {
    Reader b = root.child("bounds");
    b.get("N", c.bounds.N);
    b.get("k", c.bounds.k);
    b.get("max_n", c.bounds.max_n);
    b.get("trials", c.bounds.trials);
    check(b, b.field("N"), c.bounds.N >= 1, "must be >= 1");
    check(b, b.field("k"), c.bounds.k >= 0, "must be >= 0");
    check(b, b.field("max_n"), c.bounds.max_n >= 0 && c.bounds.max_n <= c.bounds.N, "must be in 0..N");
    check(b, b.field("trials"), c.bounds.trials >= 1, "must be >= 1");
    b.finish();
  }
  {
    Reader h = root.child("cost");
    h.get("weight_bits", c.cost.weight_bits);
    h.get("sharing", c.cost.sharing);
    h.get("table", c.cost.table);
    check(h, h.field("sharing"), c.cost.sharing >= 1, "sharing factor must be >= 1");
    check(h, h.field("weight_bits"), !c.cost.weight_bits.empty(), "must list at least one precision");
    for (int b : c.cost.weight_bits) check(h, h.field("weight_bits"), b >= 1 && b <= 8, "precision out of 1..8");
    h.finish();
  }
  {
    Reader o = root.child("offset");
    o.get("kinds", c.offset.kinds);
    o.get("wl", c.offset.wl);
    o.get("weight_bits", c.offset.weight_bits);
    o.get("chips", c.offset.chips);
    o.get("models", c.offset.models);
    for (const auto& k : c.offset.kinds) {
      try {
        adcvar::parse_adc_kind(k);
      } catch (const std::invalid_argument& e) {
        o.fail(o.field("kinds"), e.what());
      }
    }
    const auto wl = adcvar::passrate_presets();
    for (const auto& w : c.offset.wl) {
      check(o, o.field("wl"), std::find(wl.begin(), wl.end(), w) != wl.end(),
            "unknown pass-rate preset '" + w + "' (known: " + join(wl) + ")");
    }
    for (int b : c.offset.weight_bits) check(o, o.field("weight_bits"), b >= 2 && b <= 8, "precision out of 2..8");
    check(o, o.field("chips"), c.offset.chips >= 1, "must be >= 1");
    check(o, o.field("models"), c.offset.models >= 1, "must be >= 1");
    check(o, o.field("models"), c.offset.models == 1 || c.model_path.empty(),
          "a loaded model cannot be replicated; use models = 1");
    o.finish();
  }
  // Emitted configs carry their hash; it is informational on input.
  std::string ignored;
  root.get("config_hash", ignored);
  root.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open config");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = to_string(c.kind);
  j["id"] = c.id;
  j["master_seed"] = c.master_seed;
  const auto& s = c.dataset.synthetic;
  j["dataset"] = {{"id", c.dataset.id},
                  {"path", c.dataset.path},
                  {"seed", s.seed},
                  {"train_count", s.train_count},
                  {"test_count", s.test_count},
                  {"channels", s.channels},
                  {"height", s.height},
                  {"width", s.width},
                  {"classes", s.classes},
                  {"noise", s.noise},
                  {"background", s.background}};
  j["network"] = c.network;
  j["weight_bits"] = c.weight_bits;
  j["mapping"] = c.mapping;
  j["model"] = c.model_path;
  j["train"] = {{"epochs", c.train.epochs},
                {"learning_rate", c.train.learning_rate},
                {"momentum", c.train.momentum},
                {"weight_decay", c.train.weight_decay},
                {"batch_size", c.train.batch_size},
                {"quantization_aware", c.train.quantization_aware}};
  j["adc"] = {{"kind", c.adc.kind},
              {"wl", c.adc.wl},
              {"bits", c.adc.bits},
              {"level_spacing", c.adc.level_spacing},
              {"pass_rate_file", c.adc.pass_rate_file}};
  j["population"] = c.population;
  j["retrain"] = {{"epochs", c.retrain.epochs},
                  {"learning_rate", c.retrain.learning_rate},
                  {"repeats", c.retrain.repeats},
                  {"train_limit", c.retrain.train_limit},
                  {"control", c.retrain.control}};
  j["keys"] = {{"layers", c.keys.layers}, {"zeros", c.keys.zeros}, {"planes", c.keys.planes}, {"trials", c.keys.trials}};
  j["sweep"] = {{"axis", c.sweep.axis}, {"points", c.sweep.points}};
  j["bounds"] = {{"N", c.bounds.N}, {"k", c.bounds.k}, {"max_n", c.bounds.max_n}, {"trials", c.bounds.trials}};
  j["cost"] = {{"weight_bits", c.cost.weight_bits}, {"sharing", c.cost.sharing}, {"table", c.cost.table}};
  j["offset"] = {{"kinds", c.offset.kinds},
                 {"wl", c.offset.wl},
                 {"weight_bits", c.offset.weight_bits},
                 {"chips", c.offset.chips},
                 {"models", c.offset.models}};
  j["eval_limit"] = c.eval_limit;
  j["output_dir"] = c.output_dir;
  return j;
}

std::string config_hash(const ExperimentConfig& config) {
  json j = to_json(config);
  j.erase("output_dir");
  const std::string text = j.dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text.data(), text.size())));
  return buf;
}

std::filesystem::path resolve_dataset_path(const DatasetConfig& dataset) {
  std::filesystem::path p = dataset.path;
  if (const char* root = std::getenv(kDataRootEnv); root != nullptr && *root != '\0') {
    if (p.empty()) return std::filesystem::path(root) / dataset.id;
    if (p.is_relative()) return std::filesystem::path(root) / p;
  }
  return p;
}

}  // namespace cimsec::expcli
