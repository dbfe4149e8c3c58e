#include "cts/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "cts/errors.hpp"

namespace cts {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("key '" + key + "': trailing characters in '" + v + "'");
  return static_cast<std::size_t>(n);
}

int to_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  int n = 0;
  try {
    n = std::stoi(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("key '" + key + "': trailing characters in '" + v + "'");
  return n;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("key '" + key + "': trailing characters in '" + v + "'");
  return d;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string join(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

struct Field {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define CTS_SIZE_FIELD(KEY, MEMBER)                                                      \
  Field {                                                                                \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_size(KEY, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }               \
  }
#define CTS_INT_FIELD(KEY, MEMBER)                                                      \
  Field {                                                                               \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_int(KEY, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }              \
  }
#define CTS_DOUBLE_FIELD(KEY, MEMBER)                                                      \
  Field {                                                                                  \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); }, \
        [](const ExperimentConfig& c) { return fmt_double(c.MEMBER); }                     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields{
      Field{"name", [](ExperimentConfig& c, const std::string& v) { c.name = v; },
            [](const ExperimentConfig& c) { return c.name; }},
      Field{"data_root", [](ExperimentConfig& c, const std::string& v) { c.data_root = v; },
            [](const ExperimentConfig& c) { return c.data_root.string(); }},
      Field{"out_dir", [](ExperimentConfig& c, const std::string& v) { c.out_dir = v; },
            [](const ExperimentConfig& c) { return c.out_dir.string(); }},
      CTS_SIZE_FIELD("seed", seed),
      CTS_SIZE_FIELD("data.count", data.count),
      CTS_SIZE_FIELD("data.seed", data.base_seed),
      CTS_SIZE_FIELD("data.height", data.height),
      CTS_SIZE_FIELD("data.width", data.width),
      CTS_INT_FIELD("data.num_classes", data.num_classes),
      CTS_INT_FIELD("data.min_shapes", data.min_shapes),
      CTS_INT_FIELD("data.max_shapes", data.max_shapes),
      CTS_DOUBLE_FIELD("data.noise", data.noise_amplitude),
      CTS_SIZE_FIELD("data.val_count", val_count),
      CTS_SIZE_FIELD("patch_size", vit.patch_size),
      CTS_SIZE_FIELD("vit.depth", vit.depth),
      CTS_SIZE_FIELD("vit.heads", vit.heads),
      CTS_SIZE_FIELD("vit.embed_dim", vit.embed_dim),
      CTS_SIZE_FIELD("vit.mlp_ratio", vit.mlp_ratio),
      Field{"decoder",
            [](ExperimentConfig& c, const std::string& v) { c.decoder = parse_decoder(v); },
            [](const ExperimentConfig& c) { return std::string(decoder_name(c.decoder)); }},
      CTS_SIZE_FIELD("decoder.hidden", decoder_hidden),
      Field{"policy.widths",
            [](ExperimentConfig& c, const std::string& v) { c.policy.widths = parse_size_list(v); },
            [](const ExperimentConfig& c) { return join(c.policy.widths); }},
      CTS_DOUBLE_FIELD("policy.lr", policy.lr),
      CTS_DOUBLE_FIELD("policy.momentum", policy.momentum),
      CTS_DOUBLE_FIELD("policy.weight_decay", policy.weight_decay),
      CTS_SIZE_FIELD("policy.iterations", policy.iterations),
      CTS_SIZE_FIELD("policy.batch_size", policy.batch_size),
      CTS_DOUBLE_FIELD("seg.lr", seg.lr),
      CTS_DOUBLE_FIELD("seg.momentum", seg.momentum),
      CTS_DOUBLE_FIELD("seg.weight_decay", seg.weight_decay),
      CTS_SIZE_FIELD("seg.iterations", seg.iterations),
      CTS_SIZE_FIELD("seg.batch_size", seg.batch_size),
      Field{"schedule",
            [](ExperimentConfig& c, const std::string& v) { c.schedule = parse_size_list(v); },
            [](const ExperimentConfig& c) { return join(c.schedule); }},
  };
  return kFields;
}

#undef CTS_SIZE_FIELD
#undef CTS_INT_FIELD
#undef CTS_DOUBLE_FIELD

}  // namespace

KeyValues parse_key_values(std::istream& in) {
  KeyValues out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" + t + "'");
    }
    std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    out.emplace_back(std::move(key), trim(t.substr(eq + 1)));
  }
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty entry in list '" + text + "'");
    out.push_back(to_size("list", item));
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

ExperimentConfig ExperimentConfig::parse(std::istream& in) {
  ExperimentConfig cfg;
  for (const auto& [key, value] : parse_key_values(in)) {
    bool known = false;
    for (const auto& f : fields()) {
      if (key == f.key) {
        f.set(cfg, value);
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("unknown config key '" + key + "'");
  }
  cfg.finalize();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse(in);
}

void ExperimentConfig::finalize() {
  data.patch_size = vit.patch_size;
  policy.patch_size = vit.patch_size;
  policy.seed = seed;
  seg.seed = seed;
  const std::size_t sp = 2 * vit.patch_size;
  if (vit.patch_size == 0 || data.height % sp != 0 || data.width % sp != 0) {
    throw ConfigError("data.height/data.width must be multiples of 2*patch_size");
  }
  vit.grid_h = data.height / vit.patch_size;
  vit.grid_w = data.width / vit.patch_size;
  if (val_count >= data.count) {
    throw ConfigError("data.val_count must be smaller than data.count");
  }
  const std::size_t superpatches = (vit.grid_h / 2) * (vit.grid_w / 2);
  for (auto s : schedule) {
    if (s > superpatches) {
      throw ConfigError("schedule value " + std::to_string(s) + " exceeds the " +
                        std::to_string(superpatches) + " superpatches");
    }
  }
  vit.validate();
  policy.validate();
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + "=" + f.get(*this) + "\n";
  return out;
}

SegConfig ExperimentConfig::seg_config() const {
  SegConfig s;
  s.vit = vit;
  s.num_classes = data.num_classes;
  s.decoder = decoder;
  s.decoder_hidden = decoder_hidden;
  return s;
}

}  // namespace cts
