#include "rada/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

namespace rada {

ConfigError::ConfigError(const std::string& key, std::size_t line, const std::string& what)
    : std::runtime_error((line ? "line " + std::to_string(line) + ": " : std::string()) +
                         (key.empty() ? "" : "`" + key + "`: ") + what),
      key_(key),
      line_(line) {}

namespace {

struct Invalid {
  std::string what;
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(std::string_view s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    throw Invalid{"expected a real number, got `" + std::string(s) + "`"};
  }
  return v;
}

std::uint64_t to_u64(std::string_view s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    throw Invalid{"expected a nonnegative integer, got `" + std::string(s) + "`"};
  }
  return v;
}

bool to_bool(std::string_view s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw Invalid{"expected true or false, got `" + std::string(s) + "`"};
}

template <class T, class F>
std::vector<T> to_list(std::string_view s, F parse_one) {
  std::vector<T> out;
  s = trim(s);
  if (s.empty()) return out;
  while (true) {
    const auto pos = s.find(',');
    out.push_back(parse_one(trim(s.substr(0, pos))));
    if (pos == std::string_view::npos) return out;
    s = s.substr(pos + 1);
  }
}

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <class T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt(static_cast<std::conditional_t<std::is_floating_point_v<T>, double, std::uint64_t>>(v[i]));
  }
  return out;
}

void require(bool ok, const char* what) {
  if (!ok) throw Invalid{what};
}

double positive(std::string_view s) {
  const double v = to_double(s);
  require(v > 0.0, "must be positive");
  return v;
}
double nonnegative(std::string_view s) {
  const double v = to_double(s);
  require(v >= 0.0, "must be nonnegative");
  return v;
}
std::size_t positive_count(std::string_view s) {
  const auto v = to_u64(s);
  require(v > 0, "must be positive");
  return static_cast<std::size_t>(v);
}
std::vector<std::size_t> widths(std::string_view s) {
  return to_list<std::size_t>(s, positive_count);
}

struct Entry {
  std::string_view name;
  std::string_view help;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
  bool resume_neutral = false;
};

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"dataset", "moons | blobs | csv",
       [](RunConfig& c, std::string_view v) {
         if (v == "moons") c.dataset = DatasetKind::Moons;
         else if (v == "blobs") c.dataset = DatasetKind::Blobs;
         else if (v == "csv") c.dataset = DatasetKind::Csv;
         else throw Invalid{"expected moons, blobs or csv"};
       },
       [](const RunConfig& c) -> std::string {
         switch (c.dataset) {
           case DatasetKind::Moons: return "moons";
           case DatasetKind::Blobs: return "blobs";
           case DatasetKind::Csv: return "csv";
         }
         return "moons";
       }},
      {"moons.n_per_domain", "samples per domain (even, >= 2)",
       [](RunConfig& c, std::string_view v) {
         const auto n = to_u64(v);
         require(n >= 2 && n % 2 == 0, "must be even and >= 2");
         c.moons.n_per_domain = n;
       },
       [](const RunConfig& c) { return fmt(std::uint64_t{c.moons.n_per_domain}); }},
      {"moons.noise", "Gaussian noise sigma",
       [](RunConfig& c, std::string_view v) { c.moons.noise_sigma = nonnegative(v); },
       [](const RunConfig& c) { return fmt(c.moons.noise_sigma); }},
      {"moons.rotation_deg", "target rotation about the origin (degrees)",
       [](RunConfig& c, std::string_view v) { c.moons.rotation_deg = to_double(v); },
       [](const RunConfig& c) { return fmt(c.moons.rotation_deg); }},
      {"moons.shift_x", "target translation x",
       [](RunConfig& c, std::string_view v) { c.moons.shift_x = to_double(v); },
       [](const RunConfig& c) { return fmt(c.moons.shift_x); }},
      {"moons.shift_y", "target translation y",
       [](RunConfig& c, std::string_view v) { c.moons.shift_y = to_double(v); },
       [](const RunConfig& c) { return fmt(c.moons.shift_y); }},
      {"blobs.num_classes", "number of Gaussian classes (>= 2)",
       [](RunConfig& c, std::string_view v) {
         const auto n = to_u64(v);
         require(n >= 2, "must be >= 2");
         c.blobs.num_classes = n;
       },
       [](const RunConfig& c) { return fmt(std::uint64_t{c.blobs.num_classes}); }},
      {"blobs.n_per_class", "samples per class per domain",
       [](RunConfig& c, std::string_view v) { c.blobs.n_per_class_per_domain = positive_count(v); },
       [](const RunConfig& c) { return fmt(std::uint64_t{c.blobs.n_per_class_per_domain}); }},
      {"blobs.radius", "radius of the circle of class means",
       [](RunConfig& c, std::string_view v) { c.blobs.class_mean_radius = nonnegative(v); },
       [](const RunConfig& c) { return fmt(c.blobs.class_mean_radius); }},
      {"blobs.noise", "Gaussian noise sigma",
       [](RunConfig& c, std::string_view v) { c.blobs.noise_sigma = nonnegative(v); },
       [](const RunConfig& c) { return fmt(c.blobs.noise_sigma); }},
      {"blobs.rotation_deg", "target rotation of class means (degrees)",
       [](RunConfig& c, std::string_view v) { c.blobs.target_affine.rotation_deg = to_double(v); },
       [](const RunConfig& c) { return fmt(c.blobs.target_affine.rotation_deg); }},
      {"blobs.scale", "target scaling of class means",
       [](RunConfig& c, std::string_view v) { c.blobs.target_affine.scale = positive(v); },
       [](const RunConfig& c) { return fmt(c.blobs.target_affine.scale); }},
      {"blobs.shift_x", "target translation x",
       [](RunConfig& c, std::string_view v) { c.blobs.target_affine.shift_x = to_double(v); },
       [](const RunConfig& c) { return fmt(c.blobs.target_affine.shift_x); }},
      {"blobs.shift_y", "target translation y",
       [](RunConfig& c, std::string_view v) { c.blobs.target_affine.shift_y = to_double(v); },
       [](const RunConfig& c) { return fmt(c.blobs.target_affine.shift_y); }},
      {"csv.path", "dataset CSV used when dataset = csv",
       [](RunConfig& c, std::string_view v) { c.csv_path = std::string(v); },
       [](const RunConfig& c) { return c.csv_path; }},
      {"feature_widths", "F layer widths, comma separated",
       [](RunConfig& c, std::string_view v) {
         auto w = widths(v);
         require(!w.empty(), "needs at least one layer");
         c.model.feature_widths = std::move(w);
       },
       [](const RunConfig& c) { return fmt_list(c.model.feature_widths); }},
      {"classifier_hidden", "C hidden widths (empty: linear head)",
       [](RunConfig& c, std::string_view v) { c.model.classifier_hidden = widths(v); },
       [](const RunConfig& c) { return fmt_list(c.model.classifier_hidden); }},
      {"discriminator_hidden", "D hidden widths",
       [](RunConfig& c, std::string_view v) { c.model.discriminator_hidden = widths(v); },
       [](const RunConfig& c) { return fmt_list(c.model.discriminator_hidden); }},
      {"conditioning", "plain | cdan",
       [](RunConfig& c, std::string_view v) {
         if (v == "plain") c.model.conditioning = Conditioning::Plain;
         else if (v == "cdan") c.model.conditioning = Conditioning::Cdan;
         else throw Invalid{"expected plain or cdan"};
       },
       [](const RunConfig& c) -> std::string {
         return c.model.conditioning == Conditioning::Cdan ? "cdan" : "plain";
       }},
      {"condition_detach", "detach class probabilities entering the CDAN product",
       [](RunConfig& c, std::string_view v) { c.model.condition_detach = to_bool(v); },
       [](const RunConfig& c) { return fmt(c.model.condition_detach); }},
      {"lambda", "adversarial weight applied by gradient reversal",
       [](RunConfig& c, std::string_view v) { c.loss.lambda = nonnegative(v); },
       [](const RunConfig& c) { return fmt(c.loss.lambda); }},
      {"lambda_ramp", "ramp lambda by 2/(1+exp(-10p))-1 over training progress p",
       [](RunConfig& c, std::string_view v) { c.loss.lambda_ramp = to_bool(v); },
       [](const RunConfig& c) { return fmt(c.loss.lambda_ramp); }},
      {"reweight_mode", "none | entropy | inverse_entropy | discriminator",
       [](RunConfig& c, std::string_view v) {
         if (v == "none") c.loss.reweight = ReweightMode::None;
         else if (v == "entropy") c.loss.reweight = ReweightMode::Entropy;
         else if (v == "inverse_entropy") c.loss.reweight = ReweightMode::InverseEntropy;
         else if (v == "discriminator") c.loss.reweight = ReweightMode::Discriminator;
         else throw Invalid{"expected none, entropy, inverse_entropy or discriminator"};
       },
       [](const RunConfig& c) -> std::string {
         switch (c.loss.reweight) {
           case ReweightMode::None: return "none";
           case ReweightMode::Entropy: return "entropy";
           case ReweightMode::InverseEntropy: return "inverse_entropy";
           case ReweightMode::Discriminator: return "discriminator";
         }
         return "none";
       }},
      {"clamp_eps", "probability clamp for logarithms, in (0, 1e-6]",
       [](RunConfig& c, std::string_view v) {
         const double e = to_double(v);
         require(e > 0.0 && e <= 1e-6, "must lie in (0, 1e-6]");
         c.loss.clamp_eps = e;
       },
       [](const RunConfig& c) { return fmt(c.loss.clamp_eps); }},
      {"rada_enabled", "enable relabeling once the entropy plateaus",
       [](RunConfig& c, std::string_view v) { c.rada_enabled = to_bool(v); },
       [](const RunConfig& c) { return fmt(c.rada_enabled); }},
      {"tau", "entropy threshold for relabeling, in (0, ln 2]",
       [](RunConfig& c, std::string_view v) {
         const double t = to_double(v);
         require(t > 0.0 && t <= std::numbers::ln2, "must lie in (0, ln 2]");
         c.rada.tau = t;
       },
       [](const RunConfig& c) { return fmt(c.rada.tau); }},
      {"patience_k", "non-improving epochs before relabeling starts",
       [](RunConfig& c, std::string_view v) { c.rada.patience_k = positive_count(v); },
       [](const RunConfig& c) { return fmt(std::uint64_t{c.rada.patience_k}); }},
      {"epsilon_improve", "minimum entropy drop that counts as improvement",
       [](RunConfig& c, std::string_view v) { c.rada.epsilon_improve = nonnegative(v); },
       [](const RunConfig& c) { return fmt(c.rada.epsilon_improve); }},
      {"mixup", "mix original-source and relabeled features",
       [](RunConfig& c, std::string_view v) { c.rada.mixup_enabled = to_bool(v); },
       [](const RunConfig& c) { return fmt(c.rada.mixup_enabled); }},
      {"mixup_feature_grad", "let mixed samples' gradients reach F",
       [](RunConfig& c, std::string_view v) { c.rada.mixup_feature_grad = to_bool(v); },
       [](const RunConfig& c) { return fmt(c.rada.mixup_feature_grad); }},
      {"relabel_persistent", "experimental: keep relabels across batches",
       [](RunConfig& c, std::string_view v) { c.rada.relabel_persistent = to_bool(v); },
       [](const RunConfig& c) { return fmt(c.rada.relabel_persistent); }},
      {"lr", "SGD learning rate",
       [](RunConfig& c, std::string_view v) { c.learning_rate = positive(v); },
       [](const RunConfig& c) { return fmt(c.learning_rate); }},
      {"momentum", "SGD momentum in [0, 1)",
       [](RunConfig& c, std::string_view v) {
         const double m = to_double(v);
         require(m >= 0.0 && m < 1.0, "must lie in [0, 1)");
         c.momentum = m;
       },
       [](const RunConfig& c) { return fmt(c.momentum); }},
      {"epochs", "number of training epochs",
       [](RunConfig& c, std::string_view v) { c.epochs = positive_count(v); },
       [](const RunConfig& c) { return fmt(std::uint64_t{c.epochs}); }, true},
      {"batch_size", "samples per batch, split evenly between domains",
       [](RunConfig& c, std::string_view v) {
         const auto b = to_u64(v);
         require(b >= 4 && b % 2 == 0, "must be even and >= 4");
         c.batch_size = b;
       },
       [](const RunConfig& c) { return fmt(std::uint64_t{c.batch_size}); }},
      {"master_seed", "seed from which every random stream is derived",
       [](RunConfig& c, std::string_view v) { c.master_seed = to_u64(v); },
       [](const RunConfig& c) { return fmt(c.master_seed); }},
      {"output_dir", "directory for metrics.csv and checkpoints",
       [](RunConfig& c, std::string_view v) { c.output_dir = std::string(v); },
       [](const RunConfig& c) { return c.output_dir; }, true},
      {"checkpoint_every", "checkpoint cadence in epochs (0 disables periodic ones)",
       [](RunConfig& c, std::string_view v) { c.checkpoint_every = to_u64(v); },
       [](const RunConfig& c) { return fmt(std::uint64_t{c.checkpoint_every}); }, true},
      {"mmd.multipliers", "RBF bandwidth multipliers of the median heuristic",
       [](RunConfig& c, std::string_view v) {
         auto m = to_list<double>(v, positive);
         require(!m.empty(), "needs at least one multiplier");
         c.mmd.bandwidth_multipliers = std::move(m);
       },
       [](const RunConfig& c) { return fmt_list(c.mmd.bandwidth_multipliers); }},
      {"mmd.max_samples", "per-domain subsample size for the MMD",
       [](RunConfig& c, std::string_view v) { c.mmd.max_samples_per_domain = positive_count(v); },
       [](const RunConfig& c) { return fmt(std::uint64_t{c.mmd.max_samples_per_domain}); }},
  };
  return table;
}

const Entry* find_entry(std::string_view key) {
  for (const auto& e : entries()) {
    if (e.name == key) return &e;
  }
  return nullptr;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& e : entries()) k.push_back({e.name, e.help});
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value,
                      std::size_t line) {
  const Entry* e = find_entry(key);
  if (!e) throw ConfigError(std::string(key), line, "unknown key");
  try {
    e->set(cfg, trim(value));
  } catch (const Invalid& err) {
    throw ConfigError(std::string(key), line, err.what);
  }
}

std::string get_config_value(const RunConfig& cfg, std::string_view key) {
  const Entry* e = find_entry(key);
  if (!e) throw ConfigError(std::string(key), 0, "unknown key");
  return e->get(cfg);
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::size_t lineno = 0;
  while (!text.empty()) {
    ++lineno;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("", lineno, "expected `key = value`");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("", lineno, "missing key before `=`");
    set_config_value(cfg, key, line.substr(eq + 1), lineno);
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string write_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) {
    out += std::string(e.name) + " = " + e.get(cfg) + "\n";
  }
  return out;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& e : entries()) {
    if (e.resume_neutral) continue;
    feed(e.name);
    feed("=");
    feed(e.get(cfg));
    feed("\n");
  }
  return h;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return write_config(a) == write_config(b);
}

}  // namespace rada
