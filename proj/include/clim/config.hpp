#pragma once

// Flat key=value run configuration. One schema serves CLI --config files and
// the config.txt stored beside weights, so a weight directory is always
// loadable without external knowledge. Unknown keys are rejected; '#' starts
// a comment; list values are comma separated.

#include <cstdio>
#include <cstdlib>
#include <map>

#include "clim/tracker.hpp"

namespace clim {

struct RunConfig {
  std::string variant = "climnet+lct";

  int template_size = 127, search_size = 287;
  std::array<int, 5> backbone_widths{32, 64, 96, 128, 128};
  int token_c = 128, heads = 4, ffn_mult = 4;
  std::array<int, 4> climnet_widths{16, 32, 64, 128};
  double context = 0.5, central_fraction = 0.6;
  int m = 1;
  double lambda1 = 1, lambda2 = 1, lambda3 = 3;

  double lr = 1e-2, lr_end = 1e-4, momentum = 0.9, weight_decay = 1e-4;
  int steps = 100, batch = 4;
  std::uint32_t seed = 1;

  int frame_w = 96, frame_h = 96, seq_length = 30, n_sequences = 4;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline long long parse_ll(const std::string& v, const std::string& key) {
  char* end = nullptr;
  errno = 0;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (errno != 0 || end == v.c_str() || *end != '\0')
    throw ConfigError("config: bad integer for '" + key + "': " + v);
  return x;
}

inline double parse_f64(const std::string& v, const std::string& key) {
  char* end = nullptr;
  errno = 0;
  const double x = std::strtod(v.c_str(), &end);
  if (errno != 0 || end == v.c_str() || *end != '\0' || !std::isfinite(x))
    throw ConfigError("config: bad number for '" + key + "': " + v);
  return x;
}

template <std::size_t N>
std::array<int, N> parse_int_list(const std::string& v, const std::string& key) {
  std::array<int, N> out{};
  std::size_t pos = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t comma = v.find(',', pos);
    const bool last = i + 1 == N;
    if (last != (comma == std::string::npos))
      throw ConfigError("config: '" + key + "' needs " + std::to_string(N) + " comma-separated values: " + v);
    const std::string item = trim(v.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    out[i] = static_cast<int>(parse_ll(item, key));
    pos = comma + 1;
  }
  return out;
}

template <std::size_t N>
std::string format_int_list(const std::array<int, N>& a) {
  std::string s;
  for (std::size_t i = 0; i < N; ++i) {
    if (i) s += ',';
    s += std::to_string(a[i]);
  }
  return s;
}

inline std::string format_f64(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline const std::array<std::string, 5>& run_config_variants() {
  static const std::array<std::string, 5> v{"baseline", "lct", "gstc+lct", "ms-fusion+lct", "climnet+lct"};
  return v;
}

inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_f64;
  using detail::parse_ll;
  auto as_int = [&](int lo) {
    const long long x = parse_ll(value, key);
    if (x < lo || x > 1 << 24) throw ConfigError("config: '" + key + "' out of range: " + value);
    return static_cast<int>(x);
  };
  if (key == "variant") {
    const auto& names = run_config_variants();
    if (std::find(names.begin(), names.end(), value) == names.end())
      throw ConfigError("config: unknown variant '" + value + "'");
    cfg.variant = value;
  } else if (key == "template_size") cfg.template_size = as_int(8);
  else if (key == "search_size") cfg.search_size = as_int(8);
  else if (key == "backbone_widths") cfg.backbone_widths = detail::parse_int_list<5>(value, key);
  else if (key == "token_c") cfg.token_c = as_int(1);
  else if (key == "heads") cfg.heads = as_int(1);
  else if (key == "ffn_mult") cfg.ffn_mult = as_int(1);
  else if (key == "climnet_widths") cfg.climnet_widths = detail::parse_int_list<4>(value, key);
  else if (key == "context") cfg.context = parse_f64(value, key);
  else if (key == "central_fraction") cfg.central_fraction = parse_f64(value, key);
  else if (key == "m") cfg.m = as_int(1);
  else if (key == "lambda1") cfg.lambda1 = parse_f64(value, key);
  else if (key == "lambda2") cfg.lambda2 = parse_f64(value, key);
  else if (key == "lambda3") cfg.lambda3 = parse_f64(value, key);
  else if (key == "lr") cfg.lr = parse_f64(value, key);
  else if (key == "lr_end") cfg.lr_end = parse_f64(value, key);
  else if (key == "momentum") cfg.momentum = parse_f64(value, key);
  else if (key == "weight_decay") cfg.weight_decay = parse_f64(value, key);
  else if (key == "steps") cfg.steps = as_int(0);
  else if (key == "batch") cfg.batch = as_int(1);
  else if (key == "seed") {
    const long long x = parse_ll(value, key);
    if (x < 0 || x > 0xffffffffll) throw ConfigError("config: 'seed' out of range: " + value);
    cfg.seed = static_cast<std::uint32_t>(x);
  } else if (key == "frame_w") cfg.frame_w = as_int(8);
  else if (key == "frame_h") cfg.frame_h = as_int(8);
  else if (key == "seq_length") cfg.seq_length = as_int(1);
  else if (key == "n_sequences") cfg.n_sequences = as_int(1);
  else throw ConfigError("config: unknown key '" + key + "'");
}

inline RunConfig parse_run_config(const std::string& text, RunConfig cfg = {}) {
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(line_no) + " is not key=value: " + line);
    apply_config_entry(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline std::string serialize_run_config(const RunConfig& c) {
  using detail::format_f64;
  std::string out;
  auto kv = [&](const char* k, const std::string& v) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  };
  kv("variant", c.variant);
  kv("template_size", std::to_string(c.template_size));
  kv("search_size", std::to_string(c.search_size));
  kv("backbone_widths", detail::format_int_list(c.backbone_widths));
  kv("token_c", std::to_string(c.token_c));
  kv("heads", std::to_string(c.heads));
  kv("ffn_mult", std::to_string(c.ffn_mult));
  kv("climnet_widths", detail::format_int_list(c.climnet_widths));
  kv("context", format_f64(c.context));
  kv("central_fraction", format_f64(c.central_fraction));
  kv("m", std::to_string(c.m));
  kv("lambda1", format_f64(c.lambda1));
  kv("lambda2", format_f64(c.lambda2));
  kv("lambda3", format_f64(c.lambda3));
  kv("lr", format_f64(c.lr));
  kv("lr_end", format_f64(c.lr_end));
  kv("momentum", format_f64(c.momentum));
  kv("weight_decay", format_f64(c.weight_decay));
  kv("steps", std::to_string(c.steps));
  kv("batch", std::to_string(c.batch));
  kv("seed", std::to_string(c.seed));
  kv("frame_w", std::to_string(c.frame_w));
  kv("frame_h", std::to_string(c.frame_h));
  kv("seq_length", std::to_string(c.seq_length));
  kv("n_sequences", std::to_string(c.n_sequences));
  return out;
}

inline RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), base);
}

// Maps the variant name onto component toggles; all other fields copy over.
inline TrackerConfig tracker_config_from(const RunConfig& c) {
  TrackerConfig t;
  t.widths = c.backbone_widths;
  t.template_size = c.template_size;
  t.search_size = c.search_size;
  t.context = c.context;
  t.central_fraction = c.central_fraction;
  t.m = c.m;
  t.lambda1 = c.lambda1;
  t.lambda2 = c.lambda2;
  t.lambda3 = c.lambda3;
  t.lct.token_c = c.token_c;
  t.lct.heads = c.heads;
  t.lct.ffn_mult = c.ffn_mult;
  t.climnet.widths = c.climnet_widths;
  if (c.variant == "baseline") {
    t.use_lct = false;
    t.use_latent = false;
  } else if (c.variant == "lct") {
    t.use_lct = true;
    t.use_latent = false;
  } else if (c.variant == "gstc+lct") {
    t.use_lct = true;
    t.use_latent = true;
    t.climnet.ms_modulation = false;
  } else if (c.variant == "ms-fusion+lct") {
    t.use_lct = true;
    t.use_latent = true;
    t.climnet.ghost = false;
  } else if (c.variant == "climnet+lct") {
    t.use_lct = true;
    t.use_latent = true;
  } else {
    throw ConfigError("config: unknown variant '" + c.variant + "'");
  }
  return t;
}

inline ClimNetConfig climnet_config_from(const RunConfig& c) { return tracker_config_from(c).climnet; }

}  // namespace clim
