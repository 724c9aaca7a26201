#include "dbmt/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "dbmt/error.hpp"
#include "io_util.hpp"

namespace dbmt {

const std::map<std::string, std::vector<std::string>>& config_schema() {
  static const std::map<std::string, std::vector<std::string>> schema = {
      {"sde", {"kind", "alpha", "beta", "tau", "gamma", "kernel", "variance", "length_scale",
               "height", "width", "channels", "gamma_path"}},
      {"coupling", {"kind", "x0", "scale", "starts"}},
      {"dataset", {"builtin", "path", "rings", "points_per_ring"}},
      {"sampler", {"T", "paths", "seed", "direction", "drift", "checkpoint", "record_paths",
                   "tolerance", "sweep"}},
      {"training", {"loss", "batch_size", "steps", "learning_rate", "schedule", "optimizer",
                    "t_eps", "hidden", "activation", "time_features", "seed", "init"}},
      {"toy", {"grid_times", "grid_x_min", "grid_x_max", "grid_points", "example_paths"}},
      {"gp", {"kernel", "variance", "length_scale", "height", "width", "channels", "sizes",
              "timing_samples", "max_doublings", "allow_truncation", "seed"}},
      {"variogram", {"inputs", "format", "height", "width", "channels", "n_bins", "max_lag",
                     "synthetic_count", "kernel", "variance", "length_scale", "seed",
                     "min_length_scale", "max_length_scale"}},
  };
  return schema;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void check_known(const std::string& section, const std::string& key, const std::string& where) {
  const auto& schema = config_schema();
  const auto it = schema.find(section);
  if (it == schema.end()) throw ConfigError(where + ": unknown section [" + section + "]");
  if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
    throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

template <class T>
T parse_number(const std::string& text, const std::string& what) {
  T value{};
  const auto* b = text.data();
  const auto* e = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(b, e, value);
  if (ec != std::errc() || ptr != e) throw ConfigError(what + ": cannot parse '" + text + "'");
  return value;
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
  Config cfg;
  std::stringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!config_schema().count(section))
        throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    if (section.empty()) throw ConfigError(where + ": key outside of a section");
    const std::string key = trim(line.substr(0, eq));
    check_known(section, key, where);
    cfg.values_[section][key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

bool Config::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  check_known(section, key, "override");
  values_[section][key] = value;
}

const std::string* Config::find(const std::string& section, const std::string& key) const {
  const auto s = values_.find(section);
  if (s == values_.end()) return nullptr;
  const auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

void Config::remember(const std::string& section, const std::string& key,
                      const std::string& value) const {
  resolved_[section][key] = value;
}

std::string Config::get_string(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
  const auto* v = find(section, key);
  const std::string out = v ? *v : fallback;
  remember(section, key, out);
  return out;
}

double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
  const auto* v = find(section, key);
  const double out = v ? parse_number<double>(*v, section + "." + key) : fallback;
  remember(section, key, v ? *v : detail::format_double(out));
  return out;
}

int Config::get_int(const std::string& section, const std::string& key, int fallback) const {
  const auto* v = find(section, key);
  const int out = v ? parse_number<int>(*v, section + "." + key) : fallback;
  remember(section, key, std::to_string(out));
  return out;
}

std::uint64_t Config::get_u64(const std::string& section, const std::string& key,
                              std::uint64_t fallback) const {
  const auto* v = find(section, key);
  const auto out = v ? parse_number<std::uint64_t>(*v, section + "." + key) : fallback;
  remember(section, key, std::to_string(out));
  return out;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  const auto* v = find(section, key);
  bool out = fallback;
  if (v) {
    if (*v == "true" || *v == "1" || *v == "yes") out = true;
    else if (*v == "false" || *v == "0" || *v == "no") out = false;
    else throw ConfigError(section + "." + key + ": expected true or false, got '" + *v + "'");
  }
  remember(section, key, out ? "true" : "false");
  return out;
}

std::vector<double> Config::get_doubles(const std::string& section, const std::string& key,
                                        const std::vector<double>& fallback) const {
  const auto* v = find(section, key);
  std::vector<double> out = fallback;
  if (v) {
    out.clear();
    for (const auto& tok : split_list(*v)) out.push_back(parse_number<double>(tok, section + "." + key));
  }
  std::string text;
  for (std::size_t i = 0; i < out.size(); ++i) text += (i ? "," : "") + detail::format_double(out[i]);
  remember(section, key, text);
  return out;
}

std::vector<int> Config::get_ints(const std::string& section, const std::string& key,
                                  const std::vector<int>& fallback) const {
  const auto* v = find(section, key);
  std::vector<int> out = fallback;
  if (v) {
    out.clear();
    for (const auto& tok : split_list(*v)) out.push_back(parse_number<int>(tok, section + "." + key));
  }
  std::string text;
  for (std::size_t i = 0; i < out.size(); ++i) text += (i ? "," : "") + std::to_string(out[i]);
  remember(section, key, text);
  return out;
}

std::string Config::resolved_text() const {
  Table merged = values_;
  for (const auto& [sec, kv] : resolved_)
    for (const auto& [k, v] : kv) merged[sec][k] = v;
  std::ostringstream out;
  bool first = true;
  for (const auto& [sec, kv] : merged) {
    if (!first) out << '\n';
    first = false;
    out << '[' << sec << "]\n";
    for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
  }
  return out.str();
}

void Config::write_resolved(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << resolved_text();
}

}  // namespace dbmt
