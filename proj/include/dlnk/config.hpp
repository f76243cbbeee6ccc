#pragma once

// Declarative run configuration for the command-line driver.
//
// A run is described by a single INI-style text file:
//
//   - full-line comments start with '#' or ';'
//   - sections are bracketed lowercase names: [architecture], [data], [run],
//     [evidence], [ldp]
//   - entries are `key = value`; lists are comma separated
//
// Every key is validated when the file is loaded, before any computation
// starts; unknown sections or keys are rejected. Malformed syntax raises
// ParseError carrying "path:line:col"; well-formed files with invalid values
// raise ConfigError.
//
// Datasets are plain files referenced from [data], resolved relative to the
// config file's directory:
//
//   - dense featurewise data is CSV with a header row `x_1,...,x_{N0}` and
//     optional trailing `y_1,...,y_D` columns, one example per row;
//   - channelized data is JSON: {"x": [example][channel][site], "y": [...]}
//     with "y" optional where labels are not needed.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dlnk/conv.hpp"
#include "dlnk/errors.hpp"
#include "dlnk/fc.hpp"

namespace dlnk {

enum class Command { sample_prior, predict, evidence, ldp, verify };

inline const char* to_string(Command c) {
  switch (c) {
    case Command::sample_prior: return "sample-prior";
    case Command::predict: return "predict";
    case Command::evidence: return "evidence";
    case Command::ldp: return "ldp";
    case Command::verify: return "verify";
  }
  return "unknown";
}

enum class ArchitectureKind { fc, conv };

inline const char* to_string(ArchitectureKind k) {
  return k == ArchitectureKind::fc ? "fc" : "conv";
}

// ---------------------------------------------------------------------------
// INI file parsing
// ---------------------------------------------------------------------------

struct IniEntry {
  std::string value;
  int line = 0;
};

struct IniSection {
  std::map<std::string, IniEntry> entries;
  int line = 0;
};

struct IniFile {
  std::string label;  // used in diagnostics, typically the file path
  std::map<std::string, IniSection> sections;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] inline void parse_fail(const std::string& label, int line,
                                    std::size_t col, const std::string& msg) {
  throw ParseError(label + ":" + std::to_string(line) + ":" +
                   std::to_string(col) + ": " + msg);
}

inline bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (const char c : s) {
    if (!std::islower(static_cast<unsigned char>(c)) &&
        !std::isdigit(static_cast<unsigned char>(c)) && c != '_' && c != '-')
      return false;
  }
  return true;
}

}  // namespace detail

inline IniFile parse_ini(const std::string& text, const std::string& label) {
  IniFile file;
  file.label = label;
  std::istringstream in(text);
  std::string raw;
  std::string current;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        detail::parse_fail(label, line_no, raw.find('[') + 1,
                           "section header is missing the closing ']'");
      const std::string name = detail::trim(line.substr(1, line.size() - 2));
      if (!detail::valid_name(name))
        detail::parse_fail(label, line_no, raw.find('[') + 2,
                           "section names use lowercase letters, digits, "
                           "'_' or '-'");
      if (file.sections.count(name))
        detail::parse_fail(label, line_no, raw.find('[') + 1,
                           "duplicate section [" + name + "]");
      file.sections[name].line = line_no;
      current = name;
      continue;
    }
    const std::size_t eq = raw.find('=');
    if (eq == std::string::npos)
      detail::parse_fail(label, line_no, 1,
                         "expected `key = value` or a [section] header");
    const std::string key = detail::trim(raw.substr(0, eq));
    const std::string value = detail::trim(raw.substr(eq + 1));
    if (!detail::valid_name(key))
      detail::parse_fail(label, line_no, 1,
                         "keys use lowercase letters, digits, '_' or '-'");
    if (current.empty())
      detail::parse_fail(label, line_no, 1,
                         "entry `" + key + "` appears before any [section]");
    if (value.empty())
      detail::parse_fail(label, line_no, eq + 2,
                         "empty value for key `" + key + "`");
    auto& section = file.sections[current];
    if (section.entries.count(key))
      detail::parse_fail(label, line_no, 1,
                         "duplicate key `" + key + "` in [" + current + "]");
    section.entries[key] = IniEntry{value, line_no};
  }
  return file;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// ---------------------------------------------------------------------------
// Typed access with unknown-key rejection
// ---------------------------------------------------------------------------

class ConfigReader {
 public:
  explicit ConfigReader(const IniFile& file) : file_(file) {}

  bool has_section(const std::string& section) const {
    return file_.sections.count(section) != 0;
  }
  bool has(const std::string& section, const std::string& key) const {
    const auto sec = file_.sections.find(section);
    return sec != file_.sections.end() && sec->second.entries.count(key) != 0;
  }

  std::string get_string(const std::string& section, const std::string& key) {
    return entry(section, key).value;
  }
  std::string opt_string(const std::string& section, const std::string& key,
                         const std::string& fallback) {
    return has(section, key) ? get_string(section, key) : fallback;
  }

  double get_double(const std::string& section, const std::string& key) {
    return parse_double(section, key, entry(section, key).value);
  }
  double opt_double(const std::string& section, const std::string& key,
                    double fallback) {
    return has(section, key) ? get_double(section, key) : fallback;
  }

  std::int64_t get_int(const std::string& section, const std::string& key) {
    return parse_number<std::int64_t>(section, key, entry(section, key).value);
  }
  std::int64_t opt_int(const std::string& section, const std::string& key,
                       std::int64_t fallback) {
    return has(section, key) ? get_int(section, key) : fallback;
  }

  std::uint64_t get_u64(const std::string& section, const std::string& key) {
    return parse_number<std::uint64_t>(section, key, entry(section, key).value);
  }
  std::uint64_t opt_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) {
    return has(section, key) ? get_u64(section, key) : fallback;
  }

  std::vector<std::int64_t> get_int_list(const std::string& section,
                                         const std::string& key) {
    std::vector<std::int64_t> out;
    for (const std::string& tok : split_list(section, key))
      out.push_back(parse_number<std::int64_t>(section, key, tok));
    return out;
  }
  std::vector<double> get_double_list(const std::string& section,
                                      const std::string& key) {
    std::vector<double> out;
    for (const std::string& tok : split_list(section, key))
      out.push_back(parse_double(section, key, tok));
    return out;
  }

  // One of a closed set of keywords; `choices` is the documentation string.
  std::string get_choice(const std::string& section, const std::string& key,
                         const std::vector<std::string>& allowed) {
    const std::string v = get_string(section, key);
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string list;
      for (const std::string& a : allowed) {
        if (!list.empty()) list += ", ";
        list += a;
      }
      fail(section, key, "must be one of {" + list + "}, got `" + v + "`");
    }
    return v;
  }
  std::string opt_choice(const std::string& section, const std::string& key,
                         const std::vector<std::string>& allowed,
                         const std::string& fallback) {
    return has(section, key) ? get_choice(section, key, allowed) : fallback;
  }

  // Rejects any section or key that was never consumed by a getter.
  void finish() const {
    for (const auto& [name, section] : file_.sections) {
      if (!known_sections_.count(name)) {
        throw ConfigError(file_.label + ": unknown section [" + name +
                          "] (line " + std::to_string(section.line) + ")");
      }
      for (const auto& [key, e] : section.entries) {
        if (!consumed_.count({name, key})) {
          throw ConfigError(file_.label + ": unknown key `" + key + "` in [" +
                            name + "] (line " + std::to_string(e.line) + ")");
        }
      }
    }
  }

  // Marks a section as recognized even if no key from it was read.
  void allow_section(const std::string& section) {
    known_sections_.insert(section);
  }

  [[noreturn]] void fail(const std::string& section, const std::string& key,
                         const std::string& msg) const {
    std::string where = file_.label + ": [" + section + "] " + key;
    const auto sec = file_.sections.find(section);
    if (sec != file_.sections.end()) {
      const auto it = sec->second.entries.find(key);
      if (it != sec->second.entries.end())
        where += " (line " + std::to_string(it->second.line) + ")";
    }
    throw ConfigError(where + ": " + msg);
  }

  const std::string& label() const { return file_.label; }

 private:
  const IniEntry& entry(const std::string& section, const std::string& key) {
    known_sections_.insert(section);
    const auto sec = file_.sections.find(section);
    if (sec == file_.sections.end())
      throw ConfigError(file_.label + ": missing required section [" +
                        section + "] (needs key `" + key + "`)");
    const auto it = sec->second.entries.find(key);
    if (it == sec->second.entries.end())
      throw ConfigError(file_.label + ": missing required key `" + key +
                        "` in [" + section + "]");
    consumed_.insert({section, key});
    return it->second;
  }

  std::vector<std::string> split_list(const std::string& section,
                                      const std::string& key) {
    const std::string& raw = entry(section, key).value;
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = raw.find(',', start);
      const std::string tok = detail::trim(
          comma == std::string::npos ? raw.substr(start)
                                     : raw.substr(start, comma - start));
      if (tok.empty()) fail(section, key, "empty element in list");
      out.push_back(tok);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  }

  template <typename T>
  T parse_number(const std::string& section, const std::string& key,
                 const std::string& tok) {
    T value{};
    const char* begin = tok.data();
    const char* end = begin + tok.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
      fail(section, key, "expected an integer, got `" + tok + "`");
    return value;
  }

  double parse_double(const std::string& section, const std::string& key,
                      const std::string& tok) {
    double value = 0.0;
    const char* begin = tok.data();
    const char* end = begin + tok.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
      fail(section, key, "expected a number, got `" + tok + "`");
    return value;
  }

  const IniFile& file_;
  std::set<std::pair<std::string, std::string>> consumed_;
  std::set<std::string> known_sections_;
};

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

struct EvidenceSettings {
  std::string mode = "zero-temperature";  // zero-temperature | finite-beta
  std::string method = "bessel";          // see allowed sets per mode below
  std::string compare;                    // optional second method
  std::int64_t mc_draws = 200000;
};

struct LdpSettings {
  std::string objective = "lazy";  // lazy | meanfield
  std::vector<int> ladder = {10, 100, 1000};
  std::int64_t probe_draws = 20000;
  double gradient_tolerance = 1e-8;
  std::int64_t max_iterations = 50000;
};

struct RunConfig {
  Command command = Command::verify;
  ArchitectureKind kind = ArchitectureKind::fc;
  FcNetworkSpec fc;
  ConvNetworkSpec conv;

  std::filesystem::path config_dir;  // datasets resolve relative to this
  std::string train_path;            // empty when the command needs no data
  std::string test_path;

  double beta = 0.0;
  bool beta_set = false;
  std::uint64_t seed = 1;
  int threads = 0;
  std::int64_t n_samples = 100000;
  std::int64_t n_steps = 20000;
  double step_size = 0.1;
  std::string sampler = "importance";  // importance | metropolis

  EvidenceSettings evidence;
  LdpSettings ldp;

  std::filesystem::path resolve(const std::string& rel) const {
    const std::filesystem::path p(rel);
    return p.is_absolute() ? p : config_dir / p;
  }
};

namespace detail {

inline std::vector<double> default_precisions(std::size_t count) {
  return std::vector<double>(count, 1.0);
}

inline void load_architecture(ConfigReader& reader, RunConfig& cfg) {
  const std::string kind =
      reader.get_choice("architecture", "kind", {"fc", "conv"});
  if (kind == "fc") {
    cfg.kind = ArchitectureKind::fc;
    FcNetworkSpec spec;
    const std::int64_t n0 = reader.get_int("architecture", "input_dim");
    const std::int64_t d = reader.get_int("architecture", "output_dim");
    if (n0 < 1) reader.fail("architecture", "input_dim", "must be >= 1");
    if (d < 1) reader.fail("architecture", "output_dim", "must be >= 1");
    spec.n0 = static_cast<Eigen::Index>(n0);
    spec.d = static_cast<Eigen::Index>(d);
    for (const std::int64_t w : reader.get_int_list("architecture", "widths")) {
      if (w < 1) reader.fail("architecture", "widths", "widths must be >= 1");
      spec.widths.push_back(static_cast<int>(w));
    }
    if (reader.has("architecture", "precisions")) {
      spec.precisions = reader.get_double_list("architecture", "precisions");
    } else {
      spec.precisions = default_precisions(spec.widths.size() + 1);
    }
    try {
      spec.validate();
    } catch (const Error& e) {
      throw ConfigError(reader.label() + ": [architecture] " +
                        std::string(e.what()));
    }
    cfg.fc = std::move(spec);
    return;
  }
  cfg.kind = ArchitectureKind::conv;
  ConvNetworkSpec spec;
  const std::int64_t n0 = reader.get_int("architecture", "input_dim");
  if (n0 < 1) reader.fail("architecture", "input_dim", "must be >= 1");
  spec.n0 = static_cast<Eigen::Index>(n0);
  for (const std::int64_t c : reader.get_int_list("architecture", "channels")) {
    if (c < 1) reader.fail("architecture", "channels", "channels must be >= 1");
    spec.channels.push_back(static_cast<int>(c));
  }
  const std::int64_t mask = reader.get_int("architecture", "mask");
  spec.mask = static_cast<int>(mask);
  if (reader.has("architecture", "precisions")) {
    spec.precisions = reader.get_double_list("architecture", "precisions");
  } else {
    spec.precisions = default_precisions(spec.channels.size());
  }
  try {
    spec.validate();
  } catch (const Error& e) {
    throw ConfigError(reader.label() + ": [architecture] " +
                      std::string(e.what()));
  }
  cfg.conv = std::move(spec);
}

inline void load_run_section(ConfigReader& reader, RunConfig& cfg) {
  reader.allow_section("run");
  if (reader.has("run", "beta")) {
    cfg.beta = reader.get_double("run", "beta");
    cfg.beta_set = true;
    if (!(cfg.beta > 0.0)) reader.fail("run", "beta", "must be > 0");
  }
  cfg.seed = reader.opt_u64("run", "seed", cfg.seed);
  const std::int64_t threads = reader.opt_int("run", "threads", 0);
  if (threads < 0) reader.fail("run", "threads", "must be >= 0");
  cfg.threads = static_cast<int>(threads);
  cfg.n_samples = reader.opt_int("run", "n_samples", cfg.n_samples);
  if (cfg.n_samples < 1) reader.fail("run", "n_samples", "must be >= 1");
  cfg.n_steps = reader.opt_int("run", "n_steps", cfg.n_steps);
  if (cfg.n_steps < 1) reader.fail("run", "n_steps", "must be >= 1");
  cfg.step_size = reader.opt_double("run", "step_size", cfg.step_size);
  if (!(cfg.step_size > 0.0)) reader.fail("run", "step_size", "must be > 0");
  cfg.sampler = reader.opt_choice("run", "sampler",
                                  {"importance", "metropolis"}, cfg.sampler);
}

inline void load_evidence_section(ConfigReader& reader, RunConfig& cfg) {
  reader.allow_section("evidence");
  EvidenceSettings& ev = cfg.evidence;
  ev.mode = reader.opt_choice("evidence", "mode",
                              {"zero-temperature", "finite-beta"}, ev.mode);
  const std::vector<std::string> allowed =
      ev.mode == "zero-temperature"
          ? std::vector<std::string>{"bessel", "log-convolution",
                                     "monte-carlo"}
          : std::vector<std::string>{"quadrature", "monte-carlo"};
  ev.method = reader.opt_choice("evidence", "method", allowed,
                                ev.mode == "zero-temperature" ? "bessel"
                                                              : "quadrature");
  ev.compare = reader.opt_choice("evidence", "compare", allowed, "");
  ev.mc_draws = reader.opt_int("evidence", "mc_draws", ev.mc_draws);
  if (ev.mc_draws < 1) reader.fail("evidence", "mc_draws", "must be >= 1");
}

inline void load_ldp_section(ConfigReader& reader, RunConfig& cfg) {
  reader.allow_section("ldp");
  LdpSettings& ldp = cfg.ldp;
  ldp.objective =
      reader.opt_choice("ldp", "objective", {"lazy", "meanfield"},
                        ldp.objective);
  if (reader.has("ldp", "ladder")) {
    ldp.ladder.clear();
    for (const std::int64_t w : reader.get_int_list("ldp", "ladder")) {
      if (w < 1) reader.fail("ldp", "ladder", "widths must be >= 1");
      ldp.ladder.push_back(static_cast<int>(w));
    }
  }
  if (ldp.ladder.size() < 2)
    reader.fail("ldp", "ladder", "need at least two widths for a slope");
  ldp.probe_draws = reader.opt_int("ldp", "probe_draws", ldp.probe_draws);
  if (ldp.probe_draws < 1) reader.fail("ldp", "probe_draws", "must be >= 1");
  ldp.gradient_tolerance =
      reader.opt_double("ldp", "gradient_tolerance", ldp.gradient_tolerance);
  if (!(ldp.gradient_tolerance > 0.0))
    reader.fail("ldp", "gradient_tolerance", "must be > 0");
  ldp.max_iterations = reader.opt_int("ldp", "max_iterations",
                                      ldp.max_iterations);
  if (ldp.max_iterations < 1)
    reader.fail("ldp", "max_iterations", "must be >= 1");
}

}  // namespace detail

// Loads and fully validates the configuration for `command`. Every value is
// checked here; commands can assume the returned config is coherent.
inline RunConfig load_run_config(const std::filesystem::path& path,
                                 Command command) {
  if (!std::filesystem::exists(path))
    throw ConfigError("config file not found: " + path.string());
  const IniFile file = parse_ini(read_text_file(path), path.string());
  ConfigReader reader(file);
  RunConfig cfg;
  cfg.command = command;
  cfg.config_dir = std::filesystem::absolute(path).parent_path();

  const bool needs_architecture = command != Command::verify;
  if (needs_architecture) detail::load_architecture(reader, cfg);
  detail::load_run_section(reader, cfg);

  reader.allow_section("data");
  if (reader.has("data", "train")) cfg.train_path = reader.get_string("data", "train");
  if (reader.has("data", "test")) cfg.test_path = reader.get_string("data", "test");

  switch (command) {
    case Command::sample_prior:
      if (cfg.train_path.empty())
        throw ConfigError(reader.label() +
                          ": sample-prior needs [data] train (the inputs "
                          "defining the function-space law)");
      break;
    case Command::predict:
      if (cfg.train_path.empty())
        throw ConfigError(reader.label() + ": predict needs [data] train");
      if (cfg.test_path.empty())
        throw ConfigError(reader.label() + ": predict needs [data] test");
      if (!cfg.beta_set)
        throw ConfigError(reader.label() + ": predict needs [run] beta");
      break;
    case Command::evidence:
      if (cfg.kind != ArchitectureKind::fc)
        throw ConfigError(reader.label() +
                          ": evidence is defined for the fc architecture");
      if (cfg.fc.d != 1)
        throw ConfigError(reader.label() +
                          ": evidence needs output_dim = 1");
      if (cfg.train_path.empty())
        throw ConfigError(reader.label() + ": evidence needs [data] train");
      detail::load_evidence_section(reader, cfg);
      if (cfg.evidence.mode == "finite-beta" && !cfg.beta_set)
        throw ConfigError(reader.label() +
                          ": finite-beta evidence needs [run] beta");
      break;
    case Command::ldp:
      if (cfg.kind != ArchitectureKind::fc)
        throw ConfigError(reader.label() +
                          ": ldp is defined for the fc architecture");
      detail::load_ldp_section(reader, cfg);
      if (cfg.ldp.objective == "meanfield") {
        if (cfg.train_path.empty())
          throw ConfigError(reader.label() +
                            ": the meanfield objective needs [data] train");
        if (!cfg.beta_set)
          throw ConfigError(reader.label() +
                            ": the meanfield objective needs [run] beta");
      }
      break;
    case Command::verify:
      break;
  }
  reader.finish();
  return cfg;
}

// ---------------------------------------------------------------------------
// Dataset loaders
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(comma == std::string::npos
                           ? line.substr(start)
                           : line.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_csv_number(const std::string& label, int line, int field,
                               const std::string& tok) {
  double v = 0.0;
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || tok.empty())
    parse_fail(label, line, static_cast<std::size_t>(field),
               "field " + std::to_string(field) + ": expected a number, got `" +
                   tok + "`");
  return v;
}

}  // namespace detail

// CSV with header `x_1,...,x_{N0}[,y_1,...,y_D]`, one example per row.
// Returns x as N0 x P (one column per example) and the stacked labels
// (empty when the file has no label columns). `require_labels` makes the
// label columns mandatory.
inline FcDataset load_fc_csv(const std::filesystem::path& path,
                             const FcNetworkSpec& spec, bool require_labels) {
  const std::string label = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(label + ": cannot open file");
  std::string line;
  if (!std::getline(in, line))
    detail::parse_fail(label, 1, 1, "missing header row");
  const std::vector<std::string> header = detail::split_csv_row(line);
  const auto n0 = static_cast<std::size_t>(spec.n0);
  const auto d = static_cast<std::size_t>(spec.d);
  for (std::size_t i = 0; i < n0; ++i) {
    const std::string want = "x_" + std::to_string(i + 1);
    if (i >= header.size() || header[i] != want)
      throw ShapeMismatch(label + ": header column " + std::to_string(i + 1) +
                          " must be `" + want + "` for input dimension " +
                          std::to_string(spec.n0));
  }
  bool with_labels = header.size() > n0;
  if (with_labels) {
    if (header.size() != n0 + d)
      throw ShapeMismatch(label + ": expected " + std::to_string(n0) +
                          " input and " + std::to_string(d) +
                          " label columns, header has " +
                          std::to_string(header.size()));
    for (std::size_t j = 0; j < d; ++j) {
      const std::string want = "y_" + std::to_string(j + 1);
      if (header[n0 + j] != want)
        throw ShapeMismatch(label + ": label column " + std::to_string(j + 1) +
                            " must be `" + want + "`");
    }
  } else if (header.size() != n0) {
    throw ShapeMismatch(label + ": header has " +
                        std::to_string(header.size()) +
                        " columns, spec wants " + std::to_string(n0) +
                        " inputs (plus optional labels)");
  }
  if (require_labels && !with_labels)
    throw ShapeMismatch(label + ": label columns y_1..y_" + std::to_string(d) +
                        " are required here");

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const std::vector<std::string> fields = detail::split_csv_row(line);
    if (fields.size() != header.size())
      detail::parse_fail(label, line_no, 1,
                         "expected " + std::to_string(header.size()) +
                             " fields, got " + std::to_string(fields.size()));
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i)
      row.push_back(detail::parse_csv_number(label, line_no,
                                             static_cast<int>(i + 1),
                                             fields[i]));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) detail::parse_fail(label, line_no + 1, 1, "no data rows");

  FcDataset data;
  const auto p = static_cast<Eigen::Index>(rows.size());
  data.x = Matrix(spec.n0, p);
  data.y = with_labels ? Vector(spec.d * p) : Vector(0);
  for (Eigen::Index mu = 0; mu < p; ++mu) {
    const auto& row = rows[static_cast<std::size_t>(mu)];
    for (Eigen::Index i = 0; i < spec.n0; ++i)
      data.x(i, mu) = row[static_cast<std::size_t>(i)];
    if (with_labels)
      for (Eigen::Index j = 0; j < spec.d; ++j)
        data.y[mu * spec.d + j] = row[n0 + static_cast<std::size_t>(j)];
  }
  return data;
}

namespace detail {

[[noreturn]] inline void json_parse_fail(const std::string& label,
                                         const std::string& text,
                                         std::size_t byte,
                                         const std::string& what) {
  int line = 1;
  std::size_t col = 1;
  const std::size_t stop = std::min(byte, text.size());
  for (std::size_t i = 0; i < stop; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  parse_fail(label, line, col, what);
}

}  // namespace detail

// JSON object {"x": [example][channel][site], "y": [labels]} with "y"
// optional unless `require_labels`.
inline ConvDataset load_conv_json(const std::filesystem::path& path,
                                  const ConvNetworkSpec& spec,
                                  bool require_labels) {
  const std::string label = path.string();
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw ParseError(label + ": cannot open file");
  const std::string text = [&] {
    std::ostringstream out;
    out << probe.rdbuf();
    return out.str();
  }();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    detail::json_parse_fail(label, text, e.byte > 0 ? e.byte - 1 : 0,
                            e.what());
  }
  if (!doc.is_object())
    throw ParseError(label + ":1:1: top level must be an object with keys "
                             "\"x\" and optionally \"y\"");
  for (const auto& [key, _] : doc.items()) {
    if (key != "x" && key != "y")
      throw ParseError(label + ": unknown top-level key \"" + key + "\"");
  }
  if (!doc.contains("x") || !doc["x"].is_array())
    throw ParseError(label + ": \"x\" must be an array of examples");

  ConvDataset data;
  const auto c0 = static_cast<std::size_t>(spec.channels.front());
  const auto n0 = static_cast<std::size_t>(spec.n0);
  for (std::size_t mu = 0; mu < doc["x"].size(); ++mu) {
    const auto& ex = doc["x"][mu];
    if (!ex.is_array() || ex.size() != c0)
      throw ShapeMismatch(label + ": example " + std::to_string(mu) +
                          " must hold " + std::to_string(c0) +
                          " channel arrays");
    Matrix m(spec.channels.front(), spec.n0);
    for (std::size_t a = 0; a < c0; ++a) {
      const auto& chan = ex[a];
      if (!chan.is_array() || chan.size() != n0)
        throw ShapeMismatch(label + ": example " + std::to_string(mu) +
                            " channel " + std::to_string(a) + " must hold " +
                            std::to_string(n0) + " sites");
      for (std::size_t i = 0; i < n0; ++i) {
        if (!chan[i].is_number())
          throw ParseError(label + ": example " + std::to_string(mu) +
                           " channel " + std::to_string(a) + " site " +
                           std::to_string(i) + " is not a number");
        m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(i)) =
            chan[i].get<double>();
      }
    }
    data.x.push_back(std::move(m));
  }
  if (data.x.empty()) throw ParseError(label + ": \"x\" holds no examples");

  if (doc.contains("y")) {
    const auto& y = doc["y"];
    if (!y.is_array())
      throw ParseError(label + ": \"y\" must be an array of numbers");
    if (y.size() != data.x.size())
      throw ShapeMismatch(label + ": " + std::to_string(y.size()) +
                          " labels for " + std::to_string(data.x.size()) +
                          " examples");
    data.y = Vector(static_cast<Eigen::Index>(y.size()));
    for (std::size_t mu = 0; mu < y.size(); ++mu) {
      if (!y[mu].is_number())
        throw ParseError(label + ": label " + std::to_string(mu) +
                         " is not a number");
      data.y[static_cast<Eigen::Index>(mu)] = y[mu].get<double>();
    }
  } else if (require_labels) {
    throw ShapeMismatch(label + ": \"y\" labels are required here");
  } else {
    data.y = Vector(0);
  }
  return data;
}

}  // namespace dlnk
