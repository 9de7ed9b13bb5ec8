#pragma once

// Experiment configuration files.
//
// The text format is a TOML subset: [section] headers, `key = value` lines,
// `#` comments, and values that are strings, integers, floats, booleans or
// single-type arrays of those (arrays may span lines). Dotted keys, inline
// tables and dates are not supported. The same content can also be read
// from JSON, including the "config" member of a summary.json artifact.
//
// Every key is checked against ExperimentConfig; unknown sections and keys
// are errors naming the full key.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "nishlab/activations.hpp"
#include "nishlab/errors.hpp"
#include "nishlab/harness.hpp"
#include "nishlab/optim.hpp"

namespace nishlab {

struct ConfigValue;
using ConfigArray = std::vector<ConfigValue>;

struct ConfigValue {
  std::variant<bool, std::int64_t, double, std::string, ConfigArray> value;

  bool operator==(const ConfigValue&) const = default;
};

struct ConfigSection {
  std::string name;
  std::vector<std::pair<std::string, ConfigValue>> entries;  // file order

  const ConfigValue* find(std::string_view key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return &v;
    return nullptr;
  }
};

using ConfigTable = std::vector<ConfigSection>;

// ---------------------------------------------------------------- formatting

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string toml_double(double v) {
  std::string s = format_double(v);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline std::string toml_quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

inline std::string toml_value(const ConfigValue& v) {
  return std::visit(overloaded{
                        [](bool b) -> std::string { return b ? "true" : "false"; },
                        [](std::int64_t i) { return std::to_string(i); },
                        [](double d) { return toml_double(d); },
                        [](const std::string& s) { return toml_quote(s); },
                        [](const ConfigArray& a) {
                          std::string out = "[";
                          for (std::size_t i = 0; i < a.size(); ++i) {
                            if (i) out += ", ";
                            out += toml_value(a[i]);
                          }
                          return out + "]";
                        },
                    },
                    v.value);
}

}  // namespace detail

inline std::string format_toml(const ConfigTable& table) {
  std::string out;
  for (std::size_t s = 0; s < table.size(); ++s) {
    if (s) out += '\n';
    out += "[" + table[s].name + "]\n";
    for (const auto& [key, value] : table[s].entries) {
      out += key + " = " + detail::toml_value(value) + "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------- TOML parsing

namespace detail {

class TomlLineParser {
 public:
  TomlLineParser(std::string_view text, std::size_t line) : text_(text), line_(line) {}

  ConfigValue value() {
    skip_space();
    if (at_end()) fail("missing value");
    const char c = text_[pos_];
    if (c == '"') return {string()};
    if (c == '[') return {array()};
    return scalar();
  }

  void expect_end() {
    skip_space();
    if (!at_end()) fail("unexpected text '" + std::string(text_.substr(pos_)) + "'");
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("line " + std::to_string(line_) + ": " + what);
  }

  bool at_end() const { return pos_ >= text_.size(); }

  // Whitespace, newlines (inside arrays) and comments.
  void skip_space() {
    while (!at_end()) {
      const char c = text_[pos_];
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos_;
      } else if (c == '#') {
        while (!at_end() && text_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string string() {
    ++pos_;  // opening quote
    std::string out;
    while (true) {
      if (at_end() || text_[pos_] == '\n') fail("unterminated string");
      const char c = text_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (at_end()) fail("unterminated escape");
      switch (text_[pos_++]) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        default: fail("unsupported escape sequence");
      }
    }
  }

  ConfigArray array() {
    ++pos_;  // [
    ConfigArray out;
    while (true) {
      skip_space();
      if (at_end()) fail("unterminated array");
      if (text_[pos_] == ']') {
        ++pos_;
        break;
      }
      out.push_back(value());
      if (out.size() > 1 && out.back().value.index() != out.front().value.index()) {
        const bool numeric = std::holds_alternative<std::int64_t>(out.back().value) ||
                             std::holds_alternative<double>(out.back().value);
        const bool front_numeric = std::holds_alternative<std::int64_t>(out.front().value) ||
                                   std::holds_alternative<double>(out.front().value);
        if (!(numeric && front_numeric)) fail("array elements must share one type");
      }
      skip_space();
      if (at_end()) fail("unterminated array");
      if (text_[pos_] == ',') {
        ++pos_;
      } else if (text_[pos_] != ']') {
        fail("expected ',' or ']' in array");
      }
    }
    return out;
  }

  ConfigValue scalar() {
    const std::size_t start = pos_;
    while (!at_end() && text_[pos_] != ',' && text_[pos_] != ']' && text_[pos_] != '#' &&
           text_[pos_] != ' ' && text_[pos_] != '\t' && text_[pos_] != '\n' &&
           text_[pos_] != '\r')
      ++pos_;
    std::string token(text_.substr(start, pos_ - start));
    if (token == "true") return {true};
    if (token == "false") return {false};
    std::string digits;
    for (char c : token)
      if (c != '_') digits += c;
    if (digits.empty()) fail("missing value");
    const bool is_float = digits.find_first_of(".eE") != std::string::npos ||
                          digits.find("inf") != std::string::npos ||
                          digits.find("nan") != std::string::npos;
    std::string_view body = digits;
    if (body.front() == '+') body.remove_prefix(1);
    if (is_float) {
      double d = 0.0;
      const auto res = std::from_chars(body.data(), body.data() + body.size(), d);
      if (res.ec != std::errc() || res.ptr != body.data() + body.size())
        fail("invalid number '" + token + "'");
      return {d};
    }
    std::int64_t i = 0;
    const auto res = std::from_chars(body.data(), body.data() + body.size(), i);
    if (res.ec == std::errc::result_out_of_range) fail("integer '" + token + "' out of range");
    if (res.ec != std::errc() || res.ptr != body.data() + body.size())
      fail("invalid value '" + token + "' (strings need double quotes)");
    return {i};
  }

  std::string_view text_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Bracket depth of `s` outside strings and comments; used to join
// multi-line arrays.
inline int bracket_balance(std::string_view s) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
    } else if (c == '"') {
      in_string = true;
    } else if (c == '#') {
      while (i < s.size() && s[i] != '\n') ++i;
    } else if (c == '[') {
      ++depth;
    } else if (c == ']') {
      --depth;
    }
  }
  return depth;
}

inline bool valid_bare_key(std::string_view key) {
  if (key.empty()) return false;
  for (char c : key) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

}  // namespace detail

inline ConfigTable parse_toml(std::string_view text) {
  ConfigTable table;
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start <= text.size();) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const std::string_view line = detail::trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;

    if (line.front() == '[') {
      const std::size_t close = line.find(']');
      if (close == std::string_view::npos)
        throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      const std::string name(detail::trim(line.substr(1, close - 1)));
      const std::string_view rest = detail::trim(line.substr(close + 1));
      if (!rest.empty() && rest.front() != '#')
        throw ConfigError("line " + std::to_string(line_no) + ": text after section header");
      if (!detail::valid_bare_key(name))
        throw ConfigError("line " + std::to_string(line_no) + ": invalid section name '" + name +
                          "'");
      for (const auto& s : table)
        if (s.name == name)
          throw ConfigError("line " + std::to_string(line_no) + ": duplicate section [" + name +
                            "]");
      table.push_back({name, {}});
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    if (!detail::valid_bare_key(key))
      throw ConfigError("line " + std::to_string(line_no) + ": invalid key '" + key + "'");
    if (table.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": key '" + key +
                        "' appears before any [section]");

    std::string value_text(line.substr(eq + 1));
    int depth = detail::bracket_balance(value_text);
    while (depth > 0 && i + 1 < lines.size()) {
      value_text += '\n';
      value_text += lines[++i];
      depth = detail::bracket_balance(value_text);
    }
    detail::TomlLineParser parser(value_text, line_no);
    ConfigValue value = parser.value();
    parser.expect_end();

    auto& section = table.back();
    if (section.find(key))
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + section.name +
                        "." + key + "'");
    section.entries.emplace_back(key, std::move(value));
  }
  return table;
}

// ---------------------------------------------------------------- JSON bridge

namespace detail {

inline ConfigValue value_from_json(const nlohmann::json& j, const std::string& where) {
  if (j.is_boolean()) return {j.get<bool>()};
  if (j.is_number_unsigned()) {
    const auto u = j.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
      throw ConfigError(where + ": integer out of range");
    return {static_cast<std::int64_t>(u)};
  }
  if (j.is_number_integer()) return {j.get<std::int64_t>()};
  if (j.is_number_float()) return {j.get<double>()};
  if (j.is_string()) return {j.get<std::string>()};
  if (j.is_array()) {
    ConfigArray a;
    for (const auto& e : j) a.push_back(value_from_json(e, where));
    return {a};
  }
  throw ConfigError(where + ": unsupported JSON value");
}

}  // namespace detail

inline nlohmann::ordered_json config_table_to_json(const ConfigTable& table) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& section : table) {
    auto& obj = out[section.name] = nlohmann::ordered_json::object();
    for (const auto& [key, value] : section.entries) {
      auto convert = [](const auto& self, const ConfigValue& v) -> nlohmann::ordered_json {
        return std::visit(overloaded{
                              [](bool b) { return nlohmann::ordered_json(b); },
                              [](std::int64_t i) { return nlohmann::ordered_json(i); },
                              [](double d) { return nlohmann::ordered_json(d); },
                              [](const std::string& s) { return nlohmann::ordered_json(s); },
                              [&](const ConfigArray& a) {
                                auto arr = nlohmann::ordered_json::array();
                                for (const auto& e : a) arr.push_back(self(self, e));
                                return arr;
                              },
                          },
                          v.value);
      };
      obj[key] = convert(convert, value);
    }
  }
  return out;
}

// Accepts either the sections object itself or a document with the
// sections under "config" (summary.json).
inline ConfigTable config_table_from_json(const nlohmann::json& doc) {
  const nlohmann::json& root = doc.contains("config") ? doc.at("config") : doc;
  if (!root.is_object()) throw ConfigError("JSON config must be an object of sections");
  ConfigTable table;
  for (const auto& [name, body] : root.items()) {
    if (!body.is_object()) throw ConfigError("JSON config section '" + name + "' is not an object");
    ConfigSection section{name, {}};
    for (const auto& [key, value] : body.items()) {
      section.entries.emplace_back(key, detail::value_from_json(value, name + "." + key));
    }
    table.push_back(std::move(section));
  }
  return table;
}

// ---------------------------------------------------------------- mapping

namespace detail {

class ConfigReader {
 public:
  ConfigReader(const std::string& section, const ConfigValue& value, const std::string& key)
      : where_(section + "." + key), value_(value) {}

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(where_ + ": " + what); }

  std::string str() const {
    if (const auto* s = std::get_if<std::string>(&value_.value)) return *s;
    fail("expected a string");
  }
  bool boolean() const {
    if (const auto* b = std::get_if<bool>(&value_.value)) return *b;
    fail("expected true or false");
  }
  double real() const { return real_of(value_); }
  std::uint64_t count() const { return count_of(value_); }

  std::vector<std::string> strings() const {
    std::vector<std::string> out;
    for (const auto& e : array()) {
      const auto* s = std::get_if<std::string>(&e.value);
      if (!s) fail("expected an array of strings");
      out.push_back(*s);
    }
    return out;
  }
  std::vector<std::size_t> counts() const {
    std::vector<std::size_t> out;
    for (const auto& e : array()) out.push_back(static_cast<std::size_t>(count_of(e)));
    return out;
  }
  std::vector<double> reals() const {
    std::vector<double> out;
    for (const auto& e : array()) out.push_back(real_of(e));
    return out;
  }

 private:
  const ConfigArray& array() const {
    if (const auto* a = std::get_if<ConfigArray>(&value_.value)) return *a;
    fail("expected an array");
  }
  double real_of(const ConfigValue& v) const {
    if (const auto* d = std::get_if<double>(&v.value)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(&v.value)) return static_cast<double>(*i);
    fail("expected a number");
  }
  std::uint64_t count_of(const ConfigValue& v) const {
    if (const auto* i = std::get_if<std::int64_t>(&v.value)) {
      if (*i < 0) fail("expected a non-negative integer");
      return static_cast<std::uint64_t>(*i);
    }
    fail("expected an integer");
  }

  std::string where_;
  const ConfigValue& value_;
};

inline NishDerivative parse_nish_derivative(const ConfigReader& r) {
  const auto s = r.str();
  if (s == "corrected") return NishDerivative::Corrected;
  if (s == "printed") return NishDerivative::Printed;
  r.fail("expected \"corrected\" or \"printed\"");
}

inline OptimizerKind parse_optimizer_kind(const ConfigReader& r) {
  const auto s = r.str();
  if (s == "sgd") return OptimizerKind::SGD;
  if (s == "adam") return OptimizerKind::Adam;
  r.fail("expected \"sgd\" or \"adam\"");
}

inline void apply_dataset(DatasetConfig& d, const std::string& key, const ConfigReader& r) {
  if (key == "dir") d.dir = r.str();
  else if (key == "train_fraction") d.train_fraction = r.real();
  else if (key == "train_subset") d.train_subset = r.count();
  else if (key == "test_subset") d.test_subset = r.count();
  else if (key == "split_seed") d.split_seed = r.count();
  else if (key == "noise_sigma") d.noise_sigma = r.real();
  else throw ConfigError("unknown key 'dataset." + key + "'");
}

inline void apply_model(ModelConfig& m, const std::string& key, const ConfigReader& r) {
  auto& a = m.activation;
  if (key == "architecture") {
    try {
      m.architecture = parse_architecture(r.str());
    } catch (const ConfigError& e) {
      r.fail(e.what());
    }
  } else if (key == "depth") m.depth = r.count();
  else if (key == "width") m.width = r.count();
  else if (key == "dropout") m.dropout = r.real();
  else if (key == "activation") {
    try {
      a.tag = parse_activation_tag(r.str());
    } catch (const ConfigError& e) {
      r.fail(e.what());
    }
  } else if (key == "leaky_slope") a.slope = r.real();
  else if (key == "rrelu_lower") a.lower = r.real();
  else if (key == "rrelu_upper") a.upper = r.real();
  else if (key == "prelu_rho") a.rho = r.real();
  else if (key == "relu6_cap") a.cap = r.real();
  else if (key == "elu_alpha") a.alpha = r.real();
  else if (key == "selu_lambda") a.selu_lambda = r.real();
  else if (key == "selu_alpha") a.selu_alpha = r.real();
  else if (key == "swish_beta") a.beta = r.real();
  else if (key == "swish_trainable") a.beta_trainable = r.boolean();
  else if (key == "nish_derivative") a.nish_derivative = parse_nish_derivative(r);
  else throw ConfigError("unknown key 'model." + key + "'");
}

inline void apply_optimizer(OptimizerConfig& o, const std::string& key, const ConfigReader& r) {
  if (key == "kind") o.kind = parse_optimizer_kind(r);
  else if (key == "learning_rate") o.learning_rate = r.real();
  else if (key == "momentum") o.momentum = r.real();
  else if (key == "beta1") o.beta1 = r.real();
  else if (key == "beta2") o.beta2 = r.real();
  else if (key == "epsilon") o.epsilon = r.real();
  else throw ConfigError("unknown key 'optimizer." + key + "'");
}

inline void apply_experiment(ExperimentSettings& e, const std::string& key,
                             const ConfigReader& r) {
  if (key == "name") e.name = r.str();
  else if (key == "epochs") e.epochs = r.count();
  else if (key == "runs") e.runs = r.count();
  else if (key == "batch_size") e.batch_size = r.count();
  else if (key == "seed") e.seed = r.count();
  else if (key == "threads") e.threads = r.count();
  else if (key == "depths") e.depths = r.counts();
  else if (key == "activations") e.activations = r.strings();
  else if (key == "sigmas") e.sigmas = r.reals();
  else if (key == "grad_check_step") e.grad_check_step = r.real();
  else if (key == "grad_check_batch") e.grad_check_batch = r.count();
  else if (key == "grad_check_tolerance") e.grad_check_tolerance = r.real();
  else throw ConfigError("unknown key 'experiment." + key + "'");
}

}  // namespace detail

// Missing sections and keys keep their defaults. The result is validated.
inline ExperimentConfig config_from_table(const ConfigTable& table) {
  ExperimentConfig cfg;
  // The optimizer defaults depend on its kind, so the kind is applied first.
  for (const auto& section : table) {
    if (section.name != "optimizer") continue;
    if (const auto* kind = section.find("kind")) {
      detail::ConfigReader r("optimizer", *kind, "kind");
      cfg.optimizer = detail::parse_optimizer_kind(r) == OptimizerKind::Adam
                          ? OptimizerConfig::adam()
                          : OptimizerConfig::sgd();
    }
  }
  for (const auto& section : table) {
    const auto& n = section.name;
    if (n != "dataset" && n != "model" && n != "optimizer" && n != "experiment")
      throw ConfigError("unknown section [" + n + "]");
    for (const auto& [key, value] : section.entries) {
      const detail::ConfigReader r(n, value, key);
      if (n == "dataset") detail::apply_dataset(cfg.dataset, key, r);
      else if (n == "model") detail::apply_model(cfg.model, key, r);
      else if (n == "optimizer") detail::apply_optimizer(cfg.optimizer, key, r);
      else detail::apply_experiment(cfg.experiment, key, r);
    }
  }
  constexpr auto kMaxSeed = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max());
  if (cfg.experiment.seed > kMaxSeed || cfg.dataset.split_seed > kMaxSeed) {
    throw ConfigError("seeds must fit in a signed 64-bit integer");
  }
  cfg.validate();
  return cfg;
}

// Every field, defaults included, so the table alone reproduces a run.
inline ConfigTable config_to_table(const ExperimentConfig& cfg) {
  auto count = [](std::uint64_t v) { return ConfigValue{static_cast<std::int64_t>(v)}; };
  auto real = [](double v) { return ConfigValue{v}; };
  auto text = [](std::string v) { return ConfigValue{std::move(v)}; };
  const auto& a = cfg.model.activation;
  const auto& e = cfg.experiment;

  ConfigArray depths, activations, sigmas;
  for (auto d : e.depths) depths.push_back(count(d));
  for (const auto& s : e.activations) activations.push_back(text(s));
  for (double s : e.sigmas) sigmas.push_back(real(s));

  return {
      {"dataset",
       {{"dir", text(cfg.dataset.dir)},
        {"train_fraction", real(cfg.dataset.train_fraction)},
        {"train_subset", count(cfg.dataset.train_subset)},
        {"test_subset", count(cfg.dataset.test_subset)},
        {"split_seed", count(cfg.dataset.split_seed)},
        {"noise_sigma", real(cfg.dataset.noise_sigma)}}},
      {"model",
       {{"architecture", text(std::string(to_string(cfg.model.architecture)))},
        {"depth", count(cfg.model.depth)},
        {"width", count(cfg.model.width)},
        {"dropout", real(cfg.model.dropout)},
        {"activation", text(std::string(a.name()))},
        {"leaky_slope", real(a.slope)},
        {"rrelu_lower", real(a.lower)},
        {"rrelu_upper", real(a.upper)},
        {"prelu_rho", real(a.rho)},
        {"relu6_cap", real(a.cap)},
        {"elu_alpha", real(a.alpha)},
        {"selu_lambda", real(a.selu_lambda)},
        {"selu_alpha", real(a.selu_alpha)},
        {"swish_beta", real(a.beta)},
        {"swish_trainable", ConfigValue{a.beta_trainable}},
        {"nish_derivative",
         text(a.nish_derivative == NishDerivative::Printed ? "printed" : "corrected")}}},
      {"optimizer",
       {{"kind", text(cfg.optimizer.kind == OptimizerKind::Adam ? "adam" : "sgd")},
        {"learning_rate", real(cfg.optimizer.learning_rate)},
        {"momentum", real(cfg.optimizer.momentum)},
        {"beta1", real(cfg.optimizer.beta1)},
        {"beta2", real(cfg.optimizer.beta2)},
        {"epsilon", real(cfg.optimizer.epsilon)}}},
      {"experiment",
       {{"name", text(e.name)},
        {"epochs", count(e.epochs)},
        {"runs", count(e.runs)},
        {"batch_size", count(e.batch_size)},
        {"seed", count(e.seed)},
        {"threads", count(e.threads)},
        {"depths", ConfigValue{depths}},
        {"activations", ConfigValue{activations}},
        {"sigmas", ConfigValue{sigmas}},
        {"grad_check_step", real(e.grad_check_step)},
        {"grad_check_batch", count(e.grad_check_batch)},
        {"grad_check_tolerance", real(e.grad_check_tolerance)}}},
  };
}

inline std::string to_toml(const ExperimentConfig& cfg) { return format_toml(config_to_table(cfg)); }

inline ExperimentConfig parse_config(std::string_view toml_text) {
  return config_from_table(parse_toml(toml_text));
}

// Reads a .toml file, or a .json file (plain sections or a summary.json).
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  try {
    if (path.extension() == ".json") {
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(text);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
      }
      return config_from_table(config_table_from_json(doc));
    }
    return parse_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace nishlab
