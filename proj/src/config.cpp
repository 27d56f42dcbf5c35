#include "popgap/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "popgap/errors.hpp"

namespace popgap {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

long long parse_int(const std::string& key, const std::string& value) {
  long long out = 0;
  const std::string v = trim(value);
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(key + ": \"" + value + "\" is not an integer");
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double out = std::stod(trim(value), &used);
    if (used == trim(value).size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": \"" + value + "\" is not a number");
}

// "48" means a cube; "64,64,48" sets each axis.
Dims3 parse_dims(const std::string& key, const std::string& value) {
  const auto parts = split(value, ',');
  if (parts.size() == 1) {
    const long long n = parse_int(key, parts[0]);
    return {n, n, n};
  }
  if (parts.size() != 3) throw ConfigError(key + ": expected one or three integers");
  return {parse_int(key, parts[0]), parse_int(key, parts[1]), parse_int(key, parts[2])};
}

Spacing3 parse_spacing(const std::string& key, const std::string& value) {
  const auto parts = split(value, ',');
  if (parts.size() == 1) {
    const double s = parse_real(key, parts[0]);
    return {s, s, s};
  }
  if (parts.size() != 3) throw ConfigError(key + ": expected one or three numbers");
  return {parse_real(key, parts[0]), parse_real(key, parts[1]), parse_real(key, parts[2])};
}

std::string resolve_path(const std::string& base_dir, const std::string& path) {
  if (path.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(base_dir) / path).string();
}

}  // namespace

const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::sex: return "sex";
    case ExperimentKind::age: return "age";
    case ExperimentKind::cross_dataset: return "cross_dataset";
    default: return "custom";
  }
}

std::map<std::string, std::string> parse_ini(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (section.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": key outside any [section]");
    kv[section + "." + key] = trim(line.substr(eq + 1));
  }
  return kv;
}

RunConfig load_run_config(const std::string& path, bool check_paths) {
  std::ifstream in(path);
  if (!in) throw FileNotFoundError("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();

  std::map<std::string, std::string> kv;
  try {
    kv = parse_ini(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }

  const std::string base_dir = std::filesystem::path(path).parent_path().string();
  RunConfig cfg;
  std::map<std::uint16_t, std::string> label_entries;

  for (const auto& [key, value] : kv) {
    if (key == "run.out_dir") cfg.out_dir = resolve_path(base_dir, value);
    else if (key == "run.dataset_label") cfg.dataset_label = value;
    else if (key == "run.seed") {
      cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
      cfg.seed_set = true;
    } else if (key.rfind("labels.", 0) == 0) {
      const long long label = parse_int(key, key.substr(7));
      if (label < 1 || label > 65535)
        throw ConfigError(key + ": labels must be in [1, 65535]");
      label_entries[static_cast<std::uint16_t>(label)] = value;
    } else if (key == "cohort.experiment") {
      if (value == "sex") cfg.experiment = ExperimentKind::sex;
      else if (value == "age") cfg.experiment = ExperimentKind::age;
      else if (value == "cross_dataset") cfg.experiment = ExperimentKind::cross_dataset;
      else if (value == "custom") cfg.experiment = ExperimentKind::custom;
      else throw ConfigError(key + ": unknown experiment kind \"" + value + "\"");
    } else if (key == "cohort.registry") cfg.registry_path = resolve_path(base_dir, value);
    else if (key == "cohort.registry_b") cfg.registry_b_path = resolve_path(base_dir, value);
    else if (key == "cohort.train_size") cfg.train_size = static_cast<int>(parse_int(key, value));
    else if (key == "cohort.test_size") cfg.test_size = static_cast<int>(parse_int(key, value));
    else if (key == "cohort.age_under") cfg.age_under = static_cast<int>(parse_int(key, value));
    else if (key == "cohort.age_over") cfg.age_over = static_cast<int>(parse_int(key, value));
    else if (key == "cohort.age_bin_years")
      cfg.age_bin_years = static_cast<int>(parse_int(key, value));
    else if (key == "cohort.folds") cfg.folds = static_cast<int>(parse_int(key, value));
    else if (key == "cohort.custom_g1_name") cfg.custom_g1_name = value;
    else if (key == "cohort.custom_g2_name") cfg.custom_g2_name = value;
    else if (key == "cohort.custom_g1") cfg.custom_g1 = value;
    else if (key == "cohort.custom_g2") cfg.custom_g2 = value;
    else if (key == "metrics.t_test") {
      if (value == "paired") cfg.t_test = TestMode::paired;
      else if (value == "welch") cfg.t_test = TestMode::welch;
      else throw ConfigError(key + ": unknown t-test mode \"" + value + "\"");
    } else if (key == "metrics.percentile") {
      if (value != "ceil95")
        throw ConfigError(key + ": the only supported convention is \"ceil95\" "
                                "(nearest-rank ceil(0.95 n))");
      cfg.percentile = value;
    } else if (key == "synth.grid") cfg.synth_dims = parse_dims(key, value);
    else if (key == "synth.spacing") cfg.synth_spacing = parse_spacing(key, value);
    else if (key == "synth.n_subjects")
      cfg.synth_subjects = static_cast<int>(parse_int(key, value));
    else if (key == "synth.matched") cfg.synth_matched = value;
    else if (key == "synth.cross") cfg.synth_cross = value;
    else throw ConfigError(path + ": unknown config key \"" + key + "\"");
  }

  if (!label_entries.empty()) cfg.labels = LabelDictionary(label_entries);
  if (!cfg.seed_set)
    throw ConfigError(path + ": [run] seed is mandatory so every run is reproducible");
  if (cfg.train_size < 1 || cfg.test_size < 1)
    throw ConfigError(path + ": train_size and test_size must be at least 1");
  if (cfg.folds < 1) throw ConfigError(path + ": folds must be at least 1");
  if (cfg.age_under > cfg.age_over)
    throw ConfigError(path + ": age_under must not exceed age_over");
  if (cfg.synth_subjects < 2)
    throw ConfigError(path + ": synth.n_subjects must be at least 2");
  if (check_paths)
    for (const std::string& p : {cfg.registry_path, cfg.registry_b_path})
      if (!p.empty() && !std::filesystem::exists(p))
        throw ConfigError(path + ": referenced registry does not exist: " + p);
  return cfg;
}

SubjectPredicate compile_predicate(const std::string& expression) {
  struct Clause {
    std::string field, op, value;
    int number = 0;
  };
  std::vector<Clause> clauses;

  std::string rest = expression;
  std::vector<std::string> raw;
  std::size_t pos;
  while ((pos = rest.find("&&")) != std::string::npos) {
    raw.push_back(rest.substr(0, pos));
    rest.erase(0, pos + 2);
  }
  raw.push_back(rest);

  for (const std::string& piece : raw) {
    const std::string text = trim(piece);
    if (text.empty()) throw ConfigError("empty clause in predicate \"" + expression + "\"");
    Clause c;
    for (const char* op : {"<=", ">=", "==", "!=", "<", ">"}) {
      const std::size_t at = text.find(op);
      if (at != std::string::npos) {
        c.field = trim(text.substr(0, at));
        c.op = op;
        c.value = trim(text.substr(at + std::strlen(op)));
        break;
      }
    }
    if (c.op.empty())
      throw ConfigError("no operator in predicate clause \"" + text + "\"");
    const bool numeric_field = c.field == "age";
    const bool string_field = c.field == "sex" || c.field == "dataset" || c.field == "site" ||
                              c.field == "scanner";
    if (!numeric_field && !string_field)
      throw ConfigError("unknown predicate field \"" + c.field + "\"");
    if (numeric_field) {
      c.number = static_cast<int>(parse_int("age", c.value));
    } else if (c.op != "==" && c.op != "!=") {
      throw ConfigError("operator " + c.op + " needs the age field, got \"" + c.field + "\"");
    }
    clauses.push_back(std::move(c));
  }

  return [clauses](const SubjectRecord& r) {
    for (const Clause& c : clauses) {
      bool ok;
      if (c.field == "age") {
        if (!r.age_years) return false;
        const int a = *r.age_years;
        if (c.op == "<") ok = a < c.number;
        else if (c.op == "<=") ok = a <= c.number;
        else if (c.op == ">") ok = a > c.number;
        else if (c.op == ">=") ok = a >= c.number;
        else if (c.op == "==") ok = a == c.number;
        else ok = a != c.number;
      } else {
        std::string actual;
        if (c.field == "sex") actual = to_string(r.sex);
        else if (c.field == "dataset") actual = r.dataset;
        else if (c.field == "site") actual = r.site;
        else actual = r.scanner;
        ok = c.op == "==" ? actual == c.value : actual != c.value;
      }
      if (!ok) return false;
    }
    return true;
  };
}

}  // namespace popgap
