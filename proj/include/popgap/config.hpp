#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "popgap/cohort.hpp"
#include "popgap/gap.hpp"
#include "popgap/volume.hpp"

namespace popgap {

enum class ExperimentKind { sex, age, cross_dataset, custom };

const char* to_string(ExperimentKind k);

/// A run's full parameterization, read from an INI-style config file.
/// Flags override config values, config overrides the defaults below; the
/// seed has no default and must come from the file or a flag.
struct RunConfig {
  // [run]
  std::string out_dir = "runs/out";
  std::string dataset_label = "run";
  std::uint64_t seed = 0;
  bool seed_set = false;

  // [labels]  (integer label = organ name, label order = report order)
  LabelDictionary labels;

  // [cohort]
  ExperimentKind experiment = ExperimentKind::sex;
  std::string registry_path;
  std::string registry_b_path;  // second registry, cross_dataset only
  int train_size = 10;
  int test_size = 10;
  int age_under = 50;
  int age_over = 70;
  int age_bin_years = 10;
  int folds = 1;
  std::string custom_g1_name = "custom_g1";
  std::string custom_g2_name = "custom_g2";
  std::string custom_g1;  // predicate expression, custom experiments only
  std::string custom_g2;

  // [metrics]
  TestMode t_test = TestMode::paired;
  std::string percentile = "ceil95";  // self-describing tag; ceil95 is the
                                      // only implemented convention

  // [synth]
  Dims3 synth_dims{48, 48, 48};
  Spacing3 synth_spacing{1.0, 1.25, 1.5};
  int synth_subjects = 20;
  std::string synth_matched = "none";  // "none", "erode:N", "dilate:N", "translate:N"
  std::string synth_cross = "erode:1";
};

/// "key = value" lines under [section] headers; '#' and ';' start comments.
/// Returned keys are "section.key". Throws ConfigError on syntax errors.
std::map<std::string, std::string> parse_ini(const std::string& text);

/// Loads and validates a config file. Relative registry paths are resolved
/// against the config file's directory. Throws ConfigError on unknown keys,
/// bad values, a missing seed, or (with check_paths) a referenced registry
/// that does not exist yet. check_paths is off for the command that
/// generates the registry.
RunConfig load_run_config(const std::string& path, bool check_paths = true);

/// Compiles a conjunctive filter like "sex==female && age<50" over the
/// fields sex, age, dataset, site, scanner. Operators: == != on strings,
/// == != < <= > >= on age. Unknown attributes never match. Throws
/// ConfigError on malformed expressions.
SubjectPredicate compile_predicate(const std::string& expression);

}  // namespace popgap
