#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "popgap/gap.hpp"

namespace popgap {

enum class Sex { female, male, unknown };

const char* to_string(Sex s);

/// One registry row. Optional attributes stay unknown rather than failing
/// the load; predicates never match unknown values.
struct SubjectRecord {
  std::string subject_id;
  Sex sex = Sex::unknown;
  std::optional<int> age_years;
  std::string dataset;
  std::string site;
  std::string scanner;
  std::string gt_path;
  std::string pred_path;
};

/// A demographically defined subject group with its hold-out split.
/// train_ids and test_ids are disjoint and together form members; every
/// member satisfies the cohort's defining predicate.
struct Cohort {
  std::string name;
  CohortRole role = CohortRole::g1;
  std::vector<std::string> members;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

/// Cross-validation assignment over a cohort's training set. Fold sizes
/// differ by at most one; test subjects are never assigned.
struct FoldPlan {
  int k = 0;
  std::map<std::string, int> assignments;  // subject_id -> fold in [0, k)
};

/// Reads a registry CSV with required columns subject_id, sex, age, dataset
/// and optional columns site, scanner, gt_path, pred_path. Empty or
/// "unknown" cells parse to unknown. Throws MissingColumnError,
/// DuplicateSubjectIdError, UnparseableAgeError (naming the row).
std::vector<SubjectRecord> load_registry(const std::string& path);

/// Sampling discipline shared by all builders, fixed so manifests are
/// reproducible: candidate pools are sorted by subject_id, shuffled with the
/// seeded generator, and drawn front-first (train block, then test block);
/// g1 is always drawn before g2.
std::pair<Cohort, Cohort> build_sex_subgroups(const std::vector<SubjectRecord>& registry,
                                              int train_size, int test_size,
                                              std::uint64_t seed);

/// g1 = age < under, g2 = age > over; ages in [under, over] and unknown ages
/// are excluded from both pools.
std::pair<Cohort, Cohort> build_age_subgroups(const std::vector<SubjectRecord>& registry,
                                              int under, int over, int train_size,
                                              int test_size, std::uint64_t seed);

/// Demographically matched cross-dataset cohorts: g1 from registry_a, g2
/// from registry_b, with identical per-stratum counts. Strata are sex
/// crossed with age bins of age_bin_years; per-stratum quotas follow the
/// pooled stratum distribution with largest-remainder rounding. Subjects of
/// unknown sex or age cannot be matched and are excluded. Throws
/// InfeasibleMatchError listing every deficient stratum.
std::pair<Cohort, Cohort> build_matched_cross_dataset(
    const std::vector<SubjectRecord>& registry_a, const std::vector<SubjectRecord>& registry_b,
    int age_bin_years, int train_size, int test_size, std::uint64_t seed);

/// Custom experiment: cohorts from caller-supplied predicates, same
/// sampling discipline as the named builders. A subject matching both
/// predicates can be drawn for g1 only; g2 samples from what remains.
using SubjectPredicate = std::function<bool(const SubjectRecord&)>;
std::pair<Cohort, Cohort> build_custom_subgroups(const std::vector<SubjectRecord>& registry,
                                                 const std::string& g1_name,
                                                 const SubjectPredicate& g1_predicate,
                                                 const std::string& g2_name,
                                                 const SubjectPredicate& g2_predicate,
                                                 int train_size, int test_size,
                                                 std::uint64_t seed);

/// Balanced k-fold partition of the training set: shuffle, then deal
/// round-robin. Throws KTooLargeError when k < 1 or k > |train|.
FoldPlan assign_folds(const Cohort& cohort, int k, std::uint64_t seed);

/// JSON manifest {name, role, train, test, folds}; byte-identical across
/// reruns with equal inputs. folds is {} when no plan is given.
void write_cohort_manifest(const Cohort& cohort, const FoldPlan* folds,
                           const std::string& path);

/// Reads a manifest written by write_cohort_manifest.
std::pair<Cohort, FoldPlan> read_cohort_manifest(const std::string& path);

}  // namespace popgap
