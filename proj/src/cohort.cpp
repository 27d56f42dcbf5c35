#include "popgap/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "json.hpp"
#include "popgap/csv.hpp"
#include "popgap/errors.hpp"
#include "popgap/rng.hpp"

namespace popgap {
namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool is_unknown_cell(const std::string& s) {
  const std::string v = lower(s);
  return v.empty() || v == "unknown" || v == "na" || v == "n/a";
}

Sex parse_sex(const std::string& s) {
  const std::string v = lower(s);
  if (v == "female" || v == "f") return Sex::female;
  if (v == "male" || v == "m") return Sex::male;
  return Sex::unknown;
}

std::optional<int> parse_age(const std::string& s, std::size_t row) {
  if (is_unknown_cell(s)) return std::nullopt;
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw UnparseableAgeError("registry row " + std::to_string(row) + ": age \"" + s +
                              "\" is not a non-negative integer");
  return std::stoi(s);
}

// One cohort drawn from a candidate pool: ids sorted, shuffled, then split
// into a train block followed by a test block. `taken` removes subjects a
// previous draw already claimed (overlapping custom predicates).
Cohort draw_cohort(std::vector<std::string> ids, const std::string& name, CohortRole role,
                   int train_size, int test_size, Rng& rng, const std::string& pool_desc,
                   const std::vector<std::string>* taken) {
  std::sort(ids.begin(), ids.end());
  if (taken)
    ids.erase(std::remove_if(ids.begin(), ids.end(),
                             [taken](const std::string& id) {
                               return std::find(taken->begin(), taken->end(), id) != taken->end();
                             }),
              ids.end());

  const std::size_t need = static_cast<std::size_t>(train_size) + static_cast<std::size_t>(test_size);
  if (ids.size() < need)
    throw InsufficientSubjectsError(pool_desc + ": requested " + std::to_string(need) +
                                    " subjects (train " + std::to_string(train_size) + " + test " +
                                    std::to_string(test_size) + "), only " +
                                    std::to_string(ids.size()) + " available");
  rng.shuffle(ids);

  Cohort c;
  c.name = name;
  c.role = role;
  c.train_ids.assign(ids.begin(), ids.begin() + train_size);
  c.test_ids.assign(ids.begin() + train_size, ids.begin() + static_cast<std::ptrdiff_t>(need));
  c.members = c.train_ids;
  c.members.insert(c.members.end(), c.test_ids.begin(), c.test_ids.end());
  return c;
}

template <typename Pred>
std::vector<std::string> ids_where(const std::vector<SubjectRecord>& registry, Pred pred) {
  std::vector<std::string> ids;
  for (const SubjectRecord& r : registry)
    if (pred(r)) ids.push_back(r.subject_id);
  return ids;
}

// Stratum key for demographic matching. Unknown sex or age never matches.
struct Stratum {
  Sex sex;
  int age_bin;
  auto operator<=>(const Stratum&) const = default;
};

std::string stratum_desc(const Stratum& s, int bin_years) {
  return std::string(to_string(s.sex)) + ", age " + std::to_string(s.age_bin * bin_years) + "-" +
         std::to_string((s.age_bin + 1) * bin_years - 1);
}

std::map<Stratum, std::vector<std::string>> stratify(const std::vector<SubjectRecord>& registry,
                                                     int bin_years) {
  std::map<Stratum, std::vector<std::string>> strata;
  for (const SubjectRecord& r : registry) {
    if (r.sex == Sex::unknown || !r.age_years) continue;
    strata[{r.sex, *r.age_years / bin_years}].push_back(r.subject_id);
  }
  return strata;
}

// Largest-remainder apportionment of `total` across weights, ties broken by
// ascending index. Exact integer arithmetic keeps this deterministic.
std::vector<int> largest_remainder(const std::vector<long long>& weights, long long total) {
  long long weight_sum = 0;
  for (long long w : weights) weight_sum += w;

  std::vector<int> quota(weights.size(), 0);
  std::vector<std::pair<long long, std::size_t>> remainders;  // (-remainder, index)
  long long assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const long long scaled = total * weights[i];
    quota[i] = static_cast<int>(scaled / weight_sum);
    assigned += quota[i];
    remainders.emplace_back(-(scaled % weight_sum), i);
  }
  std::sort(remainders.begin(), remainders.end());
  for (long long extra = total - assigned; extra > 0; --extra)
    ++quota[remainders[static_cast<std::size_t>(total - assigned - extra)].second];
  return quota;
}

std::string dataset_label(const std::vector<SubjectRecord>& registry, const char* fallback) {
  std::string label;
  for (const SubjectRecord& r : registry) {
    if (label.empty()) label = r.dataset;
    else if (label != r.dataset) return fallback;
  }
  return label.empty() ? fallback : label;
}

}  // namespace

const char* to_string(Sex s) {
  switch (s) {
    case Sex::female: return "female";
    case Sex::male: return "male";
    default: return "unknown";
  }
}

std::vector<SubjectRecord> load_registry(const std::string& path) {
  const csv::Table table = csv::read_file(path);
  const int c_id = table.column("subject_id");
  const int c_sex = table.column("sex");
  const int c_age = table.column("age");
  const int c_dataset = table.column("dataset");
  for (const auto& [col, name] :
       {std::pair{c_id, "subject_id"}, {c_sex, "sex"}, {c_age, "age"}, {c_dataset, "dataset"}})
    if (col < 0) throw MissingColumnError(path + ": missing required column " + name);
  const int c_site = table.column("site");
  const int c_scanner = table.column("scanner");
  const int c_gt = table.column("gt_path");
  const int c_pred = table.column("pred_path");

  const auto cell = [](const std::vector<std::string>& row, int col) {
    return col >= 0 && static_cast<std::size_t>(col) < row.size() ? row[static_cast<std::size_t>(col)]
                                                                  : std::string();
  };

  std::vector<SubjectRecord> records;
  records.reserve(table.rows.size());
  std::vector<std::string> seen;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    SubjectRecord r;
    r.subject_id = cell(row, c_id);
    if (r.subject_id.empty())
      throw Error(path + ": row " + std::to_string(i + 2) + " has an empty subject_id");
    if (std::find(seen.begin(), seen.end(), r.subject_id) != seen.end())
      throw DuplicateSubjectIdError(path + ": duplicate subject_id " + r.subject_id);
    seen.push_back(r.subject_id);
    r.sex = parse_sex(cell(row, c_sex));
    r.age_years = parse_age(cell(row, c_age), i + 2);  // +2: header line, 1-based
    r.dataset = cell(row, c_dataset);
    r.site = cell(row, c_site);
    r.scanner = cell(row, c_scanner);
    r.gt_path = cell(row, c_gt);
    r.pred_path = cell(row, c_pred);
    records.push_back(std::move(r));
  }
  return records;
}

std::pair<Cohort, Cohort> build_sex_subgroups(const std::vector<SubjectRecord>& registry,
                                              int train_size, int test_size,
                                              std::uint64_t seed) {
  Rng rng(seed);
  const auto female = ids_where(registry, [](const SubjectRecord& r) { return r.sex == Sex::female; });
  const auto male = ids_where(registry, [](const SubjectRecord& r) { return r.sex == Sex::male; });
  Cohort g1 = draw_cohort(female, "female", CohortRole::g1, train_size, test_size, rng,
                          "female subjects", nullptr);
  Cohort g2 = draw_cohort(male, "male", CohortRole::g2, train_size, test_size, rng,
                          "male subjects", nullptr);
  return {std::move(g1), std::move(g2)};
}

std::pair<Cohort, Cohort> build_age_subgroups(const std::vector<SubjectRecord>& registry,
                                              int under, int over, int train_size,
                                              int test_size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> young, old;
  for (const SubjectRecord& r : registry) {
    if (!r.age_years) continue;
    if (*r.age_years < under) young.push_back(r.subject_id);
    else if (*r.age_years > over) old.push_back(r.subject_id);
    // Ages in [under, over] fall in the excluded middle band.
  }
  Cohort g1 = draw_cohort(young, "under_" + std::to_string(under), CohortRole::g1, train_size,
                          test_size, rng, "subjects under " + std::to_string(under), nullptr);
  Cohort g2 = draw_cohort(old, "over_" + std::to_string(over), CohortRole::g2, train_size,
                          test_size, rng, "subjects over " + std::to_string(over), nullptr);
  return {std::move(g1), std::move(g2)};
}

std::pair<Cohort, Cohort> build_matched_cross_dataset(
    const std::vector<SubjectRecord>& registry_a, const std::vector<SubjectRecord>& registry_b,
    int age_bin_years, int train_size, int test_size, std::uint64_t seed) {
  if (age_bin_years < 1) throw Error("age_bin_years must be at least 1");
  Rng rng(seed);
  const auto strata_a = stratify(registry_a, age_bin_years);
  const auto strata_b = stratify(registry_b, age_bin_years);

  // Pooled per-stratum counts define the target distribution.
  std::map<Stratum, long long> pooled;
  for (const auto& [s, ids] : strata_a) pooled[s] += static_cast<long long>(ids.size());
  for (const auto& [s, ids] : strata_b) pooled[s] += static_cast<long long>(ids.size());
  if (pooled.empty())
    throw InsufficientSubjectsError("no subjects with known sex and age to match on");

  std::vector<Stratum> keys;
  std::vector<long long> weights;
  for (const auto& [s, n] : pooled) {
    keys.push_back(s);
    weights.push_back(n);
  }

  const int n_total = train_size + test_size;
  const std::vector<int> quota = largest_remainder(weights, n_total);
  const std::vector<int> train_quota = largest_remainder(
      std::vector<long long>(quota.begin(), quota.end()), train_size);

  // Both registries must cover every stratum quota.
  std::string deficits;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto a_it = strata_a.find(keys[i]);
    const auto b_it = strata_b.find(keys[i]);
    const std::size_t have_a = a_it == strata_a.end() ? 0 : a_it->second.size();
    const std::size_t have_b = b_it == strata_b.end() ? 0 : b_it->second.size();
    if (have_a < static_cast<std::size_t>(quota[i]) || have_b < static_cast<std::size_t>(quota[i]))
      deficits += (deficits.empty() ? "" : "; ") + stratum_desc(keys[i], age_bin_years) +
                  ": quota " + std::to_string(quota[i]) + ", registry A has " +
                  std::to_string(have_a) + ", registry B has " + std::to_string(have_b);
  }
  if (!deficits.empty()) throw InfeasibleMatchError("deficient strata: " + deficits);

  const auto draw_matched = [&](const std::map<Stratum, std::vector<std::string>>& strata,
                                const std::string& name, CohortRole role) {
    Cohort c;
    c.name = name;
    c.role = role;
    std::vector<std::string> test_block;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (quota[i] == 0) continue;
      std::vector<std::string> ids = strata.at(keys[i]);
      std::sort(ids.begin(), ids.end());
      rng.shuffle(ids);
      c.train_ids.insert(c.train_ids.end(), ids.begin(), ids.begin() + train_quota[i]);
      test_block.insert(test_block.end(), ids.begin() + train_quota[i], ids.begin() + quota[i]);
    }
    c.test_ids = std::move(test_block);
    c.members = c.train_ids;
    c.members.insert(c.members.end(), c.test_ids.begin(), c.test_ids.end());
    return c;
  };

  Cohort g1 = draw_matched(strata_a, dataset_label(registry_a, "A"), CohortRole::g1);
  Cohort g2 = draw_matched(strata_b, dataset_label(registry_b, "B"), CohortRole::g2);
  return {std::move(g1), std::move(g2)};
}

std::pair<Cohort, Cohort> build_custom_subgroups(const std::vector<SubjectRecord>& registry,
                                                 const std::string& g1_name,
                                                 const SubjectPredicate& g1_predicate,
                                                 const std::string& g2_name,
                                                 const SubjectPredicate& g2_predicate,
                                                 int train_size, int test_size,
                                                 std::uint64_t seed) {
  Rng rng(seed);
  Cohort g1 = draw_cohort(ids_where(registry, g1_predicate), g1_name, CohortRole::g1, train_size,
                          test_size, rng, "subjects matching " + g1_name, nullptr);
  // Overlapping predicates must not reuse a subject within one experiment.
  Cohort g2 = draw_cohort(ids_where(registry, g2_predicate), g2_name, CohortRole::g2, train_size,
                          test_size, rng, "subjects matching " + g2_name + " (minus g1 picks)",
                          &g1.members);
  return {std::move(g1), std::move(g2)};
}

FoldPlan assign_folds(const Cohort& cohort, int k, std::uint64_t seed) {
  if (k < 1 || static_cast<std::size_t>(k) > cohort.train_ids.size())
    throw KTooLargeError("k=" + std::to_string(k) + " does not fit a training set of " +
                         std::to_string(cohort.train_ids.size()));
  std::vector<std::string> ids = cohort.train_ids;
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(ids);

  FoldPlan plan;
  plan.k = k;
  for (std::size_t i = 0; i < ids.size(); ++i)
    plan.assignments[ids[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return plan;
}

void write_cohort_manifest(const Cohort& cohort, const FoldPlan* folds,
                           const std::string& path) {
  nlohmann::ordered_json j;
  j["name"] = cohort.name;
  j["role"] = to_string(cohort.role);
  j["train"] = cohort.train_ids;
  j["test"] = cohort.test_ids;
  j["folds"] = nlohmann::ordered_json::object();
  if (folds)
    for (const auto& [id, fold] : folds->assignments) j["folds"][id] = fold;

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create manifest: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest: " + path);
}

std::pair<Cohort, FoldPlan> read_cohort_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFoundError("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedHeaderError(path + ": not a valid manifest: " + e.what());
  }

  Cohort c;
  FoldPlan plan;
  try {
    c.name = j.at("name").get<std::string>();
    c.role = j.at("role").get<std::string>() == "g2" ? CohortRole::g2 : CohortRole::g1;
    c.train_ids = j.at("train").get<std::vector<std::string>>();
    c.test_ids = j.at("test").get<std::vector<std::string>>();
    for (const auto& [id, fold] : j.at("folds").items()) {
      plan.assignments[id] = fold.get<int>();
      if (fold.get<int>() + 1 > plan.k) plan.k = fold.get<int>() + 1;
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedHeaderError(path + ": manifest missing required fields: " + e.what());
  }
  c.members = c.train_ids;
  c.members.insert(c.members.end(), c.test_ids.begin(), c.test_ids.end());
  return {std::move(c), std::move(plan)};
}

}  // namespace popgap
