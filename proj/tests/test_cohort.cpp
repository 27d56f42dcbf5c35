#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "popgap/cohort.hpp"
#include "popgap/config.hpp"
#include "popgap/errors.hpp"

using namespace popgap;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("popgap_cohort_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string write(const std::string& name, const std::string& text) const {
    const std::string p = (path / name).string();
    std::ofstream out(p, std::ios::binary);
    out << text;
    return p;
  }
};

// n_female + n_male subjects with ages striped across [20, 90).
std::string registry_text(int n_female, int n_male, const std::string& dataset = "dsA") {
  std::string text = "subject_id,sex,age,dataset,site\n";
  int serial = 0;
  const auto row = [&](const char* sex) {
    const int age = 20 + (serial * 7) % 70;
    char buf[128];
    std::snprintf(buf, sizeof buf, "s%03d,%s,%d,%s,site%d\n", serial, sex, age, dataset.c_str(),
                  serial % 3);
    ++serial;
    text += buf;
  };
  for (int i = 0; i < n_female; ++i) row("female");
  for (int i = 0; i < n_male; ++i) row("male");
  return text;
}

std::set<std::string> as_set(const std::vector<std::string>& v) {
  return std::set<std::string>(v.begin(), v.end());
}

bool disjoint(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto sa = as_set(a);
  for (const auto& id : b)
    if (sa.count(id)) return false;
  return true;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("registry parsing") {
  TempDir tmp;

  SUBCASE("full row set with optional columns") {
    const auto p = tmp.write("r.csv",
                             "subject_id,sex,age,dataset,site,scanner,gt_path,pred_path\n"
                             "a1,F,34,dsA,s1,scX,gt/a1.nii.gz,\n"
                             "a2,male,unknown,dsA,,,gt/a2.nii.gz,pred/a2.nii.gz\n"
                             "a3,,61,dsB,s2,scY,,\n");
    const auto regs = load_registry(p);
    REQUIRE(regs.size() == 3);
    CHECK(regs[0].sex == Sex::female);
    CHECK(*regs[0].age_years == 34);
    CHECK(regs[0].gt_path == "gt/a1.nii.gz");
    CHECK(regs[1].sex == Sex::male);
    CHECK_FALSE(regs[1].age_years.has_value());
    CHECK(regs[1].pred_path == "pred/a2.nii.gz");
    CHECK(regs[2].sex == Sex::unknown);
    CHECK(regs[2].dataset == "dsB");
    CHECK(regs[2].scanner == "scY");
  }

  SUBCASE("missing required column") {
    const auto p = tmp.write("r.csv", "subject_id,sex,dataset\na1,f,dsA\n");
    CHECK_THROWS_AS(load_registry(p), MissingColumnError);
  }

  SUBCASE("duplicate subject id") {
    const auto p = tmp.write("r.csv",
                             "subject_id,sex,age,dataset\na1,f,30,d\na1,m,40,d\n");
    CHECK_THROWS_AS(load_registry(p), DuplicateSubjectIdError);
  }

  SUBCASE("garbage age names the row") {
    const auto p = tmp.write("r.csv",
                             "subject_id,sex,age,dataset\na1,f,30,d\na2,m,forty,d\n");
    CHECK_THROWS_AS(load_registry(p), UnparseableAgeError);
    try {
      load_registry(p);
    } catch (const UnparseableAgeError& e) {
      CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }
  }
}

TEST_CASE("sex subgroups: sizes, disjointness, determinism") {
  TempDir tmp;
  const auto p = tmp.write("r.csv", registry_text(30, 25));
  const auto regs = load_registry(p);

  const auto [g1, g2] = build_sex_subgroups(regs, 12, 6, 99);
  CHECK(g1.name == "female");
  CHECK(g2.name == "male");
  CHECK(g1.role == CohortRole::g1);
  CHECK(g2.role == CohortRole::g2);
  CHECK(g1.train_ids.size() == 12);
  CHECK(g1.test_ids.size() == 6);
  CHECK(g2.train_ids.size() == 12);
  CHECK(g2.test_ids.size() == 6);
  CHECK(disjoint(g1.train_ids, g1.test_ids));
  CHECK(disjoint(g1.members, g2.members));
  CHECK(g1.members.size() == 18);

  // Members come only from the right sex pool (female ids are s000..s029).
  for (const auto& id : g1.members) CHECK(id < std::string("s030"));
  for (const auto& id : g2.members) CHECK(id >= std::string("s030"));

  const auto [h1, h2] = build_sex_subgroups(regs, 12, 6, 99);
  CHECK(h1.train_ids == g1.train_ids);
  CHECK(h2.test_ids == g2.test_ids);

  const auto [d1, d2] = build_sex_subgroups(regs, 12, 6, 100);
  CHECK((d1.train_ids != g1.train_ids || d2.train_ids != g2.train_ids));
}

TEST_CASE("sex subgroups: pool too small") {
  TempDir tmp;
  const auto regs = load_registry(tmp.write("r.csv", registry_text(5, 30)));
  CHECK_THROWS_AS(build_sex_subgroups(regs, 4, 2, 1), InsufficientSubjectsError);
}

TEST_CASE("age subgroups exclude the boundary ages strictly") {
  std::string text = "subject_id,sex,age,dataset\n";
  // 15 young (<50), 15 old (>70), plus subjects at exactly 50 and 70 and in
  // the middle band, which must never be drawn.
  for (int i = 0; i < 15; ++i)
    text += "y" + std::to_string(i) + ",f," + std::to_string(20 + i) + ",d\n";
  for (int i = 0; i < 15; ++i)
    text += "o" + std::to_string(i) + ",m," + std::to_string(71 + i) + ",d\n";
  text += "b50,f,50,d\nb70,m,70,d\nmid,f,60,d\nnoage,f,unknown,d\n";
  TempDir tmp;
  const auto regs = load_registry(tmp.write("r.csv", text));

  const auto [g1, g2] = build_age_subgroups(regs, 50, 70, 10, 5, 7);
  CHECK(g1.name == "under_50");
  CHECK(g2.name == "over_70");
  for (const auto& id : g1.members) {
    CHECK(id[0] == 'y');
    CHECK(id != "b50");
  }
  for (const auto& id : g2.members) {
    CHECK(id[0] == 'o');
    CHECK(id != "b70");
  }
}

TEST_CASE("matched cross-dataset cohorts have identical stratum histograms") {
  // Two registries with deliberately different demographic mixes.
  std::string a = "subject_id,sex,age,dataset\n";
  std::string b = "subject_id,sex,age,dataset\n";
  int n = 0;
  const auto add = [&](std::string& reg, const char* pfx, const char* sex, int age, int count) {
    for (int i = 0; i < count; ++i)
      reg += std::string(pfx) + std::to_string(n++) + "," + sex + "," + std::to_string(age) +
             "," + (pfx[0] == 'a' ? "dsA" : "dsB") + "\n";
  };
  add(a, "a", "f", 34, 12); add(a, "a", "f", 47, 8); add(a, "a", "m", 52, 10);
  add(a, "a", "m", 66, 6); add(a, "a", "f", 71, 5);
  add(b, "b", "f", 31, 7); add(b, "b", "f", 43, 11); add(b, "b", "m", 55, 9);
  add(b, "b", "m", 62, 8); add(b, "b", "f", 78, 6);

  TempDir tmp;
  const auto ra = load_registry(tmp.write("a.csv", a));
  const auto rb = load_registry(tmp.write("b.csv", b));

  const auto [g1, g2] = build_matched_cross_dataset(ra, rb, 10, 12, 6, 5);
  CHECK(g1.train_ids.size() == 12);
  CHECK(g2.train_ids.size() == 12);
  CHECK(g1.test_ids.size() == 6);
  CHECK(g2.test_ids.size() == 6);

  // Histogram over (sex, age decade) must be exactly equal between sides,
  // for the full membership and for the train block alone.
  const auto histogram = [](const std::vector<SubjectRecord>& reg,
                            const std::vector<std::string>& ids) {
    std::map<std::pair<int, int>, int> h;
    for (const auto& id : ids) {
      const auto it = std::find_if(reg.begin(), reg.end(),
                                   [&](const SubjectRecord& r) { return r.subject_id == id; });
      REQUIRE(it != reg.end());
      h[{static_cast<int>(it->sex), *it->age_years / 10}]++;
    }
    return h;
  };
  CHECK(histogram(ra, g1.members) == histogram(rb, g2.members));
  CHECK(histogram(ra, g1.train_ids) == histogram(rb, g2.train_ids));

  SUBCASE("infeasible quota names the deficient stratum") {
    // Registry B has nobody over 70, so that stratum cannot be matched.
    std::string b2 = "subject_id,sex,age,dataset\n";
    std::string a2 = "subject_id,sex,age,dataset\n";
    n = 0;
    add(a2, "a", "f", 34, 20); add(a2, "a", "f", 75, 10);
    add(b2, "b", "f", 36, 30);
    const auto ra2 = load_registry(tmp.write("a2.csv", a2));
    const auto rb2 = load_registry(tmp.write("b2.csv", b2));
    CHECK_THROWS_AS(build_matched_cross_dataset(ra2, rb2, 10, 10, 5, 1), InfeasibleMatchError);
    try {
      build_matched_cross_dataset(ra2, rb2, 10, 10, 5, 1);
    } catch (const InfeasibleMatchError& e) {
      CHECK(std::string(e.what()).find("age 70-79") != std::string::npos);
    }
  }
}

TEST_CASE("custom subgroups with overlapping predicates stay disjoint") {
  TempDir tmp;
  const auto regs = load_registry(tmp.write("r.csv", registry_text(40, 0)));
  // Both predicates match every female subject; g2 must draw from the rest.
  const auto female = [](const SubjectRecord& r) { return r.sex == Sex::female; };
  const auto [g1, g2] = build_custom_subgroups(regs, "left", female, "right", female, 10, 5, 3);
  CHECK(disjoint(g1.members, g2.members));
  CHECK(g1.members.size() == 15);
  CHECK(g2.members.size() == 15);
}

TEST_CASE("fold assignment is balanced and bounded") {
  TempDir tmp;
  const auto regs = load_registry(tmp.write("r.csv", registry_text(40, 30)));
  const auto [g1, g2] = build_sex_subgroups(regs, 23, 5, 11);

  const FoldPlan plan = assign_folds(g1, 5, 17);
  CHECK(plan.k == 5);
  CHECK(plan.assignments.size() == 23);
  std::map<int, int> sizes;
  for (const auto& [id, fold] : plan.assignments) {
    CHECK(fold >= 0);
    CHECK(fold < 5);
    CHECK(std::find(g1.train_ids.begin(), g1.train_ids.end(), id) != g1.train_ids.end());
    sizes[fold]++;
  }
  // 23 = 5+5+5+4+4: every fold within one of every other.
  std::vector<int> counts;
  for (const auto& [fold, c] : sizes) counts.push_back(c);
  std::sort(counts.begin(), counts.end());
  CHECK(counts == std::vector<int>{4, 4, 5, 5, 5});

  CHECK(assign_folds(g1, 1, 17).k == 1);
  CHECK_THROWS_AS(assign_folds(g1, 24, 17), KTooLargeError);
  CHECK_THROWS_AS(assign_folds(g1, 0, 17), KTooLargeError);

  // Same seed, same plan.
  CHECK(assign_folds(g1, 5, 17).assignments == plan.assignments);
}

TEST_CASE("manifest round trip is lossless and byte-stable") {
  TempDir tmp;
  const auto regs = load_registry(tmp.write("r.csv", registry_text(30, 30)));
  const auto [g1, g2] = build_sex_subgroups(regs, 8, 4, 21);
  const FoldPlan plan = assign_folds(g1, 2, 22);

  const std::string p1 = tmp.write("m1.json", "");
  write_cohort_manifest(g1, &plan, p1);
  const auto [back, back_plan] = read_cohort_manifest(p1);
  CHECK(back.name == g1.name);
  CHECK(back.role == g1.role);
  CHECK(back.train_ids == g1.train_ids);
  CHECK(back.test_ids == g1.test_ids);
  CHECK(back_plan.k == 2);
  CHECK(back_plan.assignments == plan.assignments);

  const std::string p2 = tmp.write("m2.json", "");
  write_cohort_manifest(g1, &plan, p2);
  CHECK(slurp(p1) == slurp(p2));

  // Without a fold plan, folds is {} and k reads back as 0.
  const std::string p3 = tmp.write("m3.json", "");
  write_cohort_manifest(g2, nullptr, p3);
  const auto [back2, plan2] = read_cohort_manifest(p3);
  CHECK(back2.name == "male");
  CHECK(plan2.k == 0);
  CHECK(plan2.assignments.empty());
}

TEST_CASE("predicate compiler") {
  SubjectRecord r;
  r.subject_id = "x";
  r.sex = Sex::female;
  r.age_years = 44;
  r.dataset = "dsA";
  r.site = "s1";

  CHECK(compile_predicate("sex==female")(r));
  CHECK_FALSE(compile_predicate("sex!=female")(r));
  CHECK(compile_predicate("age<50")(r));
  CHECK(compile_predicate("age>=44")(r));
  CHECK_FALSE(compile_predicate("age>44")(r));
  CHECK(compile_predicate("dataset==dsA && age<=44 && site!=s2")(r));
  CHECK_FALSE(compile_predicate("dataset==dsA && age>60")(r));

  SUBCASE("unknown values never match") {
    SubjectRecord u;
    u.subject_id = "u";
    CHECK_FALSE(compile_predicate("age<50")(u));
    CHECK_FALSE(compile_predicate("age>50")(u));
    CHECK_FALSE(compile_predicate("sex==female")(u));
    CHECK_FALSE(compile_predicate("sex==male")(u));
  }

  SUBCASE("malformed expressions are rejected") {
    CHECK_THROWS_AS(compile_predicate("height<180"), ConfigError);
    CHECK_THROWS_AS(compile_predicate("age<<50"), ConfigError);
    CHECK_THROWS_AS(compile_predicate("age<abc"), ConfigError);
    CHECK_THROWS_AS(compile_predicate(""), ConfigError);
  }
}

TEST_CASE("ini parsing and run config") {
  TempDir tmp;

  SUBCASE("values, comments, sections") {
    const auto kv = parse_ini("# leading comment\n[run]\nseed = 42\nout_dir = runs/x ; tail\n"
                              "[cohort]\nexperiment = age\n");
    CHECK(kv.at("run.seed") == "42");
    CHECK(kv.at("run.out_dir") == "runs/x");
    CHECK(kv.at("cohort.experiment") == "age");
  }

  SUBCASE("config file loads with defaults and overrides") {
    tmp.write("reg.csv", registry_text(10, 10));
    const auto p = tmp.write("run.ini",
                             "[run]\nseed = 7\ndataset_label = demo\n"
                             "[labels]\n1 = organ_a\n2 = organ_b\n"
                             "[cohort]\nexperiment = age\nregistry = reg.csv\n"
                             "age_under = 45\nage_over = 65\n");
    const RunConfig cfg = load_run_config(p);
    CHECK(cfg.seed == 7);
    CHECK(cfg.seed_set);
    CHECK(cfg.dataset_label == "demo");
    CHECK(cfg.experiment == ExperimentKind::age);
    CHECK(cfg.age_under == 45);
    CHECK(cfg.age_over == 65);
    CHECK(cfg.train_size == 10);  // default
    CHECK(cfg.labels.name(2) == "organ_b");
    // Relative registry path resolves against the config file directory.
    CHECK(fs::path(cfg.registry_path).is_absolute());
    CHECK(fs::exists(cfg.registry_path));
  }

  SUBCASE("unknown keys, missing seed, missing registry are errors") {
    tmp.write("reg.csv", registry_text(4, 4));
    CHECK_THROWS_AS(
        load_run_config(tmp.write("bad1.ini", "[run]\nseed = 1\nturbo = yes\n")),
        ConfigError);
    CHECK_THROWS_AS(
        load_run_config(tmp.write("bad2.ini", "[cohort]\nregistry = reg.csv\n")),
        ConfigError);
    CHECK_THROWS_AS(
        load_run_config(tmp.write("bad3.ini", "[run]\nseed = 1\n[cohort]\nregistry = gone.csv\n")),
        ConfigError);
    // Same file passes when existence checking is deferred.
    CHECK_NOTHROW(load_run_config((tmp.path / "bad3.ini").string(), false));
  }

  SUBCASE("percentile tag accepts only the implemented convention") {
    tmp.write("reg.csv", registry_text(4, 4));
    const auto good = tmp.write("p1.ini",
                                "[run]\nseed = 1\n[cohort]\nregistry = reg.csv\n"
                                "[metrics]\npercentile = ceil95\n");
    CHECK(load_run_config(good).percentile == "ceil95");
    const auto bad = tmp.write("p2.ini",
                               "[run]\nseed = 1\n[cohort]\nregistry = reg.csv\n"
                               "[metrics]\npercentile = linear\n");
    CHECK_THROWS_AS(load_run_config(bad), ConfigError);
  }
}
