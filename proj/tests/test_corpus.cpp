#include <filesystem>
#include <set>

#include "doctest.h"
#include "fieldsim/corpus.hpp"
#include "test_support.hpp"

using namespace fieldsim;
using namespace fieldsim::corpus;

namespace {

bool has_violation(const ValidationReport& report, const std::string& needle) {
  for (const auto& v : report.violations) {
    if (v.message.find(needle) != std::string::npos ||
        v.path.find(needle) != std::string::npos) {
      return true;
    }
  }
  return false;
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  write_text_file(path, content);
  return path;
}

// Deterministic generator for the round-trip property.
ExperimentRecord random_record(uint64_t& rng, int index) {
  ExperimentRecord record = testsupport::make_record("gen_" + std::to_string(index));
  record.year = 2015 + static_cast<int>(splitmix64_next(rng) % 10);
  record.corpus_tag =
      splitmix64_next(rng) % 2 == 0 ? CorpusTag::baseline : CorpusTag::post_cutoff;
  if (splitmix64_next(rng) % 2 == 0) {
    record.general_goal.reset();
  }
  if (splitmix64_next(rng) % 2 == 0) {
    record.theoretical_framework = "framework " + std::to_string(splitmix64_next(rng) % 100);
  }
  if (splitmix64_next(rng) % 2 == 0) {
    record.intervention_effects = "effects " + std::to_string(splitmix64_next(rng) % 100);
  }
  if (splitmix64_next(rng) % 2 == 0) {
    record.profile_dimensions = {{"gender", {"female", "male"}}};
    record.findings[0].contrast.profile_filter = {{"gender", "female"}};
  }
  const int extra_groups = static_cast<int>(splitmix64_next(rng) % 2);
  for (int g = 0; g < extra_groups; ++g) {
    record.treatments.push_back({"extra_" + std::to_string(g), "Extra " + std::to_string(g),
                                 "extra treatment " + std::to_string(g), false});
  }
  return record;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("well-formed record validates cleanly") {
  const auto record = testsupport::make_record();
  const auto report = validate_record(record);
  CHECK(report.valid());
  CHECK(report.violations.empty());
}

TEST_CASE("validate_record is pure") {
  const auto record = testsupport::make_record();
  const auto a = validate_record(record);
  const auto b = validate_record(record);
  CHECK(a.violations.size() == b.violations.size());
  CHECK(a.warnings.size() == b.warnings.size());
}

TEST_CASE("single group is a violation") {
  auto record = testsupport::make_record();
  record.treatments.resize(1);
  const auto report = validate_record(record);
  CHECK_FALSE(report.valid());
  CHECK(has_violation(report, "fewer than two groups"));
}

TEST_CASE("missing control group is a violation") {
  auto record = testsupport::make_record();
  record.treatments[0].is_control = false;
  CHECK(has_violation(validate_record(record), "is_control"));
}

TEST_CASE("duplicate group ids are a violation") {
  auto record = testsupport::make_record();
  record.treatments[1].group_id = "control";
  CHECK(has_violation(validate_record(record), "duplicate group_id"));
}

TEST_CASE("non-contiguous finding ordinals are a violation") {
  auto record = testsupport::make_record();
  record.findings[1].ordinal = 4;  // ordinals {1, 4}
  CHECK(has_violation(validate_record(record), "non-contiguous ordinals"));
}

TEST_CASE("duplicate finding ordinals are a violation") {
  auto record = testsupport::make_record();
  record.findings[1].ordinal = 1;
  CHECK(has_violation(validate_record(record), "duplicate ordinal"));
}

TEST_CASE("contrast must reference known groups") {
  auto record = testsupport::make_record();
  record.findings[0].contrast.treatment_group = "ghost";
  CHECK(has_violation(validate_record(record), "unknown group \"ghost\""));
}

TEST_CASE("contrast profile filter must reference known dimensions and values") {
  auto record = testsupport::make_record();
  record.profile_dimensions = {{"gender", {"female", "male"}}};
  record.findings[0].contrast.profile_filter = {{"age", "young"}};
  CHECK(has_violation(validate_record(record), "unknown profile dimension"));

  record.findings[0].contrast.profile_filter = {{"gender", "other"}};
  CHECK(has_violation(validate_record(record), "unknown value"));
}

TEST_CASE("profile dimension needs at least two unique values") {
  auto record = testsupport::make_record();
  record.profile_dimensions = {{"gender", {"female"}}};
  CHECK(has_violation(validate_record(record), "fewer than two values"));

  record.profile_dimensions = {{"gender", {"female", "female"}}};
  CHECK(has_violation(validate_record(record), "duplicate values"));
}

TEST_CASE("nondirectional verifiable finding is a violation") {
  auto record = testsupport::make_record();
  record.findings[0].direction = Direction::nondirectional;
  record.findings[0].verifiability = Verifiability::verifiable;
  CHECK(has_violation(validate_record(record), "requires_external_analysis"));

  record.findings[0].verifiability = Verifiability::requires_external_analysis;
  CHECK(validate_record(record).valid());
}

TEST_CASE("unknown question ids are violations; unused questions are warnings") {
  auto record = testsupport::make_record();
  record.findings[0].question_ids = {"q_missing"};
  CHECK(has_violation(validate_record(record), "unknown question_id"));

  record = testsupport::make_record();
  record.findings[1].question_ids.clear();  // q_open now unused
  const auto report = validate_record(record);
  CHECK(report.valid());
  REQUIRE(report.warnings.size() == 1);
  CHECK(report.warnings[0].message.find("q_open") != std::string::npos);
}

TEST_CASE("load_corpus returns records in file order") {
  std::vector<ExperimentRecord> records;
  for (int i = 0; i < 15; ++i) {
    records.push_back(testsupport::make_record("paper_" + std::to_string(i)));
  }
  const auto path = temp_file("corpus15.json", serialize_corpus(records));
  const auto loaded = load_corpus(path);
  REQUIRE(loaded.size() == 15);
  for (size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].paper_id == "paper_" + std::to_string(i));
    CHECK(loaded[i].corpus_tag == CorpusTag::baseline);
  }
}

TEST_CASE("empty records list loads as empty corpus") {
  const auto path = temp_file("corpus_empty.json", "{\"records\": []}\n");
  CHECK(load_corpus(path).empty());
}

TEST_CASE("missing required field names the field") {
  auto doc = corpus_to_json({testsupport::make_record()});
  doc["records"][0].erase("dependent_variables");
  const auto path = temp_file("corpus_missing.json", doc.dump());
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("dependent_variables"), CorpusError);
}

TEST_CASE("unknown extra fields are rejected, not ignored") {
  auto doc = corpus_to_json({testsupport::make_record()});
  doc["records"][0]["surprise"] = 1;
  const auto path = temp_file("corpus_extra.json", doc.dump());
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("surprise"), CorpusError);
}

TEST_CASE("invalid corpus_tag is rejected") {
  auto doc = corpus_to_json({testsupport::make_record()});
  doc["records"][0]["corpus_tag"] = "mystery";
  const auto path = temp_file("corpus_tag.json", doc.dump());
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("corpus_tag"), CorpusError);
}

TEST_CASE("duplicate paper ids are rejected") {
  const auto a = testsupport::make_record("dup");
  const auto path = temp_file("corpus_dup.json", serialize_corpus({a, a}));
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("duplicate paper_id"), CorpusError);
}

TEST_CASE("malformed JSON reports the byte position") {
  const auto path = temp_file("corpus_bad.json", "{\"records\": [ {]");
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("byte"), CorpusError);
}

TEST_CASE("validation failure at load names the paper and invariant") {
  auto record = testsupport::make_record("bad_one");
  record.findings[1].ordinal = 7;
  const auto path = temp_file("corpus_invalid.json", serialize_corpus({record}));
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("bad_one"), CorpusError);
}

TEST_CASE("load after serialize is the identity on valid records") {
  uint64_t rng = 0x5eedu;
  for (int i = 0; i < 40; ++i) {
    const auto record = random_record(rng, i);
    REQUIRE(validate_record(record).valid());
    const auto path = temp_file("corpus_roundtrip.json", serialize_corpus({record}));
    const auto loaded = load_corpus(path);
    REQUIRE(loaded.size() == 1);
    CHECK(record_to_json(loaded[0]) == record_to_json(record));
  }
}

TEST_CASE("shipped sample corpus is valid") {
  const auto records = load_corpus(testsupport::repo_dir() / "data" / "sample_corpus.json");
  REQUIRE(records.size() == 5);
  int baseline = 0;
  for (const auto& record : records) {
    if (record.corpus_tag == CorpusTag::baseline) {
      ++baseline;
    }
  }
  CHECK(baseline == 3);
}

}  // TEST_SUITE
