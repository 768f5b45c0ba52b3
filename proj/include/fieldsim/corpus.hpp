#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fieldsim/answers.hpp"
#include "fieldsim/util.hpp"
#include "json.hpp"

namespace fieldsim::corpus {

struct CorpusError : Error {
  using Error::Error;
};

enum class CorpusTag { baseline, post_cutoff };
enum class Direction { positive, negative, none, nondirectional };
enum class Verifiability { verifiable, requires_external_analysis };

std::string to_string(CorpusTag tag);
std::string to_string(Direction direction);
std::string to_string(Verifiability verifiability);

struct GroupSpec {
  std::string group_id;
  std::string label;
  std::string treatment_text;  // what this group receives
  bool is_control = false;
};

struct ProfileDimension {
  std::string name;
  std::vector<std::string> values;  // >= 2, unique
};

// The (treatment group, control group) pair a finding's effect compares,
// optionally restricted to one profile cell.
struct Contrast {
  std::string treatment_group;
  std::string control_group;
  std::map<std::string, std::string> profile_filter;  // dimension -> value
};

struct Finding {
  int ordinal = 0;
  std::string statement;
  std::string treatment_entity;
  std::string outcome_entity;
  Direction direction = Direction::positive;
  Verifiability verifiability = Verifiability::verifiable;
  Contrast contrast;
  std::vector<std::string> question_ids;  // participant questions scoring this finding
};

struct ParticipantQuestion {
  std::string question_id;
  std::string text;
  answers::ResponseSchema schema;
};

// One paper's extracted experimental settings; the unit of simulation.
struct ExperimentRecord {
  std::string paper_id;
  std::string title;
  std::string venue;
  int year = 0;
  CorpusTag corpus_tag = CorpusTag::baseline;
  std::optional<std::string> general_goal;
  std::vector<GroupSpec> treatments;  // >= 2
  std::vector<std::string> dependent_variables;
  std::optional<std::string> theoretical_framework;
  std::string duration;
  std::optional<std::string> intervention_effects;  // never rendered into prompts
  std::string population;
  std::string workflow_details;  // third-person description
  std::vector<ProfileDimension> profile_dimensions;
  std::vector<ParticipantQuestion> participant_questions;
  std::vector<Finding> findings;  // >= 1

  const GroupSpec* find_group(const std::string& group_id) const;
  const ParticipantQuestion* find_question(const std::string& question_id) const;
};

struct Violation {
  std::string paper_id;
  std::string path;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::vector<Violation> warnings;  // e.g. unused participant questions

  bool valid() const { return violations.empty(); }
};

// Pure; enumerates every violated invariant. Violations are data, not errors.
ValidationReport validate_record(const ExperimentRecord& record);

// Loads, schema-checks and validates a corpus document. Throws CorpusError
// on I/O failure, malformed JSON (position-annotated), schema violations
// (field named) or validation failures (paper_id + violated invariant).
// Record order is preserved.
std::vector<ExperimentRecord> load_corpus(const std::filesystem::path& path);

// Decode-only stage of load_corpus: enforces the document schema and
// paper_id uniqueness but leaves invariant validation to the caller (the
// validate subcommand lists all violations instead of failing on the first).
std::vector<ExperimentRecord> parse_corpus_json(const std::string& text,
                                                const std::string& origin);

nlohmann::json record_to_json(const ExperimentRecord& record);
nlohmann::json corpus_to_json(const std::vector<ExperimentRecord>& records);
std::string serialize_corpus(const std::vector<ExperimentRecord>& records);

}  // namespace fieldsim::corpus
