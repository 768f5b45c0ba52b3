#include "fieldsim/corpus.hpp"

#include <algorithm>
#include <set>

namespace fieldsim::corpus {

namespace {

using nlohmann::json;

std::string tag_name(CorpusTag tag) {
  return tag == CorpusTag::baseline ? "baseline" : "post_cutoff";
}

CorpusTag tag_from_string(const std::string& s, const std::string& where) {
  if (s == "baseline") return CorpusTag::baseline;
  if (s == "post_cutoff") return CorpusTag::post_cutoff;
  throw CorpusError(where + ": corpus_tag must be \"baseline\" or \"post_cutoff\", got \"" + s +
                    "\"");
}

Direction direction_from_string(const std::string& s, const std::string& where) {
  if (s == "positive") return Direction::positive;
  if (s == "negative") return Direction::negative;
  if (s == "none") return Direction::none;
  if (s == "nondirectional") return Direction::nondirectional;
  throw CorpusError(where + ": unknown direction \"" + s + "\"");
}

Verifiability verifiability_from_string(const std::string& s, const std::string& where) {
  if (s == "verifiable") return Verifiability::verifiable;
  if (s == "requires_external_analysis") return Verifiability::requires_external_analysis;
  throw CorpusError(where + ": unknown verifiability \"" + s + "\"");
}

void reject_unknown_fields(const json& j, const std::vector<std::string>& allowed,
                           const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw CorpusError(where + ": unknown field \"" + it.key() + "\"");
    }
  }
}

std::string require_string(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw CorpusError(where + ": \"" + key + "\" is required and must be a string");
  }
  return j[key].get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* key,
                                           const std::string& where) {
  if (!j.contains(key) || j[key].is_null()) {
    return std::nullopt;
  }
  if (!j[key].is_string()) {
    throw CorpusError(where + ": \"" + key + "\" must be a string when present");
  }
  return j[key].get<std::string>();
}

GroupSpec group_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) {
    throw CorpusError(where + ": group must be an object");
  }
  reject_unknown_fields(j, {"group_id", "label", "treatment_text", "is_control"}, where);
  GroupSpec group;
  group.group_id = require_string(j, "group_id", where);
  group.label = require_string(j, "label", where);
  group.treatment_text = require_string(j, "treatment_text", where);
  if (!j.contains("is_control") || !j["is_control"].is_boolean()) {
    throw CorpusError(where + ": \"is_control\" is required and must be a boolean");
  }
  group.is_control = j["is_control"].get<bool>();
  return group;
}

ProfileDimension dimension_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) {
    throw CorpusError(where + ": profile dimension must be an object");
  }
  reject_unknown_fields(j, {"name", "values"}, where);
  ProfileDimension dim;
  dim.name = require_string(j, "name", where);
  if (!j.contains("values") || !j["values"].is_array()) {
    throw CorpusError(where + ": \"values\" is required and must be an array");
  }
  for (const auto& v : j["values"]) {
    if (!v.is_string() || v.get<std::string>().empty()) {
      throw CorpusError(where + ": profile values must be non-empty strings");
    }
    dim.values.push_back(v.get<std::string>());
  }
  return dim;
}

Contrast contrast_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) {
    throw CorpusError(where + ": \"contrast\" must be an object");
  }
  reject_unknown_fields(j, {"treatment_group", "control_group", "profile_filter"}, where);
  Contrast contrast;
  contrast.treatment_group = require_string(j, "treatment_group", where);
  contrast.control_group = require_string(j, "control_group", where);
  if (j.contains("profile_filter") && !j["profile_filter"].is_null()) {
    if (!j["profile_filter"].is_object()) {
      throw CorpusError(where + ": \"profile_filter\" must be an object or null");
    }
    for (auto it = j["profile_filter"].begin(); it != j["profile_filter"].end(); ++it) {
      if (!it.value().is_string()) {
        throw CorpusError(where + ": profile_filter values must be strings");
      }
      contrast.profile_filter[it.key()] = it.value().get<std::string>();
    }
  }
  return contrast;
}

Finding finding_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) {
    throw CorpusError(where + ": finding must be an object");
  }
  reject_unknown_fields(j,
                        {"ordinal", "statement", "treatment_entity", "outcome_entity", "direction",
                         "verifiability", "contrast", "question_ids"},
                        where);
  Finding finding;
  if (!j.contains("ordinal") || !j["ordinal"].is_number_integer()) {
    throw CorpusError(where + ": \"ordinal\" is required and must be an integer");
  }
  finding.ordinal = j["ordinal"].get<int>();
  finding.statement = require_string(j, "statement", where);
  finding.treatment_entity = require_string(j, "treatment_entity", where);
  finding.outcome_entity = require_string(j, "outcome_entity", where);
  finding.direction = direction_from_string(require_string(j, "direction", where), where);
  finding.verifiability =
      verifiability_from_string(require_string(j, "verifiability", where), where);
  if (!j.contains("contrast")) {
    throw CorpusError(where + ": \"contrast\" is required");
  }
  finding.contrast = contrast_from_json(j["contrast"], where + ".contrast");
  if (j.contains("question_ids")) {
    if (!j["question_ids"].is_array()) {
      throw CorpusError(where + ": \"question_ids\" must be an array");
    }
    for (const auto& q : j["question_ids"]) {
      if (!q.is_string()) {
        throw CorpusError(where + ": question_ids entries must be strings");
      }
      finding.question_ids.push_back(q.get<std::string>());
    }
  }
  return finding;
}

ParticipantQuestion question_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) {
    throw CorpusError(where + ": participant question must be an object");
  }
  reject_unknown_fields(j, {"question_id", "text", "schema"}, where);
  ParticipantQuestion question;
  question.question_id = require_string(j, "question_id", where);
  question.text = require_string(j, "text", where);
  if (!j.contains("schema")) {
    throw CorpusError(where + ": \"schema\" is required");
  }
  try {
    question.schema = answers::schema_from_json(j["schema"], where + ".schema");
  } catch (const Error& e) {
    throw CorpusError(e.what());
  }
  return question;
}

ExperimentRecord record_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) {
    throw CorpusError(where + ": record must be an object");
  }
  reject_unknown_fields(
      j, {"paper_id", "title", "venue", "year", "corpus_tag", "general_goal", "treatments",
          "dependent_variables", "theoretical_framework", "duration", "intervention_effects",
          "population", "workflow_details", "profile_dimensions", "participant_questions",
          "findings"},
      where);

  ExperimentRecord record;
  record.paper_id = require_string(j, "paper_id", where);
  const std::string at = where + " (paper_id \"" + record.paper_id + "\")";
  record.title = require_string(j, "title", at);
  record.venue = require_string(j, "venue", at);
  if (!j.contains("year") || !j["year"].is_number_integer()) {
    throw CorpusError(at + ": \"year\" is required and must be an integer");
  }
  record.year = j["year"].get<int>();
  record.corpus_tag = tag_from_string(require_string(j, "corpus_tag", at), at);
  record.general_goal = optional_string(j, "general_goal", at);

  if (!j.contains("treatments") || !j["treatments"].is_array()) {
    throw CorpusError(at + ": \"treatments\" is required and must be an array");
  }
  for (size_t i = 0; i < j["treatments"].size(); ++i) {
    record.treatments.push_back(
        group_from_json(j["treatments"][i], at + ".treatments[" + std::to_string(i) + "]"));
  }

  if (!j.contains("dependent_variables") || !j["dependent_variables"].is_array()) {
    throw CorpusError(at + ": \"dependent_variables\" is required and must be an array");
  }
  for (const auto& dv : j["dependent_variables"]) {
    if (!dv.is_string()) {
      throw CorpusError(at + ": dependent_variables entries must be strings");
    }
    record.dependent_variables.push_back(dv.get<std::string>());
  }

  record.theoretical_framework = optional_string(j, "theoretical_framework", at);
  record.duration = require_string(j, "duration", at);
  record.intervention_effects = optional_string(j, "intervention_effects", at);
  record.population = require_string(j, "population", at);
  record.workflow_details = require_string(j, "workflow_details", at);

  if (j.contains("profile_dimensions")) {
    if (!j["profile_dimensions"].is_array()) {
      throw CorpusError(at + ": \"profile_dimensions\" must be an array");
    }
    for (size_t i = 0; i < j["profile_dimensions"].size(); ++i) {
      record.profile_dimensions.push_back(dimension_from_json(
          j["profile_dimensions"][i], at + ".profile_dimensions[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("participant_questions")) {
    if (!j["participant_questions"].is_array()) {
      throw CorpusError(at + ": \"participant_questions\" must be an array");
    }
    for (size_t i = 0; i < j["participant_questions"].size(); ++i) {
      record.participant_questions.push_back(question_from_json(
          j["participant_questions"][i], at + ".participant_questions[" + std::to_string(i) + "]"));
    }
  }

  if (!j.contains("findings") || !j["findings"].is_array()) {
    throw CorpusError(at + ": \"findings\" is required and must be an array");
  }
  for (size_t i = 0; i < j["findings"].size(); ++i) {
    record.findings.push_back(
        finding_from_json(j["findings"][i], at + ".findings[" + std::to_string(i) + "]"));
  }
  return record;
}

}  // namespace

std::string to_string(CorpusTag tag) {
  return tag_name(tag);
}

std::string to_string(Direction direction) {
  switch (direction) {
    case Direction::positive:
      return "positive";
    case Direction::negative:
      return "negative";
    case Direction::none:
      return "none";
    case Direction::nondirectional:
      return "nondirectional";
  }
  return "positive";
}

std::string to_string(Verifiability verifiability) {
  return verifiability == Verifiability::verifiable ? "verifiable" : "requires_external_analysis";
}

const GroupSpec* ExperimentRecord::find_group(const std::string& group_id) const {
  for (const auto& group : treatments) {
    if (group.group_id == group_id) {
      return &group;
    }
  }
  return nullptr;
}

const ParticipantQuestion* ExperimentRecord::find_question(const std::string& question_id) const {
  for (const auto& question : participant_questions) {
    if (question.question_id == question_id) {
      return &question;
    }
  }
  return nullptr;
}

ValidationReport validate_record(const ExperimentRecord& record) {
  ValidationReport report;
  auto violation = [&](std::string path, std::string message) {
    report.violations.push_back({record.paper_id, std::move(path), std::move(message)});
  };

  if (record.paper_id.empty()) {
    violation("paper_id", "must be non-empty");
  }
  if (record.treatments.size() < 2) {
    violation("treatments", "fewer than two groups");
  }
  bool has_control = false;
  std::set<std::string> group_ids;
  for (size_t i = 0; i < record.treatments.size(); ++i) {
    const auto& group = record.treatments[i];
    if (group.is_control) {
      has_control = true;
    }
    if (!group_ids.insert(group.group_id).second) {
      violation("treatments[" + std::to_string(i) + "].group_id",
                "duplicate group_id \"" + group.group_id + "\"");
    }
  }
  if (!record.treatments.empty() && !has_control) {
    violation("treatments", "no group with is_control = true");
  }
  if (record.dependent_variables.empty()) {
    violation("dependent_variables", "must have at least one entry");
  }

  std::set<std::string> dimension_names;
  for (size_t i = 0; i < record.profile_dimensions.size(); ++i) {
    const auto& dim = record.profile_dimensions[i];
    const std::string path = "profile_dimensions[" + std::to_string(i) + "]";
    if (!dimension_names.insert(dim.name).second) {
      violation(path, "duplicate profile dimension \"" + dim.name + "\"");
    }
    if (dim.values.size() < 2) {
      violation(path + ".values", "fewer than two values");
    }
    std::set<std::string> values(dim.values.begin(), dim.values.end());
    if (values.size() != dim.values.size()) {
      violation(path + ".values", "duplicate values");
    }
  }

  std::set<std::string> question_ids;
  for (size_t i = 0; i < record.participant_questions.size(); ++i) {
    const auto& question = record.participant_questions[i];
    if (!question_ids.insert(question.question_id).second) {
      violation("participant_questions[" + std::to_string(i) + "]",
                "duplicate question_id \"" + question.question_id + "\"");
    }
  }

  if (record.findings.empty()) {
    violation("findings", "must have at least one entry");
  }
  std::set<int> ordinals;
  std::set<std::string> referenced_questions;
  for (size_t i = 0; i < record.findings.size(); ++i) {
    const auto& finding = record.findings[i];
    const std::string path = "findings[" + std::to_string(i) + "]";
    if (finding.ordinal <= 0) {
      violation(path + ".ordinal", "must be a positive integer");
    } else if (!ordinals.insert(finding.ordinal).second) {
      violation(path + ".ordinal", "duplicate ordinal " + std::to_string(finding.ordinal));
    }
    if (finding.statement.empty()) {
      violation(path + ".statement", "must be non-empty");
    }
    if (record.find_group(finding.contrast.treatment_group) == nullptr) {
      violation(path + ".contrast.treatment_group",
                "unknown group \"" + finding.contrast.treatment_group + "\"");
    }
    if (record.find_group(finding.contrast.control_group) == nullptr) {
      violation(path + ".contrast.control_group",
                "unknown group \"" + finding.contrast.control_group + "\"");
    }
    for (const auto& [dim, value] : finding.contrast.profile_filter) {
      const auto it =
          std::find_if(record.profile_dimensions.begin(), record.profile_dimensions.end(),
                       [&](const ProfileDimension& d) { return d.name == dim; });
      if (it == record.profile_dimensions.end()) {
        violation(path + ".contrast.profile_filter", "unknown profile dimension \"" + dim + "\"");
      } else if (std::find(it->values.begin(), it->values.end(), value) == it->values.end()) {
        violation(path + ".contrast.profile_filter",
                  "unknown value \"" + value + "\" for dimension \"" + dim + "\"");
      }
    }
    for (const auto& qid : finding.question_ids) {
      referenced_questions.insert(qid);
      if (record.find_question(qid) == nullptr) {
        violation(path + ".question_ids", "unknown question_id \"" + qid + "\"");
      }
    }
    // Nondirectional findings cannot be confirmed or rejected by an ATE sign,
    // so they must be annotated as requiring external analysis (observer-only).
    if (finding.direction == Direction::nondirectional &&
        finding.verifiability == Verifiability::verifiable) {
      violation(path + ".direction",
                "nondirectional finding must have verifiability = requires_external_analysis");
    }
  }

  // Contiguity 1..N (only meaningful when ordinals are unique and positive).
  if (!record.findings.empty() && ordinals.size() == record.findings.size()) {
    const int n = static_cast<int>(record.findings.size());
    bool contiguous = true;
    for (int expected = 1; expected <= n; ++expected) {
      if (ordinals.count(expected) == 0) {
        contiguous = false;
        break;
      }
    }
    if (!contiguous) {
      violation("findings", "non-contiguous ordinals (expected 1..=" + std::to_string(n) + ")");
    }
  }

  for (const auto& question : record.participant_questions) {
    if (referenced_questions.count(question.question_id) == 0) {
      report.warnings.push_back({record.paper_id, "participant_questions",
                                 "question \"" + question.question_id +
                                     "\" is not referenced by any finding (unused)"});
    }
  }
  return report;
}

std::vector<ExperimentRecord> parse_corpus_json(const std::string& text,
                                                const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CorpusError(origin + ": malformed JSON at byte " + std::to_string(e.byte) + ": " +
                      e.what());
  }
  if (!doc.is_object()) {
    throw CorpusError(origin + ": top level must be an object");
  }
  reject_unknown_fields(doc, {"records"}, origin);
  if (!doc.contains("records") || !doc["records"].is_array()) {
    throw CorpusError(origin + ": \"records\" array is required");
  }

  std::vector<ExperimentRecord> records;
  std::set<std::string> seen_ids;
  for (size_t i = 0; i < doc["records"].size(); ++i) {
    ExperimentRecord record =
        record_from_json(doc["records"][i], origin + ": records[" + std::to_string(i) + "]");
    if (!seen_ids.insert(record.paper_id).second) {
      throw CorpusError(origin + ": duplicate paper_id \"" + record.paper_id + "\"");
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<ExperimentRecord> load_corpus(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    throw CorpusError(e.what());
  }
  std::vector<ExperimentRecord> records = parse_corpus_json(text, path.string());
  for (const auto& record : records) {
    const ValidationReport report = validate_record(record);
    if (!report.valid()) {
      std::string detail;
      for (const auto& v : report.violations) {
        detail += "\n  " + v.path + ": " + v.message;
      }
      throw CorpusError(path.string() + ": record \"" + record.paper_id +
                        "\" failed validation:" + detail);
    }
  }
  return records;
}

nlohmann::json record_to_json(const ExperimentRecord& record) {
  json j;
  j["paper_id"] = record.paper_id;
  j["title"] = record.title;
  j["venue"] = record.venue;
  j["year"] = record.year;
  j["corpus_tag"] = tag_name(record.corpus_tag);
  if (record.general_goal) {
    j["general_goal"] = *record.general_goal;
  }
  j["treatments"] = json::array();
  for (const auto& group : record.treatments) {
    j["treatments"].push_back({{"group_id", group.group_id},
                               {"label", group.label},
                               {"treatment_text", group.treatment_text},
                               {"is_control", group.is_control}});
  }
  j["dependent_variables"] = record.dependent_variables;
  if (record.theoretical_framework) {
    j["theoretical_framework"] = *record.theoretical_framework;
  }
  j["duration"] = record.duration;
  if (record.intervention_effects) {
    j["intervention_effects"] = *record.intervention_effects;
  }
  j["population"] = record.population;
  j["workflow_details"] = record.workflow_details;
  if (!record.profile_dimensions.empty()) {
    j["profile_dimensions"] = json::array();
    for (const auto& dim : record.profile_dimensions) {
      j["profile_dimensions"].push_back({{"name", dim.name}, {"values", dim.values}});
    }
  }
  if (!record.participant_questions.empty()) {
    j["participant_questions"] = json::array();
    for (const auto& question : record.participant_questions) {
      j["participant_questions"].push_back({{"question_id", question.question_id},
                                            {"text", question.text},
                                            {"schema", answers::schema_to_json(question.schema)}});
    }
  }
  j["findings"] = json::array();
  for (const auto& finding : record.findings) {
    json contrast = {{"treatment_group", finding.contrast.treatment_group},
                     {"control_group", finding.contrast.control_group}};
    if (finding.contrast.profile_filter.empty()) {
      contrast["profile_filter"] = nullptr;
    } else {
      contrast["profile_filter"] = finding.contrast.profile_filter;
    }
    j["findings"].push_back({{"ordinal", finding.ordinal},
                             {"statement", finding.statement},
                             {"treatment_entity", finding.treatment_entity},
                             {"outcome_entity", finding.outcome_entity},
                             {"direction", to_string(finding.direction)},
                             {"verifiability", to_string(finding.verifiability)},
                             {"contrast", contrast},
                             {"question_ids", finding.question_ids}});
  }
  return j;
}

nlohmann::json corpus_to_json(const std::vector<ExperimentRecord>& records) {
  json j;
  j["records"] = json::array();
  for (const auto& record : records) {
    j["records"].push_back(record_to_json(record));
  }
  return j;
}

std::string serialize_corpus(const std::vector<ExperimentRecord>& records) {
  return corpus_to_json(records).dump(2) + "\n";
}

}  // namespace fieldsim::corpus
