#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fieldsim/util.hpp"
#include "json.hpp"

namespace fieldsim::answers {

enum class SchemaKind { binary, numeric, ordinal };

std::string to_string(SchemaKind kind);
SchemaKind schema_kind_from_string(std::string_view s);

// Shape of one participant answer. format_demand is appended to the question
// text; when empty a per-kind default is generated at render time.
struct ResponseSchema {
  SchemaKind kind = SchemaKind::binary;
  // binary
  std::string positive_token;  // -> 1
  std::string negative_token;  // -> 0
  // numeric: closed range, min < max
  double min = 0.0;
  double max = 0.0;
  // ordinal: ordered labels mapped to integer codes (same length)
  std::vector<std::string> labels;
  std::vector<int> codes;
  std::string format_demand;

  // The demand actually rendered: format_demand if set, else a default
  // derived from the schema.
  std::string effective_format_demand() const;
};

nlohmann::json schema_to_json(const ResponseSchema& schema);
// Throws fieldsim::Error on malformed input; `where` prefixes messages.
ResponseSchema schema_from_json(const nlohmann::json& j, const std::string& where);

struct OutcomeValue {
  double value = 0.0;
  SchemaKind source_kind = SchemaKind::binary;
};

// Case-folds, collapses whitespace, then strips surrounding quote pairs and
// trailing periods to a fixpoint. Idempotent for every input.
std::string normalize(std::string_view text);

// Normalized edit similarity in [0,1]: 1 - lev(a,b)/max(|a|,|b|).
double edit_similarity(std::string_view a, std::string_view b);

// One answered label found in a response: "Question No.<n>: <segment>".
struct NumberedAnswer {
  int number = 0;
  std::string segment;
};

// Extracts every "Question No.<n>:" labelled answer in appearance order.
// The segment runs to the end of the line or the next label.
std::vector<NumberedAnswer> split_numbered_answers(std::string_view text);

struct ParseIssue {
  int ordinal = 0;
  std::string code;  // missing | unresolved | ambiguous | duplicate_conflict
  std::string detail;
};

// Presented options for one observer question, keyed by ordinal.
struct QuestionOptions {
  int ordinal = 0;
  std::vector<std::string> options;  // exactly 3
};

struct ObserverParse {
  std::map<int, std::string> answers;  // ordinal -> presented option text
  std::vector<ParseIssue> issues;

  bool complete() const { return issues.empty(); }
};

// Resolves each answered ordinal against its question's presented options in
// three stages: exact match, normalized match, then edit similarity >= 0.90
// with a unique best candidate. The similarity stage is disabled for a
// question whose own options are within 0.90 of each other. Ordinals missing
// from the text, unresolved answers, and conflicting duplicates are reported
// as issues.
ObserverParse parse_observer_response(std::string_view text,
                                      const std::vector<QuestionOptions>& questions);

inline constexpr double kSimilarityThreshold = 0.90;

struct DecodeResult {
  std::optional<OutcomeValue> value;
  std::string code;  // ok empty; else no_match | ambiguous | out_of_range
  std::string message;

  bool ok() const { return value.has_value(); }
};

// binary: exactly one of the two tokens present (word-boundary match on the
// normalized text) decides; both present is ambiguous. numeric: first number
// in the text, range-checked. ordinal: unique label match after
// normalization, longer labels shadowing their substrings.
DecodeResult decode_participant_response(std::string_view text, const ResponseSchema& schema);

}  // namespace fieldsim::answers
