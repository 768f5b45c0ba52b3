#include "fieldsim/answers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace fieldsim::answers {

namespace {

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// Finds `token` in `text` with non-alphanumeric characters (or the text
// bounds) on both sides. Returns npos when absent.
size_t find_word(std::string_view text, std::string_view token, size_t from = 0) {
  if (token.empty()) {
    return std::string_view::npos;
  }
  size_t pos = text.find(token, from);
  while (pos != std::string_view::npos) {
    const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
    const size_t end = pos + token.size();
    const bool right_ok = end >= text.size() || !is_word_char(text[end]);
    if (left_ok && right_ok) {
      return pos;
    }
    pos = text.find(token, pos + 1);
  }
  return std::string_view::npos;
}

struct QuotePair {
  std::string_view open;
  std::string_view close;
};

constexpr QuotePair kQuotePairs[] = {
    {"\"", "\""}, {"'", "'"}, {"`", "`"},
    {"\xe2\x80\x9c", "\xe2\x80\x9d"},  // curly double quotes
    {"\xe2\x80\x98", "\xe2\x80\x99"},  // curly single quotes
};

bool strip_surrounding_quotes(std::string& s) {
  for (const auto& pair : kQuotePairs) {
    if (s.size() > pair.open.size() + pair.close.size() &&
        s.compare(0, pair.open.size(), pair.open) == 0 &&
        s.compare(s.size() - pair.close.size(), pair.close.size(), pair.close) == 0) {
      s = s.substr(pair.open.size(), s.size() - pair.open.size() - pair.close.size());
      return true;
    }
  }
  return false;
}

std::string format_number(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

}  // namespace

std::string to_string(SchemaKind kind) {
  switch (kind) {
    case SchemaKind::binary:
      return "binary";
    case SchemaKind::numeric:
      return "numeric";
    case SchemaKind::ordinal:
      return "ordinal";
  }
  return "binary";
}

SchemaKind schema_kind_from_string(std::string_view s) {
  if (s == "binary") return SchemaKind::binary;
  if (s == "numeric") return SchemaKind::numeric;
  if (s == "ordinal") return SchemaKind::ordinal;
  throw Error("unknown response schema kind: " + std::string(s));
}

std::string ResponseSchema::effective_format_demand() const {
  if (!format_demand.empty()) {
    return format_demand;
  }
  switch (kind) {
    case SchemaKind::binary:
      return "Please answer with exactly one word, \"" + positive_token + "\" or \"" +
             negative_token + "\", without explanations.";
    case SchemaKind::numeric:
      return "Please answer with a single number between " + format_number(min) + " and " +
             format_number(max) + ", without explanations.";
    case SchemaKind::ordinal: {
      std::string joined;
      for (size_t i = 0; i < labels.size(); ++i) {
        if (i > 0) joined += ", ";
        joined += "\"" + labels[i] + "\"";
      }
      return "Please answer with exactly one of the following labels: " + joined +
             ", without explanations.";
    }
  }
  return "";
}

nlohmann::json schema_to_json(const ResponseSchema& schema) {
  nlohmann::json j;
  j["kind"] = to_string(schema.kind);
  switch (schema.kind) {
    case SchemaKind::binary:
      j["positive_token"] = schema.positive_token;
      j["negative_token"] = schema.negative_token;
      break;
    case SchemaKind::numeric:
      j["min"] = schema.min;
      j["max"] = schema.max;
      break;
    case SchemaKind::ordinal:
      j["labels"] = schema.labels;
      j["codes"] = schema.codes;
      break;
  }
  if (!schema.format_demand.empty()) {
    j["format_demand"] = schema.format_demand;
  }
  return j;
}

ResponseSchema schema_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) {
    throw Error(where + ": schema must be an object");
  }
  ResponseSchema schema;
  if (!j.contains("kind") || !j["kind"].is_string()) {
    throw Error(where + ": schema.kind is required");
  }
  schema.kind = schema_kind_from_string(j["kind"].get<std::string>());

  auto require_string = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
      throw Error(where + ": schema." + key + " must be a non-empty string");
    }
    return j[key].get<std::string>();
  };

  std::vector<std::string> allowed = {"kind", "format_demand"};
  switch (schema.kind) {
    case SchemaKind::binary:
      schema.positive_token = require_string("positive_token");
      schema.negative_token = require_string("negative_token");
      if (normalize(schema.positive_token) == normalize(schema.negative_token)) {
        throw Error(where + ": binary tokens must differ");
      }
      allowed.insert(allowed.end(), {"positive_token", "negative_token"});
      break;
    case SchemaKind::numeric:
      if (!j.contains("min") || !j.contains("max") || !j["min"].is_number() ||
          !j["max"].is_number()) {
        throw Error(where + ": numeric schema requires numbers min and max");
      }
      schema.min = j["min"].get<double>();
      schema.max = j["max"].get<double>();
      if (!(schema.min < schema.max)) {
        throw Error(where + ": numeric range is degenerate (min must be < max)");
      }
      allowed.insert(allowed.end(), {"min", "max"});
      break;
    case SchemaKind::ordinal: {
      if (!j.contains("labels") || !j["labels"].is_array() || j["labels"].size() < 2) {
        throw Error(where + ": ordinal schema requires at least two labels");
      }
      for (const auto& label : j["labels"]) {
        if (!label.is_string() || label.get<std::string>().empty()) {
          throw Error(where + ": ordinal labels must be non-empty strings");
        }
        schema.labels.push_back(label.get<std::string>());
      }
      for (size_t a = 0; a < schema.labels.size(); ++a) {
        for (size_t b = a + 1; b < schema.labels.size(); ++b) {
          if (normalize(schema.labels[a]) == normalize(schema.labels[b])) {
            throw Error(where + ": ordinal labels must be unique");
          }
        }
      }
      if (j.contains("codes")) {
        if (!j["codes"].is_array() || j["codes"].size() != schema.labels.size()) {
          throw Error(where + ": codes must match labels in length");
        }
        for (const auto& code : j["codes"]) {
          if (!code.is_number_integer()) {
            throw Error(where + ": codes must be integers");
          }
          schema.codes.push_back(code.get<int>());
        }
      } else {
        for (size_t i = 0; i < schema.labels.size(); ++i) {
          schema.codes.push_back(static_cast<int>(i));
        }
      }
      allowed.insert(allowed.end(), {"labels", "codes"});
      break;
    }
  }
  if (j.contains("format_demand")) {
    if (!j["format_demand"].is_string()) {
      throw Error(where + ": format_demand must be a string");
    }
    schema.format_demand = j["format_demand"].get<std::string>();
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw Error(where + ": unknown schema field \"" + it.key() + "\"");
    }
  }
  return schema;
}

std::string normalize(std::string_view text) {
  std::string s = collapse_whitespace(to_lower(std::string(text)));
  for (;;) {
    if (strip_surrounding_quotes(s)) {
      s = trim(s);
      continue;
    }
    if (!s.empty() && s.back() == '.') {
      s.pop_back();
      s = trim(s);
      continue;
    }
    break;
  }
  return s;
}

double edit_similarity(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) {
    return 1.0;
  }
  const size_t n = a.size();
  const size_t m = b.size();
  std::vector<size_t> prev(m + 1);
  std::vector<size_t> cur(m + 1);
  for (size_t j = 0; j <= m; ++j) {
    prev[j] = j;
  }
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= m; ++j) {
      const size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  const double dist = static_cast<double>(prev[m]);
  return 1.0 - dist / static_cast<double>(std::max(n, m));
}

std::vector<NumberedAnswer> split_numbered_answers(std::string_view text) {
  struct Label {
    size_t start = 0;  // of the label itself
    size_t body = 0;   // first char after the colon
    int number = 0;
  };
  std::vector<Label> found;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t q = ifind(text, "question", pos);
    if (q == std::string_view::npos) {
      break;
    }
    size_t p = q + 8;
    while (p < text.size() && (text[p] == ' ' || text[p] == '\t')) ++p;
    if (!istarts_with(text.substr(p), "no")) {
      pos = q + 1;
      continue;
    }
    p += 2;
    if (p < text.size() && text[p] == '.') ++p;
    while (p < text.size() && (text[p] == ' ' || text[p] == '\t')) ++p;
    size_t digits_begin = p;
    while (p < text.size() && std::isdigit(static_cast<unsigned char>(text[p]))) ++p;
    if (p == digits_begin) {
      pos = q + 1;
      continue;
    }
    int number = 0;
    for (size_t i = digits_begin; i < p; ++i) {
      number = number * 10 + (text[i] - '0');
    }
    while (p < text.size() && (text[p] == ' ' || text[p] == '\t')) ++p;
    if (p >= text.size() || text[p] != ':') {
      pos = q + 1;
      continue;
    }
    ++p;
    found.push_back({q, p, number});
    pos = p;
  }

  std::vector<NumberedAnswer> out;
  for (size_t i = 0; i < found.size(); ++i) {
    size_t end = text.size();
    if (i + 1 < found.size()) {
      end = found[i + 1].start;
    }
    std::string_view segment = text.substr(found[i].body, end - found[i].body);
    // An answer stops at the end of its line.
    size_t nl = segment.find('\n');
    if (nl != std::string_view::npos) {
      segment = segment.substr(0, nl);
    }
    out.push_back({found[i].number, trim(segment)});
  }
  return out;
}

namespace {

// Resolution stages for one answered segment against one question's options.
// Returns the index of the resolved option, or -1 (with a code) on failure.
int resolve_option(const std::string& segment, const std::vector<std::string>& options,
                   bool similarity_enabled, std::string& code) {
  const std::string exact = trim(segment);
  for (size_t i = 0; i < options.size(); ++i) {
    if (exact == options[i]) {
      return static_cast<int>(i);
    }
  }
  const std::string norm = normalize(segment);
  for (size_t i = 0; i < options.size(); ++i) {
    if (norm == normalize(options[i])) {
      return static_cast<int>(i);
    }
  }
  if (!similarity_enabled) {
    code = "unresolved";
    return -1;
  }
  double best = -1.0;
  double second = -1.0;
  int best_index = -1;
  for (size_t i = 0; i < options.size(); ++i) {
    const double sim = edit_similarity(norm, normalize(options[i]));
    if (sim > best) {
      second = best;
      best = sim;
      best_index = static_cast<int>(i);
    } else if (sim > second) {
      second = sim;
    }
  }
  if (best < kSimilarityThreshold) {
    code = "unresolved";
    return -1;
  }
  if (second >= kSimilarityThreshold && second == best) {
    code = "ambiguous";
    return -1;
  }
  return best_index;
}

}  // namespace

ObserverParse parse_observer_response(std::string_view text,
                                      const std::vector<QuestionOptions>& questions) {
  ObserverParse result;
  const auto answers = split_numbered_answers(text);

  for (const auto& question : questions) {
    // Options that are themselves near-duplicates force exact/normalized
    // matching only.
    bool similarity_enabled = true;
    for (size_t a = 0; a < question.options.size() && similarity_enabled; ++a) {
      for (size_t b = a + 1; b < question.options.size(); ++b) {
        if (edit_similarity(normalize(question.options[a]), normalize(question.options[b])) >=
            kSimilarityThreshold) {
          similarity_enabled = false;
          break;
        }
      }
    }

    bool seen = false;
    std::string resolved;
    bool failed = false;
    for (const auto& answer : answers) {
      if (answer.number != question.ordinal) {
        continue;
      }
      std::string code;
      const int index = resolve_option(answer.segment, question.options, similarity_enabled, code);
      if (index < 0) {
        result.issues.push_back({question.ordinal, code, answer.segment});
        failed = true;
        continue;
      }
      const std::string& option = question.options[static_cast<size_t>(index)];
      if (seen && option != resolved) {
        result.issues.push_back(
            {question.ordinal, "duplicate_conflict", resolved + " vs " + option});
        failed = true;
        continue;
      }
      seen = true;
      resolved = option;
    }
    if (!seen && !failed) {
      result.issues.push_back({question.ordinal, "missing", ""});
    } else if (seen && !failed) {
      result.answers[question.ordinal] = resolved;
    }
  }
  return result;
}

DecodeResult decode_participant_response(std::string_view text, const ResponseSchema& schema) {
  DecodeResult result;
  switch (schema.kind) {
    case SchemaKind::binary: {
      const std::string norm = normalize(text);
      const bool has_pos =
          find_word(norm, normalize(schema.positive_token)) != std::string_view::npos;
      const bool has_neg =
          find_word(norm, normalize(schema.negative_token)) != std::string_view::npos;
      if (has_pos && has_neg) {
        result.code = "ambiguous";
        result.message = "both binary tokens present";
        return result;
      }
      if (!has_pos && !has_neg) {
        result.code = "no_match";
        result.message = "neither binary token present";
        return result;
      }
      result.value = OutcomeValue{has_pos ? 1.0 : 0.0, SchemaKind::binary};
      return result;
    }
    case SchemaKind::numeric: {
      // First number in the text decides.
      size_t i = 0;
      while (i < text.size()) {
        const char c = text[i];
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            ((c == '-' || c == '+') && i + 1 < text.size() &&
             std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
          break;
        }
        ++i;
      }
      if (i == text.size()) {
        result.code = "no_match";
        result.message = "no number in response";
        return result;
      }
      size_t end = i;
      if (text[end] == '-' || text[end] == '+') ++end;
      while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
      if (end < text.size() && text[end] == '.' && end + 1 < text.size() &&
          std::isdigit(static_cast<unsigned char>(text[end + 1]))) {
        ++end;
        while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
      }
      const double parsed = std::stod(std::string(text.substr(i, end - i)));
      if (parsed < schema.min || parsed > schema.max) {
        result.code = "out_of_range";
        result.message = "number outside [" + format_number(schema.min) + ", " +
                         format_number(schema.max) + "]";
        return result;
      }
      result.value = OutcomeValue{parsed, SchemaKind::numeric};
      return result;
    }
    case SchemaKind::ordinal: {
      const std::string norm = normalize(text);
      struct Match {
        size_t index;
        size_t pos;
        size_t len;
      };
      std::vector<Match> matches;
      for (size_t i = 0; i < schema.labels.size(); ++i) {
        const std::string label = normalize(schema.labels[i]);
        const size_t pos = find_word(norm, label);
        if (pos != std::string_view::npos) {
          matches.push_back({i, pos, label.size()});
        }
      }
      // A label fully contained in another matched label's span is shadowed
      // ("agree" inside "strongly agree").
      std::vector<Match> kept;
      for (const auto& m : matches) {
        bool shadowed = false;
        for (const auto& other : matches) {
          if (other.index != m.index && other.pos <= m.pos &&
              other.pos + other.len >= m.pos + m.len && other.len > m.len) {
            shadowed = true;
            break;
          }
        }
        if (!shadowed) {
          kept.push_back(m);
        }
      }
      if (kept.empty()) {
        result.code = "no_match";
        result.message = "no ordinal label present";
        return result;
      }
      if (kept.size() > 1) {
        result.code = "ambiguous";
        result.message = "multiple ordinal labels present";
        return result;
      }
      result.value = OutcomeValue{static_cast<double>(schema.codes[kept.front().index]),
                                  SchemaKind::ordinal};
      return result;
    }
  }
  result.code = "no_match";
  return result;
}

}  // namespace fieldsim::answers
