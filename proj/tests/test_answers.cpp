#include <string>
#include <vector>

#include "doctest.h"
#include "fieldsim/answers.hpp"
#include "fieldsim/util.hpp"

using namespace fieldsim;
using namespace fieldsim::answers;

namespace {

ResponseSchema binary_schema(const std::string& pos = "yes", const std::string& neg = "no") {
  ResponseSchema schema;
  schema.kind = SchemaKind::binary;
  schema.positive_token = pos;
  schema.negative_token = neg;
  return schema;
}

ResponseSchema numeric_schema(double min, double max) {
  ResponseSchema schema;
  schema.kind = SchemaKind::numeric;
  schema.min = min;
  schema.max = max;
  return schema;
}

ResponseSchema ordinal_schema(std::vector<std::string> labels, std::vector<int> codes) {
  ResponseSchema schema;
  schema.kind = SchemaKind::ordinal;
  schema.labels = std::move(labels);
  schema.codes = std::move(codes);
  return schema;
}

std::vector<QuestionOptions> one_question(int ordinal, std::vector<std::string> options) {
  return {{ordinal, std::move(options)}};
}

// Random printable string with quote/period/space noise for the idempotence
// property.
std::string random_text(uint64_t& rng) {
  static const std::string alphabet =
      "abcXYZ 019 .'\"\t .. '' \n\"hello.\" world";
  const size_t length = splitmix64_next(rng) % 24;
  std::string out;
  for (size_t i = 0; i < length; ++i) {
    out.push_back(alphabet[splitmix64_next(rng) % alphabet.size()]);
  }
  return out;
}

}  // namespace

TEST_SUITE("answers") {

TEST_CASE("normalize collapses whitespace, case, quotes and trailing periods") {
  CHECK(normalize("  Hello  World. ") == "hello world");
  CHECK(normalize("'Quoted'") == "quoted");
  CHECK(normalize("\"Recognition decreases performance.\"") ==
        "recognition decreases performance");
  CHECK(normalize("already normal") == "already normal");
  CHECK(normalize("\"hello\".") == "hello");
}

TEST_CASE("normalize is idempotent for arbitrary inputs") {
  uint64_t rng = 0xabcdefu;
  for (int i = 0; i < 500; ++i) {
    const std::string text = random_text(rng);
    const std::string once = normalize(text);
    CHECK(normalize(once) == once);
  }
}

TEST_CASE("edit similarity basics") {
  CHECK(edit_similarity("abc", "abc") == doctest::Approx(1.0));
  CHECK(edit_similarity("abc", "abd") == doctest::Approx(1.0 - 1.0 / 3.0));
  CHECK(edit_similarity("", "") == doctest::Approx(1.0));
}

TEST_CASE("split_numbered_answers finds labelled answers") {
  const auto answers =
      split_numbered_answers("Question No.1: alpha\nquestion no.2:  beta \nnoise");
  REQUIRE(answers.size() == 2);
  CHECK(answers[0].number == 1);
  CHECK(answers[0].segment == "alpha");
  CHECK(answers[1].number == 2);
  CHECK(answers[1].segment == "beta");
}

TEST_CASE("observer parse: exact stage") {
  const auto options =
      one_question(1, {"recognition increases performance", "recognition decreases performance",
                       "no causal relationship between recognition and performance"});
  const auto parsed =
      parse_observer_response("Question No.1: recognition increases performance", options);
  CHECK(parsed.complete());
  CHECK(parsed.answers.at(1) == "recognition increases performance");
}

TEST_CASE("observer parse: normalization stage survives case/quote/period/whitespace noise") {
  const std::vector<std::string> options = {
      "Recognition increases performance.", "Recognition decreases performance.",
      "There is no causal relationship between recognition and performance."};
  const auto questions = one_question(2, options);

  // Perturbation oracle: every combination must resolve to its own option.
  const std::vector<std::string> cases = {"orig", "upper", "lower"};
  const std::vector<std::string> quotes = {"", "\"", "'"};
  for (const auto& option : options) {
    for (const auto& casing : cases) {
      for (const auto& quote : quotes) {
        for (int periods = 0; periods <= 1; ++periods) {
          for (int pad = 0; pad <= 1; ++pad) {
            std::string text = option;
            if (casing == "upper") {
              for (char& c : text) c = static_cast<char>(std::toupper(c));
            } else if (casing == "lower") {
              for (char& c : text) c = static_cast<char>(std::tolower(c));
            }
            if (periods == 1) text += ".";
            text = quote + text + quote;
            if (pad == 1) text = "  " + text + "   ";
            const auto parsed =
                parse_observer_response("question no. 2 : " + text, questions);
            REQUIRE_MESSAGE(parsed.complete(), "failed on: " << text);
            CHECK(parsed.answers.at(2) == option);
          }
        }
      }
    }
  }
}

TEST_CASE("observer parse: similarity stage with unique best candidate") {
  // Mutually distant options keep the similarity stage armed.
  const auto questions = one_question(
      1, {"the reminder banner lowers impulse buying",
          "customers ignore checkout banners entirely",
          "no causal relationship between banners and buying"});
  // One character of drift: similarity ~0.98, unique best.
  const auto parsed = parse_observer_response(
      "Question No.1: the reminder banner lowers impulse buying!", questions);
  CHECK(parsed.complete());
  CHECK(parsed.answers.at(1) == "the reminder banner lowers impulse buying");
}

TEST_CASE("observer parse: similarity stage disabled for near-duplicate options") {
  // Options within similarity 0.90 of each other force exact/normalized-only.
  const auto questions = one_question(1, {"the score is 10", "the score is 11", "unrelated"});
  CHECK(edit_similarity(normalize("the score is 10"), normalize("the score is 11")) >=
        kSimilarityThreshold);
  const auto parsed = parse_observer_response("Question No.1: the score is 1O", questions);
  CHECK_FALSE(parsed.complete());
  REQUIRE(parsed.issues.size() == 1);
  CHECK(parsed.issues[0].code == "unresolved");
}

TEST_CASE("observer parse: unresolvable answer and missing ordinal") {
  const auto questions = one_question(3, {"alpha beta gamma", "delta epsilon zeta", "eta theta"});
  const auto unresolved =
      parse_observer_response("Question No.3: I think the second one", questions);
  CHECK_FALSE(unresolved.complete());
  CHECK(unresolved.issues[0].code == "unresolved");

  const auto missing = parse_observer_response("no labelled answers here", questions);
  CHECK_FALSE(missing.complete());
  CHECK(missing.issues[0].code == "missing");
}

TEST_CASE("observer parse: duplicate ordinals") {
  const auto questions = one_question(1, {"option alpha", "option beta", "option gamma"});
  const auto conflict = parse_observer_response(
      "Question No.1: option alpha\nQuestion No.1: option beta", questions);
  CHECK_FALSE(conflict.complete());
  CHECK(conflict.issues[0].code == "duplicate_conflict");

  const auto agree = parse_observer_response(
      "Question No.1: option alpha\nQuestion No.1: option alpha", questions);
  CHECK(agree.complete());
  CHECK(agree.answers.at(1) == "option alpha");
}

TEST_CASE("observer parse: synthesized answers round-trip") {
  uint64_t rng = 77;
  for (int i = 0; i < 100; ++i) {
    std::vector<std::string> options;
    for (int k = 0; k < 3; ++k) {
      options.push_back("option " + std::to_string(k) + " token" +
                        std::to_string(splitmix64_next(rng) % 1000000));
    }
    const auto questions = one_question(1 + static_cast<int>(i % 6), options);
    const auto& chosen = options[splitmix64_next(rng) % 3];
    const std::string text =
        "Question No." + std::to_string(questions[0].ordinal) + ": " + chosen;
    const auto parsed = parse_observer_response(text, questions);
    REQUIRE(parsed.complete());
    CHECK(parsed.answers.at(questions[0].ordinal) == chosen);
  }
}

TEST_CASE("binary decode") {
  const auto schema = binary_schema();
  const auto yes = decode_participant_response("Yes, I would buy it.", schema);
  REQUIRE(yes.ok());
  CHECK(yes.value->value == 1.0);
  CHECK(yes.value->source_kind == SchemaKind::binary);

  const auto no = decode_participant_response("no thanks", schema);
  REQUIRE(no.ok());
  CHECK(no.value->value == 0.0);

  const auto both = decode_participant_response("yes and no", schema);
  CHECK_FALSE(both.ok());
  CHECK(both.code == "ambiguous");

  const auto neither = decode_participant_response("maybe", schema);
  CHECK_FALSE(neither.ok());
  CHECK(neither.code == "no_match");
}

TEST_CASE("binary decode uses word boundaries") {
  const auto schema = binary_schema();
  // "no" inside "note" must not count.
  const auto result = decode_participant_response("note: I agree to it", schema);
  CHECK_FALSE(result.ok());
  CHECK(result.code == "no_match");
}

TEST_CASE("numeric decode takes the first number and range-checks it") {
  const auto schema = numeric_schema(0, 100);
  const auto value = decode_participant_response("I'd pay 35 dollars", schema);
  REQUIRE(value.ok());
  CHECK(value.value->value == doctest::Approx(35.0));

  const auto decimal = decode_participant_response("around 3.5 units", schema);
  REQUIRE(decimal.ok());
  CHECK(decimal.value->value == doctest::Approx(3.5));

  const auto out_of_range = decode_participant_response("150", schema);
  CHECK_FALSE(out_of_range.ok());
  CHECK(out_of_range.code == "out_of_range");

  const auto none = decode_participant_response("none at all", schema);
  CHECK_FALSE(none.ok());
  CHECK(none.code == "no_match");

  const auto negative = decode_participant_response("-5 below", numeric_schema(-10, 10));
  REQUIRE(negative.ok());
  CHECK(negative.value->value == doctest::Approx(-5.0));
}

TEST_CASE("ordinal decode: unique label match with shadowing") {
  const auto schema = ordinal_schema({"low", "medium", "high"}, {1, 2, 3});
  const auto high = decode_participant_response("High.", schema);
  REQUIRE(high.ok());
  CHECK(high.value->value == doctest::Approx(3.0));

  const auto ambiguous = decode_participant_response("low and high", schema);
  CHECK_FALSE(ambiguous.ok());
  CHECK(ambiguous.code == "ambiguous");

  // "agree" inside "strongly agree" is shadowed by the longer label.
  const auto likert = ordinal_schema({"disagree", "agree", "strongly agree"}, {0, 1, 2});
  const auto shadowed = decode_participant_response("I strongly agree", likert);
  REQUIRE(shadowed.ok());
  CHECK(shadowed.value->value == doctest::Approx(2.0));
}

TEST_CASE("schema json round trip and validation") {
  for (const auto& schema :
       {binary_schema(), numeric_schema(0, 100), ordinal_schema({"a", "b"}, {1, 2})}) {
    const auto j = schema_to_json(schema);
    const auto back = schema_from_json(j, "test");
    CHECK(schema_to_json(back) == j);
  }

  CHECK_THROWS_AS(schema_from_json({{"kind", "numeric"}, {"min", 5}, {"max", 5}}, "t"), Error);
  CHECK_THROWS_AS(schema_from_json({{"kind", "ordinal"}, {"labels", {"a"}}}, "t"), Error);
  CHECK_THROWS_AS(
      schema_from_json(
          {{"kind", "binary"}, {"positive_token", "y"}, {"negative_token", "n"}, {"bogus", 1}},
          "t"),
      Error);
}

TEST_CASE("default format demands mention the answer shape") {
  CHECK(binary_schema().effective_format_demand().find("\"yes\" or \"no\"") !=
        std::string::npos);
  CHECK(numeric_schema(0, 100).effective_format_demand().find("between 0 and 100") !=
        std::string::npos);
  CHECK(ordinal_schema({"low", "high"}, {0, 1}).effective_format_demand().find("\"low\", \"high\"") !=
        std::string::npos);
}

}  // TEST_SUITE
