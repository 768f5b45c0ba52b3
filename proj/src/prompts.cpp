#include "fieldsim/prompts.hpp"

#include <algorithm>

namespace fieldsim::prompts {

namespace {

using corpus::ExperimentRecord;
using corpus::Finding;
using corpus::GroupSpec;

constexpr const char* kGoalTemplate = "goal.txt";
constexpr const char* kObserverBodyTemplate = "observer_body.txt";
constexpr const char* kObserverQuestionTemplate = "observer_question.txt";
constexpr const char* kVariantTemplate = "variant.txt";
constexpr const char* kVariantNullEffectTemplate = "variant_null_effect.txt";
constexpr const char* kParticipantInstructionTemplate = "participant_instruction.txt";

// All 6 orderings of (0, 1, 2) in lexicographic order.
constexpr std::array<std::array<int, 3>, 6> kPermutations = {{
    {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0},
}};

std::string treatments_line(const ExperimentRecord& record) {
  std::vector<std::string> parts;
  parts.reserve(record.treatments.size());
  for (const auto& group : record.treatments) {
    parts.push_back(group.label + ": " + group.treatment_text);
  }
  return join(parts, "; ");
}

std::vector<std::string> treatment_texts(const ExperimentRecord& record) {
  std::vector<std::string> out;
  out.reserve(record.treatments.size());
  for (const auto& group : record.treatments) {
    out.push_back(group.treatment_text);
  }
  return out;
}

// Finds a labelled line such as "REVERSED: ..." (case-insensitive label).
std::optional<std::string> labelled_line(std::string_view text, std::string_view label) {
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) {
      eol = text.size();
    }
    std::string line = trim(text.substr(pos, eol - pos));
    if (istarts_with(line, label)) {
      std::string rest = trim(std::string_view(line).substr(label.size()));
      if (!rest.empty() && rest.front() == ':') {
        return trim(std::string_view(rest).substr(1));
      }
    }
    if (eol == text.size()) {
      break;
    }
    pos = eol + 1;
  }
  return std::nullopt;
}

}  // namespace

const std::vector<std::string>& TemplateSet::file_names() {
  static const std::vector<std::string> names = {
      kGoalTemplate,          kObserverBodyTemplate,      kObserverQuestionTemplate,
      kVariantTemplate,       kVariantNullEffectTemplate, kParticipantInstructionTemplate,
  };
  return names;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
  TemplateSet set;
  for (const auto& name : file_names()) {
    set.texts_[name] = read_text_file(dir / name);
  }
  return set;
}

const std::string& TemplateSet::text(const std::string& name) const {
  const auto it = texts_.find(name);
  if (it == texts_.end()) {
    throw PromptError("unknown template: " + name);
  }
  return it->second;
}

std::map<std::string, std::string> TemplateSet::checksums() const {
  std::map<std::string, std::string> out;
  for (const auto& [name, text] : texts_) {
    out[name] = hex64(fnv1a64(text));
  }
  return out;
}

std::string TemplateSet::render(std::string_view tpl,
                                const std::map<std::string, std::string>& slots) {
  std::string out(tpl);
  for (const auto& [key, value] : slots) {
    const std::string needle = "{" + key + "}";
    size_t pos = 0;
    while ((pos = out.find(needle, pos)) != std::string::npos) {
      out.replace(pos, needle.size(), value);
      pos += value.size();
    }
  }
  return out;
}

std::string compose_goal_prompt(const ExperimentRecord& record, const TemplateSet& templates) {
  if (record.general_goal.has_value()) {
    throw PromptError("record \"" + record.paper_id + "\" already has a general goal");
  }
  return TemplateSet::render(templates.text(kGoalTemplate),
                             {{"title", record.title},
                              {"treatments", join(treatment_texts(record), ", ")},
                              {"y", join(record.dependent_variables, ", ")}});
}

ParseResult<GeneralGoal> parse_goal_response(std::string_view text) {
  std::string s = trim(text);
  if (!s.empty() && s.back() == '.') {
    s.pop_back();  // exactly one trailing period
    s = trim(s);
  }
  static constexpr std::string_view kPrefix = "the impact of ";
  if (!istarts_with(s, kPrefix)) {
    return ParseResult<GeneralGoal>::failure(
        "format_violation", "response does not start with \"the impact of\"");
  }
  const std::string rest = s.substr(kPrefix.size());
  const size_t split = ifind_last(rest, " on ");
  if (split == std::string::npos) {
    return ParseResult<GeneralGoal>::failure("format_violation",
                                             "response has no \" on \" separator");
  }
  const std::string treatment = trim(std::string_view(rest).substr(0, split));
  const std::string outcome = trim(std::string_view(rest).substr(split + 4));
  if (treatment.empty() || outcome.empty()) {
    return ParseResult<GeneralGoal>::failure("format_violation",
                                             "treatment or outcome phrase is empty");
  }
  GeneralGoal goal;
  goal.treatment_phrase = treatment;
  goal.outcome_phrase = outcome;
  goal.text = "the impact of " + treatment + " on " + outcome;
  return ParseResult<GeneralGoal>::success(std::move(goal));
}

std::string compose_variant_prompt(const Finding& finding, const TemplateSet& templates) {
  const char* which = finding.direction == corpus::Direction::none ? kVariantNullEffectTemplate
                                                                   : kVariantTemplate;
  return TemplateSet::render(templates.text(which),
                             {{"statement", finding.statement},
                              {"treatment_entity", finding.treatment_entity},
                              {"outcome_entity", finding.outcome_entity}});
}

ParseResult<ConclusionVariants> parse_variant_response(std::string_view text,
                                                       const Finding& finding) {
  const auto reversed = labelled_line(text, "REVERSED");
  const auto non_related = labelled_line(text, "NONRELATED");
  if (!reversed || !non_related) {
    return ParseResult<ConclusionVariants>::failure(
        "format_violation", std::string("missing ") + (!reversed ? "REVERSED" : "NONRELATED") +
                                " line in variant response");
  }
  ConclusionVariants variants;
  variants.finding_ordinal = finding.ordinal;
  variants.original = finding.statement;
  variants.reversed = *reversed;
  variants.non_related = *non_related;

  const std::string n_orig = answers::normalize(variants.original);
  const std::string n_rev = answers::normalize(variants.reversed);
  const std::string n_non = answers::normalize(variants.non_related);
  if (n_rev.empty() || n_non.empty()) {
    return ParseResult<ConclusionVariants>::failure("format_violation", "empty variant text");
  }
  if (n_rev == n_orig || n_non == n_orig || n_rev == n_non) {
    return ParseResult<ConclusionVariants>::failure(
        "degenerate_variant", "variants are not pairwise distinct after normalization");
  }
  return ParseResult<ConclusionVariants>::success(std::move(variants));
}

uint64_t derive_seed(uint64_t master_seed, const std::vector<std::string>& parts) {
  uint64_t h = fnv1a64(hex64(master_seed));
  for (const auto& part : parts) {
    h = fnv1a64("|", h);
    h = fnv1a64(part, h);
  }
  return h;
}

std::array<int, 3> permutation_for(uint64_t seed, const std::string& paper_id, int ordinal) {
  uint64_t h = fnv1a64(hex64(seed));
  h = fnv1a64("|perm|", h);
  h = fnv1a64(paper_id, h);
  h = fnv1a64("|", h);
  h = fnv1a64(std::to_string(ordinal), h);
  return kPermutations[h % kPermutations.size()];
}

ObserverPrompt build_observer_prompt(const ExperimentRecord& record,
                                     const std::vector<ConclusionVariants>& variants,
                                     uint64_t seed, const TemplateSet& templates,
                                     bool shuffle_options) {
  std::map<int, std::array<int, 3>> permutations;
  if (shuffle_options) {
    for (const auto& finding : record.findings) {
      permutations[finding.ordinal] = permutation_for(seed, record.paper_id, finding.ordinal);
    }
  }
  return build_observer_prompt_with_permutations(record, variants, permutations, templates);
}

ObserverPrompt build_observer_prompt_with_permutations(
    const ExperimentRecord& record, const std::vector<ConclusionVariants>& variants,
    const std::map<int, std::array<int, 3>>& permutations, const TemplateSet& templates) {
  if (!record.general_goal.has_value() || record.general_goal->empty()) {
    throw MissingGeneralGoal("record \"" + record.paper_id + "\" has no general goal");
  }

  std::map<int, const ConclusionVariants*> by_ordinal;
  for (const auto& v : variants) {
    if (!by_ordinal.emplace(v.finding_ordinal, &v).second) {
      throw PromptError("duplicate variants for ordinal " + std::to_string(v.finding_ordinal));
    }
  }

  ObserverPrompt prompt;
  prompt.paper_id = record.paper_id;

  std::vector<Finding> findings = record.findings;
  std::sort(findings.begin(), findings.end(),
            [](const Finding& a, const Finding& b) { return a.ordinal < b.ordinal; });

  std::vector<std::string> question_blocks;
  for (const auto& finding : findings) {
    const auto it = by_ordinal.find(finding.ordinal);
    if (it == by_ordinal.end()) {
      throw PromptError("no conclusion variants for ordinal " + std::to_string(finding.ordinal) +
                        " of \"" + record.paper_id + "\"");
    }
    const ConclusionVariants& v = *it->second;
    const std::array<std::string, 3> canonical = {v.original, v.reversed, v.non_related};
    for (size_t a = 0; a < canonical.size(); ++a) {
      for (size_t b = a + 1; b < canonical.size(); ++b) {
        if (answers::normalize(canonical[a]) == answers::normalize(canonical[b])) {
          throw PromptError("degenerate variants for ordinal " + std::to_string(finding.ordinal) +
                            " of \"" + record.paper_id + "\"");
        }
      }
    }

    ConclusionQuestion question;
    question.ordinal = finding.ordinal;
    const auto pit = permutations.find(finding.ordinal);
    question.permutation = pit != permutations.end() ? pit->second : std::array<int, 3>{0, 1, 2};
    for (size_t i = 0; i < 3; ++i) {
      question.options_presented[i] = canonical[static_cast<size_t>(question.permutation[i])];
      if (question.permutation[i] == 0) {
        question.correct_index = static_cast<int>(i);
      }
    }
    prompt.answer_key[finding.ordinal] = v.original;

    question_blocks.push_back(
        TemplateSet::render(templates.text(kObserverQuestionTemplate),
                            {{"num", std::to_string(finding.ordinal)},
                             {"option_1", question.options_presented[0]},
                             {"option_2", question.options_presented[1]},
                             {"option_3", question.options_presented[2]}}));
    prompt.questions.push_back(std::move(question));
  }

  prompt.body = TemplateSet::render(
      templates.text(kObserverBodyTemplate),
      {{"general_goal", *record.general_goal},
       {"treatment", treatments_line(record)},
       {"dependent_variables", join(record.dependent_variables, ", ")},
       {"participants_information", record.population},
       {"duration", record.duration},
       {"workflow_details", record.workflow_details},
       {"questions", join(question_blocks, "")}});
  return prompt;
}

const std::vector<std::string>& instruction_denylist() {
  static const std::vector<std::string> denylist = {
      "the participant", "the participants", "a participant", "each participant",
      "this participant",
  };
  return denylist;
}

std::vector<std::string> instruction_denylist_hits(std::string_view instruction) {
  std::vector<std::string> hits;
  for (const auto& phrase : instruction_denylist()) {
    if (ifind(instruction, phrase) != std::string_view::npos) {
      hits.push_back(phrase);
    }
  }
  return hits;
}

std::vector<std::map<std::string, std::string>> profile_cells(const ExperimentRecord& record) {
  std::vector<std::map<std::string, std::string>> cells = {{}};
  for (const auto& dim : record.profile_dimensions) {
    std::vector<std::map<std::string, std::string>> next;
    next.reserve(cells.size() * dim.values.size());
    for (const auto& cell : cells) {
      for (const auto& value : dim.values) {
        auto extended = cell;
        extended[dim.name] = value;
        next.push_back(std::move(extended));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

std::string variant_key(const std::string& group_id,
                        const std::map<std::string, std::string>& profile) {
  std::string key = group_id;
  for (const auto& [dim, value] : profile) {
    key += "|" + dim + "=" + value;
  }
  return key;
}

std::string compose_participant_instruction_prompt(
    const ExperimentRecord& record, const GroupSpec& group,
    const std::map<std::string, std::string>& profile, const TemplateSet& templates) {
  if (record.find_group(group.group_id) == nullptr) {
    throw PromptError("group \"" + group.group_id + "\" does not belong to \"" + record.paper_id +
                      "\"");
  }
  for (const auto& dim : record.profile_dimensions) {
    if (profile.find(dim.name) == profile.end()) {
      throw PromptError("profile is missing dimension \"" + dim.name + "\"");
    }
  }

  std::string profile_clause;
  if (!profile.empty()) {
    std::vector<std::string> parts;
    for (const auto& dim : record.profile_dimensions) {
      parts.push_back(dim.name + ": " + profile.at(dim.name));
    }
    profile_clause = "The participant has the following profile: " + join(parts, "; ") + ".\n";
  }

  return TemplateSet::render(templates.text(kParticipantInstructionTemplate),
                             {{"workflow_details", record.workflow_details},
                              {"group_label", group.label},
                              {"treatment_text", group.treatment_text},
                              {"profile_clause", profile_clause}});
}

std::vector<ParticipantVariant> build_participant_variants(
    const ExperimentRecord& record, const std::map<std::string, std::string>& instructions) {
  std::vector<ParticipantVariant> variants;
  const auto cells = profile_cells(record);

  for (const auto& group : record.treatments) {
    for (const auto& cell : cells) {
      const std::string key = variant_key(group.group_id, cell);
      const auto it = instructions.find(key);
      if (it == instructions.end()) {
        throw IncompleteCrossProduct("no instruction for variant \"" + key + "\" of \"" +
                                     record.paper_id + "\"");
      }
      const std::string& instruction = it->second;
      if (trim(instruction).empty()) {
        throw InvalidInstruction("empty instruction for variant \"" + key + "\"");
      }
      const auto hits = instruction_denylist_hits(instruction);
      if (!hits.empty()) {
        throw InvalidInstruction("instruction for variant \"" + key +
                                 "\" contains third-person phrase \"" + hits.front() + "\"");
      }

      ParticipantVariant variant;
      variant.variant_id = key;
      variant.paper_id = record.paper_id;
      variant.group_id = group.group_id;
      variant.profile = cell;
      variant.instruction_text = instruction;

      std::string questions_block;
      int number = 0;
      for (const auto& question : record.participant_questions) {
        RenderedQuestion rendered;
        rendered.question_id = question.question_id;
        rendered.number = ++number;
        rendered.text = question.text;
        rendered.schema = question.schema;
        questions_block += "Question No." + std::to_string(rendered.number) + ": " +
                           rendered.text + " " + rendered.schema.effective_format_demand() + "\n";
        variant.questions.push_back(std::move(rendered));
      }
      variant.prompt_text =
          variant.instruction_text +
          "\n\nPlease answer the following questions in order. Be sure to format each answer "
          "according to the template below: Question No.num: {your answer}\n" +
          questions_block;
      variants.push_back(std::move(variant));
    }
  }
  return variants;
}

nlohmann::json observer_prompt_to_json(const ObserverPrompt& prompt) {
  nlohmann::json j;
  j["paper_id"] = prompt.paper_id;
  j["body"] = prompt.body;
  j["questions"] = nlohmann::json::array();
  for (const auto& q : prompt.questions) {
    j["questions"].push_back({{"ordinal", q.ordinal},
                              {"options_presented", q.options_presented},
                              {"permutation", q.permutation},
                              {"correct_index", q.correct_index}});
  }
  nlohmann::json key = nlohmann::json::object();
  for (const auto& [ordinal, text] : prompt.answer_key) {
    key[std::to_string(ordinal)] = text;
  }
  j["answer_key"] = key;
  return j;
}

ObserverPrompt observer_prompt_from_json(const nlohmann::json& j) {
  ObserverPrompt prompt;
  prompt.paper_id = j.at("paper_id").get<std::string>();
  prompt.body = j.at("body").get<std::string>();
  for (const auto& q : j.at("questions")) {
    ConclusionQuestion question;
    question.ordinal = q.at("ordinal").get<int>();
    const auto& options = q.at("options_presented");
    const auto& perm = q.at("permutation");
    if (options.size() != 3 || perm.size() != 3) {
      throw PromptError("observer prompt question must have exactly 3 options");
    }
    for (size_t i = 0; i < 3; ++i) {
      question.options_presented[i] = options[i].get<std::string>();
      question.permutation[i] = perm[i].get<int>();
    }
    question.correct_index = q.at("correct_index").get<int>();
    prompt.questions.push_back(std::move(question));
  }
  for (const auto& [key, value] : j.at("answer_key").items()) {
    prompt.answer_key[std::stoi(key)] = value.get<std::string>();
  }
  return prompt;
}

nlohmann::json participant_variants_to_json(const std::vector<ParticipantVariant>& variants) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& variant : variants) {
    nlohmann::json questions = nlohmann::json::array();
    for (const auto& q : variant.questions) {
      questions.push_back({{"question_id", q.question_id},
                           {"number", q.number},
                           {"text", q.text},
                           {"schema", answers::schema_to_json(q.schema)}});
    }
    j.push_back({{"variant_id", variant.variant_id},
                 {"paper_id", variant.paper_id},
                 {"group_id", variant.group_id},
                 {"profile", variant.profile},
                 {"instruction_text", variant.instruction_text},
                 {"questions", questions},
                 {"prompt_text", variant.prompt_text}});
  }
  return j;
}

std::vector<ParticipantVariant> participant_variants_from_json(const nlohmann::json& j) {
  std::vector<ParticipantVariant> variants;
  for (const auto& item : j) {
    ParticipantVariant variant;
    variant.variant_id = item.at("variant_id").get<std::string>();
    variant.paper_id = item.at("paper_id").get<std::string>();
    variant.group_id = item.at("group_id").get<std::string>();
    if (item.contains("profile")) {
      for (const auto& [key, value] : item.at("profile").items()) {
        variant.profile[key] = value.get<std::string>();
      }
    }
    variant.instruction_text = item.at("instruction_text").get<std::string>();
    for (const auto& q : item.at("questions")) {
      RenderedQuestion rendered;
      rendered.question_id = q.at("question_id").get<std::string>();
      rendered.number = q.at("number").get<int>();
      rendered.text = q.at("text").get<std::string>();
      rendered.schema = answers::schema_from_json(q.at("schema"), variant.variant_id);
      variant.questions.push_back(std::move(rendered));
    }
    variant.prompt_text = item.at("prompt_text").get<std::string>();
    variants.push_back(std::move(variant));
  }
  return variants;
}

}  // namespace fieldsim::prompts
