#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "fieldsim/answers.hpp"
#include "fieldsim/corpus.hpp"
#include "fieldsim/util.hpp"
#include "json.hpp"

namespace fieldsim::prompts {

struct PromptError : Error {
  using Error::Error;
};
struct MissingGeneralGoal : PromptError {
  using PromptError::PromptError;
};
struct IncompleteCrossProduct : PromptError {
  using PromptError::PromptError;
};
struct InvalidInstruction : PromptError {
  using PromptError::PromptError;
};

// Versioned template files. Rendering replaces "{slot}" for the slots
// provided and leaves everything else (including literal {...} directives
// aimed at the model) untouched.
class TemplateSet {
 public:
  static const std::vector<std::string>& file_names();
  static TemplateSet load(const std::filesystem::path& dir);

  const std::string& text(const std::string& name) const;
  // file name -> fnv1a64 hex of its bytes; pinned in tests and run-log headers.
  std::map<std::string, std::string> checksums() const;

  static std::string render(std::string_view tpl,
                            const std::map<std::string, std::string>& slots);

 private:
  std::map<std::string, std::string> texts_;
};

// One-line study summary in the fixed "the impact of X on Y" form.
struct GeneralGoal {
  std::string text;  // canonical: fixed words lowercased, phrases verbatim
  std::string treatment_phrase;
  std::string outcome_phrase;
};

struct ConclusionVariants {
  int finding_ordinal = 0;
  std::string original;
  std::string reversed;
  std::string non_related;
};

// options_presented[i] == canonical[permutation[i]] where canonical order is
// (original, reversed, non_related); correct_index locates the original.
struct ConclusionQuestion {
  int ordinal = 0;
  std::array<std::string, 3> options_presented;
  std::array<int, 3> permutation = {0, 1, 2};
  int correct_index = 0;
};

struct ObserverPrompt {
  std::string paper_id;
  std::string body;
  std::vector<ConclusionQuestion> questions;
  std::map<int, std::string> answer_key;  // ordinal -> original conclusion text
};

struct RenderedQuestion {
  std::string question_id;
  int number = 0;  // 1-based presentation number shared across variants
  std::string text;
  answers::ResponseSchema schema;
};

struct ParticipantVariant {
  std::string variant_id;
  std::string paper_id;
  std::string group_id;
  std::map<std::string, std::string> profile;  // dimension -> value
  std::string instruction_text;                // second-person, model-generated
  std::vector<RenderedQuestion> questions;
  std::string prompt_text;  // instruction + questions + format demand
};

std::string compose_goal_prompt(const corpus::ExperimentRecord& record,
                                const TemplateSet& templates);

// Accepts text matching "the impact of X on Y" after trimming, stripping
// exactly one trailing period and ignoring case on the fixed words. The LAST
// " on " splits X from Y, so treatment phrases may themselves contain " on ".
ParseResult<GeneralGoal> parse_goal_response(std::string_view text);

std::string compose_variant_prompt(const corpus::Finding& finding, const TemplateSet& templates);

// Extracts the REVERSED / NONRELATED labelled lines. Fails with
// "format_violation" when a label is missing and "degenerate_variant" when a
// variant normalizes equal to the original or to the other variant.
ParseResult<ConclusionVariants> parse_variant_response(std::string_view text,
                                                       const corpus::Finding& finding);

// Deterministic seed/permutation derivation (FNV-based; platform-stable).
uint64_t derive_seed(uint64_t master_seed, const std::vector<std::string>& parts);
std::array<int, 3> permutation_for(uint64_t seed, const std::string& paper_id, int ordinal);

ObserverPrompt build_observer_prompt(const corpus::ExperimentRecord& record,
                                     const std::vector<ConclusionVariants>& variants,
                                     uint64_t seed, const TemplateSet& templates,
                                     bool shuffle_options = true);

// Same assembly with caller-chosen permutations (ordinal -> permutation);
// ordinals absent from the map use the identity order.
ObserverPrompt build_observer_prompt_with_permutations(
    const corpus::ExperimentRecord& record, const std::vector<ConclusionVariants>& variants,
    const std::map<int, std::array<int, 3>>& permutations, const TemplateSet& templates);

// Third-person phrases that must not survive into second-person instructions.
const std::vector<std::string>& instruction_denylist();
std::vector<std::string> instruction_denylist_hits(std::string_view instruction);

// Every profile-value combination, in declared dimension/value order; a
// single empty cell when the record has no profile dimensions.
std::vector<std::map<std::string, std::string>> profile_cells(
    const corpus::ExperimentRecord& record);

// Stable key for a (group, profile) cell, also used as variant_id.
std::string variant_key(const std::string& group_id,
                        const std::map<std::string, std::string>& profile);

std::string compose_participant_instruction_prompt(const corpus::ExperimentRecord& record,
                                                   const corpus::GroupSpec& group,
                                                   const std::map<std::string, std::string>& profile,
                                                   const TemplateSet& templates);

// instructions: variant_key -> second-person instruction text covering the
// full groups x profiles cross product.
std::vector<ParticipantVariant> build_participant_variants(
    const corpus::ExperimentRecord& record,
    const std::map<std::string, std::string>& instructions);

nlohmann::json observer_prompt_to_json(const ObserverPrompt& prompt);
ObserverPrompt observer_prompt_from_json(const nlohmann::json& j);
nlohmann::json participant_variants_to_json(const std::vector<ParticipantVariant>& variants);
std::vector<ParticipantVariant> participant_variants_from_json(const nlohmann::json& j);

}  // namespace fieldsim::prompts
