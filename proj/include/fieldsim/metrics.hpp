#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fieldsim/corpus.hpp"
#include "fieldsim/prompts.hpp"
#include "fieldsim/runner.hpp"
#include "fieldsim/util.hpp"
#include "json.hpp"

namespace fieldsim::metrics {

struct MetricsError : Error {
  using Error::Error;
};
// An ATE arm has no decodable reps.
struct EmptyArm : MetricsError {
  using MetricsError::MetricsError;
};
struct ConfigMismatch : MetricsError {
  using MetricsError::MetricsError;
};

enum class Sign { positive, negative, zero };
enum class Verdict { one, zero, x };

std::string to_string(Sign sign);
std::string verdict_display(Verdict verdict);  // "1" | "0" | "x"
Verdict verdict_from_display(const std::string& s);

// Fraction of trials whose answer for `ordinal` equals the correct option.
// Failed-parse trials stay in the denominator and never count as correct.
double accuracy_observer(const std::vector<runner::ObserverTrialResult>& trials, int ordinal,
                         const std::string& correct_option);

// Unweighted mean over a paper's per-conclusion accuracies.
double avg_observer(const std::vector<double>& per_conclusion);

// Sign of mean(treatment) - mean(control); zero iff the means are exactly
// equal. Throws EmptyArm when either arm has no values.
Sign ate_direction(const std::vector<double>& treatment_values,
                   const std::vector<double>& control_values);

// 1 when the ATE sign matches the finding's direction (positive<->positive,
// negative<->negative, zero<->none), 0 otherwise; findings that require
// external analysis always map to x.
Verdict verdict_participant(Sign sign, const corpus::Finding& finding);

// (#1) / (#1 + #0); undefined exactly when every verdict is x.
std::optional<double> avg_participant(const std::map<int, Verdict>& verdicts);

struct ObserverScore {
  std::string paper_id;
  corpus::CorpusTag corpus_tag = corpus::CorpusTag::baseline;
  std::map<int, double> per_conclusion;  // ordinal -> accuracy in [0,1]
  double avg_o = 0.0;
  int failed_trials = 0;  // parse failures scored as incorrect, flagged here
};

struct ParticipantScore {
  std::string paper_id;
  corpus::CorpusTag corpus_tag = corpus::CorpusTag::baseline;
  std::map<int, Verdict> verdicts;
  std::optional<double> avg_p;
  int failed_reps = 0;  // excluded from ATE means, flagged here
};

ObserverScore score_observer_paper(const corpus::ExperimentRecord& record,
                                   const prompts::ObserverPrompt& prompt,
                                   const std::vector<runner::ObserverTrialResult>& trials,
                                   int expected_trials);

ParticipantScore score_participant_paper(
    const corpus::ExperimentRecord& record,
    const std::vector<prompts::ParticipantVariant>& variants,
    const std::vector<runner::ParticipantTrialResult>& trials);

struct CorpusAggregate {
  corpus::CorpusTag corpus_tag = corpus::CorpusTag::baseline;
  runner::Mode mode = runner::Mode::observer;
  std::map<std::string, double> per_paper;  // papers with a defined average
  // Unweighted mean of raw per-paper averages.
  double mean_of_paper_averages = 0.0;
  // Same mean computed after rounding each paper average to a whole percent,
  // the way the published tables display them. Emitted alongside the raw
  // route and flagged where they differ.
  double mean_of_rounded_averages = 0.0;
  int defined_count = 0;
  int undefined_count = 0;  // papers excluded for having no defined average
  std::string config_hash;
};

CorpusAggregate aggregate_corpus(const std::map<std::string, std::optional<double>>& per_paper,
                                 corpus::CorpusTag tag, runner::Mode mode,
                                 const std::string& config_hash = "");

struct AuditReport {
  runner::Mode mode = runner::Mode::observer;
  CorpusAggregate baseline;
  CorpusAggregate post_cutoff;
  double delta_pp = 0.0;  // (post - baseline) * 100, raw route
};

// Raw comparison, no statistical test. Throws ConfigMismatch when the two
// aggregates were scored in different modes or under different configs.
AuditReport memorization_audit(const CorpusAggregate& baseline,
                               const CorpusAggregate& post_cutoff);

// Display rounding: integer percent ("87%") or fixed decimals ("47.9%");
// internal arithmetic stays at full precision.
std::string percent_display(double fraction, int decimals = 0);

// Scorecards: the serialized per-paper scoring a run produces and the
// report module consumes.
struct PaperScore {
  std::string paper_id;
  corpus::CorpusTag corpus_tag = corpus::CorpusTag::baseline;
  std::map<int, double> accuracies;   // observer mode
  std::map<int, Verdict> verdicts;    // participant mode
  std::optional<double> average;
  int failed_trials = 0;
};

struct ScoreCard {
  runner::Mode mode = runner::Mode::observer;
  std::string run_id;
  std::string config_hash;
  std::vector<PaperScore> papers;
};

ScoreCard scorecard_from_observer(const std::vector<ObserverScore>& scores,
                                  const std::string& run_id, const std::string& config_hash);
ScoreCard scorecard_from_participant(const std::vector<ParticipantScore>& scores,
                                     const std::string& run_id, const std::string& config_hash);

nlohmann::json scorecard_to_json(const ScoreCard& card);
ScoreCard scorecard_from_json(const nlohmann::json& j);

}  // namespace fieldsim::metrics
