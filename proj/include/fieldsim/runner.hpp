#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fieldsim/answers.hpp"
#include "fieldsim/client.hpp"
#include "fieldsim/corpus.hpp"
#include "fieldsim/prompts.hpp"
#include "fieldsim/util.hpp"
#include "json.hpp"

namespace fieldsim::runner {

struct RunnerError : Error {
  using Error::Error;
};
struct ConfigError : RunnerError {
  using RunnerError::RunnerError;
};
// Existing log was produced under a different config or template set.
struct ConfigMismatch : RunnerError {
  using RunnerError::RunnerError;
};
struct LogError : RunnerError {
  using RunnerError::RunnerError;
};
// A provider failure stopped the run; the log is a valid resumable prefix.
struct RunAborted : RunnerError {
  using RunnerError::RunnerError;
};
// An LLM-dependent pipeline stage exhausted its parse retries.
struct StageError : RunnerError {
  using RunnerError::RunnerError;
};

enum class Mode { observer, participant };
std::string to_string(Mode mode);
Mode mode_from_string(const std::string& s);

struct ProviderSpec {
  std::string kind = "mock";  // mock | remote
  std::string base_url;       // remote
  std::string mock_script;    // mock
};

struct RateLimitSpec {
  int requests = 0;  // per interval; 0 = unlimited
  uint64_t interval_ms = 1000;
};

// The declarative run configuration (External Interfaces: config file).
// observer_trials/participant_reps follow the trial protocol defaults; any
// override must be explicit in the config document.
struct RunConfig {
  std::string run_id = "run";
  std::string model_id = client::kDefaultModelId;
  int observer_trials = 30;
  int participant_reps = 5;
  int concurrency_limit = 4;
  uint64_t master_seed = 0;
  bool shuffle_options = true;
  int max_parse_retries = 2;
  std::string corpus_path;
  std::string templates_dir = "templates";
  ProviderSpec provider;
  std::optional<RateLimitSpec> rate_limit;
  client::RetryPolicy retry;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);
// fnv1a64 hex over the canonical config serialization.
std::string config_hash(const RunConfig& config);

enum class ParseStatus { ok, retried_ok, failed };
std::string to_string(ParseStatus status);
ParseStatus parse_status_from_string(const std::string& s);

// One raw request/response with parse outcome; append-only provenance.
struct TrialLogEntry {
  uint64_t seq = 0;
  std::string run_id;
  std::string paper_id;
  Mode mode = Mode::observer;
  std::string variant_id;  // participant only; empty otherwise
  int trial_index = 0;
  std::string request_prompt;
  std::string raw_response;
  ParseStatus parse_status = ParseStatus::ok;
  std::optional<nlohmann::json> parsed_payload;
  uint64_t timestamp_ms = 0;
  int attempt_count = 1;  // provider calls made for this trial
};

nlohmann::json entry_to_json(const TrialLogEntry& entry);
TrialLogEntry entry_from_json(const nlohmann::json& j);

struct RunLog {
  std::string run_id;
  Mode mode = Mode::observer;
  std::string config_hash;
  std::map<std::string, std::string> template_checksums;
  nlohmann::json config;
  std::vector<TrialLogEntry> entries;
};

RunLog read_run_log(const std::filesystem::path& path);

struct ObserverTrialResult {
  int trial_index = 0;
  bool ok = false;                      // parse_status in {ok, retried_ok}
  std::map<int, std::string> answers;  // ordinal -> chosen presented option
};

struct ParticipantTrialResult {
  std::string variant_id;
  int rep_index = 0;
  bool ok = false;
  std::map<std::string, answers::OutcomeValue> values;  // question_id -> value
};

struct ObserverRun {
  std::map<std::string, std::vector<ObserverTrialResult>> by_paper;
  int executed = 0;  // trials newly executed by this call (0 on a complete log)
};

struct ParticipantRun {
  std::map<std::string, std::vector<ParticipantTrialResult>> by_paper;
  int executed = 0;
};

// Issues observer_trials identical single-turn requests per paper, parses
// each response, retries a failing parse up to max_parse_retries times with
// a fresh request, and appends every trial to the JSONL log. An existing log
// under the same config hash is resumed: only missing trials execute and a
// complete log triggers no provider calls. Trials still unparsable after
// retries are recorded failed (they score as incorrect).
ObserverRun run_observer(const std::vector<corpus::ExperimentRecord>& records,
                         const std::map<std::string, prompts::ObserverPrompt>& observer_prompts,
                         const RunConfig& config, client::ChatProvider& provider, Clock& clock,
                         const std::map<std::string, std::string>& template_checksums,
                         const std::filesystem::path& log_path);

// participant_reps independent sessions per variant; a rep whose decoding
// fails after retries is recorded failed and excluded from ATE means.
ParticipantRun run_participant(
    const std::vector<corpus::ExperimentRecord>& records,
    const std::map<std::string, std::vector<prompts::ParticipantVariant>>& variants_by_paper,
    const RunConfig& config, client::ChatProvider& provider, Clock& clock,
    const std::map<std::string, std::string>& template_checksums,
    const std::filesystem::path& log_path);

std::map<std::string, std::vector<ObserverTrialResult>> observer_results_from_log(
    const RunLog& log);
std::map<std::string, std::vector<ParticipantTrialResult>> participant_results_from_log(
    const RunLog& log);

// --- LLM-dependent pipeline stages (general goal, conclusion variants,
// --- second-person instructions). Each retries malformed responses up to
// --- max_parse_retries fresh requests and throws StageError on exhaustion.

// paper_id -> canonical goal text, for records whose general_goal is absent.
std::map<std::string, std::string> generate_goals(
    const std::vector<corpus::ExperimentRecord>& records, const RunConfig& config,
    client::ChatProvider& provider, const prompts::TemplateSet& templates);

std::map<std::string, std::vector<prompts::ConclusionVariants>> generate_variants(
    const std::vector<corpus::ExperimentRecord>& records, const RunConfig& config,
    client::ChatProvider& provider, const prompts::TemplateSet& templates);

// paper_id -> (variant key -> second-person instruction text). Responses
// hitting the third-person denylist count as parse failures and are retried.
std::map<std::string, std::map<std::string, std::string>> generate_instructions(
    const std::vector<corpus::ExperimentRecord>& records, const RunConfig& config,
    client::ChatProvider& provider, const prompts::TemplateSet& templates);

}  // namespace fieldsim::runner
