#include "fieldsim/runner.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

namespace fieldsim::runner {

namespace {

using nlohmann::json;

struct Task {
  uint64_t seq = 0;
  const corpus::ExperimentRecord* record = nullptr;
  const prompts::ObserverPrompt* observer_prompt = nullptr;      // observer
  const prompts::ParticipantVariant* variant = nullptr;          // participant
  int trial_index = 0;
};

// Writes entries strictly in seq order regardless of completion order, so an
// interrupted log is always a valid prefix of the planned run.
class SequencedLogWriter {
 public:
  SequencedLogWriter(const std::filesystem::path& path, uint64_t next_seq, bool write_header,
                     const json& header)
      : next_(next_seq) {
    if (path.has_parent_path()) {
      std::filesystem::create_directories(path.parent_path());
    }
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) {
      throw LogError("cannot open run log for append: " + path.string());
    }
    if (write_header) {
      out_ << header.dump() << '\n';
      out_.flush();
    }
  }

  void deliver(const TrialLogEntry& entry) {
    std::lock_guard<std::mutex> lock(mutex_);
    pending_[entry.seq] = entry;
    while (true) {
      auto it = pending_.find(next_);
      if (it == pending_.end()) {
        break;
      }
      out_ << entry_to_json(it->second).dump() << '\n';
      written_.push_back(std::move(it->second));
      pending_.erase(it);
      ++next_;
    }
    out_.flush();
  }

  const std::vector<TrialLogEntry>& written() const { return written_; }

 private:
  std::ofstream out_;
  uint64_t next_;
  std::map<uint64_t, TrialLogEntry> pending_;
  std::vector<TrialLogEntry> written_;
  std::mutex mutex_;
};

json header_json(const RunConfig& config, Mode mode,
                 const std::map<std::string, std::string>& template_checksums) {
  json j;
  j["kind"] = "header";
  j["run_id"] = config.run_id;
  j["mode"] = to_string(mode);
  j["config_hash"] = config_hash(config);
  j["template_checksums"] = template_checksums;
  j["config"] = run_config_to_json(config);
  return j;
}

std::vector<answers::QuestionOptions> question_options(const prompts::ObserverPrompt& prompt) {
  std::vector<answers::QuestionOptions> out;
  for (const auto& question : prompt.questions) {
    answers::QuestionOptions options;
    options.ordinal = question.ordinal;
    options.options.assign(question.options_presented.begin(), question.options_presented.end());
    out.push_back(std::move(options));
  }
  return out;
}

// Decodes one participant session against the variant's question schemas.
// Every question must decode; `why` reports the first failure.
std::optional<std::map<std::string, answers::OutcomeValue>> decode_rep(
    const std::string& text, const prompts::ParticipantVariant& variant, std::string& why) {
  const auto labelled = answers::split_numbered_answers(text);
  std::map<std::string, answers::OutcomeValue> values;
  for (const auto& question : variant.questions) {
    std::string segment;
    bool found = false;
    bool conflict = false;
    for (const auto& answer : labelled) {
      if (answer.number != question.number) {
        continue;
      }
      if (found && answer.segment != segment) {
        conflict = true;
        break;
      }
      segment = answer.segment;
      found = true;
    }
    if (conflict) {
      why = "conflicting answers for question " + std::to_string(question.number);
      return std::nullopt;
    }
    if (!found) {
      // Single-question variants may answer in free text without the label.
      if (variant.questions.size() == 1 && labelled.empty()) {
        segment = text;
      } else {
        why = "no answer for question " + std::to_string(question.number);
        return std::nullopt;
      }
    }
    const auto decoded = answers::decode_participant_response(segment, question.schema);
    if (!decoded.ok()) {
      why = "question " + std::to_string(question.number) + ": " + decoded.code;
      return std::nullopt;
    }
    values[question.question_id] = *decoded.value;
  }
  return values;
}

json observer_payload(const std::map<int, std::string>& answers) {
  json payload;
  json map = json::object();
  for (const auto& [ordinal, option] : answers) {
    map[std::to_string(ordinal)] = option;
  }
  payload["answers"] = map;
  return payload;
}

json participant_payload(const std::map<std::string, answers::OutcomeValue>& values) {
  json payload;
  json map = json::object();
  for (const auto& [qid, value] : values) {
    map[qid] = {{"value", value.value}, {"kind", answers::to_string(value.source_kind)}};
  }
  payload["values"] = map;
  return payload;
}

// Validates an existing log as a prefix of the planned run and returns the
// number of already-completed trials.
size_t validate_existing_log(const RunLog& log, const RunConfig& config, Mode mode,
                             const std::map<std::string, std::string>& template_checksums,
                             const std::vector<Task>& tasks) {
  if (log.config_hash != config_hash(config)) {
    throw ConfigMismatch("run log config hash " + log.config_hash +
                         " does not match current config " + config_hash(config));
  }
  if (log.mode != mode) {
    throw ConfigMismatch("run log mode " + to_string(log.mode) + " does not match " +
                         to_string(mode));
  }
  if (log.template_checksums != template_checksums) {
    throw ConfigMismatch("run log template checksums do not match the current template set");
  }
  if (log.entries.size() > tasks.size()) {
    throw LogError("run log has more entries than the planned run");
  }
  for (size_t i = 0; i < log.entries.size(); ++i) {
    const auto& entry = log.entries[i];
    const auto& task = tasks[i];
    if (entry.seq != i) {
      throw LogError("run log entries are not a contiguous prefix (seq " +
                     std::to_string(entry.seq) + " at line " + std::to_string(i + 2) + ")");
    }
    const std::string variant_id = task.variant != nullptr ? task.variant->variant_id : "";
    if (entry.paper_id != task.record->paper_id || entry.trial_index != task.trial_index ||
        entry.variant_id != variant_id) {
      throw LogError("run log entry " + std::to_string(i) + " does not match the planned trial");
    }
  }
  return log.entries.size();
}

// Executes tasks[start..] with bounded concurrency, delivering entries to the
// sequenced writer. The first provider failure aborts the run; the log keeps
// its valid prefix.
void execute_tasks(const std::vector<Task>& tasks, size_t start, const RunConfig& config,
                   client::ChatProvider& provider, Clock& clock, client::RateLimiter* limiter,
                   SequencedLogWriter& writer, Mode mode) {
  std::atomic<size_t> cursor{start};
  std::atomic<bool> abort{false};
  std::mutex error_mutex;
  std::string error_message;

  auto run_one = [&](const Task& task) {
    const std::string& prompt_body = mode == Mode::observer ? task.observer_prompt->body
                                                            : task.variant->prompt_text;
    auto request = client::ChatRequest::single_user(prompt_body, config.model_id);

    TrialLogEntry entry;
    entry.seq = task.seq;
    entry.run_id = config.run_id;
    entry.paper_id = task.record->paper_id;
    entry.mode = mode;
    entry.variant_id = task.variant != nullptr ? task.variant->variant_id : "";
    entry.trial_index = task.trial_index;
    entry.request_prompt = prompt_body;

    bool parsed_ok = false;
    int calls = 0;
    for (int attempt = 0; attempt <= config.max_parse_retries && !parsed_ok; ++attempt) {
      client::ChatResponse response =
          limiter != nullptr ? client::send_with_rate_limit(provider, request, *limiter)
                             : provider.send(request);
      ++calls;
      entry.raw_response = response.content;
      if (mode == Mode::observer) {
        const auto parse = answers::parse_observer_response(
            response.content, question_options(*task.observer_prompt));
        if (parse.complete()) {
          entry.parsed_payload = observer_payload(parse.answers);
          parsed_ok = true;
        }
      } else {
        std::string why;
        const auto values = decode_rep(response.content, *task.variant, why);
        if (values.has_value()) {
          entry.parsed_payload = participant_payload(*values);
          parsed_ok = true;
        }
      }
      if (parsed_ok) {
        entry.parse_status = attempt == 0 ? ParseStatus::ok : ParseStatus::retried_ok;
      }
    }
    if (!parsed_ok) {
      entry.parse_status = ParseStatus::failed;
      entry.parsed_payload.reset();
    }
    entry.attempt_count = calls;
    entry.timestamp_ms = clock.now_ms();
    writer.deliver(entry);
  };

  auto worker = [&]() {
    for (;;) {
      if (abort.load()) {
        return;
      }
      const size_t index = cursor.fetch_add(1);
      if (index >= tasks.size()) {
        return;
      }
      try {
        run_one(tasks[index]);
      } catch (const std::exception& e) {
        {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (error_message.empty()) {
            error_message = e.what();
          }
        }
        abort.store(true);
        return;
      }
    }
  };

  const size_t remaining = tasks.size() - start;
  const size_t worker_count =
      std::min<size_t>(static_cast<size_t>(std::max(config.concurrency_limit, 1)), remaining);
  std::vector<std::thread> threads;
  threads.reserve(worker_count);
  for (size_t i = 0; i < worker_count; ++i) {
    threads.emplace_back(worker);
  }
  for (auto& thread : threads) {
    thread.join();
  }
  if (!error_message.empty()) {
    throw RunAborted("run aborted: " + error_message + " (log is a resumable prefix)");
  }
}

ObserverTrialResult observer_result_from_entry(const TrialLogEntry& entry) {
  ObserverTrialResult result;
  result.trial_index = entry.trial_index;
  result.ok = entry.parse_status != ParseStatus::failed;
  if (result.ok && entry.parsed_payload.has_value()) {
    for (const auto& [key, value] : entry.parsed_payload->at("answers").items()) {
      result.answers[std::stoi(key)] = value.get<std::string>();
    }
  }
  return result;
}

ParticipantTrialResult participant_result_from_entry(const TrialLogEntry& entry) {
  ParticipantTrialResult result;
  result.variant_id = entry.variant_id;
  result.rep_index = entry.trial_index;
  result.ok = entry.parse_status != ParseStatus::failed;
  if (result.ok && entry.parsed_payload.has_value()) {
    for (const auto& [qid, value] : entry.parsed_payload->at("values").items()) {
      result.values[qid] = answers::OutcomeValue{
          value.at("value").get<double>(),
          answers::schema_kind_from_string(value.at("kind").get<std::string>())};
    }
  }
  return result;
}

// Shared request/parse/retry loop for the goal, variant and instruction
// stages. parse_fn returns an error message or empty on success.
template <typename ParseFn>
void stage_with_retries(const std::string& what, const std::string& prompt,
                        const RunConfig& config, client::ChatProvider& provider,
                        ParseFn&& parse_fn) {
  auto request = client::ChatRequest::single_user(prompt, config.model_id);
  std::string last_error;
  for (int attempt = 0; attempt <= config.max_parse_retries; ++attempt) {
    const auto response = provider.send(request);
    last_error = parse_fn(response.content);
    if (last_error.empty()) {
      return;
    }
  }
  throw StageError(what + ": " + last_error + " (after " +
                   std::to_string(config.max_parse_retries + 1) + " attempts)");
}

}  // namespace

std::string to_string(Mode mode) {
  return mode == Mode::observer ? "observer" : "participant";
}

Mode mode_from_string(const std::string& s) {
  if (s == "observer") return Mode::observer;
  if (s == "participant") return Mode::participant;
  throw ConfigError("unknown mode: " + s);
}

std::string to_string(ParseStatus status) {
  switch (status) {
    case ParseStatus::ok:
      return "ok";
    case ParseStatus::retried_ok:
      return "retried_ok";
    case ParseStatus::failed:
      return "failed";
  }
  return "failed";
}

ParseStatus parse_status_from_string(const std::string& s) {
  if (s == "ok") return ParseStatus::ok;
  if (s == "retried_ok") return ParseStatus::retried_ok;
  if (s == "failed") return ParseStatus::failed;
  throw LogError("unknown parse_status: " + s);
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) {
    throw ConfigError("run config must be a JSON object");
  }
  const std::vector<std::string> allowed = {
      "run_id",          "model_id",    "observer_trials", "participant_reps",
      "concurrency_limit", "master_seed", "shuffle_options", "max_parse_retries",
      "corpus",          "templates_dir", "provider",      "rate_limit",
      "retry"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ConfigError("unknown config field \"" + it.key() + "\"");
    }
  }
  RunConfig config;
  config.run_id = j.value("run_id", config.run_id);
  config.model_id = j.value("model_id", config.model_id);
  config.observer_trials = j.value("observer_trials", config.observer_trials);
  config.participant_reps = j.value("participant_reps", config.participant_reps);
  config.concurrency_limit = j.value("concurrency_limit", config.concurrency_limit);
  if (j.contains("master_seed")) {
    config.master_seed = j["master_seed"].get<uint64_t>();
  }
  config.shuffle_options = j.value("shuffle_options", config.shuffle_options);
  config.max_parse_retries = j.value("max_parse_retries", config.max_parse_retries);
  config.corpus_path = j.value("corpus", config.corpus_path);
  config.templates_dir = j.value("templates_dir", config.templates_dir);
  if (j.contains("provider")) {
    const auto& p = j["provider"];
    config.provider.kind = p.value("kind", config.provider.kind);
    config.provider.base_url = p.value("base_url", config.provider.base_url);
    config.provider.mock_script = p.value("mock_script", config.provider.mock_script);
    if (config.provider.kind != "mock" && config.provider.kind != "remote") {
      throw ConfigError("provider.kind must be \"mock\" or \"remote\"");
    }
  }
  if (j.contains("rate_limit") && !j["rate_limit"].is_null()) {
    RateLimitSpec spec;
    spec.requests = j["rate_limit"].value("requests", 0);
    spec.interval_ms = j["rate_limit"].value("interval_ms", static_cast<uint64_t>(1000));
    config.rate_limit = spec;
  }
  if (j.contains("retry")) {
    const auto& r = j["retry"];
    config.retry.max_attempts = r.value("max_attempts", config.retry.max_attempts);
    config.retry.base_backoff_ms = r.value("base_backoff_ms", config.retry.base_backoff_ms);
    config.retry.backoff_multiplier =
        r.value("backoff_multiplier", config.retry.backoff_multiplier);
    config.retry.backoff_ceiling_ms =
        r.value("backoff_ceiling_ms", config.retry.backoff_ceiling_ms);
  }
  if (config.observer_trials <= 0 || config.participant_reps <= 0 ||
      config.concurrency_limit <= 0 || config.max_parse_retries < 0) {
    throw ConfigError("trial counts and concurrency_limit must be positive");
  }
  return config;
}

nlohmann::json run_config_to_json(const RunConfig& config) {
  json j;
  j["run_id"] = config.run_id;
  j["model_id"] = config.model_id;
  j["observer_trials"] = config.observer_trials;
  j["participant_reps"] = config.participant_reps;
  j["concurrency_limit"] = config.concurrency_limit;
  j["master_seed"] = config.master_seed;
  j["shuffle_options"] = config.shuffle_options;
  j["max_parse_retries"] = config.max_parse_retries;
  j["corpus"] = config.corpus_path;
  j["templates_dir"] = config.templates_dir;
  j["provider"] = {{"kind", config.provider.kind},
                   {"base_url", config.provider.base_url},
                   {"mock_script", config.provider.mock_script}};
  if (config.rate_limit) {
    j["rate_limit"] = {{"requests", config.rate_limit->requests},
                       {"interval_ms", config.rate_limit->interval_ms}};
  }
  j["retry"] = {{"max_attempts", config.retry.max_attempts},
                {"base_backoff_ms", config.retry.base_backoff_ms},
                {"backoff_multiplier", config.retry.backoff_multiplier},
                {"backoff_ceiling_ms", config.retry.backoff_ceiling_ms}};
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(doc);
}

std::string config_hash(const RunConfig& config) {
  // Seed and protocol fields determine prompt bytes and trial identity; the
  // hash covers the whole canonical document.
  return hex64(fnv1a64(run_config_to_json(config).dump()));
}

nlohmann::json entry_to_json(const TrialLogEntry& entry) {
  json j;
  j["kind"] = "trial";
  j["seq"] = entry.seq;
  j["run_id"] = entry.run_id;
  j["paper_id"] = entry.paper_id;
  j["mode"] = to_string(entry.mode);
  if (entry.mode == Mode::participant) {
    j["variant_id"] = entry.variant_id;
  }
  j["trial_index"] = entry.trial_index;
  j["request_prompt"] = entry.request_prompt;
  j["raw_response"] = entry.raw_response;
  j["parse_status"] = to_string(entry.parse_status);
  j["parsed_payload"] = entry.parsed_payload.has_value() ? *entry.parsed_payload : json(nullptr);
  j["timestamp_ms"] = entry.timestamp_ms;
  j["attempt_count"] = entry.attempt_count;
  return j;
}

TrialLogEntry entry_from_json(const json& j) {
  TrialLogEntry entry;
  entry.seq = j.at("seq").get<uint64_t>();
  entry.run_id = j.at("run_id").get<std::string>();
  entry.paper_id = j.at("paper_id").get<std::string>();
  entry.mode = mode_from_string(j.at("mode").get<std::string>());
  entry.variant_id = j.value("variant_id", "");
  entry.trial_index = j.at("trial_index").get<int>();
  entry.request_prompt = j.at("request_prompt").get<std::string>();
  entry.raw_response = j.at("raw_response").get<std::string>();
  entry.parse_status = parse_status_from_string(j.at("parse_status").get<std::string>());
  if (j.contains("parsed_payload") && !j["parsed_payload"].is_null()) {
    entry.parsed_payload = j["parsed_payload"];
  }
  entry.timestamp_ms = j.at("timestamp_ms").get<uint64_t>();
  entry.attempt_count = j.at("attempt_count").get<int>();
  return entry;
}

RunLog read_run_log(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  RunLog log;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) {
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw LogError(path.string() + ":" + std::to_string(line_no) + ": malformed JSONL: " +
                     e.what());
    }
    const std::string kind = j.value("kind", "");
    if (line_no == 1) {
      if (kind != "header") {
        throw LogError(path.string() + ": first line must be the run header");
      }
      log.run_id = j.at("run_id").get<std::string>();
      log.mode = mode_from_string(j.at("mode").get<std::string>());
      log.config_hash = j.at("config_hash").get<std::string>();
      for (const auto& [name, sum] : j.at("template_checksums").items()) {
        log.template_checksums[name] = sum.get<std::string>();
      }
      log.config = j.at("config");
      continue;
    }
    if (kind != "trial") {
      throw LogError(path.string() + ":" + std::to_string(line_no) + ": unexpected line kind");
    }
    log.entries.push_back(entry_from_json(j));
  }
  if (line_no == 0) {
    throw LogError(path.string() + ": empty run log");
  }
  return log;
}

ObserverRun run_observer(const std::vector<corpus::ExperimentRecord>& records,
                         const std::map<std::string, prompts::ObserverPrompt>& observer_prompts,
                         const RunConfig& config, client::ChatProvider& provider, Clock& clock,
                         const std::map<std::string, std::string>& template_checksums,
                         const std::filesystem::path& log_path) {
  std::vector<Task> tasks;
  uint64_t seq = 0;
  for (const auto& record : records) {
    const auto it = observer_prompts.find(record.paper_id);
    if (it == observer_prompts.end()) {
      throw RunnerError("no observer prompt for paper \"" + record.paper_id + "\"");
    }
    for (int t = 0; t < config.observer_trials; ++t) {
      tasks.push_back({seq++, &record, &it->second, nullptr, t});
    }
  }

  size_t done = 0;
  const bool log_exists =
      std::filesystem::exists(log_path) && std::filesystem::file_size(log_path) > 0;
  std::optional<RunLog> existing;
  if (log_exists) {
    existing = read_run_log(log_path);
    done = validate_existing_log(*existing, config, Mode::observer, template_checksums, tasks);
  }
  SequencedLogWriter writer(log_path, done, !log_exists,
                            header_json(config, Mode::observer, template_checksums));
  std::optional<client::RateLimiter> limiter;
  if (config.rate_limit) {
    limiter.emplace(config.rate_limit->requests, config.rate_limit->interval_ms, clock);
  }
  execute_tasks(tasks, done, config, provider, clock, limiter ? &*limiter : nullptr, writer,
                Mode::observer);

  ObserverRun run;
  run.executed = static_cast<int>(tasks.size() - done);
  if (existing) {
    for (const auto& entry : existing->entries) {
      run.by_paper[entry.paper_id].push_back(observer_result_from_entry(entry));
    }
  }
  for (const auto& entry : writer.written()) {
    run.by_paper[entry.paper_id].push_back(observer_result_from_entry(entry));
  }
  return run;
}

ParticipantRun run_participant(
    const std::vector<corpus::ExperimentRecord>& records,
    const std::map<std::string, std::vector<prompts::ParticipantVariant>>& variants_by_paper,
    const RunConfig& config, client::ChatProvider& provider, Clock& clock,
    const std::map<std::string, std::string>& template_checksums,
    const std::filesystem::path& log_path) {
  std::vector<Task> tasks;
  uint64_t seq = 0;
  for (const auto& record : records) {
    const auto it = variants_by_paper.find(record.paper_id);
    if (it == variants_by_paper.end()) {
      throw RunnerError("no participant variants for paper \"" + record.paper_id + "\"");
    }
    // The cross product must be complete before any trial is issued.
    const size_t expected =
        record.treatments.size() * prompts::profile_cells(record).size();
    if (it->second.size() != expected) {
      throw prompts::IncompleteCrossProduct(
          "paper \"" + record.paper_id + "\" has " + std::to_string(it->second.size()) +
          " variants, expected " + std::to_string(expected));
    }
    for (const auto& variant : it->second) {
      for (int rep = 0; rep < config.participant_reps; ++rep) {
        tasks.push_back({seq++, &record, nullptr, &variant, rep});
      }
    }
  }

  size_t done = 0;
  const bool log_exists =
      std::filesystem::exists(log_path) && std::filesystem::file_size(log_path) > 0;
  std::optional<RunLog> existing;
  if (log_exists) {
    existing = read_run_log(log_path);
    done = validate_existing_log(*existing, config, Mode::participant, template_checksums, tasks);
  }
  SequencedLogWriter writer(log_path, done, !log_exists,
                            header_json(config, Mode::participant, template_checksums));
  std::optional<client::RateLimiter> limiter;
  if (config.rate_limit) {
    limiter.emplace(config.rate_limit->requests, config.rate_limit->interval_ms, clock);
  }
  execute_tasks(tasks, done, config, provider, clock, limiter ? &*limiter : nullptr, writer,
                Mode::participant);

  ParticipantRun run;
  run.executed = static_cast<int>(tasks.size() - done);
  if (existing) {
    for (const auto& entry : existing->entries) {
      run.by_paper[entry.paper_id].push_back(participant_result_from_entry(entry));
    }
  }
  for (const auto& entry : writer.written()) {
    run.by_paper[entry.paper_id].push_back(participant_result_from_entry(entry));
  }
  return run;
}

std::map<std::string, std::vector<ObserverTrialResult>> observer_results_from_log(
    const RunLog& log) {
  std::map<std::string, std::vector<ObserverTrialResult>> out;
  for (const auto& entry : log.entries) {
    out[entry.paper_id].push_back(observer_result_from_entry(entry));
  }
  for (auto& [paper, trials] : out) {
    std::sort(trials.begin(), trials.end(),
              [](const ObserverTrialResult& a, const ObserverTrialResult& b) {
                return a.trial_index < b.trial_index;
              });
  }
  return out;
}

std::map<std::string, std::vector<ParticipantTrialResult>> participant_results_from_log(
    const RunLog& log) {
  std::map<std::string, std::vector<ParticipantTrialResult>> out;
  for (const auto& entry : log.entries) {
    out[entry.paper_id].push_back(participant_result_from_entry(entry));
  }
  return out;
}

std::map<std::string, std::string> generate_goals(
    const std::vector<corpus::ExperimentRecord>& records, const RunConfig& config,
    client::ChatProvider& provider, const prompts::TemplateSet& templates) {
  std::map<std::string, std::string> goals;
  for (const auto& record : records) {
    if (record.general_goal.has_value()) {
      continue;  // regeneration skipped when the extraction already has one
    }
    const std::string prompt = prompts::compose_goal_prompt(record, templates);
    stage_with_retries("goal for \"" + record.paper_id + "\"", prompt, config, provider,
                       [&](const std::string& content) -> std::string {
                         const auto parsed = prompts::parse_goal_response(content);
                         if (!parsed.ok()) {
                           return parsed.message;
                         }
                         goals[record.paper_id] = parsed.value->text;
                         return "";
                       });
  }
  return goals;
}

std::map<std::string, std::vector<prompts::ConclusionVariants>> generate_variants(
    const std::vector<corpus::ExperimentRecord>& records, const RunConfig& config,
    client::ChatProvider& provider, const prompts::TemplateSet& templates) {
  std::map<std::string, std::vector<prompts::ConclusionVariants>> out;
  for (const auto& record : records) {
    std::vector<prompts::ConclusionVariants> list;
    for (const auto& finding : record.findings) {
      const std::string prompt = prompts::compose_variant_prompt(finding, templates);
      stage_with_retries(
          "variants for \"" + record.paper_id + "\" conclusion " +
              std::to_string(finding.ordinal),
          prompt, config, provider, [&](const std::string& content) -> std::string {
            const auto parsed = prompts::parse_variant_response(content, finding);
            if (!parsed.ok()) {
              return parsed.message;
            }
            list.push_back(*parsed.value);
            return "";
          });
    }
    out[record.paper_id] = std::move(list);
  }
  return out;
}

std::map<std::string, std::map<std::string, std::string>> generate_instructions(
    const std::vector<corpus::ExperimentRecord>& records, const RunConfig& config,
    client::ChatProvider& provider, const prompts::TemplateSet& templates) {
  std::map<std::string, std::map<std::string, std::string>> out;
  for (const auto& record : records) {
    const auto cells = prompts::profile_cells(record);
    for (const auto& group : record.treatments) {
      for (const auto& cell : cells) {
        const std::string key = prompts::variant_key(group.group_id, cell);
        const std::string prompt =
            prompts::compose_participant_instruction_prompt(record, group, cell, templates);
        stage_with_retries(
            "instructions for \"" + record.paper_id + "\" variant " + key, prompt, config,
            provider, [&](const std::string& content) -> std::string {
              const std::string instruction = trim(content);
              if (instruction.empty()) {
                return "empty instruction";
              }
              const auto hits = prompts::instruction_denylist_hits(instruction);
              if (!hits.empty()) {
                return "instruction contains third-person phrase \"" + hits.front() + "\"";
              }
              out[record.paper_id][key] = instruction;
              return "";
            });
      }
    }
  }
  return out;
}

}  // namespace fieldsim::runner
