#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fieldsim/answers.hpp"
#include "fieldsim/client.hpp"
#include "fieldsim/corpus.hpp"
#include "fieldsim/metrics.hpp"
#include "fieldsim/prompts.hpp"
#include "fieldsim/report.hpp"
#include "fieldsim/runner.hpp"
#include "fieldsim/util.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config_path;
  std::string corpus;
  std::string run_id;
  std::string provider;
  std::string mock_script;
  std::optional<uint64_t> seed;
  bool no_shuffle = false;
  std::string format = "markdown";
  std::string out_dir = "out";
  std::string templates_dir;
  bool force = false;
};

fieldsim::runner::RunConfig make_config(const Options& opt, bool need_corpus = true) {
  fieldsim::runner::RunConfig config;
  if (!opt.config_path.empty()) {
    config = fieldsim::runner::load_run_config(opt.config_path);
  }
  if (!opt.corpus.empty()) config.corpus_path = opt.corpus;
  if (!opt.run_id.empty()) config.run_id = opt.run_id;
  if (!opt.provider.empty()) config.provider.kind = opt.provider;
  if (!opt.mock_script.empty()) config.provider.mock_script = opt.mock_script;
  if (opt.seed.has_value()) config.master_seed = *opt.seed;
  if (opt.no_shuffle) config.shuffle_options = false;
  if (!opt.templates_dir.empty()) config.templates_dir = opt.templates_dir;
  if (need_corpus && config.corpus_path.empty()) {
    throw fieldsim::runner::ConfigError("no corpus given (use --corpus or the config file)");
  }
  return config;
}

std::unique_ptr<fieldsim::client::ChatProvider> make_provider(
    const fieldsim::runner::RunConfig& config, fieldsim::Clock& clock) {
  if (config.provider.kind == "mock") {
    if (config.provider.mock_script.empty()) {
      throw fieldsim::runner::ConfigError(
          "mock provider requires --mock-script or provider.mock_script");
    }
    return fieldsim::client::load_mock_script(config.provider.mock_script);
  }
  if (config.provider.base_url.empty()) {
    throw fieldsim::runner::ConfigError("remote provider requires provider.base_url in config");
  }
  return std::make_unique<fieldsim::client::HttpProvider>(config.provider.base_url, config.retry,
                                                          clock);
}

// Artifacts are only rewritten when the content is unchanged; differing
// content under the same path means upstream inputs changed and needs --force.
void write_artifact(const fs::path& path, const std::string& content, bool force) {
  if (!force && fs::exists(path)) {
    const std::string existing = fieldsim::read_text_file(path);
    if (existing == content) {
      return;
    }
    throw fieldsim::runner::ConfigError("refusing to overwrite " + path.string() +
                                        " with different content (use --force)");
  }
  fieldsim::write_text_file(path, content);
}

std::string format_extension(fieldsim::report::Format format) {
  switch (format) {
    case fieldsim::report::Format::markdown:
      return "md";
    case fieldsim::report::Format::csv:
      return "csv";
    case fieldsim::report::Format::json:
      return "json";
  }
  return "txt";
}

fs::path observer_prompt_path(const Options& opt, const std::string& paper_id) {
  return fs::path(opt.out_dir) / "prompts" / (paper_id + ".observer.json");
}

fs::path participant_prompt_path(const Options& opt, const std::string& paper_id) {
  return fs::path(opt.out_dir) / "prompts" / (paper_id + ".participant.json");
}

fs::path run_log_path(const Options& opt, const std::string& run_id,
                      fieldsim::runner::Mode mode) {
  return fs::path(opt.out_dir) / "runs" /
         (run_id + "." + fieldsim::runner::to_string(mode) + ".jsonl");
}

fs::path scorecard_path(const Options& opt, const std::string& run_id,
                        fieldsim::runner::Mode mode) {
  return fs::path(opt.out_dir) / "scores" /
         (run_id + "." + fieldsim::runner::to_string(mode) + ".json");
}

int cmd_validate(const Options& opt) {
  const auto config = make_config(opt);
  const std::string text = fieldsim::read_text_file(config.corpus_path);
  const auto records = fieldsim::corpus::parse_corpus_json(text, config.corpus_path);

  size_t violation_count = 0;
  for (const auto& record : records) {
    const auto report = fieldsim::corpus::validate_record(record);
    for (const auto& v : report.violations) {
      std::cout << record.paper_id << ": " << v.path << ": " << v.message << "\n";
      ++violation_count;
    }
    for (const auto& w : report.warnings) {
      std::cout << record.paper_id << ": warning: " << w.path << ": " << w.message << "\n";
    }
  }
  std::cout << violation_count << " violations across " << records.size() << " records\n";
  return violation_count == 0 ? 0 : 2;
}

int cmd_goal(const Options& opt) {
  const auto config = make_config(opt);
  const auto records = fieldsim::corpus::load_corpus(config.corpus_path);
  const auto templates = fieldsim::prompts::TemplateSet::load(config.templates_dir);
  fieldsim::SystemClock clock;
  const auto provider = make_provider(config, clock);

  const auto goals = fieldsim::runner::generate_goals(records, config, *provider, templates);
  json doc;
  doc["goals"] = goals;
  write_artifact(fs::path(opt.out_dir) / "goals.json", doc.dump(2) + "\n", opt.force);

  size_t already = 0;
  for (const auto& record : records) {
    if (record.general_goal.has_value()) ++already;
  }
  std::cout << "generated " << goals.size() << " general goals (" << already
            << " records already had one)\n";
  return 0;
}

int cmd_variants(const Options& opt) {
  const auto config = make_config(opt);
  const auto records = fieldsim::corpus::load_corpus(config.corpus_path);
  const auto templates = fieldsim::prompts::TemplateSet::load(config.templates_dir);
  fieldsim::SystemClock clock;
  const auto provider = make_provider(config, clock);

  const auto variants = fieldsim::runner::generate_variants(records, config, *provider, templates);
  json doc;
  doc["variants"] = json::object();
  size_t count = 0;
  for (const auto& [paper_id, list] : variants) {
    json arr = json::array();
    for (const auto& v : list) {
      arr.push_back({{"ordinal", v.finding_ordinal},
                     {"original", v.original},
                     {"reversed", v.reversed},
                     {"non_related", v.non_related}});
      ++count;
    }
    doc["variants"][paper_id] = arr;
  }
  write_artifact(fs::path(opt.out_dir) / "variants.json", doc.dump(2) + "\n", opt.force);
  std::cout << "generated variants for " << count << " conclusions across " << variants.size()
            << " papers\n";
  return 0;
}

std::map<std::string, std::string> load_goals_file(const Options& opt) {
  std::map<std::string, std::string> goals;
  const fs::path path = fs::path(opt.out_dir) / "goals.json";
  if (!fs::exists(path)) {
    return goals;
  }
  const json doc = json::parse(fieldsim::read_text_file(path));
  for (const auto& [paper_id, text] : doc.at("goals").items()) {
    goals[paper_id] = text.get<std::string>();
  }
  return goals;
}

std::map<std::string, std::vector<fieldsim::prompts::ConclusionVariants>> load_variants_file(
    const Options& opt) {
  const fs::path path = fs::path(opt.out_dir) / "variants.json";
  if (!fs::exists(path)) {
    throw fieldsim::runner::ConfigError("missing " + path.string() +
                                        " (run the variants stage first)");
  }
  std::map<std::string, std::vector<fieldsim::prompts::ConclusionVariants>> out;
  const json doc = json::parse(fieldsim::read_text_file(path));
  for (const auto& [paper_id, list] : doc.at("variants").items()) {
    for (const auto& item : list) {
      fieldsim::prompts::ConclusionVariants v;
      v.finding_ordinal = item.at("ordinal").get<int>();
      v.original = item.at("original").get<std::string>();
      v.reversed = item.at("reversed").get<std::string>();
      v.non_related = item.at("non_related").get<std::string>();
      out[paper_id].push_back(std::move(v));
    }
  }
  return out;
}

int cmd_build_prompts(const Options& opt) {
  const auto config = make_config(opt);
  auto records = fieldsim::corpus::load_corpus(config.corpus_path);
  const auto templates = fieldsim::prompts::TemplateSet::load(config.templates_dir);
  const auto goals = load_goals_file(opt);
  const auto variants = load_variants_file(opt);

  // Observer prompts assemble locally from the staged artifacts.
  for (auto& record : records) {
    if (!record.general_goal.has_value()) {
      const auto it = goals.find(record.paper_id);
      if (it == goals.end()) {
        throw fieldsim::runner::ConfigError("no general goal for \"" + record.paper_id +
                                            "\" (run the goal stage first)");
      }
      record.general_goal = it->second;
    }
    const auto vit = variants.find(record.paper_id);
    if (vit == variants.end()) {
      throw fieldsim::runner::ConfigError("no conclusion variants for \"" + record.paper_id +
                                          "\"");
    }
    const uint64_t seed =
        fieldsim::prompts::derive_seed(config.master_seed, {record.paper_id, "observer"});
    const auto prompt = fieldsim::prompts::build_observer_prompt(
        record, vit->second, seed, templates, config.shuffle_options);
    write_artifact(observer_prompt_path(opt, record.paper_id),
                   fieldsim::prompts::observer_prompt_to_json(prompt).dump(2) + "\n", opt.force);
    write_artifact(fs::path(opt.out_dir) / "prompts" / (record.paper_id + ".observer.txt"),
                   prompt.body, opt.force);
  }
  std::cout << "built " << records.size() << " observer prompts\n";

  // Participant instructions need the model (third-person -> second-person).
  std::vector<fieldsim::corpus::ExperimentRecord> participant_records;
  for (const auto& record : records) {
    if (!record.participant_questions.empty()) {
      participant_records.push_back(record);
    }
  }
  if (participant_records.empty()) {
    std::cout << "no records with participant questions; skipped participant prompts\n";
    return 0;
  }
  fieldsim::SystemClock clock;
  const auto provider = make_provider(config, clock);
  const auto instructions =
      fieldsim::runner::generate_instructions(participant_records, config, *provider, templates);
  for (const auto& record : participant_records) {
    const auto built =
        fieldsim::prompts::build_participant_variants(record, instructions.at(record.paper_id));
    write_artifact(participant_prompt_path(opt, record.paper_id),
                   fieldsim::prompts::participant_variants_to_json(built).dump(2) + "\n",
                   opt.force);
    std::string readable;
    for (const auto& variant : built) {
      readable += "=== variant " + variant.variant_id + " ===\n" + variant.prompt_text + "\n";
    }
    write_artifact(fs::path(opt.out_dir) / "prompts" / (record.paper_id + ".participant.txt"),
                   readable, opt.force);
  }
  std::cout << "built participant prompts for " << participant_records.size() << " papers\n";
  return 0;
}

int cmd_run_observer(const Options& opt) {
  const auto config = make_config(opt);
  const auto records = fieldsim::corpus::load_corpus(config.corpus_path);
  const auto templates = fieldsim::prompts::TemplateSet::load(config.templates_dir);
  fieldsim::SystemClock clock;
  const auto provider = make_provider(config, clock);

  std::map<std::string, fieldsim::prompts::ObserverPrompt> prompts;
  for (const auto& record : records) {
    const fs::path path = observer_prompt_path(opt, record.paper_id);
    if (!fs::exists(path)) {
      throw fieldsim::runner::ConfigError("missing " + path.string() +
                                          " (run build-prompts first)");
    }
    prompts[record.paper_id] =
        fieldsim::prompts::observer_prompt_from_json(json::parse(fieldsim::read_text_file(path)));
  }

  const auto run = fieldsim::runner::run_observer(
      records, prompts, config, *provider, clock, templates.checksums(),
      run_log_path(opt, config.run_id, fieldsim::runner::Mode::observer));
  std::cout << "observer run complete: " << run.executed << " trials executed, "
            << (records.size() * static_cast<size_t>(config.observer_trials) -
                static_cast<size_t>(run.executed))
            << " resumed from log\n";
  return 0;
}

int cmd_run_participant(const Options& opt) {
  const auto config = make_config(opt);
  const auto all_records = fieldsim::corpus::load_corpus(config.corpus_path);
  const auto templates = fieldsim::prompts::TemplateSet::load(config.templates_dir);
  fieldsim::SystemClock clock;
  const auto provider = make_provider(config, clock);

  std::vector<fieldsim::corpus::ExperimentRecord> records;
  std::map<std::string, std::vector<fieldsim::prompts::ParticipantVariant>> variants;
  for (const auto& record : all_records) {
    const fs::path path = participant_prompt_path(opt, record.paper_id);
    if (!fs::exists(path)) {
      if (record.participant_questions.empty()) {
        continue;  // observer-only record
      }
      throw fieldsim::runner::ConfigError("missing " + path.string() +
                                          " (run build-prompts first)");
    }
    records.push_back(record);
    variants[record.paper_id] = fieldsim::prompts::participant_variants_from_json(
        json::parse(fieldsim::read_text_file(path)));
  }
  if (records.empty()) {
    throw fieldsim::runner::ConfigError("no records with participant prompts");
  }

  const auto run = fieldsim::runner::run_participant(
      records, variants, config, *provider, clock, templates.checksums(),
      run_log_path(opt, config.run_id, fieldsim::runner::Mode::participant));
  std::cout << "participant run complete: " << run.executed << " trials executed\n";
  return 0;
}

int cmd_score(const Options& opt) {
  const auto config = make_config(opt);
  const auto records = fieldsim::corpus::load_corpus(config.corpus_path);
  bool scored_any = false;

  const fs::path observer_log = run_log_path(opt, config.run_id, fieldsim::runner::Mode::observer);
  if (fs::exists(observer_log)) {
    const auto log = fieldsim::runner::read_run_log(observer_log);
    if (log.entries.empty()) {
      throw fieldsim::runner::LogError(observer_log.string() + ": empty run log");
    }
    const int expected_trials = log.config.at("observer_trials").get<int>();
    const auto results = fieldsim::runner::observer_results_from_log(log);

    std::vector<fieldsim::metrics::ObserverScore> scores;
    for (const auto& record : records) {
      const auto it = results.find(record.paper_id);
      if (it == results.end()) {
        throw fieldsim::runner::LogError("run log has no trials for \"" + record.paper_id + "\"");
      }
      const auto prompt = fieldsim::prompts::observer_prompt_from_json(
          json::parse(fieldsim::read_text_file(observer_prompt_path(opt, record.paper_id))));
      scores.push_back(
          fieldsim::metrics::score_observer_paper(record, prompt, it->second, expected_trials));
    }
    const auto card =
        fieldsim::metrics::scorecard_from_observer(scores, log.run_id, log.config_hash);
    write_artifact(scorecard_path(opt, config.run_id, fieldsim::runner::Mode::observer),
                   fieldsim::metrics::scorecard_to_json(card).dump(2) + "\n", opt.force);
    std::cout << "scored observer run: " << scores.size() << " papers\n";
    scored_any = true;
  }

  const fs::path participant_log =
      run_log_path(opt, config.run_id, fieldsim::runner::Mode::participant);
  if (fs::exists(participant_log)) {
    const auto log = fieldsim::runner::read_run_log(participant_log);
    if (log.entries.empty()) {
      throw fieldsim::runner::LogError(participant_log.string() + ": empty run log");
    }
    const int reps = log.config.at("participant_reps").get<int>();
    const auto results = fieldsim::runner::participant_results_from_log(log);

    std::vector<fieldsim::metrics::ParticipantScore> scores;
    for (const auto& record : records) {
      const fs::path manifest = participant_prompt_path(opt, record.paper_id);
      const auto it = results.find(record.paper_id);
      if (it == results.end()) {
        if (!fs::exists(manifest)) {
          continue;  // observer-only record
        }
        throw fieldsim::runner::LogError("run log has no participant trials for \"" +
                                         record.paper_id + "\"");
      }
      const auto variants = fieldsim::prompts::participant_variants_from_json(
          json::parse(fieldsim::read_text_file(manifest)));
      const size_t expected = variants.size() * static_cast<size_t>(reps);
      if (it->second.size() != expected) {
        throw fieldsim::runner::LogError(
            "paper \"" + record.paper_id + "\" has " + std::to_string(it->second.size()) +
            " participant trials, expected " + std::to_string(expected) +
            " (resume the run first)");
      }
      scores.push_back(fieldsim::metrics::score_participant_paper(record, variants, it->second));
    }
    const auto card =
        fieldsim::metrics::scorecard_from_participant(scores, log.run_id, log.config_hash);
    write_artifact(scorecard_path(opt, config.run_id, fieldsim::runner::Mode::participant),
                   fieldsim::metrics::scorecard_to_json(card).dump(2) + "\n", opt.force);
    std::cout << "scored participant run: " << scores.size() << " papers\n";
    scored_any = true;
  }

  if (!scored_any) {
    throw fieldsim::runner::LogError("no run logs found for run_id \"" + config.run_id + "\"");
  }
  return 0;
}

int cmd_report(const Options& opt) {
  const auto config = make_config(opt, /*need_corpus=*/false);
  const auto format = fieldsim::report::format_from_string(opt.format);
  bool rendered_any = false;
  for (const auto mode :
       {fieldsim::runner::Mode::observer, fieldsim::runner::Mode::participant}) {
    const fs::path path = scorecard_path(opt, config.run_id, mode);
    if (!fs::exists(path)) {
      continue;
    }
    const auto card =
        fieldsim::metrics::scorecard_from_json(json::parse(fieldsim::read_text_file(path)));
    const std::string doc = fieldsim::report::render_mode_table(card, format);
    write_artifact(fs::path(opt.out_dir) / "reports" /
                       (config.run_id + "." + fieldsim::runner::to_string(mode) + "." +
                        format_extension(format)),
                   doc, opt.force);
    std::cout << doc;
    rendered_any = true;
  }
  if (!rendered_any) {
    throw fieldsim::runner::ConfigError("no scorecards found for run_id \"" + config.run_id +
                                        "\" (run score first)");
  }
  return 0;
}

int cmd_audit(const Options& opt) {
  const auto config = make_config(opt, /*need_corpus=*/false);
  const auto format = fieldsim::report::format_from_string(opt.format);
  bool rendered_any = false;
  for (const auto mode :
       {fieldsim::runner::Mode::observer, fieldsim::runner::Mode::participant}) {
    const fs::path path = scorecard_path(opt, config.run_id, mode);
    if (!fs::exists(path)) {
      continue;
    }
    const auto card =
        fieldsim::metrics::scorecard_from_json(json::parse(fieldsim::read_text_file(path)));
    std::map<std::string, std::optional<double>> baseline;
    std::map<std::string, std::optional<double>> post_cutoff;
    for (const auto& paper : card.papers) {
      if (paper.corpus_tag == fieldsim::corpus::CorpusTag::baseline) {
        baseline[paper.paper_id] = paper.average;
      } else {
        post_cutoff[paper.paper_id] = paper.average;
      }
    }
    if (baseline.empty() || post_cutoff.empty()) {
      throw fieldsim::runner::ConfigError(
          "audit requires both baseline and post_cutoff records in run \"" + config.run_id +
          "\" (" + fieldsim::runner::to_string(mode) + ")");
    }
    const auto baseline_agg = fieldsim::metrics::aggregate_corpus(
        baseline, fieldsim::corpus::CorpusTag::baseline, mode, card.config_hash);
    const auto post_agg = fieldsim::metrics::aggregate_corpus(
        post_cutoff, fieldsim::corpus::CorpusTag::post_cutoff, mode, card.config_hash);
    const auto audit = fieldsim::metrics::memorization_audit(baseline_agg, post_agg);
    const std::string doc = fieldsim::report::render_audit(audit, format);
    write_artifact(fs::path(opt.out_dir) / "reports" /
                       (config.run_id + "." + fieldsim::runner::to_string(mode) + ".audit." +
                        format_extension(format)),
                   doc, opt.force);
    std::cout << doc;
    rendered_any = true;
  }
  if (!rendered_any) {
    throw fieldsim::runner::ConfigError("no scorecards found for run_id \"" + config.run_id +
                                        "\" (run score first)");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fieldsim: simulate field experiments with a chat model"};
  app.require_subcommand(1);
  app.fallthrough();

  Options opt;
  app.add_option("--config", opt.config_path, "Run config JSON file");
  app.add_option("--corpus", opt.corpus, "Corpus JSON file (overrides config)");
  app.add_option("--run-id", opt.run_id, "Run identifier (overrides config)");
  app.add_option("--provider", opt.provider, "Provider kind")
      ->check(CLI::IsMember({"remote", "mock"}));
  app.add_option("--mock-script", opt.mock_script, "Mock provider script (JSON)");
  app.add_option("--seed", opt.seed, "Master seed (overrides config)");
  app.add_flag("--no-shuffle", opt.no_shuffle,
               "Present options in fixed order (original first) for strict replication");
  app.add_option("--format", opt.format, "Report format: markdown, csv or json");
  app.add_option("--out", opt.out_dir, "Output directory (default: out)");
  app.add_option("--templates", opt.templates_dir, "Template directory (default: templates)");
  app.add_flag("--force", opt.force, "Overwrite artifacts whose content changed");

  auto* validate = app.add_subcommand("validate", "Check a corpus against the schema invariants");
  auto* goal = app.add_subcommand("goal", "Generate missing general goals via the model");
  auto* variants =
      app.add_subcommand("variants", "Generate reversed/non-related conclusion variants");
  auto* build_prompts =
      app.add_subcommand("build-prompts", "Assemble observer and participant prompts");
  auto* run_observer = app.add_subcommand("run-observer", "Run the observer trial protocol");
  auto* run_participant =
      app.add_subcommand("run-participant", "Run the participant trial protocol");
  auto* score = app.add_subcommand("score", "Score run logs into scorecards");
  auto* report = app.add_subcommand("report", "Render per-mode result tables");
  auto* audit = app.add_subcommand("audit", "Baseline vs post-cutoff memorization audit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (validate->parsed()) return cmd_validate(opt);
    if (goal->parsed()) return cmd_goal(opt);
    if (variants->parsed()) return cmd_variants(opt);
    if (build_prompts->parsed()) return cmd_build_prompts(opt);
    if (run_observer->parsed()) return cmd_run_observer(opt);
    if (run_participant->parsed()) return cmd_run_participant(opt);
    if (score->parsed()) return cmd_score(opt);
    if (report->parsed()) return cmd_report(opt);
    if (audit->parsed()) return cmd_audit(opt);
  } catch (const fieldsim::runner::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const fieldsim::runner::LogError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const fieldsim::runner::RunAborted& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const fieldsim::runner::RunnerError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fieldsim::client::ClientError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const fieldsim::corpus::CorpusError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fieldsim::prompts::PromptError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fieldsim::metrics::ConfigMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fieldsim::metrics::MetricsError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const fieldsim::report::ReportError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fieldsim::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
