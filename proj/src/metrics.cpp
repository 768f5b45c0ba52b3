#include "fieldsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace fieldsim::metrics {

namespace {

using nlohmann::json;

double mean(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  return sum / static_cast<double>(values.size());
}

// Profile filters select variants cell-wise; an empty filter matches all.
bool profile_matches(const std::map<std::string, std::string>& filter,
                     const std::map<std::string, std::string>& profile) {
  for (const auto& [dim, value] : filter) {
    const auto it = profile.find(dim);
    if (it == profile.end() || it->second != value) {
      return false;
    }
  }
  return true;
}

}  // namespace

std::string to_string(Sign sign) {
  switch (sign) {
    case Sign::positive:
      return "positive";
    case Sign::negative:
      return "negative";
    case Sign::zero:
      return "zero";
  }
  return "zero";
}

std::string verdict_display(Verdict verdict) {
  switch (verdict) {
    case Verdict::one:
      return "1";
    case Verdict::zero:
      return "0";
    case Verdict::x:
      return "x";
  }
  return "x";
}

Verdict verdict_from_display(const std::string& s) {
  if (s == "1") return Verdict::one;
  if (s == "0") return Verdict::zero;
  if (s == "x") return Verdict::x;
  throw MetricsError("unknown verdict \"" + s + "\"");
}

double accuracy_observer(const std::vector<runner::ObserverTrialResult>& trials, int ordinal,
                         const std::string& correct_option) {
  if (trials.empty()) {
    throw MetricsError("accuracy_observer requires at least one trial");
  }
  int correct = 0;
  for (const auto& trial : trials) {
    if (!trial.ok) {
      continue;  // counted in the denominator only
    }
    const auto it = trial.answers.find(ordinal);
    if (it != trial.answers.end() && it->second == correct_option) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(trials.size());
}

double avg_observer(const std::vector<double>& per_conclusion) {
  if (per_conclusion.empty()) {
    throw MetricsError("avg_observer requires at least one accuracy");
  }
  return mean(per_conclusion);
}

Sign ate_direction(const std::vector<double>& treatment_values,
                   const std::vector<double>& control_values) {
  if (treatment_values.empty()) {
    throw EmptyArm("treatment arm has no decodable reps");
  }
  if (control_values.empty()) {
    throw EmptyArm("control arm has no decodable reps");
  }
  // Cross-multiplied difference avoids one division per arm.
  double treatment_sum = 0.0;
  double control_sum = 0.0;
  for (double v : treatment_values) treatment_sum += v;
  for (double v : control_values) control_sum += v;
  const double diff = treatment_sum * static_cast<double>(control_values.size()) -
                      control_sum * static_cast<double>(treatment_values.size());
  if (diff > 0.0) return Sign::positive;
  if (diff < 0.0) return Sign::negative;
  return Sign::zero;
}

Verdict verdict_participant(Sign sign, const corpus::Finding& finding) {
  if (finding.verifiability == corpus::Verifiability::requires_external_analysis) {
    return Verdict::x;
  }
  switch (finding.direction) {
    case corpus::Direction::positive:
      return sign == Sign::positive ? Verdict::one : Verdict::zero;
    case corpus::Direction::negative:
      return sign == Sign::negative ? Verdict::one : Verdict::zero;
    case corpus::Direction::none:
      return sign == Sign::zero ? Verdict::one : Verdict::zero;
    case corpus::Direction::nondirectional:
      // An ATE sign can neither confirm nor reject a nondirectional claim.
      return Verdict::x;
  }
  return Verdict::x;
}

std::optional<double> avg_participant(const std::map<int, Verdict>& verdicts) {
  if (verdicts.empty()) {
    throw MetricsError("avg_participant requires at least one verdict");
  }
  int ones = 0;
  int zeros = 0;
  for (const auto& [ordinal, verdict] : verdicts) {
    if (verdict == Verdict::one) ++ones;
    if (verdict == Verdict::zero) ++zeros;
  }
  if (ones + zeros == 0) {
    return std::nullopt;
  }
  return static_cast<double>(ones) / static_cast<double>(ones + zeros);
}

ObserverScore score_observer_paper(const corpus::ExperimentRecord& record,
                                   const prompts::ObserverPrompt& prompt,
                                   const std::vector<runner::ObserverTrialResult>& trials,
                                   int expected_trials) {
  if (static_cast<int>(trials.size()) != expected_trials) {
    throw MetricsError("paper \"" + record.paper_id + "\" has " +
                       std::to_string(trials.size()) + " trials, expected " +
                       std::to_string(expected_trials));
  }
  ObserverScore score;
  score.paper_id = record.paper_id;
  score.corpus_tag = record.corpus_tag;
  for (const auto& trial : trials) {
    if (!trial.ok) {
      ++score.failed_trials;
    }
  }
  std::vector<double> accuracies;
  for (const auto& [ordinal, correct_option] : prompt.answer_key) {
    const double accuracy = accuracy_observer(trials, ordinal, correct_option);
    score.per_conclusion[ordinal] = accuracy;
    accuracies.push_back(accuracy);
  }
  score.avg_o = avg_observer(accuracies);
  return score;
}

ParticipantScore score_participant_paper(
    const corpus::ExperimentRecord& record,
    const std::vector<prompts::ParticipantVariant>& variants,
    const std::vector<runner::ParticipantTrialResult>& trials) {
  std::map<std::string, const prompts::ParticipantVariant*> by_id;
  for (const auto& variant : variants) {
    by_id[variant.variant_id] = &variant;
  }

  ParticipantScore score;
  score.paper_id = record.paper_id;
  score.corpus_tag = record.corpus_tag;
  for (const auto& trial : trials) {
    if (!trial.ok) {
      ++score.failed_reps;
    }
  }

  // Arm values for one finding: decodable reps of every variant in the
  // contrast group matching the profile filter, pooled over the finding's
  // questions.
  auto arm_values = [&](const std::string& group_id, const corpus::Finding& finding) {
    std::vector<double> values;
    for (const auto& trial : trials) {
      if (!trial.ok) {
        continue;
      }
      const auto vit = by_id.find(trial.variant_id);
      if (vit == by_id.end() || vit->second->group_id != group_id) {
        continue;
      }
      if (!profile_matches(finding.contrast.profile_filter, vit->second->profile)) {
        continue;
      }
      for (const auto& qid : finding.question_ids) {
        const auto qit = trial.values.find(qid);
        if (qit != trial.values.end()) {
          values.push_back(qit->second.value);
        }
      }
    }
    return values;
  };

  for (const auto& finding : record.findings) {
    if (finding.verifiability == corpus::Verifiability::requires_external_analysis ||
        finding.question_ids.empty()) {
      score.verdicts[finding.ordinal] = Verdict::x;
      continue;
    }
    try {
      const Sign sign = ate_direction(arm_values(finding.contrast.treatment_group, finding),
                                      arm_values(finding.contrast.control_group, finding));
      score.verdicts[finding.ordinal] = verdict_participant(sign, finding);
    } catch (const EmptyArm&) {
      score.verdicts[finding.ordinal] = Verdict::x;
    }
  }
  score.avg_p = avg_participant(score.verdicts);
  return score;
}

CorpusAggregate aggregate_corpus(const std::map<std::string, std::optional<double>>& per_paper,
                                 corpus::CorpusTag tag, runner::Mode mode,
                                 const std::string& config_hash) {
  CorpusAggregate aggregate;
  aggregate.corpus_tag = tag;
  aggregate.mode = mode;
  aggregate.config_hash = config_hash;
  double raw_sum = 0.0;
  double rounded_sum = 0.0;
  for (const auto& [paper_id, average] : per_paper) {
    if (!average.has_value()) {
      ++aggregate.undefined_count;
      continue;
    }
    aggregate.per_paper[paper_id] = *average;
    raw_sum += *average;
    rounded_sum += std::round(*average * 100.0) / 100.0;
    ++aggregate.defined_count;
  }
  if (aggregate.defined_count > 0) {
    aggregate.mean_of_paper_averages = raw_sum / aggregate.defined_count;
    aggregate.mean_of_rounded_averages = rounded_sum / aggregate.defined_count;
  }
  return aggregate;
}

AuditReport memorization_audit(const CorpusAggregate& baseline,
                               const CorpusAggregate& post_cutoff) {
  if (baseline.mode != post_cutoff.mode) {
    throw ConfigMismatch("audit compares different modes (" + to_string(baseline.mode) +
                         " vs " + to_string(post_cutoff.mode) + ")");
  }
  if (!baseline.config_hash.empty() && !post_cutoff.config_hash.empty() &&
      baseline.config_hash != post_cutoff.config_hash) {
    throw ConfigMismatch("audit compares aggregates scored under different configs");
  }
  AuditReport report;
  report.mode = baseline.mode;
  report.baseline = baseline;
  report.post_cutoff = post_cutoff;
  report.delta_pp =
      (post_cutoff.mean_of_paper_averages - baseline.mean_of_paper_averages) * 100.0;
  return report;
}

std::string percent_display(double fraction, int decimals) {
  const double percent = fraction * 100.0;
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.*f%%", decimals, percent);
  return std::string(buffer);
}

ScoreCard scorecard_from_observer(const std::vector<ObserverScore>& scores,
                                  const std::string& run_id, const std::string& config_hash) {
  ScoreCard card;
  card.mode = runner::Mode::observer;
  card.run_id = run_id;
  card.config_hash = config_hash;
  for (const auto& score : scores) {
    PaperScore paper;
    paper.paper_id = score.paper_id;
    paper.corpus_tag = score.corpus_tag;
    paper.accuracies = score.per_conclusion;
    paper.average = score.avg_o;
    paper.failed_trials = score.failed_trials;
    card.papers.push_back(std::move(paper));
  }
  return card;
}

ScoreCard scorecard_from_participant(const std::vector<ParticipantScore>& scores,
                                     const std::string& run_id, const std::string& config_hash) {
  ScoreCard card;
  card.mode = runner::Mode::participant;
  card.run_id = run_id;
  card.config_hash = config_hash;
  for (const auto& score : scores) {
    PaperScore paper;
    paper.paper_id = score.paper_id;
    paper.corpus_tag = score.corpus_tag;
    paper.verdicts = score.verdicts;
    paper.average = score.avg_p;
    paper.failed_trials = score.failed_reps;
    card.papers.push_back(std::move(paper));
  }
  return card;
}

nlohmann::json scorecard_to_json(const ScoreCard& card) {
  json j;
  j["mode"] = to_string(card.mode);
  j["run_id"] = card.run_id;
  j["config_hash"] = card.config_hash;
  j["papers"] = json::array();
  for (const auto& paper : card.papers) {
    json p;
    p["paper_id"] = paper.paper_id;
    p["corpus_tag"] = corpus::to_string(paper.corpus_tag);
    if (card.mode == runner::Mode::observer) {
      json accuracies = json::object();
      for (const auto& [ordinal, accuracy] : paper.accuracies) {
        accuracies[std::to_string(ordinal)] = accuracy;
      }
      p["per_conclusion"] = accuracies;
    } else {
      json verdicts = json::object();
      for (const auto& [ordinal, verdict] : paper.verdicts) {
        verdicts[std::to_string(ordinal)] = verdict_display(verdict);
      }
      p["verdicts"] = verdicts;
    }
    p["average"] = paper.average.has_value() ? json(*paper.average) : json(nullptr);
    p["failed_trials"] = paper.failed_trials;
    j["papers"].push_back(std::move(p));
  }
  return j;
}

ScoreCard scorecard_from_json(const nlohmann::json& j) {
  ScoreCard card;
  card.mode = runner::mode_from_string(j.at("mode").get<std::string>());
  card.run_id = j.value("run_id", "");
  card.config_hash = j.value("config_hash", "");
  for (const auto& p : j.at("papers")) {
    PaperScore paper;
    paper.paper_id = p.at("paper_id").get<std::string>();
    const std::string tag = p.at("corpus_tag").get<std::string>();
    if (tag == "baseline") {
      paper.corpus_tag = corpus::CorpusTag::baseline;
    } else if (tag == "post_cutoff") {
      paper.corpus_tag = corpus::CorpusTag::post_cutoff;
    } else {
      throw MetricsError("unknown corpus_tag \"" + tag + "\"");
    }
    if (p.contains("per_conclusion")) {
      for (const auto& [ordinal, accuracy] : p.at("per_conclusion").items()) {
        paper.accuracies[std::stoi(ordinal)] = accuracy.get<double>();
      }
    }
    if (p.contains("verdicts")) {
      for (const auto& [ordinal, verdict] : p.at("verdicts").items()) {
        paper.verdicts[std::stoi(ordinal)] = verdict_from_display(verdict.get<std::string>());
      }
    }
    if (p.contains("average") && !p["average"].is_null()) {
      paper.average = p["average"].get<double>();
    }
    paper.failed_trials = p.value("failed_trials", 0);
    card.papers.push_back(std::move(paper));
  }
  return card;
}

}  // namespace fieldsim::metrics
