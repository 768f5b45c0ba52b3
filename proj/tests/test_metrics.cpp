#include <cmath>

#include "doctest.h"
#include "fieldsim/metrics.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace fieldsim;
using namespace fieldsim::metrics;

namespace {

// Builds trial results with `correct` trials answering the right option for
// every ordinal and the rest answering a wrong one.
std::vector<runner::ObserverTrialResult> trials_with_correct(int correct, int total,
                                                             int ordinal,
                                                             const std::string& right,
                                                             const std::string& wrong) {
  std::vector<runner::ObserverTrialResult> trials;
  for (int i = 0; i < total; ++i) {
    runner::ObserverTrialResult trial;
    trial.trial_index = i;
    trial.ok = true;
    trial.answers[ordinal] = i < correct ? right : wrong;
    trials.push_back(std::move(trial));
  }
  return trials;
}

std::map<int, Verdict> verdicts_from_strings(const std::vector<std::string>& strings) {
  std::map<int, Verdict> verdicts;
  for (size_t i = 0; i < strings.size(); ++i) {
    verdicts[static_cast<int>(i) + 1] = verdict_from_display(strings[i]);
  }
  return verdicts;
}

nlohmann::json load_fixture(const std::string& name) {
  return nlohmann::json::parse(read_text_file(testsupport::data_dir() / name));
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("observer accuracy is correct-count over the fixed trial count") {
  CHECK(accuracy_observer(trials_with_correct(30, 30, 1, "right", "wrong"), 1, "right") ==
        doctest::Approx(1.0));
  const double one_in_thirty =
      accuracy_observer(trials_with_correct(1, 30, 1, "right", "wrong"), 1, "right");
  CHECK(one_in_thirty == doctest::Approx(1.0 / 30.0));
  CHECK(percent_display(one_in_thirty) == "3%");
  const double twenty_six =
      accuracy_observer(trials_with_correct(26, 30, 1, "right", "wrong"), 1, "right");
  CHECK(percent_display(twenty_six) == "87%");
}

TEST_CASE("failed trials count in the denominator and never in the numerator") {
  auto trials = trials_with_correct(10, 10, 1, "right", "wrong");
  for (int i = 0; i < 5; ++i) {
    runner::ObserverTrialResult failed;
    failed.trial_index = 10 + i;
    failed.ok = false;
    trials.push_back(failed);
  }
  CHECK(accuracy_observer(trials, 1, "right") == doctest::Approx(10.0 / 15.0));
}

TEST_CASE("avg_observer is the unweighted mean") {
  CHECK(avg_observer({1.0, 1.0, 1.0, 0.0}) == doctest::Approx(0.75));
  CHECK(percent_display(avg_observer({1.0, 1.0, 1.0, 0.0})) == "75%");
  CHECK(avg_observer({0.0, 0.0, 0.0}) == doctest::Approx(0.0));
  CHECK(avg_observer({1.0, 1.0}) == doctest::Approx(1.0));
}

TEST_CASE("table 2 reproduction: every cell and every Avg(o)") {
  const auto fixture = load_fixture("table2_observer.json");
  const int trials = fixture.at("trials").get<int>();
  std::map<std::string, std::optional<double>> per_paper;

  for (const auto& paper : fixture.at("papers")) {
    std::vector<double> accuracies;
    const auto& counts = paper.at("correct_counts");
    const auto& cells = paper.at("cell_display");
    for (size_t c = 0; c < counts.size(); ++c) {
      const double accuracy = accuracy_observer(
          trials_with_correct(counts[c].get<int>(), trials, 1, "right", "wrong"), 1, "right");
      CHECK(percent_display(accuracy) == cells[c].get<std::string>());
      accuracies.push_back(accuracy);
    }
    const double avg = avg_observer(accuracies);
    CHECK(percent_display(avg) == paper.at("avg_display").get<std::string>());
    per_paper[paper.at("paper_id").get<std::string>()] = avg;
  }

  const auto aggregate = aggregate_corpus(per_paper, corpus::CorpusTag::baseline,
                                          runner::Mode::observer);
  CHECK(aggregate.defined_count == 15);
  // Raw route and display-rounded route straddle the published 66%.
  CHECK(percent_display(aggregate.mean_of_paper_averages) == "66%");
  CHECK(percent_display(aggregate.mean_of_rounded_averages, 1) ==
        fixture.at("rounded_route_mean_display_1dp").get<std::string>());
  CHECK(std::abs(aggregate.mean_of_paper_averages - 0.66) <= 0.01);
}

TEST_CASE("ate direction is the sign of the mean difference") {
  CHECK(ate_direction({1, 1, 1, 0, 1}, {0, 1, 0, 0, 0}) == Sign::positive);
  CHECK(ate_direction({1, 0, 1}, {1, 0, 1}) == Sign::zero);
  CHECK(ate_direction({10, 20}, {25, 25}) == Sign::negative);
  CHECK_THROWS_AS(ate_direction({}, {1.0}), EmptyArm);
  CHECK_THROWS_AS(ate_direction({1.0}, {}), EmptyArm);
}

TEST_CASE("ate direction is antisymmetric under arm swap") {
  uint64_t rng = 99;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a;
    std::vector<double> b;
    const size_t n = 1 + splitmix64_next(rng) % 6;
    const size_t m = 1 + splitmix64_next(rng) % 6;
    for (size_t k = 0; k < n; ++k) a.push_back(static_cast<double>(splitmix64_next(rng) % 7));
    for (size_t k = 0; k < m; ++k) b.push_back(static_cast<double>(splitmix64_next(rng) % 7));
    const Sign forward = ate_direction(a, b);
    const Sign backward = ate_direction(b, a);
    if (forward == Sign::zero) {
      CHECK(backward == Sign::zero);
    } else {
      CHECK(backward != forward);
      CHECK(backward != Sign::zero);
    }
  }
}

TEST_CASE("participant verdicts follow the direction-match rule") {
  auto finding = testsupport::make_record().findings[0];  // direction positive
  CHECK(verdict_participant(Sign::positive, finding) == Verdict::one);
  CHECK(verdict_participant(Sign::negative, finding) == Verdict::zero);
  CHECK(verdict_participant(Sign::zero, finding) == Verdict::zero);

  finding.direction = corpus::Direction::negative;
  CHECK(verdict_participant(Sign::negative, finding) == Verdict::one);
  CHECK(verdict_participant(Sign::positive, finding) == Verdict::zero);

  finding.direction = corpus::Direction::none;
  CHECK(verdict_participant(Sign::zero, finding) == Verdict::one);
  CHECK(verdict_participant(Sign::positive, finding) == Verdict::zero);

  finding.direction = corpus::Direction::positive;
  finding.verifiability = corpus::Verifiability::requires_external_analysis;
  CHECK(verdict_participant(Sign::positive, finding) == Verdict::x);
  CHECK(verdict_participant(Sign::negative, finding) == Verdict::x);
}

TEST_CASE("avg_participant applies the x-exclusion rule") {
  CHECK(*avg_participant(verdicts_from_strings({"0", "0", "1", "x", "0"})) ==
        doctest::Approx(0.25));
  CHECK(*avg_participant(verdicts_from_strings({"1", "1", "x"})) == doctest::Approx(1.0));
  CHECK(*avg_participant(verdicts_from_strings({"0", "0", "x", "1", "1", "1"})) ==
        doctest::Approx(0.60));
  CHECK_FALSE(avg_participant(verdicts_from_strings({"x", "x"})).has_value());
}

TEST_CASE("avg_participant is invariant under extra x verdicts") {
  uint64_t rng = 4242;
  for (int i = 0; i < 100; ++i) {
    std::map<int, Verdict> verdicts;
    const int n = 1 + static_cast<int>(splitmix64_next(rng) % 5);
    for (int k = 1; k <= n; ++k) {
      verdicts[k] = splitmix64_next(rng) % 2 == 0 ? Verdict::one : Verdict::zero;
    }
    const auto base = avg_participant(verdicts);
    auto padded = verdicts;
    for (int k = n + 1; k <= n + 3; ++k) {
      padded[k] = Verdict::x;
    }
    CHECK(*avg_participant(padded) == doctest::Approx(*base));
  }
}

TEST_CASE("table 3 reproduction: every Avg(p) and the 47.9% corpus mean") {
  const auto fixture = load_fixture("table3_participant.json");
  std::map<std::string, std::optional<double>> per_paper;
  for (const auto& paper : fixture.at("papers")) {
    std::vector<std::string> strings;
    for (const auto& v : paper.at("verdicts")) {
      strings.push_back(v.get<std::string>());
    }
    const auto avg = avg_participant(verdicts_from_strings(strings));
    REQUIRE(avg.has_value());
    CHECK(percent_display(*avg) == paper.at("avg_display").get<std::string>());
    per_paper[paper.at("paper_id").get<std::string>()] = avg;
  }
  const auto aggregate = aggregate_corpus(per_paper, corpus::CorpusTag::baseline,
                                          runner::Mode::participant);
  CHECK(percent_display(aggregate.mean_of_paper_averages, 1) ==
        fixture.at("corpus_mean_display_1dp").get<std::string>());
  CHECK(std::abs(aggregate.mean_of_paper_averages - 0.479) <= 0.001);
}

TEST_CASE("table 5 and table 6 post-cutoff means") {
  const auto t5 = load_fixture("table5_observer.json");
  std::map<std::string, std::optional<double>> observer;
  int index = 0;
  for (const auto& avg : t5.at("paper_avgs")) {
    observer["n" + std::to_string(++index)] = avg.get<double>();
  }
  const auto t5_agg = aggregate_corpus(observer, corpus::CorpusTag::post_cutoff,
                                       runner::Mode::observer);
  CHECK(percent_display(t5_agg.mean_of_paper_averages, 1) == "60.2%");
  CHECK(std::abs(t5_agg.mean_of_paper_averages - 0.602) <= 0.001);

  const auto t6 = load_fixture("table6_participant.json");
  std::map<std::string, std::optional<double>> participant;
  for (const auto& paper : t6.at("papers")) {
    std::vector<std::string> strings;
    for (const auto& v : paper.at("verdicts")) {
      strings.push_back(v.get<std::string>());
    }
    const auto avg = avg_participant(verdicts_from_strings(strings));
    REQUIRE(avg.has_value());
    CHECK(percent_display(*avg) == paper.at("avg_display").get<std::string>());
    participant[paper.at("paper_id").get<std::string>()] = avg;
  }
  const auto t6_agg = aggregate_corpus(participant, corpus::CorpusTag::post_cutoff,
                                       runner::Mode::participant);
  CHECK(percent_display(t6_agg.mean_of_paper_averages, 1) == "66.7%");
  CHECK(std::abs(t6_agg.mean_of_paper_averages - 2.0 / 3.0) <= 0.001);
}

TEST_CASE("memorization audit deltas from the published means") {
  CorpusAggregate baseline;
  baseline.corpus_tag = corpus::CorpusTag::baseline;
  baseline.mode = runner::Mode::observer;
  baseline.mean_of_paper_averages = 0.66;
  CorpusAggregate post;
  post.corpus_tag = corpus::CorpusTag::post_cutoff;
  post.mode = runner::Mode::observer;
  post.mean_of_paper_averages = 0.602;

  const auto observer_audit = memorization_audit(baseline, post);
  CHECK(observer_audit.delta_pp == doctest::Approx(-5.8).epsilon(1e-9));

  baseline.mode = runner::Mode::participant;
  post.mode = runner::Mode::participant;
  baseline.mean_of_paper_averages = 0.479;
  post.mean_of_paper_averages = 0.667;
  const auto participant_audit = memorization_audit(baseline, post);
  CHECK(participant_audit.delta_pp == doctest::Approx(18.8).epsilon(1e-9));

  post.mean_of_paper_averages = baseline.mean_of_paper_averages;
  CHECK(memorization_audit(baseline, post).delta_pp == doctest::Approx(0.0));

  post.mode = runner::Mode::observer;
  CHECK_THROWS_AS(memorization_audit(baseline, post), ConfigMismatch);

  post.mode = runner::Mode::participant;
  baseline.config_hash = "aaaa";
  post.config_hash = "bbbb";
  CHECK_THROWS_AS(memorization_audit(baseline, post), ConfigMismatch);
}

TEST_CASE("undefined paper averages are excluded and counted") {
  std::map<std::string, std::optional<double>> per_paper;
  per_paper["a"] = 0.5;
  per_paper["b"] = std::nullopt;
  per_paper["c"] = 1.0;
  const auto aggregate = aggregate_corpus(per_paper, corpus::CorpusTag::baseline,
                                          runner::Mode::participant);
  CHECK(aggregate.defined_count == 2);
  CHECK(aggregate.undefined_count == 1);
  CHECK(aggregate.mean_of_paper_averages == doctest::Approx(0.75));
}

TEST_CASE("score_observer_paper checks the trial count") {
  const auto record = testsupport::make_record();
  const auto prompt = prompts::build_observer_prompt(
      record, testsupport::make_variants(record), 5, testsupport::templates(), true);
  std::vector<runner::ObserverTrialResult> trials;
  for (int i = 0; i < 7; ++i) {
    runner::ObserverTrialResult trial;
    trial.trial_index = i;
    trial.ok = true;
    trial.answers[1] = prompt.answer_key.at(1);
    trial.answers[2] = prompt.answer_key.at(2);
    trials.push_back(std::move(trial));
  }
  CHECK_THROWS_AS(score_observer_paper(record, prompt, trials, 30), MetricsError);
  const auto score = score_observer_paper(record, prompt, trials, 7);
  CHECK(score.avg_o == doctest::Approx(1.0));
}

TEST_CASE("participant scoring respects profile filters and empty arms") {
  auto record = testsupport::make_record();
  record.profile_dimensions = {{"gender", {"female", "male"}}};
  record.findings[0].contrast.profile_filter = {{"gender", "female"}};

  std::map<std::string, std::string> instructions;
  for (const auto& group : record.treatments) {
    for (const auto& cell : prompts::profile_cells(record)) {
      instructions[prompts::variant_key(group.group_id, cell)] = "You take part in the study.";
    }
  }
  const auto variants = prompts::build_participant_variants(record, instructions);

  // Female nudge deposits higher than female control; males reversed. The
  // female-filtered finding must look only at the female cells.
  std::vector<runner::ParticipantTrialResult> trials;
  auto add_trial = [&](const std::string& variant_id, double deposit, double open) {
    runner::ParticipantTrialResult trial;
    trial.variant_id = variant_id;
    trial.rep_index = static_cast<int>(trials.size());
    trial.ok = true;
    trial.values["q_deposit"] = {deposit, answers::SchemaKind::numeric};
    trial.values["q_open"] = {open, answers::SchemaKind::binary};
    trials.push_back(std::move(trial));
  };
  add_trial("control|gender=female", 100, 1);
  add_trial("control|gender=male", 900, 1);
  add_trial("nudge|gender=female", 300, 1);
  add_trial("nudge|gender=male", 100, 1);

  const auto score = score_participant_paper(record, variants, trials);
  CHECK(score.verdicts.at(1) == Verdict::one);  // 300 > 100 among females only
  CHECK(score.verdicts.at(2) == Verdict::one);  // equal retention matches "none"

  // Excluding every treatment-arm rep leaves an empty arm, which reads x.
  std::vector<runner::ParticipantTrialResult> only_control(trials.begin(), trials.begin() + 2);
  const auto empty_arm = score_participant_paper(record, variants, only_control);
  CHECK(empty_arm.verdicts.at(1) == Verdict::x);
  CHECK_FALSE(empty_arm.avg_p.has_value());
}

TEST_CASE("accuracies and averages stay in bounds") {
  uint64_t rng = 1234;
  for (int i = 0; i < 100; ++i) {
    const int total = 1 + static_cast<int>(splitmix64_next(rng) % 40);
    const int correct = static_cast<int>(splitmix64_next(rng) % (total + 1));
    const double accuracy = accuracy_observer(
        trials_with_correct(correct, total, 1, "right", "wrong"), 1, "right");
    CHECK(accuracy >= 0.0);
    CHECK(accuracy <= 1.0);
  }
}

TEST_CASE("scorecards round-trip through JSON") {
  ObserverScore score;
  score.paper_id = "p1";
  score.corpus_tag = corpus::CorpusTag::baseline;
  score.per_conclusion = {{1, 1.0}, {2, 0.5}};
  score.avg_o = 0.75;
  const auto card = scorecard_from_observer({score}, "run1", "hash1");
  const auto j = scorecard_to_json(card);
  const auto back = scorecard_from_json(j);
  CHECK(scorecard_to_json(back) == j);

  ParticipantScore pscore;
  pscore.paper_id = "p2";
  pscore.corpus_tag = corpus::CorpusTag::post_cutoff;
  pscore.verdicts = {{1, Verdict::one}, {2, Verdict::x}};
  pscore.avg_p = 1.0;
  const auto pcard = scorecard_from_participant({pscore}, "run1", "hash1");
  const auto pj = scorecard_to_json(pcard);
  CHECK(scorecard_to_json(scorecard_from_json(pj)) == pj);
}

}  // TEST_SUITE
