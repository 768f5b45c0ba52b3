#include "fieldsim/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace fieldsim::report {

namespace {

using metrics::PaperScore;
using metrics::ScoreCard;

// RFC 4180 quoting: quote when the field contains a comma, quote or newline.
std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) {
    return value;
  }
  std::string quoted = "\"";
  for (char c : value) {
    if (c == '"') {
      quoted += "\"\"";
    } else {
      quoted += c;
    }
  }
  quoted += "\"";
  return quoted;
}

std::string csv_row(const std::vector<std::string>& fields) {
  std::vector<std::string> quoted;
  quoted.reserve(fields.size());
  for (const auto& field : fields) {
    quoted.push_back(csv_field(field));
  }
  return join(quoted, ",") + "\n";
}

std::string markdown_row(const std::vector<std::string>& fields) {
  return "| " + join(fields, " | ") + " |\n";
}

int max_ordinal(const ScoreCard& card) {
  int max = 0;
  for (const auto& paper : card.papers) {
    if (!paper.accuracies.empty()) {
      max = std::max(max, paper.accuracies.rbegin()->first);
    }
    if (!paper.verdicts.empty()) {
      max = std::max(max, paper.verdicts.rbegin()->first);
    }
  }
  return max;
}

void check_mode_consistency(const ScoreCard& card) {
  for (const auto& paper : card.papers) {
    const bool observer_data = !paper.accuracies.empty();
    const bool participant_data = !paper.verdicts.empty();
    if (card.mode == runner::Mode::observer && (participant_data || !observer_data)) {
      throw MixedModes("paper \"" + paper.paper_id + "\" does not carry observer scores");
    }
    if (card.mode == runner::Mode::participant && (observer_data || !participant_data)) {
      throw MixedModes("paper \"" + paper.paper_id + "\" does not carry participant verdicts");
    }
  }
}

std::string cell(const PaperScore& paper, int ordinal, runner::Mode mode) {
  if (mode == runner::Mode::observer) {
    const auto it = paper.accuracies.find(ordinal);
    return it == paper.accuracies.end() ? "" : metrics::percent_display(it->second);
  }
  const auto it = paper.verdicts.find(ordinal);
  return it == paper.verdicts.end() ? "" : metrics::verdict_display(it->second);
}

std::string avg_cell(const PaperScore& paper) {
  return paper.average.has_value() ? metrics::percent_display(*paper.average) : "-";
}

std::string format_pp(double pp) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%+.1f pp", pp);
  return std::string(buffer);
}

std::string mean_display(const metrics::CorpusAggregate& aggregate) {
  return metrics::percent_display(aggregate.mean_of_paper_averages, 1);
}

}  // namespace

Format format_from_string(const std::string& s) {
  if (s == "markdown" || s == "md") return Format::markdown;
  if (s == "csv") return Format::csv;
  if (s == "json") return Format::json;
  throw ReportError("unknown format \"" + s + "\" (expected markdown, csv or json)");
}

std::string render_mode_table(const ScoreCard& card, Format format) {
  check_mode_consistency(card);
  const int columns = max_ordinal(card);
  const std::string avg_label = card.mode == runner::Mode::observer ? "Avg (o)" : "Avg (p)";

  std::vector<std::string> header = {"No.", "Paper"};
  for (int c = 1; c <= columns; ++c) {
    header.push_back("C" + std::to_string(c));
  }
  header.push_back(avg_label);

  std::vector<std::vector<std::string>> rows;
  int row_number = 0;
  for (const auto& paper : card.papers) {
    std::vector<std::string> row = {std::to_string(++row_number), paper.paper_id};
    for (int c = 1; c <= columns; ++c) {
      row.push_back(cell(paper, c, card.mode));
    }
    row.push_back(avg_cell(paper));
    rows.push_back(std::move(row));
  }

  switch (format) {
    case Format::csv: {
      std::string out = csv_row(header);
      for (const auto& row : rows) {
        out += csv_row(row);
      }
      return out;
    }
    case Format::markdown: {
      std::string out = markdown_row(header);
      std::vector<std::string> rule(header.size(), "---");
      out += markdown_row(rule);
      for (const auto& row : rows) {
        out += markdown_row(row);
      }
      return out;
    }
    case Format::json:
      return metrics::scorecard_to_json(card).dump(2) + "\n";
  }
  throw ReportError("unhandled format");
}

std::string render_audit(const metrics::AuditReport& report, Format format) {
  const std::string mode = runner::to_string(report.mode);
  const bool no_change = report.delta_pp == 0.0;

  if (format == Format::json) {
    nlohmann::json j;
    j["mode"] = mode;
    j["baseline"] = {{"mean", report.baseline.mean_of_paper_averages},
                     {"mean_of_rounded", report.baseline.mean_of_rounded_averages},
                     {"defined_count", report.baseline.defined_count},
                     {"undefined_count", report.baseline.undefined_count},
                     {"per_paper", report.baseline.per_paper}};
    j["post_cutoff"] = {{"mean", report.post_cutoff.mean_of_paper_averages},
                        {"mean_of_rounded", report.post_cutoff.mean_of_rounded_averages},
                        {"defined_count", report.post_cutoff.defined_count},
                        {"undefined_count", report.post_cutoff.undefined_count},
                        {"per_paper", report.post_cutoff.per_paper}};
    j["delta_pp"] = report.delta_pp;
    j["no_change"] = no_change;
    return j.dump(2) + "\n";
  }

  if (format == Format::csv) {
    std::string out = csv_row({"mode", "corpus", "paper_id", "average"});
    for (const auto& [paper_id, average] : report.baseline.per_paper) {
      out += csv_row({mode, "baseline", paper_id, metrics::percent_display(average, 1)});
    }
    for (const auto& [paper_id, average] : report.post_cutoff.per_paper) {
      out += csv_row({mode, "post_cutoff", paper_id, metrics::percent_display(average, 1)});
    }
    out += csv_row({mode, "summary",
                    mean_display(report.baseline) + " -> " + mean_display(report.post_cutoff),
                    no_change ? "no change" : format_pp(report.delta_pp)});
    return out;
  }

  std::string out = "# Memorization audit (" + mode + ")\n\n";
  out += mode + " " + mean_display(report.baseline) + " -> " + mean_display(report.post_cutoff) +
         " (" + (no_change ? "no change" : format_pp(report.delta_pp)) + ")\n\n";
  out += "| corpus | paper | average |\n| --- | --- | --- |\n";
  for (const auto& [paper_id, average] : report.baseline.per_paper) {
    out += "| baseline | " + paper_id + " | " + metrics::percent_display(average, 1) + " |\n";
  }
  for (const auto& [paper_id, average] : report.post_cutoff.per_paper) {
    out += "| post_cutoff | " + paper_id + " | " + metrics::percent_display(average, 1) + " |\n";
  }
  if (report.baseline.undefined_count > 0 || report.post_cutoff.undefined_count > 0) {
    out += "\nExcluded papers with undefined averages: baseline " +
           std::to_string(report.baseline.undefined_count) + ", post_cutoff " +
           std::to_string(report.post_cutoff.undefined_count) + "\n";
  }
  return out;
}

}  // namespace fieldsim::report
