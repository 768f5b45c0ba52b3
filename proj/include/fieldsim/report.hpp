#pragma once

#include <string>

#include "fieldsim/metrics.hpp"
#include "fieldsim/util.hpp"

namespace fieldsim::report {

struct ReportError : Error {
  using Error::Error;
};
// Scores from different modes in one table.
struct MixedModes : ReportError {
  using ReportError::ReportError;
};

enum class Format { markdown, csv, json };
Format format_from_string(const std::string& s);

// One row per paper, columns C1..Cmax (blank where a paper has fewer
// conclusions), observer cells as whole percents, participant cells as
// 1/0/x, and the Avg column taken verbatim from the scorecard.
std::string render_mode_table(const metrics::ScoreCard& card, Format format);

// Baseline vs post-cutoff means, delta in percentage points, per-paper rows.
std::string render_audit(const metrics::AuditReport& report, Format format);

}  // namespace fieldsim::report
