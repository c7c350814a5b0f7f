#pragma once

// Run artifact export (CSV time series or a single JSON document plus a JSON
// summary) and re-import for post-processing.

#include <string>

#include "mgrid/engine.hpp"

namespace mgrid {

enum class ExportFormat { kCsv, kJson };

ExportFormat parse_export_format(const std::string& name);

struct ExportOptions {
  ExportFormat format = ExportFormat::kCsv;
  int stride = 1;  // keep every stride-th step; the last step is always kept
};

/// Writes into `dir` (created if missing):
///   csv:  states.csv, outputs.csv, frames.csv, residuals_<j>_<i>.csv
///   json: traces.json
/// and in both cases summary.json and events.csv. DGU ids in file names and
/// column names are 1-based.
void export_run(const RunArtifact& artifact, const std::string& dir,
                const ExportOptions& options = {});

std::string summary_to_json(const RunSummary& summary);
RunSummary summary_from_json(const std::string& text);

/// Reads a directory written by export_run back into an artifact.
RunArtifact load_run(const std::string& dir);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace mgrid
