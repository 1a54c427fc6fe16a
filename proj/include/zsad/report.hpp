#pragma once

// Report files: metric CSV and table, per-video breakdown, score traces and
// SVG plots.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "zsad/evaluation.hpp"

namespace zsad {

/// Column order of report.csv.
const std::vector<std::string>& report_columns();

void write_report_csv(const std::filesystem::path& path, const MetricReport& report);
std::string render_report_table(const MetricReport& report);
void write_video_csv(const std::filesystem::path& path, const MetricReport& report);

using Curve = std::vector<std::pair<double, double>>;
/// (false-positive rate, true-positive rate), tied scores entering together.
Curve roc_curve(const LabeledScores& data);
/// (recall, precision) after each tie group.
Curve pr_curve(const LabeledScores& data);

std::string svg_trace(const VideoResult& video, double theta);
std::string svg_curve(const Curve& curve, const std::string& title, const std::string& x_label,
                      const std::string& y_label, bool diagonal);

/// report.csv, report.txt, videos.csv, traces/<video>.csv, plots/<video>.svg,
/// plots/roc.svg and plots/pr.svg under dir.
void write_eval_outputs(const std::filesystem::path& dir, const MetricReport& report);

struct AblationRow {
  std::string variant;
  bool ok = false;
  double roc_auc = 0.0;
  double pr_auc = 0.0;
  std::vector<std::pair<std::string, std::string>> echo;  // the toggles the variant sets
  std::string error;
};

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);
std::string render_ablation_table(const std::vector<AblationRow>& rows);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace zsad
