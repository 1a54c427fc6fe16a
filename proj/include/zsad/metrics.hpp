#pragma once

#include <vector>

#include "zsad/scene.hpp"

namespace zsad {

struct LabeledScores {
  std::vector<double> scores;
  std::vector<int> labels;  // 0 or 1

  std::size_t positives() const;
  std::size_t negatives() const { return labels.size() - positives(); }
};

/// Mann-Whitney statistic P(pos > neg) + ½P(tie). Needs both classes.
double roc_auc(const LabeledScores& data);

/// Step-interpolated average precision: thresholds are swept from the top
/// score down, tied scores entering together, and each step adds
/// Δrecall × precision.
double pr_auc(const LabeledScores& data);

/// F1 with predicted positive = score > theta; 0 when nothing is predicted.
double f1_at(const LabeledScores& data, double theta);

struct MapResult {
  double map = 0.0;
  std::size_t included = 0;
  std::size_t excluded = 0;  // videos without positive frames
};
/// Mean per-video average precision, skipping videos with no positives.
MapResult map_over_videos(const std::vector<LabeledScores>& per_video);

struct FlaggedEvent {
  double onset_s = 0.0;
  double offset_s = 0.0;
};

/// Mean over true events of the delay to the earliest flag overlapping the
/// event, max(0, flag onset − event onset). A missed event costs its duration.
double detection_delay(const std::vector<FlaggedEvent>& flagged, const std::vector<AnomalyAnnotation>& truth,
                       double fps);

/// Per-event delays (same rule), for reports.
std::vector<double> event_delays(const std::vector<FlaggedEvent>& flagged, const std::vector<AnomalyAnnotation>& truth,
                                 double fps);

}  // namespace zsad
