#pragma once

// Scores an evaluation corpus, calibrates one threshold per scene from that
// scene's normal videos, and computes frame- and event-level metrics.

#include <map>
#include <string>
#include <vector>

#include "zsad/inference.hpp"
#include "zsad/manifest.hpp"
#include "zsad/metrics.hpp"

namespace zsad {

struct EvalOptions {
  ScoringConfig scoring;
  double target_fpr = 0.05;
  double min_duration_s = 0.5;
  /// Replace every frame score by its ground-truth label (plumbing check).
  bool oracle_scores = false;
};

struct VideoResult {
  std::string video_id;
  std::string scene_id;
  Label label = Label::normal;
  std::vector<AnomalyAnnotation> annotations;
  double fps = 10.0;
  ScoreTrace trace;
  std::vector<double> frame_scores;
  std::vector<int> frame_labels;
  std::vector<FlaggedEvent> events;
  double average_precision = -1.0;  // -1 when the video has no positive frame
  double delay_s = -1.0;            // -1 for normal videos
};

struct MetricReport {
  double roc_auc = 0.0;
  double pr_auc = 0.0;
  double f1 = 0.0;
  double map = 0.0;  // per-video average precision, averaged over videos
  double mean_detection_delay_s = 0.0;
  std::size_t map_included = 0;
  std::size_t map_excluded = 0;
  std::vector<VideoResult> videos;
  std::map<std::string, SceneThreshold> thresholds;
  /// Pooled frame scores (each shifted by its scene threshold) and labels.
  LabeledScores pooled;
};

/// Frame f is positive when it lies inside any annotation.
std::vector<int> frame_labels(const std::vector<AnomalyAnnotation>& annotations, std::size_t frame_count);

MetricReport evaluate(const Model& model, const std::vector<CorpusRecord>& corpus, const EvalOptions& options);

}  // namespace zsad
