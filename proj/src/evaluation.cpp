#include "zsad/evaluation.hpp"

#include "zsad/parallel.hpp"

namespace zsad {

std::vector<int> frame_labels(const std::vector<AnomalyAnnotation>& annotations, std::size_t frame_count) {
  std::vector<int> out(frame_count, 0);
  for (const auto& a : annotations) {
    for (std::int64_t f = std::max<std::int64_t>(0, a.onset_frame);
         f < a.offset_frame && f < static_cast<std::int64_t>(frame_count); ++f) {
      out[static_cast<std::size_t>(f)] = 1;
    }
  }
  return out;
}

MetricReport evaluate(const Model& model, const std::vector<CorpusRecord>& corpus, const EvalOptions& options) {
  if (corpus.empty()) throw Error("evaluation corpus is empty");
  MetricReport report;
  report.videos.resize(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    const CorpusRecord& r = corpus[i];
    const GeneratedVideo g = regenerate(r);
    VideoResult& v = report.videos[i];
    v.video_id = r.entry.video_id;
    v.scene_id = r.spec.scene_id;
    v.label = r.entry.label;
    v.annotations = r.annotations;
    v.fps = r.fps;
    v.trace = score_stream(model, g.video, v.scene_id, options.scoring);
    v.frame_labels = frame_labels(r.annotations, g.video.frame_count());
    v.frame_scores = frame_scores(v.trace, g.video.frame_count(), r.fps);
    if (options.oracle_scores) {
      for (std::size_t f = 0; f < v.frame_scores.size(); ++f) v.frame_scores[f] = v.frame_labels[f];
    }
  });

  // Thresholds come from each scene's normal videos only.
  std::map<std::string, std::vector<ScoreTrace>> normal;
  for (const auto& v : report.videos) {
    if (v.label == Label::normal) normal[v.scene_id].push_back(v.trace);
  }
  for (const auto& v : report.videos) {
    if (report.thresholds.count(v.scene_id)) continue;
    auto it = normal.find(v.scene_id);
    if (it == normal.end()) throw Error("scene " + v.scene_id + " has no normal evaluation video to calibrate on");
    report.thresholds[v.scene_id] = calibrate(it->second, options.target_fpr, v.scene_id);
  }

  std::vector<LabeledScores> per_video;
  std::vector<double> delays;
  for (auto& v : report.videos) {
    const SceneThreshold& th = report.thresholds.at(v.scene_id);
    for (std::size_t f = 0; f < v.frame_scores.size(); ++f) {
      report.pooled.scores.push_back(v.frame_scores[f] - (options.oracle_scores ? 0.5 : th.theta));
      report.pooled.labels.push_back(v.frame_labels[f]);
    }
    LabeledScores mine{v.frame_scores, v.frame_labels};
    if (mine.positives() > 0) v.average_precision = pr_auc(mine);
    per_video.push_back(std::move(mine));
    v.events = flag(v.trace, th, options.min_duration_s);
    if (!v.annotations.empty()) {
      const auto d = event_delays(v.events, v.annotations, v.fps);
      delays.insert(delays.end(), d.begin(), d.end());
      v.delay_s = detection_delay(v.events, v.annotations, v.fps);
    }
  }

  report.roc_auc = roc_auc(report.pooled);
  report.pr_auc = pr_auc(report.pooled);
  report.f1 = f1_at(report.pooled, 0.0);
  const MapResult m = map_over_videos(per_video);
  report.map = m.map;
  report.map_included = m.included;
  report.map_excluded = m.excluded;
  if (delays.empty()) throw Error("mean_detection_delay_s: evaluation corpus has no anomalous video");
  double total = 0.0;
  for (double d : delays) total += d;
  report.mean_detection_delay_s = total / static_cast<double>(delays.size());
  return report;
}

}  // namespace zsad
