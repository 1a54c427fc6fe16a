#include "zsad/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace zsad {

std::size_t LabeledScores::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

namespace {

void check(const LabeledScores& d) {
  if (d.scores.size() != d.labels.size()) throw Error("scores and labels differ in length");
  for (int l : d.labels) {
    if (l != 0 && l != 1) throw Error("labels must be 0 or 1");
  }
}

// Indices sorted by descending score.
std::vector<std::size_t> descending(const LabeledScores& d) {
  std::vector<std::size_t> idx(d.scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return d.scores[a] > d.scores[b]; });
  return idx;
}

}  // namespace

double roc_auc(const LabeledScores& d) {
  check(d);
  const double pos = static_cast<double>(d.positives());
  const double neg = static_cast<double>(d.negatives());
  if (pos == 0 || neg == 0) throw Error("roc_auc needs both positive and negative samples");
  // Sweep from the top: each tie group credits its positives with every
  // negative below the group plus half of the negatives inside it.
  const auto idx = descending(d);
  double negatives_above = 0.0;
  double wins = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double gp = 0.0;
    double gn = 0.0;
    while (j < idx.size() && d.scores[idx[j]] == d.scores[idx[i]]) {
      (d.labels[idx[j]] == 1 ? gp : gn) += 1.0;
      ++j;
    }
    wins += gp * (neg - negatives_above - gn) + 0.5 * gp * gn;
    negatives_above += gn;
    i = j;
  }
  return wins / (pos * neg);
}

double pr_auc(const LabeledScores& d) {
  check(d);
  const double pos = static_cast<double>(d.positives());
  if (pos == 0) throw Error("pr_auc needs at least one positive sample");
  const auto idx = descending(d);
  double tp = 0.0;
  double seen = 0.0;
  double ap = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double gp = 0.0;
    while (j < idx.size() && d.scores[idx[j]] == d.scores[idx[i]]) {
      if (d.labels[idx[j]] == 1) gp += 1.0;
      ++j;
    }
    tp += gp;
    seen += static_cast<double>(j - i);
    ap += (gp / pos) * (tp / seen);
    i = j;
  }
  return ap;
}

double f1_at(const LabeledScores& d, double theta) {
  check(d);
  double tp = 0.0;
  double fp = 0.0;
  double fn = 0.0;
  for (std::size_t i = 0; i < d.scores.size(); ++i) {
    const bool predicted = d.scores[i] > theta;
    if (predicted && d.labels[i] == 1) tp += 1.0;
    if (predicted && d.labels[i] == 0) fp += 1.0;
    if (!predicted && d.labels[i] == 1) fn += 1.0;
  }
  if (tp == 0.0) return 0.0;
  const double precision = tp / (tp + fp);
  const double recall = tp / (tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

MapResult map_over_videos(const std::vector<LabeledScores>& per_video) {
  MapResult r;
  double total = 0.0;
  for (const auto& v : per_video) {
    if (v.positives() == 0) {
      ++r.excluded;
      continue;
    }
    total += pr_auc(v);
    ++r.included;
  }
  if (r.included == 0) throw Error("map_over_videos: no video has a positive frame");
  r.map = total / static_cast<double>(r.included);
  return r;
}

std::vector<double> event_delays(const std::vector<FlaggedEvent>& flagged, const std::vector<AnomalyAnnotation>& truth,
                                 double fps) {
  if (!(fps > 0.0)) throw Error("fps must be positive");
  std::vector<double> out;
  for (const auto& ev : truth) {
    const double on = static_cast<double>(ev.onset_frame) / fps;
    const double off = static_cast<double>(ev.offset_frame) / fps;
    double best = -1.0;
    for (const auto& f : flagged) {
      if (f.offset_s < on || f.onset_s >= off) continue;
      const double delay = std::max(0.0, f.onset_s - on);
      if (best < 0.0 || delay < best) best = delay;
    }
    out.push_back(best < 0.0 ? off - on : best);
  }
  return out;
}

double detection_delay(const std::vector<FlaggedEvent>& flagged, const std::vector<AnomalyAnnotation>& truth,
                       double fps) {
  if (truth.empty()) throw Error("detection_delay needs at least one true event");
  const auto d = event_delays(flagged, truth, fps);
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

}  // namespace zsad
