#pragma once

// Sliding-window streaming scores. Each window yields
//   s_a = v·t̃                                (alignment, in [−1, 1])
//   s_p = mean over (t, k) of 1 − ẑ_{t,k}·z_{t+k}   (prediction error, in [0, 2])
//   a   = λ(1 − s_a)/2 + (1 − λ)s_p/2         (fused, in [0, 1])
// The recurrent state is carried from window to window: after each window it
// is the state reached once the blocks that the next window no longer covers
// have been consumed.

#include <filesystem>
#include <string>
#include <vector>

#include "zsad/metrics.hpp"
#include "zsad/model.hpp"

namespace zsad {

struct ScoringConfig {
  double window_s = 3.0;
  double stride_s = 1.0;
  double lambda = 0.7;
};

struct ScoreTrace {
  std::vector<double> time_s;  // window centres
  std::vector<double> align_score;
  std::vector<double> pred_error;
  std::vector<double> fused;

  std::size_t size() const { return time_s.size(); }
};

struct StreamState {
  Tensor hidden;  // [D_h]
  std::size_t next_window = 0;
};

/// ⌈(duration − window)/stride⌉ + 1 windows; the last one is clamped to end at the video end.
std::size_t window_count(double duration_s, double window_s, double stride_s);
double window_start(std::size_t n, double duration_s, double window_s, double stride_s);

double fuse(double align, double pred_error, double lambda);

StreamState initial_stream_state(const Model& model);

/// Scores windows [state.next_window, stop) and appends them to trace.
void score_windows(const Model& model, const SyntheticVideo& video, const std::string& scene_id,
                   const ScoringConfig& cfg, StreamState& state, ScoreTrace& trace, std::size_t stop);

ScoreTrace score_stream(const Model& model, const SyntheticVideo& video, const std::string& scene_id,
                        const ScoringConfig& cfg);

void save_stream_state(const std::filesystem::path& path, const StreamState& state);
StreamState load_stream_state(const std::filesystem::path& path);

struct SceneThreshold {
  std::string scene_id;
  double theta = 0.0;
  double target_fpr = 0.05;
};

/// Linear-interpolation quantile: sorted x, h = (n − 1)q,
/// x[⌊h⌋] + (h − ⌊h⌋)(x[⌊h⌋+1] − x[⌊h⌋]).
double quantile_linear(std::vector<double> values, double q);

/// theta = the (1 − target_fpr) quantile of the pooled fused scores.
SceneThreshold calibrate(const std::vector<ScoreTrace>& normal_traces, double target_fpr,
                         const std::string& scene_id = "");

/// Maximal runs of fused > theta whose span (last − first timestamp) is at
/// least min_duration_s. Neighbouring runs are never merged.
std::vector<FlaggedEvent> flag(const ScoreTrace& trace, const SceneThreshold& threshold, double min_duration_s);

/// Score of the window whose centre is nearest to each frame's timestamp.
std::vector<double> frame_scores(const ScoreTrace& trace, std::size_t frame_count, double fps);

/// CSV with header time_s,align_score,pred_error,fused.
void write_trace_csv(const std::filesystem::path& path, const ScoreTrace& trace);

}  // namespace zsad
