#include "zsad/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace zsad {

std::size_t window_count(double duration_s, double window_s, double stride_s) {
  if (!(window_s > 0.0) || !(stride_s > 0.0)) throw Error("window and stride must be positive");
  if (duration_s + 1e-9 < window_s) throw Error("video is shorter than one scoring window");
  const double extra = std::max(0.0, (duration_s - window_s) / stride_s - 1e-9);
  return static_cast<std::size_t>(std::ceil(extra)) + 1;
}

double window_start(std::size_t n, double duration_s, double window_s, double stride_s) {
  return std::min(static_cast<double>(n) * stride_s, duration_s - window_s);
}

double fuse(double align, double pred_error, double lambda) {
  return lambda * (1.0 - align) / 2.0 + (1.0 - lambda) * pred_error / 2.0;
}

StreamState initial_stream_state(const Model& model) {
  StreamState s;
  s.hidden = Tensor({model.config().pred.hidden}, 0.0);
  return s;
}

void score_windows(const Model& model, const SyntheticVideo& video, const std::string& scene_id,
                   const ScoringConfig& cfg, StreamState& state, ScoreTrace& trace, std::size_t stop) {
  const ModelConfig& mc = model.config();
  model.scene(scene_id);
  const double duration = video.duration_s();
  const std::size_t total = window_count(duration, cfg.window_s, cfg.stride_s);
  stop = std::min(stop, total);
  const std::size_t blocks = mc.dpc.blocks();
  const double block_s = cfg.window_s / static_cast<double>(blocks);
  const auto advance = static_cast<std::size_t>(
      std::clamp<long>(std::lround(cfg.stride_s / block_s), 1L, static_cast<long>(blocks)));
  const double lambda = mc.use_dpc ? cfg.lambda : 1.0;
  const SamplerConfig sampler = mc.sampler(false);
  const CpcPlan plan = plan_cpc(1, blocks, mc.pred.horizons, 0, 0);
  if (state.hidden.shape() != Shape{mc.pred.hidden}) throw ShapeError("stream state does not match the model");

  for (std::size_t n = state.next_window; n < stop; ++n) {
    ManifestEntry entry;
    entry.video_id = scene_id;
    entry.start_s = window_start(n, duration, cfg.window_s, cfg.stride_s);
    entry.end_s = entry.start_s + cfg.window_s;
    const ClipPair clip = extract_clip_pair(video, entry, sampler, 0);
    const ClipFeatures feats = frozen_features(model, clip, scene_id);

    ad::Tape tape = ad::Tape::inference(model.params());
    const ad::Var h0 = ad::constant(state.hidden.reshaped({1, mc.pred.hidden}));
    const BatchOutputs out = forward_batch(tape, model, {&feats}, false, nullptr, h0);

    const double align = dot(out.visual.value().data(), out.text.value().data());
    double pred_error = 0.0;
    if (mc.use_dpc) {
      const Tensor& z = out.latents.value();
      const Tensor& p = out.predictions.value();
      const std::size_t dz = mc.dpc.latent;
      for (std::size_t r = 0; r < plan.anchors.size(); ++r) {
        const std::size_t pos = plan.candidates[r][0];
        pred_error += 1.0 - dot(p.data().subspan(r * dz, dz), z.data().subspan(pos * dz, dz));
      }
      pred_error /= static_cast<double>(plan.anchors.size());
      state.hidden = out.hidden[std::min(advance, blocks) - 1].value().reshaped({mc.pred.hidden});
    }
    trace.time_s.push_back(entry.start_s + cfg.window_s / 2.0);
    trace.align_score.push_back(align);
    trace.pred_error.push_back(pred_error);
    trace.fused.push_back(fuse(align, pred_error, lambda));
    state.next_window = n + 1;
  }
}

ScoreTrace score_stream(const Model& model, const SyntheticVideo& video, const std::string& scene_id,
                        const ScoringConfig& cfg) {
  StreamState state = initial_stream_state(model);
  ScoreTrace trace;
  score_windows(model, video, scene_id, cfg, state, trace, static_cast<std::size_t>(-1));
  return trace;
}

void save_stream_state(const std::filesystem::path& path, const StreamState& state) {
  ParamStore store;
  store.add("stream.hidden", state.hidden, false);
  save_checkpoint(path, store, {{"next_window", std::to_string(state.next_window)}});
}

StreamState load_stream_state(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  StreamState s;
  s.hidden = ck.params.value("stream.hidden");
  auto it = ck.metadata.find("next_window");
  if (it == ck.metadata.end()) throw Error("stream state lacks next_window: " + path.string());
  s.next_window = static_cast<std::size_t>(std::stoull(it->second));
  return s;
}

double quantile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw Error("quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw Error("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

SceneThreshold calibrate(const std::vector<ScoreTrace>& normal_traces, double target_fpr, const std::string& scene_id) {
  if (!(target_fpr > 0.0 && target_fpr < 1.0)) throw Error("target_fpr must lie in (0, 1)");
  std::vector<double> pool;
  for (const auto& t : normal_traces) pool.insert(pool.end(), t.fused.begin(), t.fused.end());
  if (pool.empty()) throw Error("no normal scores to calibrate " + (scene_id.empty() ? std::string("a scene") : scene_id));
  SceneThreshold th;
  th.scene_id = scene_id;
  th.target_fpr = target_fpr;
  th.theta = quantile_linear(std::move(pool), 1.0 - target_fpr);
  return th;
}

std::vector<FlaggedEvent> flag(const ScoreTrace& trace, const SceneThreshold& threshold, double min_duration_s) {
  std::vector<FlaggedEvent> out;
  const std::size_t n = trace.size();
  for (std::size_t i = 0; i < n;) {
    if (!(trace.fused[i] > threshold.theta)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && trace.fused[j + 1] > threshold.theta) ++j;
    if (trace.time_s[j] - trace.time_s[i] + 1e-9 >= min_duration_s) out.push_back({trace.time_s[i], trace.time_s[j]});
    i = j + 1;
  }
  return out;
}

std::vector<double> frame_scores(const ScoreTrace& trace, std::size_t frame_count, double fps) {
  if (trace.size() == 0) throw Error("empty score trace");
  std::vector<double> out(frame_count);
  std::size_t w = 0;
  for (std::size_t f = 0; f < frame_count; ++f) {
    const double t = (static_cast<double>(f) + 0.5) / fps;
    while (w + 1 < trace.size() && std::abs(trace.time_s[w + 1] - t) < std::abs(trace.time_s[w] - t)) ++w;
    out[f] = trace.fused[w];
  }
  return out;
}

void write_trace_csv(const std::filesystem::path& path, const ScoreTrace& trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write trace: " + path.string());
  out << "time_s,align_score,pred_error,fused\n" << std::setprecision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << trace.time_s[i] << ',' << trace.align_score[i] << ',' << trace.pred_error[i] << ',' << trace.fused[i]
        << '\n';
  }
}

}  // namespace zsad
