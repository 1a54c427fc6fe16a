#include "zsad/corpus.hpp"

#include <algorithm>
#include <cmath>

namespace zsad {

namespace {

CorpusRecord record_for(const Config& cfg, const SceneSpec& spec, std::uint64_t seed, double length_s) {
  CorpusRecord r;
  r.seed = seed;
  r.spec = spec;
  r.length_s = length_s;
  r.fps = cfg.fps;
  r.frame_size = cfg.frame_size;
  r.entry.label = Label::normal;
  r.entry.video_id = video_id_for(spec, seed);
  r.entry.start_s = 0.0;
  r.entry.end_s = length_s;
  r.entry.description = describe(spec);
  return r;
}

}  // namespace

std::vector<CorpusRecord> build_train_corpus(const Config& cfg) {
  if (cfg.train_clip_s > cfg.train_video_length_s) throw Error("train_clip_s exceeds train_video_length_s");
  const auto scenes = all_scenes();
  std::vector<CorpusRecord> out;
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    for (std::size_t v = 0; v < cfg.train_videos_per_scene; ++v) {
      const std::uint64_t seed = cfg.seed * 100000 + si * 100 + v;
      CorpusRecord r = record_for(cfg, scenes[si], seed, cfg.train_video_length_s);
      // Staggered windows so the corpus covers every part of the videos.
      r.entry.start_s = std::min(static_cast<double>(v % 3) * 0.5, cfg.train_video_length_s - cfg.train_clip_s);
      r.entry.end_s = r.entry.start_s + cfg.train_clip_s;
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<CorpusRecord> build_eval_corpus(const Config& cfg) {
  const double len = cfg.eval_video_length_s;
  const double dur = cfg.anomaly_duration_s;
  if (cfg.eval_anomaly_per_scene > 0 && len - dur - 4.0 < 0.0) {
    throw Error("eval videos are too short for the anomaly duration (need 2 s of margin on each side)");
  }
  const auto scenes = all_scenes();
  std::vector<CorpusRecord> out;
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    const SceneSpec& spec = scenes[si];
    std::vector<AnomalyKind> kinds;
    for (AnomalyKind k : {AnomalyKind::contextual, AnomalyKind::temporal}) {
      if (supports_anomaly(spec, k)) kinds.push_back(k);
    }
    const std::uint64_t base = cfg.seed * 100000 + 50000 + si * 100;
    for (std::size_t v = 0; v < cfg.eval_normal_per_scene; ++v) out.push_back(record_for(cfg, spec, base + v, len));
    for (std::size_t v = 0; v < cfg.eval_anomaly_per_scene; ++v) {
      const std::uint64_t seed = base + cfg.eval_normal_per_scene + v;
      CorpusRecord r = record_for(cfg, spec, seed, len);
      Rng rng(mix_seed(seed, 0x0a5e7));
      AnomalyRequest req;
      req.kind = kinds[v % kinds.size()];
      req.onset_s = std::round(rng.uniform(2.0, len - dur - 2.0) * 10.0) / 10.0;
      req.duration_s = dur;
      const AnomalyAnnotation ann = annotation_for(req, cfg.fps, static_cast<std::size_t>(std::floor(len * cfg.fps + 1e-9)));
      r.annotations.push_back(ann);
      r.entry.label = Label::anomaly;
      r.entry.start_s = static_cast<double>(ann.onset_frame) / cfg.fps;
      r.entry.end_s = static_cast<double>(ann.offset_frame) / cfg.fps;
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::filesystem::path train_manifest_path(const std::filesystem::path& dir) { return dir / "train.jsonl"; }
std::filesystem::path eval_manifest_path(const std::filesystem::path& dir) { return dir / "eval.jsonl"; }

CorpusSummary write_corpus(const Config& cfg, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create corpus directory " + dir.string() + ": " + ec.message());
  const auto train = build_train_corpus(cfg);
  const auto eval = build_eval_corpus(cfg);
  write_manifest(train_manifest_path(dir), train);
  write_manifest(eval_manifest_path(dir), eval);
  CorpusSummary s;
  s.train = train.size();
  for (const auto& r : eval) {
    if (r.entry.label == Label::normal) {
      ++s.eval_normal;
      continue;
    }
    ++s.eval_anomaly;
    (r.annotations.front().kind == AnomalyKind::contextual ? s.contextual : s.temporal)++;
  }
  return s;
}

}  // namespace zsad
