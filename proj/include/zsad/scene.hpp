#pragma once

// Procedural "surveillance" scenes: soft discs walking over a flat
// background. Everything is a pure function of (spec, seed, length, fps,
// frame size, anomaly), so a corpus is just a list of seeds.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "zsad/tensor.hpp"

namespace zsad {

enum class Layout { corridor, plaza, gate };
enum class TimeOfDay { day, night };
enum class Activity { empty, sparse, busy };
enum class AnomalyKind { contextual, temporal };

std::string to_string(Layout v);
std::string to_string(TimeOfDay v);
std::string to_string(Activity v);
std::string to_string(AnomalyKind v);
Layout parse_layout(const std::string& s);
TimeOfDay parse_time_of_day(const std::string& s);
Activity parse_activity(const std::string& s);
AnomalyKind parse_anomaly_kind(const std::string& s);

struct SceneSpec {
  std::string scene_id;
  Layout layout = Layout::corridor;
  TimeOfDay time_of_day = TimeOfDay::day;
  Activity expected_activity = Activity::empty;
  std::int64_t palette_seed = 0;
};

/// "a <layout> at <time> with <activity> pedestrian activity"
std::string describe(const SceneSpec& spec);

/// The closed set of 18 contexts, ids like "plaza-night-busy".
std::vector<SceneSpec> all_scenes();
const SceneSpec& find_scene(const std::vector<SceneSpec>& scenes, const std::string& scene_id);

/// Number of walkers a scene normally holds.
std::size_t normal_actor_count(Activity a);
/// Mean walking speed in pixels per second for a frame of the given size.
double normal_mean_speed(std::size_t frame_size);

struct AnomalyAnnotation {
  AnomalyKind kind = AnomalyKind::contextual;
  std::int64_t onset_frame = 0;
  std::int64_t offset_frame = 0;  // exclusive
};

struct AnomalyRequest {
  AnomalyKind kind = AnomalyKind::contextual;
  double onset_s = 0.0;
  double duration_s = 0.0;
};

/// Whether a scene can host an anomaly of this kind (intruders need room to
/// be out of place; speed-ups need someone walking).
bool supports_anomaly(const SceneSpec& spec, AnomalyKind kind);

struct SyntheticVideo {
  Tensor frames;  // [T, H, W, 3], values in [0, 1]
  double fps = 10.0;
  std::uint64_t seed = 0;

  std::size_t frame_count() const { return frames.dim(0); }
  std::size_t height() const { return frames.dim(1); }
  std::size_t width() const { return frames.dim(2); }
  double duration_s() const { return static_cast<double>(frame_count()) / fps; }
};

/// Simulator ground truth for one frame.
struct FrameState {
  std::size_t actor_count = 0;
  std::size_t intruders = 0;
  double min_step_px = 0.0;  // smallest per-frame path length over actors (0 when empty)
  double max_step_px = 0.0;
};

/// True when the frame breaks what the scene spec allows.
bool violates_spec(const SceneSpec& spec, const FrameState& state, double fps, std::size_t frame_size);

enum class Label { normal, anomaly };
std::string to_string(Label v);
Label parse_label(const std::string& s);

/// One annotated event window in a video.
struct ManifestEntry {
  Label label = Label::normal;
  std::string video_id;
  double start_s = 0.0;
  double end_s = 0.0;
  std::string description;
};

struct GeneratedVideo {
  SyntheticVideo video;
  ManifestEntry entry;
  std::vector<AnomalyAnnotation> annotations;
  std::vector<FrameState> states;
};

std::string video_id_for(const SceneSpec& spec, std::uint64_t seed);

AnomalyAnnotation annotation_for(const AnomalyRequest& request, double fps, std::size_t frame_count);

GeneratedVideo generate(const SceneSpec& spec, std::uint64_t seed, double length_s, double fps,
                        const std::optional<AnomalyRequest>& inject = std::nullopt, std::size_t frame_size = 64);

/// Regeneration from an explicit annotation (what a corpus record stores).
GeneratedVideo generate_annotated(const SceneSpec& spec, std::uint64_t seed, double length_s, double fps,
                                  const std::optional<AnomalyAnnotation>& annotation, std::size_t frame_size);

}  // namespace zsad
