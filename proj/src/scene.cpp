#include "zsad/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "zsad/rng.hpp"

namespace zsad {

std::string to_string(Layout v) {
  switch (v) {
    case Layout::corridor: return "corridor";
    case Layout::plaza: return "plaza";
    case Layout::gate: return "gate";
  }
  return "?";
}

std::string to_string(TimeOfDay v) { return v == TimeOfDay::day ? "day" : "night"; }

std::string to_string(Activity v) {
  switch (v) {
    case Activity::empty: return "empty";
    case Activity::sparse: return "sparse";
    case Activity::busy: return "busy";
  }
  return "?";
}

std::string to_string(AnomalyKind v) { return v == AnomalyKind::contextual ? "contextual" : "temporal"; }
std::string to_string(Label v) { return v == Label::normal ? "normal" : "anomaly"; }

Layout parse_layout(const std::string& s) {
  if (s == "corridor") return Layout::corridor;
  if (s == "plaza") return Layout::plaza;
  if (s == "gate") return Layout::gate;
  throw Error("unknown layout: " + s);
}

TimeOfDay parse_time_of_day(const std::string& s) {
  if (s == "day") return TimeOfDay::day;
  if (s == "night") return TimeOfDay::night;
  throw Error("unknown time of day: " + s);
}

Activity parse_activity(const std::string& s) {
  if (s == "empty") return Activity::empty;
  if (s == "sparse") return Activity::sparse;
  if (s == "busy") return Activity::busy;
  throw Error("unknown activity: " + s);
}

AnomalyKind parse_anomaly_kind(const std::string& s) {
  if (s == "contextual") return AnomalyKind::contextual;
  if (s == "temporal") return AnomalyKind::temporal;
  throw Error("unknown anomaly kind: " + s);
}

Label parse_label(const std::string& s) {
  if (s == "normal") return Label::normal;
  if (s == "anomaly") return Label::anomaly;
  throw Error("unknown label: " + s);
}

std::string describe(const SceneSpec& spec) {
  return "a " + to_string(spec.layout) + " at " + to_string(spec.time_of_day) + " with " +
         to_string(spec.expected_activity) + " pedestrian activity";
}

std::vector<SceneSpec> all_scenes() {
  std::vector<SceneSpec> out;
  std::int64_t index = 0;
  for (Layout l : {Layout::corridor, Layout::plaza, Layout::gate}) {
    for (TimeOfDay t : {TimeOfDay::day, TimeOfDay::night}) {
      for (Activity a : {Activity::empty, Activity::sparse, Activity::busy}) {
        SceneSpec s;
        s.layout = l;
        s.time_of_day = t;
        s.expected_activity = a;
        s.scene_id = to_string(l) + "-" + to_string(t) + "-" + to_string(a);
        s.palette_seed = 1000 + index++;
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

const SceneSpec& find_scene(const std::vector<SceneSpec>& scenes, const std::string& scene_id) {
  for (const auto& s : scenes) {
    if (s.scene_id == scene_id) return s;
  }
  throw Error("unknown scene id: " + scene_id);
}

std::size_t normal_actor_count(Activity a) {
  switch (a) {
    case Activity::empty: return 0;
    case Activity::sparse: return 2;
    case Activity::busy: return 6;
  }
  return 0;
}

namespace {

constexpr double kBaseSpeedPerFrameSize = 8.0 / 64.0;  // px/s per px of frame
constexpr double kSpeedSpread = 0.25;                  // speeds drawn from base·[0.75, 1.25]
constexpr double kAnomalySpeedFactor = 4.0 * (1.0 + kSpeedSpread);
constexpr std::size_t kIntruders = 5;
constexpr double kNoiseSigma = 0.02;

struct Region {
  double x0, x1, y0, y1;
};

struct Actor {
  double x, y;
  double dx, dy;  // unit direction
  double speed;   // px/s
  bool intruder = false;
};

double actor_radius(std::size_t size) { return static_cast<double>(size) / 16.0; }

Region walk_region(Layout layout, std::size_t size) {
  const double s = static_cast<double>(size);
  const double r = actor_radius(size);
  switch (layout) {
    case Layout::corridor: return {r, s - r, 0.3 * s + r, 0.7 * s - r};
    case Layout::gate: return {0.3 * s + r + 2.0, 0.7 * s - r - 2.0, r, s - r};
    case Layout::plaza: break;
  }
  return {r, s - r, r, s - r};
}

Actor spawn(const SceneSpec& spec, const Region& region, double base_speed, Rng& rng) {
  Actor a{};
  a.x = rng.uniform(region.x0, region.x1);
  a.y = rng.uniform(region.y0, region.y1);
  a.speed = base_speed * rng.uniform(1.0 - kSpeedSpread, 1.0 + kSpeedSpread);
  const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  switch (spec.layout) {
    case Layout::corridor:
      a.dx = sign;
      a.dy = 0.0;
      break;
    case Layout::gate:
      a.dx = 0.0;
      a.dy = sign;
      break;
    case Layout::plaza: {
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      a.dx = std::cos(angle);
      a.dy = std::sin(angle);
      break;
    }
  }
  return a;
}

void reflect(double& p, double& d, double lo, double hi) {
  for (int guard = 0; guard < 8 && (p < lo || p > hi); ++guard) {
    if (p < lo) p = 2.0 * lo - p;
    if (p > hi) p = 2.0 * hi - p;
    d = -d;
  }
  p = std::clamp(p, lo, hi);
}

void advance(Actor& a, double speed, double fps, const Region& region) {
  a.x += a.dx * speed / fps;
  a.y += a.dy * speed / fps;
  reflect(a.x, a.dx, region.x0, region.x1);
  reflect(a.y, a.dy, region.y0, region.y1);
}

struct Palette {
  double background[3];
  double actor[3];
};

Palette palette_for(const SceneSpec& spec) {
  Rng rng(mix_seed(static_cast<std::uint64_t>(spec.palette_seed), 0x70616c));
  Palette p{};
  const double base = spec.time_of_day == TimeOfDay::day ? 0.75 : 0.2;
  for (double& c : p.background) c = base + rng.uniform(-0.05, 0.05);
  if (spec.time_of_day == TimeOfDay::day) {
    p.actor[0] = 0.15;
    p.actor[1] = 0.12;
    p.actor[2] = 0.35;
  } else {
    p.actor[0] = 0.95;
    p.actor[1] = 0.85;
    p.actor[2] = 0.45;
  }
  return p;
}

std::vector<double> render_background(const SceneSpec& spec, std::size_t size) {
  const Palette pal = palette_for(spec);
  const double s = static_cast<double>(size);
  std::vector<double> bg(size * size * 3);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      double shade = 1.0;
      const double fy = static_cast<double>(y) + 0.5;
      const double fx = static_cast<double>(x) + 0.5;
      switch (spec.layout) {
        case Layout::corridor:
          if (fy < 0.3 * s || fy >= 0.7 * s) shade = 0.5;
          break;
        case Layout::plaza: {
          const std::size_t tile = std::max<std::size_t>(1, size / 4);
          if (((x / tile) + (y / tile)) % 2 == 1) shade = 0.85;
          break;
        }
        case Layout::gate:
          if (std::abs(fx - 0.3 * s) < 2.0 || std::abs(fx - 0.7 * s) < 2.0) shade = 0.3;
          break;
      }
      for (std::size_t c = 0; c < 3; ++c) bg[(y * size + x) * 3 + c] = pal.background[c] * shade;
    }
  }
  return bg;
}

void draw_disc(double* frame, std::size_t size, const Actor& a, double radius, const double* colour) {
  const long lo_x = std::max(0L, static_cast<long>(std::floor(a.x - radius - 1.0)));
  const long hi_x = std::min(static_cast<long>(size) - 1, static_cast<long>(std::ceil(a.x + radius + 1.0)));
  const long lo_y = std::max(0L, static_cast<long>(std::floor(a.y - radius - 1.0)));
  const long hi_y = std::min(static_cast<long>(size) - 1, static_cast<long>(std::ceil(a.y + radius + 1.0)));
  for (long y = lo_y; y <= hi_y; ++y) {
    for (long x = lo_x; x <= hi_x; ++x) {
      const double d = std::hypot(static_cast<double>(x) + 0.5 - a.x, static_cast<double>(y) + 0.5 - a.y);
      const double alpha = std::clamp(radius + 0.5 - d, 0.0, 1.0);
      if (alpha <= 0.0) continue;
      double* px = frame + (static_cast<std::size_t>(y) * size + static_cast<std::size_t>(x)) * 3;
      for (std::size_t c = 0; c < 3; ++c) px[c] = px[c] * (1.0 - alpha) + colour[c] * alpha;
    }
  }
}

}  // namespace

double normal_mean_speed(std::size_t frame_size) {
  return kBaseSpeedPerFrameSize * static_cast<double>(frame_size);
}

bool supports_anomaly(const SceneSpec& spec, AnomalyKind kind) {
  if (kind == AnomalyKind::contextual) return spec.expected_activity != Activity::busy;
  return spec.expected_activity != Activity::empty;
}

bool violates_spec(const SceneSpec& spec, const FrameState& state, double fps, std::size_t frame_size) {
  if (state.actor_count > normal_actor_count(spec.expected_activity)) return true;
  return state.max_step_px > 4.0 * normal_mean_speed(frame_size) / fps;
}

std::string video_id_for(const SceneSpec& spec, std::uint64_t seed) {
  return spec.scene_id + "-" + std::to_string(seed);
}

namespace {

std::size_t frame_count_for(double length_s, double fps) {
  return static_cast<std::size_t>(std::floor(length_s * fps + 1e-9));
}

}  // namespace

AnomalyAnnotation annotation_for(const AnomalyRequest& request, double fps, std::size_t frame_count) {
  const double length_s = static_cast<double>(frame_count) / fps;
  if (request.duration_s > length_s) throw Error("anomaly window is longer than the video");
  if (request.onset_s < 0.0 || !(request.duration_s > 0.0)) throw Error("anomaly window must be positive");
  AnomalyAnnotation a;
  a.kind = request.kind;
  a.onset_frame = static_cast<std::int64_t>(std::floor(request.onset_s * fps + 1e-9));
  a.offset_frame = static_cast<std::int64_t>(std::floor((request.onset_s + request.duration_s) * fps + 1e-9));
  if (a.offset_frame > static_cast<std::int64_t>(frame_count)) throw Error("anomaly window extends past the video");
  if (a.onset_frame >= a.offset_frame) throw Error("anomaly window shorter than one frame");
  return a;
}

GeneratedVideo generate(const SceneSpec& spec, std::uint64_t seed, double length_s, double fps,
                        const std::optional<AnomalyRequest>& inject, std::size_t frame_size) {
  std::optional<AnomalyAnnotation> annotation;
  if (inject) annotation = annotation_for(*inject, fps, frame_count_for(length_s, fps));
  return generate_annotated(spec, seed, length_s, fps, annotation, frame_size);
}

GeneratedVideo generate_annotated(const SceneSpec& spec, std::uint64_t seed, double length_s, double fps,
                                  const std::optional<AnomalyAnnotation>& annotation, std::size_t frame_size) {
  if (length_s < 2.0) throw Error("video length must be at least 2 s");
  if (fps < 5.0 || fps > 60.0) throw Error("fps must lie in [5, 60]");
  if (frame_size < 16) throw Error("frame size must be at least 16");
  const std::size_t frames = frame_count_for(length_s, fps);
  if (annotation) {
    if (annotation->onset_frame < 0 || annotation->onset_frame >= annotation->offset_frame ||
        annotation->offset_frame > static_cast<std::int64_t>(frames)) {
      throw Error("anomaly annotation lies outside the video");
    }
    if (!supports_anomaly(spec, annotation->kind)) {
      throw Error("scene " + spec.scene_id + " cannot host a " + to_string(annotation->kind) + " anomaly");
    }
  }

  const Region region = walk_region(spec.layout, frame_size);
  const double base_speed = normal_mean_speed(frame_size);
  const double radius = actor_radius(frame_size);
  const Palette pal = palette_for(spec);
  const std::vector<double> background = render_background(spec, frame_size);

  Rng sim(mix_seed(seed, hash_string(spec.scene_id)));
  Rng extra(mix_seed(seed, 0xa11));
  Rng noise(mix_seed(seed, 0x9015e));

  std::vector<Actor> actors;
  for (std::size_t i = 0; i < normal_actor_count(spec.expected_activity); ++i) {
    actors.push_back(spawn(spec, region, base_speed, sim));
  }
  std::vector<Actor> intruders;

  GeneratedVideo out;
  const std::size_t plane = frame_size * frame_size * 3;
  std::vector<double> pixels(frames * plane);
  out.states.resize(frames);

  for (std::size_t t = 0; t < frames; ++t) {
    const auto ti = static_cast<std::int64_t>(t);
    const bool in_window = annotation && ti >= annotation->onset_frame && ti < annotation->offset_frame;
    if (annotation && annotation->kind == AnomalyKind::contextual) {
      if (ti == annotation->onset_frame) {
        for (std::size_t i = 0; i < kIntruders; ++i) {
          Actor a = spawn(spec, region, base_speed, extra);
          a.intruder = true;
          intruders.push_back(a);
        }
      } else if (ti == annotation->offset_frame) {
        intruders.clear();
      }
    }
    const bool fast = in_window && annotation->kind == AnomalyKind::temporal;

    FrameState& st = out.states[t];
    st.actor_count = actors.size() + intruders.size();
    st.intruders = intruders.size();
    st.min_step_px = actors.empty() && intruders.empty() ? 0.0 : 1e300;
    auto record = [&](double speed) {
      const double step = speed / fps;
      st.min_step_px = std::min(st.min_step_px, step);
      st.max_step_px = std::max(st.max_step_px, step);
    };
    // Frame t shows positions after t steps; the step into frame t is what
    // the state records.
    for (auto& a : actors) {
      const double speed = fast ? base_speed * kAnomalySpeedFactor : a.speed;
      if (t > 0) advance(a, speed, fps, region);
      record(speed);
    }
    for (auto& a : intruders) {
      if (ti != annotation->onset_frame) advance(a, a.speed, fps, region);
      record(a.speed);
    }

    double* frame = pixels.data() + t * plane;
    std::copy(background.begin(), background.end(), frame);
    for (const auto& a : actors) draw_disc(frame, frame_size, a, radius, pal.actor);
    for (const auto& a : intruders) draw_disc(frame, frame_size, a, radius, pal.actor);
    for (std::size_t i = 0; i < plane; ++i) frame[i] = std::clamp(frame[i] + kNoiseSigma * noise.normal(), 0.0, 1.0);
  }

  out.video.frames = Tensor({frames, frame_size, frame_size, 3}, std::move(pixels));
  out.video.fps = fps;
  out.video.seed = seed;
  if (annotation) out.annotations.push_back(*annotation);
  out.entry.label = out.annotations.empty() ? Label::normal : Label::anomaly;
  out.entry.video_id = video_id_for(spec, seed);
  out.entry.start_s = 0.0;
  out.entry.end_s = static_cast<double>(frames) / fps;
  out.entry.description = describe(spec);
  return out;
}

}  // namespace zsad
