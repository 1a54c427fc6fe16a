#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "zsad/scene.hpp"

namespace zsad {

struct FrameRange {
  std::int64_t first = 0;
  std::int64_t last = 0;  // inclusive
};

/// first = floor(start·fps), last = floor(end·fps) − 1. Throws when the
/// window holds no whole frame.
FrameRange timestamps_to_frames(double start_s, double end_s, double fps);

/// Splits [first, last] into `count` bins, bin b covering
/// [first + round(b·L/count), first + round((b+1)·L/count) − 1] with
/// L = last − first + 1 (ties round up), and takes one index per bin: the
/// upper midpoint without jitter, a uniform draw from Rng(seed) with it.
/// Ranges shorter than `count` yield every frame once and then repeat `last`.
std::vector<std::int64_t> sparse_bin_sample(std::int64_t first, std::int64_t last, std::size_t count, bool jitter,
                                            std::uint64_t seed);

struct SamplerConfig {
  std::size_t tsf_frames = 8;
  std::size_t tsf_size = 224;
  std::size_t dpc_frames = 30;
  std::size_t dpc_size = 112;
  bool jitter = false;
};

struct ClipPair {
  Tensor tsf_clip;  // [tsf_frames, tsf_size, tsf_size, 3]
  Tensor dpc_clip;  // [dpc_frames, dpc_size, dpc_size, 3]
  ManifestEntry source;
  std::vector<std::int64_t> indices_tsf;
  std::vector<std::int64_t> indices_dpc;
};

/// Gathers frames by index and resizes each (bilinear, corner aligned).
Tensor gather_frames(const SyntheticVideo& video, const std::vector<std::int64_t>& indices, std::size_t size);

/// The two streams draw jitter from independent sub-streams of jitter_seed.
ClipPair extract_clip_pair(const SyntheticVideo& video, const ManifestEntry& entry, const SamplerConfig& config,
                           std::uint64_t jitter_seed);

/// Per-entry jitter stream: depends only on the run seed and the entry
/// itself, so reordering a manifest does not change any entry's samples.
std::uint64_t entry_stream_seed(std::uint64_t global_seed, std::string_view video_id, std::uint64_t entry_index);

}  // namespace zsad
