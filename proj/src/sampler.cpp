#include "zsad/sampler.hpp"

#include <cmath>

#include "zsad/kernels.hpp"
#include "zsad/rng.hpp"

namespace zsad {

FrameRange timestamps_to_frames(double start_s, double end_s, double fps) {
  if (!(fps > 0.0)) throw Error("fps must be positive");
  if (!(start_s < end_s)) throw Error("window start must precede its end");
  if (start_s < 0.0) throw Error("window start must be non-negative");
  // The epsilon keeps exact products like 0.3·10 from flooring to 2.
  FrameRange r;
  r.first = static_cast<std::int64_t>(std::floor(start_s * fps + 1e-9));
  r.last = static_cast<std::int64_t>(std::floor(end_s * fps + 1e-9)) - 1;
  if (r.last < r.first) throw Error("window shorter than one frame");
  return r;
}

std::vector<std::int64_t> sparse_bin_sample(std::int64_t first, std::int64_t last, std::size_t count, bool jitter,
                                            std::uint64_t seed) {
  if (count == 0) throw Error("sample count must be positive");
  if (last < first) throw Error("empty frame range");
  const auto len = static_cast<std::uint64_t>(last - first + 1);
  std::vector<std::int64_t> out;
  out.reserve(count);
  if (len < count) {
    for (std::int64_t i = first; i <= last; ++i) out.push_back(i);
    while (out.size() < count) out.push_back(last);
    return out;
  }
  const std::uint64_t c = count;
  auto edge = [&](std::uint64_t b) { return static_cast<std::int64_t>((2 * b * len + c) / (2 * c)); };
  Rng rng(seed);
  for (std::uint64_t b = 0; b < c; ++b) {
    const std::int64_t lo = first + edge(b);
    const std::int64_t hi = first + edge(b + 1) - 1;
    const auto size = static_cast<std::uint64_t>(hi - lo + 1);
    out.push_back(jitter ? lo + static_cast<std::int64_t>(rng.below(size)) : lo + static_cast<std::int64_t>(size / 2));
  }
  return out;
}

Tensor gather_frames(const SyntheticVideo& video, const std::vector<std::int64_t>& indices, std::size_t size) {
  const std::size_t h = video.height();
  const std::size_t w = video.width();
  const std::size_t plane = h * w * 3;
  Tensor out({indices.size(), size, size, 3});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto f = indices[i];
    if (f < 0 || static_cast<std::size_t>(f) >= video.frame_count()) throw Error("frame index outside the video");
    kernels::resize_bilinear(video.frames.ptr() + static_cast<std::size_t>(f) * plane, h, w, 3,
                             out.ptr() + i * size * size * 3, size, size);
  }
  return out;
}

ClipPair extract_clip_pair(const SyntheticVideo& video, const ManifestEntry& entry, const SamplerConfig& config,
                           std::uint64_t jitter_seed) {
  const FrameRange range = timestamps_to_frames(entry.start_s, entry.end_s, video.fps);
  if (range.last >= static_cast<std::int64_t>(video.frame_count())) {
    throw Error("entry window of " + entry.video_id + " extends past the video");
  }
  ClipPair pair;
  pair.source = entry;
  pair.indices_tsf =
      sparse_bin_sample(range.first, range.last, config.tsf_frames, config.jitter, mix_seed(jitter_seed, 1));
  pair.indices_dpc =
      sparse_bin_sample(range.first, range.last, config.dpc_frames, config.jitter, mix_seed(jitter_seed, 2));
  pair.tsf_clip = gather_frames(video, pair.indices_tsf, config.tsf_size);
  pair.dpc_clip = gather_frames(video, pair.indices_dpc, config.dpc_size);
  return pair;
}

std::uint64_t entry_stream_seed(std::uint64_t global_seed, std::string_view video_id, std::uint64_t entry_index) {
  return mix_seed(mix_seed(global_seed, hash_string(video_id)), entry_index);
}

}  // namespace zsad
