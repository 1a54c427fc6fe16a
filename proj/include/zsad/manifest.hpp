#pragma once

// JSON Lines corpus manifest. One record per line with a fixed field order:
//   label, video_id, start_s, end_s, description, seed, spec, annotations,
//   length_s, fps, frame_size
// The first five fields are the annotation proper; the rest is what is
// needed to regenerate the video bit-for-bit.

#include <filesystem>
#include <string>
#include <vector>

#include "zsad/scene.hpp"

namespace zsad {

struct CorpusRecord {
  ManifestEntry entry;
  std::uint64_t seed = 0;
  SceneSpec spec;
  std::vector<AnomalyAnnotation> annotations;
  double length_s = 0.0;
  double fps = 10.0;
  std::size_t frame_size = 64;
};

std::string to_json_line(const CorpusRecord& record);
CorpusRecord parse_json_line(const std::string& line);

void write_manifest(const std::filesystem::path& path, const std::vector<CorpusRecord>& records);
std::vector<CorpusRecord> read_manifest(const std::filesystem::path& path);

/// Rebuilds the video a record points at.
GeneratedVideo regenerate(const CorpusRecord& record);

}  // namespace zsad
