#include "zsad/manifest.hpp"

#include <fstream>
#include <json.hpp>

namespace zsad {

using json = nlohmann::ordered_json;

std::string to_json_line(const CorpusRecord& r) {
  json j;
  j["label"] = to_string(r.entry.label);
  j["video_id"] = r.entry.video_id;
  j["start_s"] = r.entry.start_s;
  j["end_s"] = r.entry.end_s;
  j["description"] = r.entry.description;
  j["seed"] = r.seed;
  j["spec"] = json{{"scene_id", r.spec.scene_id},
                   {"layout", to_string(r.spec.layout)},
                   {"time_of_day", to_string(r.spec.time_of_day)},
                   {"expected_activity", to_string(r.spec.expected_activity)},
                   {"palette_seed", r.spec.palette_seed}};
  json anns = json::array();
  for (const auto& a : r.annotations) {
    anns.push_back(json{{"kind", to_string(a.kind)}, {"onset_frame", a.onset_frame}, {"offset_frame", a.offset_frame}});
  }
  j["annotations"] = std::move(anns);
  j["length_s"] = r.length_s;
  j["fps"] = r.fps;
  j["frame_size"] = r.frame_size;
  return j.dump();
}

CorpusRecord parse_json_line(const std::string& line) {
  CorpusRecord r;
  try {
    const json j = json::parse(line);
    r.entry.label = parse_label(j.at("label").get<std::string>());
    r.entry.video_id = j.at("video_id").get<std::string>();
    r.entry.start_s = j.at("start_s").get<double>();
    r.entry.end_s = j.at("end_s").get<double>();
    r.entry.description = j.at("description").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    const json& s = j.at("spec");
    r.spec.scene_id = s.at("scene_id").get<std::string>();
    r.spec.layout = parse_layout(s.at("layout").get<std::string>());
    r.spec.time_of_day = parse_time_of_day(s.at("time_of_day").get<std::string>());
    r.spec.expected_activity = parse_activity(s.at("expected_activity").get<std::string>());
    r.spec.palette_seed = s.at("palette_seed").get<std::int64_t>();
    for (const json& a : j.at("annotations")) {
      AnomalyAnnotation ann;
      ann.kind = parse_anomaly_kind(a.at("kind").get<std::string>());
      ann.onset_frame = a.at("onset_frame").get<std::int64_t>();
      ann.offset_frame = a.at("offset_frame").get<std::int64_t>();
      r.annotations.push_back(ann);
    }
    r.length_s = j.at("length_s").get<double>();
    r.fps = j.at("fps").get<double>();
    r.frame_size = j.at("frame_size").get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error(std::string("malformed manifest record: ") + e.what());
  }
  if (!(r.entry.start_s >= 0.0 && r.entry.start_s < r.entry.end_s)) {
    throw Error("manifest entry " + r.entry.video_id + " has an empty or negative window");
  }
  return r;
}

void write_manifest(const std::filesystem::path& path, const std::vector<CorpusRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write manifest: " + path.string());
  for (const auto& r : records) out << to_json_line(r) << '\n';
  if (!out) throw Error("failed writing manifest: " + path.string());
}

std::vector<CorpusRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest: " + path.string());
  std::vector<CorpusRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_json_line(line));
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

GeneratedVideo regenerate(const CorpusRecord& record) {
  std::optional<AnomalyAnnotation> ann;
  if (!record.annotations.empty()) ann = record.annotations.front();
  return generate_annotated(record.spec, record.seed, record.length_s, record.fps, ann, record.frame_size);
}

}  // namespace zsad
