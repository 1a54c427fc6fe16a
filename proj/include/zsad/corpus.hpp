#pragma once

// The default synthetic corpus: normal-only training windows for every scene
// plus a held-out evaluation split with injected anomalies.

#include <filesystem>
#include <vector>

#include "zsad/config.hpp"
#include "zsad/manifest.hpp"

namespace zsad {

std::vector<CorpusRecord> build_train_corpus(const Config& cfg);
std::vector<CorpusRecord> build_eval_corpus(const Config& cfg);

std::filesystem::path train_manifest_path(const std::filesystem::path& dir);
std::filesystem::path eval_manifest_path(const std::filesystem::path& dir);

struct CorpusSummary {
  std::size_t train = 0;
  std::size_t eval_normal = 0;
  std::size_t eval_anomaly = 0;
  std::size_t contextual = 0;
  std::size_t temporal = 0;
};

/// Writes train.jsonl and eval.jsonl under dir.
CorpusSummary write_corpus(const Config& cfg, const std::filesystem::path& dir);

}  // namespace zsad
