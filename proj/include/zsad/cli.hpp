#pragma once

// The zsad command-line tool: gen | train | eval | ablate.
// Exit codes: 0 success, 1 usage or I/O error, 2 contract violation.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "zsad/config.hpp"
#include "zsad/evaluation.hpp"
#include "zsad/report.hpp"
#include "zsad/trainer.hpp"

namespace zsad {

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

TrainConfig train_config(const Config& cfg);
WarmupConfig warmup_config(const Config& cfg);
EvalOptions eval_options(const Config& cfg);

/// One rung of the ablation ladder; each adds a single mechanism to the one before.
struct AblationVariant {
  std::string id;
  bool use_dpc = true;
  double gamma = 0.5;
  double alpha = 0.5;
  bool use_residual_mlp = true;
  bool use_ln_gate = true;
};

/// B1 sparse stream only (γ = 1, linear projection, no gate), B2 + dense
/// stream and predictive loss (γ = 0.5, α = 0.8), B3 α = 0.2, B4 + residual
/// MLP projection, B5 + context gate.
std::vector<AblationVariant> ablation_ladder();
Config apply_variant(const Config& base, const AblationVariant& v);
std::vector<std::pair<std::string, std::string>> variant_echo(const Config& cfg);

/// Warmed-up encoder weights shared by every model trained from one corpus.
ParamStore warmed_encoders(const Config& cfg, const std::vector<CorpusRecord>& train, std::ostream& log);

struct RunResult {
  TrainResult training;
  MetricReport report;
};

/// Trains a fresh model from the given encoder weights and evaluates it.
/// Outputs go under out_dir when it is non-empty.
RunResult train_and_evaluate(const Config& cfg, const ParamStore& encoders, const std::vector<CorpusRecord>& train,
                             const std::vector<CorpusRecord>& eval, const std::filesystem::path& out_dir,
                             std::ostream& log);

}  // namespace zsad
