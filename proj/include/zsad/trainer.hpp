#pragma once

// Joint training of the trainable heads on normal clips, plus the encoder
// warm-up that runs before the freeze.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <vector>

#include "zsad/manifest.hpp"
#include "zsad/model.hpp"

namespace zsad {

struct TrainConfig {
  double alpha = 0.5;
  double tau = 0.07;
  double learning_rate = 1e-3;
  std::size_t batch_size = 8;
  std::size_t steps = 300;
  std::uint64_t seed = 7;
  std::size_t neg_cap = 64;
  bool symmetric_align = false;
  /// Finite-difference check of the step-0 gradient on a few entries.
  bool spot_check = true;
  std::size_t spot_entries = 5;
};

/// RMSProp without momentum:
///   v ← ρ·v + (1 − ρ)·g²,  θ ← θ − lr·g / (√v + ε)
/// with ρ = 0.99 and ε = 1e-8. Only names present in the gradient map move.
class RmsProp {
 public:
  explicit RmsProp(double learning_rate, double rho = 0.99, double eps = 1e-8)
      : lr_(learning_rate), rho_(rho), eps_(eps) {}
  void step(ParamStore& params, const ad::GradMap& grads);

 private:
  double lr_;
  double rho_;
  double eps_;
  std::map<std::string, Tensor> sq_;
};

struct LossRecord {
  std::size_t step = 0;
  double l_align = 0.0;
  double l_pred = 0.0;
  double l_total = 0.0;
};

struct SpotCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool ok = false;
};

struct SpotCheck {
  std::vector<SpotCheckEntry> entries;
  bool passed() const;
};

struct TrainResult {
  std::vector<LossRecord> log;
  ParamStore best_params;
  double best_loss = 0.0;  // lowest 20-step running mean of l_total
  SpotCheck spot;
};

/// Throws ContractViolation when any entry is labeled anomaly.
void check_training_corpus(const std::vector<CorpusRecord>& corpus);

/// Called after every step with the record just logged.
using StepHook = std::function<void(const LossRecord&)>;

TrainResult train(Model& model, const std::vector<CorpusRecord>& corpus, const TrainConfig& cfg,
                  const StepHook& hook = {});

/// Per-step losses of one batch; exposed for tests that inspect gradients.
struct BatchLoss {
  ad::Var l_align;
  ad::Var l_pred;  // empty without the dense stream
  ad::Var total;
};
BatchLoss batch_loss(ad::Tape& tape, const Model& model, const std::vector<const ClipFeatures*>& clips,
                     const TrainConfig& cfg, std::uint64_t step_seed);

/// Features of a training batch for one step (clips drawn with jitter).
std::vector<ClipFeatures> training_batch(const Model& model, const std::vector<CorpusRecord>& corpus,
                                         const TrainConfig& cfg, std::size_t step);

struct WarmupConfig {
  std::size_t steps = 30;
  std::size_t batch_size = 8;
  double tau = 0.1;
  double learning_rate = 1e-3;
  std::uint64_t seed = 7;
};

/// Self-supervised frame-order pretext task for the video transformer and
/// the block encoder: each frame (block) must pick its successor out of
/// every other frame (block) in the batch. Returns the per-step loss.
std::vector<double> warm_up_encoders(Model& model, const std::vector<CorpusRecord>& corpus, const WarmupConfig& cfg);

/// Copies every parameter of dst whose name satisfies pick from src.
void copy_params(const ParamStore& src, ParamStore& dst, const std::function<bool(const std::string&)>& pick);
bool is_encoder_param(const std::string& name);

/// CSV with header step,l_align,l_pred,l_total.
void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log);

/// Mean of l_total over the first and the last `window` steps.
std::pair<double, double> smoothed_loss_ends(const std::vector<LossRecord>& log, std::size_t window = 20);

}  // namespace zsad
