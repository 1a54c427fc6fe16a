#pragma once

// The assembled detector: encoders, context gate, projection head and
// predictor over one parameter store, plus the batched forward pass shared by
// training and scoring.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zsad/context_gate.hpp"
#include "zsad/losses.hpp"
#include "zsad/encoders.hpp"
#include "zsad/predictor.hpp"
#include "zsad/projection.hpp"
#include "zsad/sampler.hpp"
#include "zsad/scene.hpp"

namespace zsad {

struct ModelConfig {
  TsfConfig tsf;
  DpcConfig dpc;
  TextConfig text;
  ContextConfig context;
  GateConfig gate;
  ProjectionConfig proj;
  PredictorConfig pred;

  bool use_dpc = true;
  bool use_ln_gate = true;
  double gamma = 0.5;
  /// Also add a projection of the context vector to the latents fed to the GRU.
  bool context_to_visual = false;
  std::string freeze_profile = "paper";

  /// Throws when component dimensions disagree.
  void validate() const;
  /// Stream weight actually used (1 when the dense stream is off).
  double effective_gamma() const { return use_dpc ? gamma : 1.0; }
  SamplerConfig sampler(bool jitter) const;
};

/// Parameter names outside the trainable set of a freeze profile.
/// "paper": the video transformer, the text encoder and all but the last conv
/// stage of the block encoder are frozen.
bool frozen_in_profile(const std::string& profile, const std::string& name);

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Replaces every parameter value; names and shapes must match.
  void load_params(const ParamStore& other);
  void apply_freeze_profile();

  const std::vector<SceneSpec>& scenes() const { return scenes_; }
  const SceneSpec& scene(const std::string& scene_id) const;
  /// Frozen text embedding of the scene's description.
  const Tensor& text_embedding(const std::string& scene_id) const;

 private:
  void refresh_text_cache();

  ModelConfig config_;
  ParamStore params_;
  std::vector<SceneSpec> scenes_;
  std::map<std::string, Tensor> text_cache_;
};

/// Everything computed by frozen parameters for one clip.
struct ClipFeatures {
  std::string scene_id;
  Tensor tsf_pooled;               // [D_v], mean over frames
  std::vector<Tensor> dpc_stage2;  // per block, empty without the dense stream
  Tensor mid_frame;                // [H, W, 3]
};

ClipFeatures frozen_features(const Model& model, const ClipPair& clip, const std::string& scene_id);

struct BatchOutputs {
  ad::Var visual;                 // [B, d]
  ad::Var text;                   // [B, d], context-gated when the gate is on
  ad::Var latents;                // [B·blocks, D_z], row b·blocks + t
  std::vector<ad::Var> hidden;    // per block [B, D_h]
  ad::Var predictions;            // [R, D_z] in plan_cpc row order
};

/// Trainable part of the forward pass over a batch of clips. Latents,
/// hidden states and predictions are only produced with the dense stream on.
/// h0 [B, D_h] seeds the recurrence (zeros when absent).
BatchOutputs forward_batch(ad::Tape& tape, const Model& model, const std::vector<const ClipFeatures*>& clips,
                           bool training, Rng* dropout_rng = nullptr, const std::optional<ad::Var>& h0 = std::nullopt);

}  // namespace zsad
