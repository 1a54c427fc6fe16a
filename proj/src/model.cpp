#include "zsad/model.hpp"

#include "zsad/layers.hpp"

namespace zsad {

namespace {

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

void require(bool ok, const std::string& what) {
  if (!ok) throw Error("inconsistent model config: " + what);
}

// Text weights come from a fixed seed so the 18 scene embeddings are the
// same for every run seed.
constexpr std::uint64_t kTextSeed = 0x7e47;

}  // namespace

void ModelConfig::validate() const {
  require(tsf.dim == proj.tsf_dim, "tsf dim vs projection input");
  require(dpc.latent == proj.dpc_dim, "dpc latent vs projection input");
  require(dpc.latent == pred.latent, "dpc latent vs predictor latent");
  require(text.out_dim == proj.out_dim, "text dim vs projection output");
  require(text.out_dim == gate.text_dim, "text dim vs gate");
  require(context.dim == gate.context_dim, "context dim vs gate");
  require(context.image_size == tsf.image_size, "context frame size vs tsf frame size");
  require(tsf.frames >= 1 && dpc.blocks() >= 2, "clip lengths");
  require(dpc.frames % dpc.block_frames == 0, "dpc frames divisible by block size");
  require(tsf.patch > 0 && tsf.image_size % tsf.patch == 0, "tsf patch size divides the frame");
  require(gamma >= 0.0 && gamma <= 1.0, "gamma in [0, 1]");
  require(pred.horizons >= 1 && pred.horizons < dpc.blocks(), "prediction horizons shorter than the block count");
  require(proj.dropout >= 0.0 && proj.dropout < 1.0, "dropout in [0, 1)");
  frozen_in_profile(freeze_profile, "");
}

SamplerConfig ModelConfig::sampler(bool jitter) const {
  SamplerConfig s;
  s.tsf_frames = tsf.frames;
  s.tsf_size = tsf.image_size;
  s.dpc_frames = dpc.frames;
  s.dpc_size = dpc.image_size;
  s.jitter = jitter;
  return s;
}

bool frozen_in_profile(const std::string& profile, const std::string& name) {
  if (profile != "paper") throw Error("unknown freeze profile: " + profile);
  return starts_with(name, "tsf.") || starts_with(name, "text.") || starts_with(name, "dpc.conv1.") ||
         starts_with(name, "dpc.conv2.");
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)), scenes_(all_scenes()) {
  config_.validate();
  Rng tsf_rng(mix_seed(seed, 1));
  Rng dpc_rng(mix_seed(seed, 2));
  Rng text_rng(kTextSeed);
  Rng ctx_rng(mix_seed(seed, 4));
  Rng gate_rng(mix_seed(seed, 5));
  Rng proj_rng(mix_seed(seed, 6));
  Rng pred_rng(mix_seed(seed, 7));
  init_tsf(params_, config_.tsf, tsf_rng);
  init_dpc(params_, config_.dpc, dpc_rng);
  init_text(params_, config_.text, text_rng);
  init_context(params_, config_.context, ctx_rng);
  init_gate(params_, config_.gate, gate_rng);
  init_projection(params_, config_.proj, proj_rng);
  init_predictor(params_, config_.pred, pred_rng);
  if (config_.context_to_visual) {
    Rng extra(mix_seed(seed, 8));
    nn::add_linear(params_, "ctx.to_visual", config_.context.dim, config_.dpc.latent, extra, 0.1);
  }
  apply_freeze_profile();
  refresh_text_cache();
}

void Model::apply_freeze_profile() {
  for (const auto& name : params_.names()) params_.set_trainable(name, !frozen_in_profile(config_.freeze_profile, name));
}

void Model::load_params(const ParamStore& other) {
  if (other.entries().size() != params_.entries().size()) {
    throw Error("checkpoint holds " + std::to_string(other.entries().size()) + " tensors, model expects " +
                std::to_string(params_.entries().size()));
  }
  for (const auto& [name, p] : other.entries()) {
    if (!params_.contains(name)) throw Error("checkpoint tensor not in model: " + name);
    Tensor& dst = params_.mutable_value(name);
    if (dst.shape() != p.value.shape()) {
      throw ShapeError("checkpoint tensor " + name + " has shape " + shape_str(p.value.shape()) + ", model expects " +
                       shape_str(dst.shape()));
    }
    dst = p.value;
  }
  refresh_text_cache();
}

const SceneSpec& Model::scene(const std::string& scene_id) const { return find_scene(scenes_, scene_id); }

const Tensor& Model::text_embedding(const std::string& scene_id) const {
  auto it = text_cache_.find(scene_id);
  if (it == text_cache_.end()) throw Error("unknown scene id: " + scene_id);
  return it->second;
}

void Model::refresh_text_cache() {
  text_cache_.clear();
  ad::Tape tape = ad::Tape::inference(params_);
  for (const auto& s : scenes_) text_cache_[s.scene_id] = encode_text(tape, config_.text, describe(s)).value();
}

ClipFeatures frozen_features(const Model& model, const ClipPair& clip, const std::string& scene_id) {
  const ModelConfig& cfg = model.config();
  model.scene(scene_id);
  ad::Tape tape = ad::Tape::inference(model.params());
  ClipFeatures f;
  f.scene_id = scene_id;
  f.tsf_pooled = ad::mean_axis(encode_tsf(tape, cfg.tsf, clip.tsf_clip), 0).value();
  if (cfg.use_dpc) {
    for (const auto& v : dpc_stage2(tape, cfg.dpc, clip.dpc_clip)) f.dpc_stage2.push_back(v.value());
  }
  const std::size_t mid = mid_frame_index(clip.tsf_clip.dim(0));
  const std::size_t plane = clip.tsf_clip.size() / clip.tsf_clip.dim(0);
  f.mid_frame = Tensor({clip.tsf_clip.dim(1), clip.tsf_clip.dim(2), 3},
                       std::vector<double>(clip.tsf_clip.ptr() + mid * plane, clip.tsf_clip.ptr() + (mid + 1) * plane));
  return f;
}

BatchOutputs forward_batch(ad::Tape& tape, const Model& model, const std::vector<const ClipFeatures*>& clips,
                           bool training, Rng* dropout_rng, const std::optional<ad::Var>& h0) {
  const ModelConfig& cfg = model.config();
  const std::size_t b = clips.size();
  if (b == 0) throw Error("empty batch");
  const std::size_t dv = cfg.tsf.dim;
  const std::size_t dz = cfg.dpc.latent;
  const std::size_t d = cfg.text.out_dim;
  const std::size_t blocks = cfg.dpc.blocks();

  Tensor tsf({b, dv});
  Tensor text({b, d});
  for (std::size_t i = 0; i < b; ++i) {
    std::copy_n(clips[i]->tsf_pooled.ptr(), dv, tsf.ptr() + i * dv);
    std::copy_n(model.text_embedding(clips[i]->scene_id).ptr(), d, text.ptr() + i * d);
  }

  BatchOutputs out;
  ad::Var dpc_pooled;
  if (cfg.use_dpc) {
    std::vector<ad::Var> all;
    std::vector<ad::Var> pooled;
    for (const ClipFeatures* c : clips) {
      if (c->dpc_stage2.size() != blocks) throw Error("clip features lack the dense stream");
      std::vector<ad::Var> stage2;
      for (const auto& t : c->dpc_stage2) stage2.push_back(ad::constant(t));
      const ad::Var z = dpc_latents_from_stage2(tape, cfg.dpc, stage2);
      all.push_back(z);
      pooled.push_back(ad::reshape(ad::mean_axis(z, 0), {1, dz}));
    }
    out.latents = ad::concat(all, 0);
    dpc_pooled = ad::concat(pooled, 0);
  } else {
    dpc_pooled = ad::constant(Tensor({b, dz}, 0.0));
  }

  out.visual = project(tape, cfg.proj, ad::constant(tsf), dpc_pooled, cfg.effective_gamma(), training, dropout_rng).output;

  ad::Var context;
  if (cfg.use_ln_gate || cfg.context_to_visual) {
    std::vector<ad::Var> rows;
    for (const ClipFeatures* c : clips) {
      rows.push_back(ad::reshape(context_vector(tape, cfg.context, c->mid_frame), {1, cfg.context.dim}));
    }
    context = ad::concat(rows, 0);
  }
  out.text = cfg.use_ln_gate ? gate_fuse(tape, ad::constant(text), context).fused : ad::constant(text);

  if (!cfg.use_dpc) return out;

  ad::Var h = h0 ? *h0 : ad::constant(Tensor({b, cfg.pred.hidden}, 0.0));
  if (h.shape() != Shape{b, cfg.pred.hidden}) throw ShapeError("initial state must be [B, D_h]");
  ad::Var shift;
  if (cfg.context_to_visual) shift = nn::linear(tape, "ctx.to_visual", context);
  std::vector<std::vector<ad::Var>> heads;
  for (std::size_t t = 0; t < blocks; ++t) {
    std::vector<std::size_t> rows(b);
    for (std::size_t i = 0; i < b; ++i) rows[i] = i * blocks + t;
    ad::Var x = ad::gather_rows(out.latents, rows);
    if (shift) x = ad::add(x, shift);
    h = gru_step(tape, cfg.pred, x, h);
    out.hidden.push_back(h);
    heads.push_back(t + 1 < blocks ? predict_heads(tape, cfg.pred, h) : std::vector<ad::Var>{});
  }
  std::vector<ad::Var> pred_rows;
  for (std::size_t t = 0; t < blocks; ++t) {
    for (std::size_t k = 1; k <= cfg.pred.horizons && t + k < blocks; ++k) pred_rows.push_back(heads[t][k - 1]);
  }
  out.predictions = ad::concat(pred_rows, 0);
  return out;
}

}  // namespace zsad
