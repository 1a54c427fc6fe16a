#include "zsad/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "zsad/layers.hpp"

namespace zsad {

namespace {

std::string block_name(const std::string& prefix, std::size_t i) { return prefix + ".block" + std::to_string(i); }

ad::Var mlp(ad::Tape& tape, const std::string& name, const ad::Var& x) {
  const auto& s = x.shape();
  const std::size_t d = s.back();
  const ad::Var flat = ad::reshape(x, {x.size() / d, d});
  const ad::Var h = ad::gelu(nn::linear(tape, name + ".mlp_up", flat));
  return ad::reshape(nn::linear(tape, name + ".mlp_down", h), s);
}

}  // namespace

// ---- video transformer -----------------------------------------------------

void init_tsf(ParamStore& store, const TsfConfig& cfg, Rng& rng) {
  if (cfg.patch == 0 || cfg.image_size % cfg.patch != 0) throw Error("tsf patch size must divide the image size");
  nn::add_linear(store, "tsf.patch_embed", cfg.patch_dim(), cfg.dim, rng);
  store.add("tsf.pos_space", nn::normal_tensor({cfg.patches_per_frame(), cfg.dim}, 0.02, rng));
  store.add("tsf.pos_time", nn::normal_tensor({cfg.frames, cfg.dim}, 0.02, rng));
  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    const std::string b = block_name("tsf", i);
    nn::add_layer_norm(store, b + ".ln_time", cfg.dim);
    nn::add_attention(store, b + ".attn_time", cfg.dim, rng);
    nn::add_layer_norm(store, b + ".ln_space", cfg.dim);
    nn::add_attention(store, b + ".attn_space", cfg.dim, rng);
    nn::add_layer_norm(store, b + ".ln_mlp", cfg.dim);
    nn::add_linear(store, b + ".mlp_up", cfg.dim, cfg.mlp_hidden, rng);
    nn::add_linear(store, b + ".mlp_down", cfg.mlp_hidden, cfg.dim, rng);
  }
  nn::add_layer_norm(store, "tsf.ln_final", cfg.dim);
}

Tensor patchify(const Tensor& clip, std::size_t patch) {
  if (clip.rank() != 4 || clip.dim(3) != 3) throw ShapeError("patchify expects [T, H, W, 3], got " + shape_str(clip.shape()));
  const std::size_t t = clip.dim(0);
  const std::size_t h = clip.dim(1);
  const std::size_t w = clip.dim(2);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw ShapeError("patch size " + std::to_string(patch) + " does not divide " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  const std::size_t gy = h / patch;
  const std::size_t gx = w / patch;
  const std::size_t pd = patch * patch * 3;
  Tensor out({t, gy * gx, pd});
  for (std::size_t f = 0; f < t; ++f) {
    for (std::size_t py = 0; py < gy; ++py) {
      for (std::size_t px = 0; px < gx; ++px) {
        double* dst = out.ptr() + (f * gy * gx + py * gx + px) * pd;
        for (std::size_t y = 0; y < patch; ++y) {
          const double* src = clip.ptr() + ((f * h + py * patch + y) * w + px * patch) * 3;
          std::copy_n(src, patch * 3, dst + y * patch * 3);
        }
      }
    }
  }
  return out;
}

ad::Var encode_tsf_patches(ad::Tape& tape, const TsfConfig& cfg, const Tensor& patches, const TsfOptions& opts) {
  if (patches.rank() != 3 || patches.dim(0) != cfg.frames || patches.dim(1) != cfg.patches_per_frame() ||
      patches.dim(2) != cfg.patch_dim()) {
    throw ShapeError("tsf patches must be [" + std::to_string(cfg.frames) + ", " +
                     std::to_string(cfg.patches_per_frame()) + ", " + std::to_string(cfg.patch_dim()) + "], got " +
                     shape_str(patches.shape()));
  }
  const std::size_t t = cfg.frames;
  const std::size_t p = cfg.patches_per_frame();
  const std::size_t d = cfg.dim;

  ad::Var x = nn::linear(tape, "tsf.patch_embed", ad::constant(patches.reshaped({t * p, cfg.patch_dim()})));
  x = ad::add(ad::reshape(x, {t, p * d}), ad::reshape(tape.param("tsf.pos_space"), {p * d}));
  x = ad::swap01(ad::reshape(x, {t, p, d}));  // [P, T, D]
  x = ad::add(ad::reshape(x, {p, t * d}), ad::reshape(tape.param("tsf.pos_time"), {t * d}));
  x = ad::reshape(x, {p, t, d});

  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    const std::string b = block_name("tsf", i);
    // Temporal pass: each patch position attends over the frames.
    x = ad::add(x, nn::self_attention(tape, b + ".attn_time", nn::layer_norm(tape, b + ".ln_time", x),
                                      opts.uniform_attention));
    x = ad::swap01(x);  // [T, P, D]
    // Spatial pass: patches within a frame.
    x = ad::add(x, nn::self_attention(tape, b + ".attn_space", nn::layer_norm(tape, b + ".ln_space", x),
                                      opts.uniform_attention));
    x = ad::add(x, mlp(tape, b, nn::layer_norm(tape, b + ".ln_mlp", x)));
    if (i + 1 < cfg.blocks) x = ad::swap01(x);
  }
  if (cfg.blocks == 0) x = ad::swap01(x);
  x = nn::layer_norm(tape, "tsf.ln_final", x);
  return ad::mean_axis(x, 1);
}

ad::Var encode_tsf(ad::Tape& tape, const TsfConfig& cfg, const Tensor& clip, const TsfOptions& opts) {
  if (clip.rank() != 4 || clip.dim(1) != cfg.image_size || clip.dim(2) != cfg.image_size) {
    throw ShapeError("tsf clip must be [" + std::to_string(cfg.frames) + ", " + std::to_string(cfg.image_size) + ", " +
                     std::to_string(cfg.image_size) + ", 3], got " + shape_str(clip.shape()));
  }
  return encode_tsf_patches(tape, cfg, patchify(clip, cfg.patch), opts);
}

// ---- block conv encoder ----------------------------------------------------

void init_dpc(ParamStore& store, const DpcConfig& cfg, Rng& rng) {
  if (cfg.block_frames == 0 || cfg.frames % cfg.block_frames != 0) {
    throw Error("dpc frame count must be divisible by the block size");
  }
  nn::add_conv(store, "dpc.conv1", 3, dpc_input_channels(cfg.block_frames), cfg.channels1, rng);
  nn::add_conv(store, "dpc.conv2", 3, cfg.channels1, cfg.channels2, rng);
  nn::add_conv(store, "dpc.conv3", 3, cfg.channels2, cfg.latent / (cfg.grid * cfg.grid), rng);
}

namespace {
// Frame-to-mean differences are small next to the frames themselves; the gain
// keeps moving content from being drowned by the static background.
constexpr double kMotionGain = 4.0;
}  // namespace

Tensor dpc_block_input(const Tensor& clip, std::size_t block, std::size_t block_frames) {
  const std::size_t h = clip.dim(1);
  const std::size_t w = clip.dim(2);
  const std::size_t c = dpc_input_channels(block_frames);
  const double inv = 1.0 / static_cast<double>(block_frames);
  Tensor out({h, w, c});
  const double* first = clip.ptr() + block * block_frames * h * w * 3;
  for (std::size_t px = 0; px < h * w; ++px) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      double m = 0.0;
      for (std::size_t f = 0; f < block_frames; ++f) m += first[(f * h * w + px) * 3 + ch];
      m *= inv;
      out[px * c + ch] = m;
      for (std::size_t f = 0; f < block_frames; ++f) {
        out[px * c + 3 + f * 3 + ch] = kMotionGain * (first[(f * h * w + px) * 3 + ch] - m);
      }
    }
  }
  return out;
}

std::vector<ad::Var> dpc_stage2(ad::Tape& tape, const DpcConfig& cfg, const Tensor& clip) {
  if (clip.rank() != 4 || clip.dim(3) != 3) throw ShapeError("dpc clip must be [T, H, W, 3]");
  if (clip.dim(0) % cfg.block_frames != 0) {
    throw ShapeError("dpc clip of " + std::to_string(clip.dim(0)) + " frames is not divisible into blocks of " +
                     std::to_string(cfg.block_frames));
  }
  if (clip.dim(0) != cfg.frames || clip.dim(1) != cfg.image_size || clip.dim(2) != cfg.image_size) {
    throw ShapeError("dpc clip shape " + shape_str(clip.shape()) + " does not match the config");
  }
  std::vector<ad::Var> out;
  for (std::size_t b = 0; b < cfg.blocks(); ++b) {
    ad::Var x = ad::constant(dpc_block_input(clip, b, cfg.block_frames));
    x = ad::gelu(nn::conv(tape, "dpc.conv1", x, 3, 2, 1));
    x = ad::gelu(nn::conv(tape, "dpc.conv2", x, 3, 2, 1));
    out.push_back(x);
  }
  return out;
}

ad::Var dpc_latents_from_stage2(ad::Tape& tape, const DpcConfig& cfg, const std::vector<ad::Var>& stage2) {
  std::vector<ad::Var> rows;
  rows.reserve(stage2.size());
  for (const auto& s : stage2) {
    const ad::Var y = nn::conv(tape, "dpc.conv3", s, 3, 2, 1);
    rows.push_back(ad::reshape(nn::grid_avg_pool(y, cfg.grid), {1, cfg.latent}));
  }
  return ad::l2_normalize(ad::concat(rows, 0));
}

ad::Var encode_dpc(ad::Tape& tape, const DpcConfig& cfg, const Tensor& clip) {
  return dpc_latents_from_stage2(tape, cfg, dpc_stage2(tape, cfg, clip));
}

// ---- text ------------------------------------------------------------------

const std::vector<std::string>& text_vocabulary() {
  static const std::vector<std::string> vocab = {
      "<unk>", "a",   "at",    "with",  "pedestrian", "activity", "corridor",
      "plaza", "gate", "day", "night", "empty",      "sparse",   "busy"};
  return vocab;
}

std::vector<std::size_t> tokenize(const std::string& text) {
  const auto& vocab = text_vocabulary();
  std::istringstream in(text);
  std::vector<std::size_t> ids;
  std::string word;
  while (in >> word) {
    std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
    auto it = std::find(vocab.begin(), vocab.end(), word);
    ids.push_back(it == vocab.end() ? 0 : static_cast<std::size_t>(it - vocab.begin()));
  }
  if (ids.empty()) throw Error("cannot encode an empty description");
  return ids;
}

void init_text(ParamStore& store, const TextConfig& cfg, Rng& rng) {
  store.add("text.token_embed", nn::normal_tensor({text_vocabulary().size(), cfg.dim}, 1.0, rng), false);
  store.add("text.pos", nn::normal_tensor({cfg.max_tokens, cfg.dim}, 0.1, rng), false);
  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    const std::string b = block_name("text", i);
    nn::add_layer_norm(store, b + ".ln_attn", cfg.dim);
    nn::add_attention(store, b + ".attn", cfg.dim, rng);
    nn::add_layer_norm(store, b + ".ln_mlp", cfg.dim);
    nn::add_linear(store, b + ".mlp_up", cfg.dim, cfg.mlp_hidden, rng);
    nn::add_linear(store, b + ".mlp_down", cfg.mlp_hidden, cfg.dim, rng);
  }
  nn::add_layer_norm(store, "text.ln_final", cfg.dim);
  nn::add_linear(store, "text.proj", cfg.dim, cfg.out_dim, rng);
  store.set_trainable_prefix("text.", false);
}

ad::Var encode_text(ad::Tape& tape, const TextConfig& cfg, const std::string& text) {
  std::vector<std::size_t> ids = tokenize(text);
  if (ids.size() > cfg.max_tokens) ids.resize(cfg.max_tokens);
  const std::size_t n = ids.size();
  ad::Var x = ad::add(ad::gather_rows(tape.param("text.token_embed"), ids), ad::slice(tape.param("text.pos"), 0, n));
  x = ad::reshape(x, {1, n, cfg.dim});
  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    const std::string b = block_name("text", i);
    x = ad::add(x, nn::self_attention(tape, b + ".attn", nn::layer_norm(tape, b + ".ln_attn", x)));
    x = ad::add(x, mlp(tape, b, nn::layer_norm(tape, b + ".ln_mlp", x)));
  }
  x = nn::layer_norm(tape, "text.ln_final", ad::reshape(x, {n, cfg.dim}));
  const ad::Var pooled = ad::mean_axis(x, 0);
  return ad::l2_normalize(nn::linear(tape, "text.proj", pooled));
}

}  // namespace zsad
