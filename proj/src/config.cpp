#include "zsad/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

namespace zsad {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw Error("config key " + key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  if (!v.empty() && v[0] != '-') {
    try {
      out = std::stoull(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
  }
  if (used == 0 || used != v.size()) {
    throw Error("config key " + key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("config key " + key + ": expected true or false, got '" + v + "'");
}

struct Field {
  const char* key;
  const char* doc;
  std::function<void(Config&, const std::string&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

template <typename T>
Field num(const char* key, T Config::*member, const char* doc) {
  Field f{key, doc, {}, {}};
  if constexpr (std::is_same_v<T, double>) {
    f.set = [member](Config& c, const std::string& k, const std::string& v) { c.*member = parse_double(k, v); };
    f.get = [member](const Config& c) { return fmt_double(c.*member); };
  } else if constexpr (std::is_same_v<T, bool>) {
    f.set = [member](Config& c, const std::string& k, const std::string& v) { c.*member = parse_bool(k, v); };
    f.get = [member](const Config& c) { return std::string(c.*member ? "true" : "false"); };
  } else if constexpr (std::is_same_v<T, std::string>) {
    f.set = [member](Config& c, const std::string&, const std::string& v) { c.*member = v; };
    f.get = [member](const Config& c) { return c.*member; };
  } else {
    f.set = [member](Config& c, const std::string& k, const std::string& v) {
      c.*member = static_cast<T>(parse_uint(k, v));
    };
    f.get = [member](const Config& c) { return std::to_string(c.*member); };
  }
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      num("corpus_dir", &Config::corpus_dir, "directory holding train.jsonl and eval.jsonl"),
      num("seed", &Config::seed, "run seed: corpus, initialization, batching, jitter"),
      num("fps", &Config::fps, "frame rate of generated videos"),
      num("frame_size", &Config::frame_size, "generated frame height and width in pixels"),
      num("train_videos_per_scene", &Config::train_videos_per_scene, "normal training videos per scene"),
      num("train_video_length_s", &Config::train_video_length_s, "length of each training video"),
      num("train_clip_s", &Config::train_clip_s, "length of each training manifest window"),
      num("eval_normal_per_scene", &Config::eval_normal_per_scene, "normal evaluation videos per scene"),
      num("eval_anomaly_per_scene", &Config::eval_anomaly_per_scene, "anomalous evaluation videos per scene"),
      num("eval_video_length_s", &Config::eval_video_length_s, "length of each evaluation video"),
      num("anomaly_duration_s", &Config::anomaly_duration_s, "length of each injected anomaly"),
      num("tsf_size", &Config::tsf_size, "frame size fed to the video transformer and context network"),
      num("tsf_frames", &Config::tsf_frames, "frames in the sparse clip"),
      num("patch", &Config::patch, "video transformer patch size"),
      num("tsf_dim", &Config::tsf_dim, "video transformer width"),
      num("tsf_blocks", &Config::tsf_blocks, "video transformer blocks"),
      num("dpc_size", &Config::dpc_size, "frame size fed to the block encoder"),
      num("dpc_frames", &Config::dpc_frames, "frames in the dense clip"),
      num("dpc_block_frames", &Config::dpc_block_frames, "frames per block of the dense clip"),
      num("latent_dim", &Config::latent_dim, "block latent width"),
      num("embed_dim", &Config::embed_dim, "shared video-text embedding width"),
      num("context_dim", &Config::context_dim, "context vector width"),
      num("proj_hidden", &Config::proj_hidden, "hidden width of projection residual blocks"),
      num("proj_blocks", &Config::proj_blocks, "number of projection residual blocks"),
      num("dropout", &Config::dropout, "dropout inside projection residual blocks"),
      num("gru_hidden", &Config::gru_hidden, "recurrent state width"),
      num("horizons", &Config::horizons, "future blocks predicted from each state"),
      num("use_dpc", &Config::use_dpc, "enable the dense stream and the predictive loss"),
      num("gamma", &Config::gamma, "weight of the sparse stream in the projection input"),
      num("use_residual_mlp", &Config::use_residual_mlp, "residual MLP projection (false: single linear layer)"),
      num("use_ln_gate", &Config::use_ln_gate, "context-gated text embedding"),
      num("context_to_visual", &Config::context_to_visual, "also add the context vector to the recurrent input"),
      num("freeze_profile", &Config::freeze_profile, "frozen parameter set (paper)"),
      num("alpha", &Config::alpha, "weight of the alignment loss in the total loss"),
      num("tau", &Config::tau, "alignment temperature"),
      num("learning_rate", &Config::learning_rate, "RMSProp step size"),
      num("batch_size", &Config::batch_size, "clips per training step"),
      num("steps", &Config::steps, "training steps"),
      num("warmup_steps", &Config::warmup_steps, "encoder warm-up steps before freezing (0 disables)"),
      num("warmup_tau", &Config::warmup_tau, "temperature of the warm-up contrastive task"),
      num("neg_cap", &Config::neg_cap, "maximum negatives per predictive anchor (0: no cap)"),
      num("symmetric_align", &Config::symmetric_align, "add the text-to-video direction to the alignment loss"),
      num("lambda", &Config::lambda, "weight of the alignment term in the fused score"),
      num("window_s", &Config::window_s, "scoring window length"),
      num("stride_s", &Config::stride_s, "scoring window stride"),
      num("min_duration_s", &Config::min_duration_s, "shortest flagged event"),
      num("target_fpr", &Config::target_fpr, "false-positive rate used for per-scene thresholds"),
      num("debug_oracle_scores", &Config::debug_oracle_scores, "replace scores by ground truth (plumbing check)"),
  };
  return table;
}

}  // namespace

ModelConfig Config::model_config() const {
  ModelConfig m;
  m.tsf.frames = tsf_frames;
  m.tsf.image_size = tsf_size;
  m.tsf.patch = patch;
  m.tsf.dim = tsf_dim;
  m.tsf.blocks = tsf_blocks;
  m.tsf.mlp_hidden = 2 * tsf_dim;
  m.dpc.frames = dpc_frames;
  m.dpc.block_frames = dpc_block_frames;
  m.dpc.image_size = dpc_size;
  m.dpc.latent = latent_dim;
  m.text.dim = embed_dim;
  m.text.mlp_hidden = 2 * embed_dim;
  m.text.out_dim = embed_dim;
  m.context.image_size = tsf_size;
  m.context.dim = context_dim;
  m.gate.text_dim = embed_dim;
  m.gate.context_dim = context_dim;
  m.proj.tsf_dim = tsf_dim;
  m.proj.dpc_dim = latent_dim;
  m.proj.hidden = proj_hidden;
  m.proj.out_dim = embed_dim;
  m.proj.blocks = proj_blocks;
  m.proj.dropout = dropout;
  m.proj.residual_mlp = use_residual_mlp;
  m.pred.latent = latent_dim;
  m.pred.hidden = gru_hidden;
  m.pred.trunk = gru_hidden;
  m.pred.horizons = horizons;
  m.use_dpc = use_dpc;
  m.use_ln_gate = use_ln_gate;
  m.gamma = gamma;
  m.context_to_visual = context_to_visual;
  m.freeze_profile = freeze_profile;
  return m;
}

ScoringConfig Config::scoring() const {
  ScoringConfig s;
  s.window_s = window_s;
  s.stride_s = stride_s;
  s.lambda = lambda;
  return s;
}

void apply_setting(Config& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(cfg, key, value);
      return;
    }
  }
  throw Error("unknown config key: " + key);
}

std::vector<std::pair<std::string, std::string>> config_items(const Config& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

std::vector<std::pair<std::string, std::string>> config_docs() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.doc);
  return out;
}

Config parse_config(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
    }
    try {
      apply_setting(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

std::string render_config(const Config& cfg) {
  std::string out;
  for (const auto& [k, v] : config_items(cfg)) out += k + "=" + v + "\n";
  return out;
}

}  // namespace zsad
