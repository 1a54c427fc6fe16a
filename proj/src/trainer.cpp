#include "zsad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>

#include "zsad/parallel.hpp"

namespace zsad {

void RmsProp::step(ParamStore& params, const ad::GradMap& grads) {
  for (const auto& [name, g] : grads) {
    Tensor& theta = params.mutable_value(name);
    auto it = sq_.find(name);
    if (it == sq_.end()) it = sq_.emplace(name, Tensor(g.shape(), 0.0)).first;
    Tensor& v = it->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      v[i] = rho_ * v[i] + (1.0 - rho_) * g[i] * g[i];
      theta[i] -= lr_ * g[i] / (std::sqrt(v[i]) + eps_);
    }
  }
}

bool SpotCheck::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const SpotCheckEntry& e) { return e.ok; });
}

void check_training_corpus(const std::vector<CorpusRecord>& corpus) {
  if (corpus.empty()) throw Error("training corpus is empty");
  for (const auto& r : corpus) {
    if (r.entry.label != Label::normal || !r.annotations.empty()) {
      throw ContractViolation("training corpus entry " + r.entry.video_id +
                              " is labeled anomaly; training must see normal data only");
    }
  }
}

namespace {

// Entries grouped by scene, scenes in first-appearance order.
struct SceneIndex {
  std::vector<std::string> scenes;
  std::vector<std::vector<std::size_t>> entries;

  explicit SceneIndex(const std::vector<CorpusRecord>& corpus) {
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const std::string& id = corpus[i].spec.scene_id;
      auto it = pos.find(id);
      if (it == pos.end()) {
        it = pos.emplace(id, scenes.size()).first;
        scenes.push_back(id);
        entries.emplace_back();
      }
      entries[it->second].push_back(i);
    }
  }
};

// Entry indices for one step: as many distinct scenes as the batch allows,
// then repeats once every scene is used.
std::vector<std::size_t> pick_entries(const SceneIndex& index, std::size_t batch, std::uint64_t seed, std::size_t step) {
  Rng rng(mix_seed(seed, step + 1000));
  std::vector<std::size_t> order(index.scenes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t slot = b % order.size();
    if (slot == 0) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    const auto& pool = index.entries[order[slot]];
    out.push_back(pool[rng.below(pool.size())]);
  }
  return out;
}

std::vector<ClipPair> batch_clips(const std::vector<CorpusRecord>& corpus, const std::vector<std::size_t>& picks,
                                  const SamplerConfig& sampler, std::uint64_t seed, std::size_t step) {
  std::vector<ClipPair> clips(picks.size());
  parallel_for(picks.size(), [&](std::size_t i) {
    const CorpusRecord& r = corpus[picks[i]];
    const GeneratedVideo g = regenerate(r);
    const std::uint64_t js = mix_seed(entry_stream_seed(seed, r.entry.video_id, picks[i]), step);
    clips[i] = extract_clip_pair(g.video, r.entry, sampler, js);
  });
  return clips;
}

std::uint64_t step_seed_for(std::uint64_t seed, std::size_t step) { return mix_seed(mix_seed(seed, 0x57e9), step); }

}  // namespace

std::vector<ClipFeatures> training_batch(const Model& model, const std::vector<CorpusRecord>& corpus,
                                         const TrainConfig& cfg, std::size_t step) {
  const SceneIndex index(corpus);
  if (index.scenes.size() < 2) std::cerr << "warning: training corpus has a single scene; alignment has no negatives\n";
  const auto picks = pick_entries(index, cfg.batch_size, cfg.seed, step);
  const auto clips = batch_clips(corpus, picks, model.config().sampler(true), cfg.seed, step);
  std::vector<ClipFeatures> feats(clips.size());
  parallel_for(clips.size(), [&](std::size_t i) {
    feats[i] = frozen_features(model, clips[i], corpus[picks[i]].spec.scene_id);
  });
  return feats;
}

BatchLoss batch_loss(ad::Tape& tape, const Model& model, const std::vector<const ClipFeatures*>& clips,
                     const TrainConfig& cfg, std::uint64_t step_seed) {
  const ModelConfig& mc = model.config();
  Rng dropout_rng(mix_seed(step_seed, 1));
  const BatchOutputs out = forward_batch(tape, model, clips, true, &dropout_rng);
  BatchLoss loss;
  loss.l_align = align_loss(out.visual, out.text, cfg.tau, cfg.symmetric_align);
  if (!mc.use_dpc) {
    loss.total = loss.l_align;
    return loss;
  }
  const CpcPlan plan = plan_cpc(clips.size(), mc.dpc.blocks(), mc.pred.horizons, cfg.neg_cap, mix_seed(step_seed, 2));
  loss.l_pred = cpc_loss(out.predictions, out.latents, plan.candidates);
  loss.total = total_loss(loss.l_align, loss.l_pred, cfg.alpha);
  return loss;
}

namespace {

SpotCheck spot_check(Model& model, const std::vector<const ClipFeatures*>& clips, const TrainConfig& cfg,
                     std::uint64_t step_seed, const ad::GradMap& grads) {
  ParamStore& params = model.params();
  std::vector<std::pair<std::string, std::size_t>> pool;
  for (const auto& [name, g] : grads) pool.emplace_back(name, g.size());
  std::size_t total = 0;
  for (const auto& p : pool) total += p.second;
  Rng rng(mix_seed(cfg.seed, 0x5b07));
  auto loss_at = [&]() {
    ad::Tape tape(params);
    return batch_loss(tape, model, clips, cfg, step_seed).total.value().item();
  };
  SpotCheck out;
  for (std::size_t e = 0; e < cfg.spot_entries && total > 0; ++e) {
    std::size_t flat = rng.below(total);
    std::size_t k = 0;
    while (flat >= pool[k].second) flat -= pool[k++].second;
    SpotCheckEntry entry;
    entry.name = pool[k].first;
    entry.index = flat;
    entry.analytic = grads.at(entry.name)[flat];
    double& x = params.mutable_value(entry.name)[flat];
    const double saved = x;
    const double h = 1e-5;
    x = saved + h;
    const double up = loss_at();
    x = saved - h;
    const double down = loss_at();
    x = saved;
    entry.numeric = (up - down) / (2.0 * h);
    const double diff = std::abs(entry.analytic - entry.numeric);
    entry.ok = diff <= 1e-8 || diff <= 1e-3 * std::max(std::abs(entry.analytic), std::abs(entry.numeric));
    out.entries.push_back(entry);
  }
  return out;
}

}  // namespace

TrainResult train(Model& model, const std::vector<CorpusRecord>& corpus, const TrainConfig& cfg, const StepHook& hook) {
  check_training_corpus(corpus);
  if (cfg.batch_size < 2) throw Error("batch_size must be at least 2");
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw Error("alpha must lie in [0, 1]");
  if (!(cfg.tau > 0.0)) throw Error("tau must be positive");
  for (const auto& r : corpus) model.scene(r.spec.scene_id);

  RmsProp opt(cfg.learning_rate);
  TrainResult result;
  result.best_params = model.params();
  result.best_loss = std::numeric_limits<double>::infinity();
  const std::size_t window = 20;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const std::vector<ClipFeatures> feats = training_batch(model, corpus, cfg, step);
    std::vector<const ClipFeatures*> ptrs;
    for (const auto& f : feats) ptrs.push_back(&f);
    const std::uint64_t step_seed = step_seed_for(cfg.seed, step);

    ad::Tape tape(model.params());
    const BatchLoss loss = batch_loss(tape, model, ptrs, cfg, step_seed);
    const ad::GradMap grads = ad::grad(loss.total, tape);
    if (step == 0 && cfg.spot_check) result.spot = spot_check(model, ptrs, cfg, step_seed, grads);

    LossRecord rec;
    rec.step = step;
    rec.l_align = loss.l_align.value().item();
    rec.l_pred = loss.l_pred ? loss.l_pred.value().item() : 0.0;
    rec.l_total = loss.total.value().item();
    if (!std::isfinite(rec.l_total)) throw Error("training diverged at step " + std::to_string(step));
    result.log.push_back(rec);
    // The parameters that produced this loss are the ones before the update.
    const std::size_t n = std::min(window, result.log.size());
    double running = 0.0;
    for (std::size_t i = result.log.size() - n; i < result.log.size(); ++i) running += result.log[i].l_total;
    running /= static_cast<double>(n);
    if (running < result.best_loss) {
      result.best_loss = running;
      result.best_params = model.params();
    }
    opt.step(model.params(), grads);
    if (hook) hook(rec);
  }
  return result;
}

bool is_encoder_param(const std::string& name) { return name.rfind("tsf.", 0) == 0 || name.rfind("dpc.", 0) == 0; }

std::vector<double> warm_up_encoders(Model& model, const std::vector<CorpusRecord>& corpus, const WarmupConfig& cfg) {
  check_training_corpus(corpus);
  const ModelConfig& mc = model.config();
  const SceneIndex index(corpus);
  RmsProp opt(cfg.learning_rate);
  std::vector<double> losses;

  // Successor-picking loss over rows laid out as clip·per_clip + position.
  auto order_loss = [&](const ad::Var& feats, std::size_t clips, std::size_t per_clip) {
    std::vector<std::size_t> anchors;
    std::vector<std::vector<std::size_t>> candidates;
    const std::size_t n = clips * per_clip;
    for (std::size_t c = 0; c < clips; ++c) {
      for (std::size_t t = 0; t + 1 < per_clip; ++t) {
        const std::size_t a = c * per_clip + t;
        anchors.push_back(a);
        std::vector<std::size_t> cand{a + 1};
        for (std::size_t j = 0; j < n; ++j) {
          if (j != a && j != a + 1) cand.push_back(j);
        }
        candidates.push_back(std::move(cand));
      }
    }
    return cpc_loss(ad::scale(ad::gather_rows(feats, anchors), 1.0 / cfg.tau), feats, candidates);
  };

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto picks = pick_entries(index, cfg.batch_size, mix_seed(cfg.seed, 0x3a3), step);
    const auto clips = batch_clips(corpus, picks, mc.sampler(true), mix_seed(cfg.seed, 0x3a3), step);
    ad::Tape tape(model.params(), is_encoder_param);
    std::vector<ad::Var> frames;
    std::vector<ad::Var> blocks;
    for (const auto& c : clips) {
      frames.push_back(ad::l2_normalize(encode_tsf(tape, mc.tsf, c.tsf_clip)));
      if (mc.use_dpc) blocks.push_back(encode_dpc(tape, mc.dpc, c.dpc_clip));
    }
    ad::Var loss = order_loss(ad::concat(frames, 0), clips.size(), mc.tsf.frames);
    if (mc.use_dpc) loss = ad::add(loss, order_loss(ad::concat(blocks, 0), clips.size(), mc.dpc.blocks()));
    const ad::GradMap grads = ad::grad(loss, tape);
    losses.push_back(loss.value().item());
    if (!std::isfinite(losses.back())) throw Error("encoder warm-up diverged at step " + std::to_string(step));
    opt.step(model.params(), grads);
  }
  return losses;
}

void copy_params(const ParamStore& src, ParamStore& dst, const std::function<bool(const std::string&)>& pick) {
  for (const auto& name : dst.names()) {
    if (!pick(name) || !src.contains(name)) continue;
    Tensor& d = dst.mutable_value(name);
    const Tensor& s = src.value(name);
    if (d.shape() != s.shape()) throw ShapeError("cannot copy " + name + ": shapes differ");
    d = s;
  }
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write loss log: " + path.string());
  out << "step,l_align,l_pred,l_total\n" << std::setprecision(17);
  for (const auto& r : log) out << r.step << ',' << r.l_align << ',' << r.l_pred << ',' << r.l_total << '\n';
}

std::pair<double, double> smoothed_loss_ends(const std::vector<LossRecord>& log, std::size_t window) {
  if (log.empty()) throw Error("empty loss log");
  const std::size_t n = std::min(window, log.size());
  double first = 0.0;
  double last = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    first += log[i].l_total;
    last += log[log.size() - n + i].l_total;
  }
  return {first / static_cast<double>(n), last / static_cast<double>(n)};
}

}  // namespace zsad
