// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status 1
// if any criterion fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "support.hpp"
#include "zsad/cli.hpp"
#include "zsad/config.hpp"
#include "zsad/corpus.hpp"
#include "zsad/inference.hpp"
#include "zsad/losses.hpp"
#include "zsad/metrics.hpp"
#include "zsad/sampler.hpp"
#include "zsad/trainer.hpp"

using namespace zsad;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failed sub-checks; the first few are echoed in the summary line.
struct Checks {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  Outcome outcome(const std::string& ok_detail) const {
    if (failures.empty()) return {true, ok_detail};
    std::string d = std::to_string(failures.size()) + " failed check(s): " + failures[0];
    if (failures.size() > 1) d += "; " + failures[1];
    return {false, d};
  }
};

std::vector<CorpusRecord> tiny_train_corpus() {
  Config c;
  c.frame_size = 32;
  c.train_videos_per_scene = 1;
  return build_train_corpus(c);
}

std::vector<const ClipFeatures*> pointers(const std::vector<ClipFeatures>& f) {
  std::vector<const ClipFeatures*> p;
  for (const auto& x : f) p.push_back(&x);
  return p;
}

bool has_prefix(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

bool all_zero(const Tensor& t) {
  for (double v : t.values())
    if (v != 0.0) return false;
  return true;
}

Outcome loss_oracles() {
  const auto t0 = Clock::now();
  Checks c;
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 2 + rng.below(15), d = 2 + rng.below(31);
    const double tau = rng.uniform(0.03, 1.0);
    const Tensor v = test::unit_rows(b, d, rng), t = test::unit_rows(b, d, rng);
    const double got = align_loss(ad::constant(v), ad::constant(t), tau).value().item();
    const double diff = std::abs(got - oracle::align_loss(v, t, tau));
    worst = std::max(worst, diff);
    c.expect(diff < 1e-9, "align trial " + std::to_string(trial));
  }
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t clips = 2 + rng.below(5), blocks = 2 + rng.below(5);
    const std::size_t horizons = 1 + rng.below(blocks - 1);
    const std::size_t cap = trial % 3 == 0 ? 0 : 1 + rng.below(12);
    const CpcPlan plan = plan_cpc(clips, blocks, horizons, cap, 500 + trial);
    const std::size_t d = 2 + rng.below(15);
    const Tensor pred = test::unit_rows(plan.anchors.size(), d, rng);
    const Tensor lat = test::unit_rows(clips * blocks, d, rng);
    const double got = cpc_loss(ad::constant(pred), ad::constant(lat), plan.candidates).value().item();
    const double diff = std::abs(got - oracle::cpc_loss(pred, lat, plan.candidates));
    worst = std::max(worst, diff);
    c.expect(diff < 1e-9, "cpc trial " + std::to_string(trial));
  }
  // Equal similarities everywhere: the loss is the log of the candidate count.
  for (std::size_t b : {2, 5, 16}) {
    const Tensor v({b, 3}, 0.0);
    const double got = align_loss(ad::constant(v), ad::constant(v), 0.07).value().item();
    c.expect(std::abs(got - std::log(static_cast<double>(b))) < 1e-9, "uniform align B=" + std::to_string(b));
  }
  for (std::size_t negatives : {1, 3, 10}) {
    const Tensor pred({1, 2}, {1, 0});
    Tensor lat({negatives + 1, 2});
    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i <= negatives; ++i) {
      lat[2 * i + 1] = i % 2 ? 1.0 : -1.0;
      cand.push_back(i);
    }
    const double got = cpc_loss(ad::constant(pred), ad::constant(lat), {cand}).value().item();
    c.expect(std::abs(got - std::log(1.0 + negatives)) < 1e-9, "uniform cpc " + std::to_string(negatives));
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 10.0, "runtime " + num(secs, 1) + " s");
  return c.outcome("400 random batches, max |diff| " + num(worst * 1e12, 3) + "e-12, " + num(secs, 2) + " s");
}

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  Checks c;
  Model model(test::tiny_model_config(), 21);
  // Move the zero-initialized residual weights and β off zero so every path carries gradient.
  Rng rng(22);
  for (const auto& name : model.params().names()) {
    if (has_prefix(name, "gate.beta") || (has_prefix(name, "proj.block") && name.find(".down.") != std::string::npos)) {
      Tensor& v = model.params().mutable_value(name);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(-0.3, 0.3);
    }
  }
  const auto corpus = tiny_train_corpus();
  TrainConfig tc;
  tc.batch_size = 4;
  tc.neg_cap = 6;
  const auto feats = training_batch(model, corpus, tc, 0);
  const auto ptrs = pointers(feats);
  const ParamStore& store = model.params();
  auto pick = [&](const std::string& n) { return store.trainable(n); };
  const test::FdReport r = test::check_params(
      model.params(), [&](ad::Tape& tape) { return batch_loss(tape, model, ptrs, tc, 3).total; }, pick, 3);
  c.expect(r.failed == 0, r.first_failure);

  // Every module named in the trainable set must have been probed.
  for (const char* group : {"proj.", "gate.beta", "gate.", "ctx.", "gru.", "pred.head", "dpc.conv3"}) {
    bool seen = false;
    for (const auto& n : store.trainable_names()) seen = seen || has_prefix(n, group);
    c.expect(seen, std::string("no trainable parameter under ") + group);
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 60.0, "runtime " + num(secs, 1) + " s");
  return c.outcome(std::to_string(r.checked) + " entries, worst relative error " + num(r.worst * 1e6, 3) + "e-6, " +
                   num(secs, 1) + " s");
}

Outcome identity_at_init() {
  Checks c;
  const Config cfg;
  const Model model(cfg.model_config(), cfg.seed);
  Rng rng(31);
  ad::Tape tape = ad::Tape::inference(model.params());
  const ProjectionConfig& pc = model.config().proj;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const ProjectionTrace tr = project(tape, pc, ad::constant(test::random_tensor({pc.tsf_dim}, rng)),
                                       ad::constant(test::random_tensor({pc.dpc_dim}, rng)), cfg.gamma, false);
    worst = std::max(worst, max_abs_diff(tr.after_blocks.value(), tr.input_proj.value()));
  }
  c.expect(worst <= 1e-12, "residual blocks drift " + num(worst, 15));
  c.expect(model.params().value("gate.beta").item() == 0.0, "beta is not zero at init");
  const GateConfig& gc = model.config().gate;
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor t = test::unit_rows(1, gc.text_dim, rng).reshaped({gc.text_dim});
    const Tensor u = test::random_tensor({gc.context_dim}, rng);
    c.expect(gate_fuse(tape, ad::constant(t), ad::constant(u)).fused.value().identical(t), "gate changed t");
  }
  return c.outcome("blocks within " + num(worst, 15) + ", gate exact");
}

Outcome freeze_contract(const std::vector<CorpusRecord>& train_corpus) {
  Checks c;
  const Config cfg;
  Model model(cfg.model_config(), cfg.seed);
  const ParamStore init = model.params();
  TrainConfig tc = train_config(cfg);
  tc.steps = 50;
  train(model, train_corpus, tc);
  std::size_t frozen = 0, moved = 0;
  for (const auto& [name, p] : init.entries()) {
    if (p.trainable) {
      if (!model.params().value(name).identical(p.value)) ++moved;
      continue;
    }
    ++frozen;
    c.expect(frozen_in_profile("paper", name), name + " frozen outside the profile");
    c.expect(model.params().value(name).identical(p.value), name + " changed");
  }
  for (const char* prefix : {"tsf.", "text.", "dpc.conv1", "dpc.conv2"}) {
    for (const auto& [name, p] : init.entries()) {
      if (has_prefix(name, prefix)) c.expect(!p.trainable, name + " is trainable");
    }
  }
  c.expect(moved > 0, "no trainable parameter moved");
  return c.outcome(std::to_string(frozen) + " frozen tensors bit-identical after 50 steps, " + std::to_string(moved) +
                   " trainable tensors moved");
}

Outcome metric_oracles() {
  Checks c;
  Rng rng(51);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(120);
    const int grid = trial % 2 ? 5 : 100000;
    LabeledScores d;
    for (std::size_t i = 0; i < n; ++i) {
      d.scores.push_back(std::floor(rng.uniform() * grid) / grid);
      d.labels.push_back(rng.uniform() < 0.35 ? 1 : 0);
    }
    d.labels[0] = 1;
    d.labels[1] = 0;
    const double dr = std::abs(roc_auc(d) - oracle::roc_auc(d.scores, d.labels));
    const double dp = std::abs(pr_auc(d) - oracle::average_precision(d.scores, d.labels));
    worst = std::max({worst, dr, dp});
    c.expect(dr < 1e-12, "roc trial " + std::to_string(trial));
    c.expect(dp < 1e-12, "pr trial " + std::to_string(trial));
  }
  c.expect(roc_auc({{0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0}}) == 1.0, "perfect roc");
  c.expect(pr_auc({{0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0}}) == 1.0, "perfect pr");
  c.expect(roc_auc({{0.4, 0.4, 0.4, 0.4, 0.4}, {1, 0, 0, 1, 0}}) == 0.5, "all-ties roc");
  return c.outcome("400 random instances, max |diff| " + num(worst * 1e15, 3) + "e-15");
}

Outcome sampler_properties() {
  Checks c;
  Rng rng(61);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto first = static_cast<std::int64_t>(rng.below(500));
    const auto len = static_cast<std::int64_t>(1 + rng.below(400));
    const std::int64_t last = first + len - 1;
    const std::size_t count = 1 + rng.below(64);
    const std::uint64_t seed = rng.next_u64();
    const auto mid = sparse_bin_sample(first, last, count, false, seed);
    const auto jit = sparse_bin_sample(first, last, count, true, seed);
    const std::string where = "(" + std::to_string(first) + "," + std::to_string(last) + "," + std::to_string(count) + ")";
    c.expect(mid.size() == count && jit.size() == count, "size " + where);
    c.expect(mid == sparse_bin_sample(first, last, count, false, seed ^ 0x55), "midpoints depend on seed " + where);
    c.expect(jit == sparse_bin_sample(first, last, count, true, seed), "jitter not reproducible " + where);
    for (std::size_t b = 0; b + 1 < count; ++b) {
      c.expect(mid[b] <= mid[b + 1] && jit[b] <= jit[b + 1], "not monotone " + where);
    }
    if (static_cast<std::size_t>(len) < count) continue;
    for (std::size_t b = 0; b < count; ++b) {
      // Bin edges from the rounding rule, computed in floating point.
      const double L = static_cast<double>(len), n = static_cast<double>(count);
      const auto lo = first + static_cast<std::int64_t>(std::floor(static_cast<double>(b) * L / n + 0.5));
      const auto hi = first + static_cast<std::int64_t>(std::floor(static_cast<double>(b + 1) * L / n + 0.5)) - 1;
      c.expect(mid[b] >= lo && mid[b] <= hi && jit[b] >= lo && jit[b] <= hi, "outside bin " + where);
      c.expect(mid[b] == lo + (hi - lo + 1) / 2, "not the midpoint " + where);
    }
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const double fps = std::vector<double>{10, 24, 25, 30}[rng.below(4)];
    const auto a = static_cast<std::int64_t>(rng.below(1000));
    const auto b = a + 1 + static_cast<std::int64_t>(rng.below(300));
    const FrameRange r = timestamps_to_frames(static_cast<double>(a) / fps, static_cast<double>(b) / fps, fps);
    c.expect(r.first == a && r.last == b - 1, "frame-aligned window " + std::to_string(a));
    const double s = rng.uniform(0, 60), e = s + rng.uniform(0.5, 10);
    const double fs = std::floor(s * fps), fe = std::floor(e * fps);
    // Skip products within rounding distance of an integer.
    if (s * fps - fs < 1e-6 || e * fps - fe < 1e-6) continue;
    const FrameRange q = timestamps_to_frames(s, e, fps);
    c.expect(q.first == static_cast<std::int64_t>(fs) && q.last == static_cast<std::int64_t>(fe) - 1,
             "floor arithmetic at " + num(s, 6));
  }
  return c.outcome("1000 sampling triples and 2000 timestamp windows");
}

Outcome loss_weight_extremes() {
  Checks c;
  const auto corpus = tiny_train_corpus();
  {
    Model m(test::tiny_model_config(), 71);
    const ParamStore init = m.params();
    TrainConfig tc;
    tc.alpha = 1.0;
    tc.steps = 5;
    tc.batch_size = 4;
    train(m, corpus, tc);
    std::size_t checked = 0;
    for (const auto& [name, p] : init.entries()) {
      if (!has_prefix(name, "gru.") && !has_prefix(name, "pred.")) continue;
      ++checked;
      c.expect(m.params().value(name).identical(p.value), name + " moved with alpha = 1");
    }
    c.expect(checked > 0, "no predictor parameters");
  }
  std::size_t zero_groups = 0;
  {
    Model m(test::tiny_model_config(), 72);
    TrainConfig tc;
    tc.alpha = 0.0;
    tc.batch_size = 4;
    const auto feats = training_batch(m, corpus, tc, 0);
    const auto ptrs = pointers(feats);
    ad::Tape tape(m.params());
    const BatchLoss bl = batch_loss(tape, m, ptrs, tc, 5);
    const ad::GradMap total = ad::grad(bl.total, tape);
    ad::Tape tape2(m.params());
    const ad::GradMap pred_only = ad::grad(batch_loss(tape2, m, ptrs, tc, 5).l_pred, tape2);
    bool cpc_moves_encoder = false, cpc_moves_predictor = false;
    for (const auto& [name, g] : total) {
      const bool head = has_prefix(name, "proj") || has_prefix(name, "gate.") || has_prefix(name, "ctx.");
      if (head) {
        ++zero_groups;
        c.expect(all_zero(g), name + " has gradient with alpha = 0");
      }
      const auto it = pred_only.find(name);
      c.expect(it != pred_only.end() && it->second.identical(g), name + " differs from the predictive-only gradient");
      if (has_prefix(name, "dpc.conv3") && !all_zero(g)) cpc_moves_encoder = true;
      if ((has_prefix(name, "gru.") || has_prefix(name, "pred.")) && !all_zero(g)) cpc_moves_predictor = true;
    }
    c.expect(zero_groups > 0, "no projection parameters in the gradient map");
    c.expect(cpc_moves_encoder, "dense encoder stage gets no gradient");
    c.expect(cpc_moves_predictor, "predictor gets no gradient");

    // And over real optimizer steps the projection head stays put.
    const ParamStore init = m.params();
    tc.steps = 5;
    train(m, corpus, tc);
    for (const auto& [name, p] : init.entries()) {
      if (has_prefix(name, "proj")) c.expect(m.params().value(name).identical(p.value), name + " moved with alpha = 0");
    }
  }
  return c.outcome("alpha = 1 leaves gru/pred unchanged; alpha = 0 gradient equals the predictive-only gradient, " +
                   std::to_string(zero_groups) + " projection/gate tensors at zero");
}

Outcome end_to_end(const std::vector<CorpusRecord>& train_corpus) {
  const auto t0 = Clock::now();
  Checks c;
  const Config cfg;
  const auto eval_corpus = build_eval_corpus(cfg);
  std::ostringstream log;
  const ParamStore encoders = warmed_encoders(cfg, train_corpus, log);
  const RunResult full = train_and_evaluate(cfg, encoders, train_corpus, eval_corpus, "", log);
  const auto ladder = ablation_ladder();
  const RunResult b1 = train_and_evaluate(apply_variant(cfg, ladder.front()), encoders, train_corpus, eval_corpus, "", log);
  const RunResult b5 = train_and_evaluate(apply_variant(cfg, ladder.back()), encoders, train_corpus, eval_corpus, "", log);
  const double secs = seconds_since(t0);
  const double gap = b5.report.roc_auc - b1.report.roc_auc;
  c.expect(full.report.roc_auc >= 0.80, "ROC-AUC " + num(full.report.roc_auc) + " < 0.80");
  c.expect(full.report.pr_auc >= 0.60, "PR-AUC " + num(full.report.pr_auc) + " < 0.60");
  c.expect(gap >= 0.05, "B5 - B1 ROC-AUC gap " + num(gap) + " < 0.05");
  c.expect(secs <= 900.0, "runtime " + num(secs, 0) + " s > 900 s");
  const std::string d = "ROC-AUC " + num(full.report.roc_auc) + ", PR-AUC " + num(full.report.pr_auc) + "; B5 " +
                        num(b5.report.roc_auc) + " vs B1 " + num(b1.report.roc_auc) + " (PR-AUC " + num(b5.report.pr_auc) + " vs " +
                        num(b1.report.pr_auc) + "); " + num(secs, 0) + " s";
  Outcome o = c.outcome(d);
  if (!o.pass) o.detail += " (" + d + ")";
  return o;
}

Outcome streaming_consistency() {
  Checks c;
  const Config cfg;
  const Model model(cfg.model_config(), cfg.seed);
  const SceneSpec& spec = model.scene("plaza-day-busy");
  const GeneratedVideo g = generate(spec, 9, 60.0, cfg.fps, std::nullopt, cfg.frame_size);
  const ScoringConfig sc = cfg.scoring();
  const ScoreTrace one = score_stream(model, g.video, spec.scene_id, sc);

  const fs::path dir = fs::temp_directory_path() / "zsad_acceptance_stream";
  fs::create_directories(dir);
  StreamState state = initial_stream_state(model);
  ScoreTrace resumed;
  const double bound = std::sqrt(static_cast<double>(model.config().pred.hidden));
  double max_norm = 0.0;
  for (std::size_t w = 0; w < one.size(); ++w) {
    score_windows(model, g.video, spec.scene_id, sc, state, resumed, w + 1);
    max_norm = std::max(max_norm, l2_norm(state.hidden.data()));
    if (w % 7 == 3) {
      save_stream_state(dir / "state.ckpt", state);
      state = load_stream_state(dir / "state.ckpt");
    }
  }
  fs::remove_all(dir);
  c.expect(resumed.size() == one.size(), "window counts differ");
  c.expect(resumed.fused == one.fused, "fused scores differ after resume");
  c.expect(max_norm <= bound, "hidden norm " + num(max_norm) + " > " + num(bound));
  const double ratio = 60.0 / cfg.train_video_length_s;
  c.expect(ratio >= 10.0, "stream shorter than 10x the training length");
  return c.outcome(std::to_string(one.size()) + " windows bitwise equal across " + std::to_string(one.size() / 7) +
                   " save/load cycles; max |h| " + num(max_norm) + " <= " + num(bound));
}

Outcome zero_shot_contract() {
  Checks c;
  const fs::path dir = fs::temp_directory_path() / "zsad_acceptance_contract";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream(dir / "tiny.cfg") << "corpus_dir = " << (dir / "corpus").string()
                                    << "\nframe_size = 32\ntrain_videos_per_scene = 1\neval_video_length_s = 8\n"
                                       "anomaly_duration_s = 2\nsteps = 2\nwarmup_steps = 0\n";
  }
  auto run = [&](std::vector<std::string> args) {
    args.insert(args.begin(), "zsad");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  };
  const std::string cfg = (dir / "tiny.cfg").string();
  c.expect(run({"gen", "--config", cfg}) == 0, "gen failed");
  const fs::path manifest = train_manifest_path(dir / "corpus");
  std::string text;
  {
    std::ifstream in(manifest);
    std::ostringstream s;
    s << in.rdbuf();
    text = s.str();
  }
  // Relabel only the last entry.
  const auto at = text.rfind("\"normal\"");
  c.expect(at != std::string::npos, "no normal entry in the manifest");
  if (at != std::string::npos) text.replace(at, 8, "\"anomaly\"");
  {
    std::ofstream(manifest, std::ios::trunc) << text;
  }
  const int code = run({"train", "--config", cfg, "--out", (dir / "run").string()});
  c.expect(code == 2, "exit code " + std::to_string(code));
  c.expect(!fs::exists(dir / "run" / "model.ckpt"), "a checkpoint was written");
  fs::remove_all(dir);
  return c.outcome("train exits with code 2 on one anomalous manifest entry");
}

}  // namespace

int main() {
  const Config defaults;
  std::vector<CorpusRecord> train_corpus;
  auto default_train = [&]() -> const std::vector<CorpusRecord>& {
    if (train_corpus.empty()) train_corpus = build_train_corpus(defaults);
    return train_corpus;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"loss oracle equivalence", loss_oracles},
      {"gradient correctness", gradient_checks},
      {"identity at init", identity_at_init},
      {"freeze contract", [&] { return freeze_contract(default_train()); }},
      {"metric oracles", metric_oracles},
      {"sampler properties", sampler_properties},
      {"loss weight extremes", loss_weight_extremes},
      {"end-to-end synthetic benchmark", [&] { return end_to_end(default_train()); }},
      {"streaming consistency", streaming_consistency},
      {"zero-shot contract", zero_shot_contract},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
