#include "zsad/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "zsad/corpus.hpp"
#include "zsad/kernels.hpp"

namespace zsad {

TrainConfig train_config(const Config& cfg) {
  TrainConfig t;
  t.alpha = cfg.alpha;
  t.tau = cfg.tau;
  t.learning_rate = cfg.learning_rate;
  t.batch_size = cfg.batch_size;
  t.steps = cfg.steps;
  t.seed = cfg.seed;
  t.neg_cap = cfg.neg_cap;
  t.symmetric_align = cfg.symmetric_align;
  return t;
}

WarmupConfig warmup_config(const Config& cfg) {
  WarmupConfig w;
  w.steps = cfg.warmup_steps;
  w.batch_size = cfg.batch_size;
  w.tau = cfg.warmup_tau;
  w.learning_rate = cfg.learning_rate;
  w.seed = cfg.seed;
  return w;
}

EvalOptions eval_options(const Config& cfg) {
  EvalOptions e;
  e.scoring = cfg.scoring();
  e.target_fpr = cfg.target_fpr;
  e.min_duration_s = cfg.min_duration_s;
  e.oracle_scores = cfg.debug_oracle_scores;
  return e;
}

std::vector<AblationVariant> ablation_ladder() {
  return {
      {"B1", false, 1.0, 0.5, false, false},
      {"B2", true, 0.5, 0.8, false, false},
      {"B3", true, 0.5, 0.2, false, false},
      {"B4", true, 0.5, 0.2, true, false},
      {"B5", true, 0.5, 0.2, true, true},
  };
}

Config apply_variant(const Config& base, const AblationVariant& v) {
  Config c = base;
  c.use_dpc = v.use_dpc;
  c.gamma = v.gamma;
  c.alpha = v.alpha;
  c.use_residual_mlp = v.use_residual_mlp;
  c.use_ln_gate = v.use_ln_gate;
  return c;
}

namespace {

// Fixed-point text that leaves no formatting state behind on the log stream.
std::string fixed(double v, int digits) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

}  // namespace

std::vector<std::pair<std::string, std::string>> variant_echo(const Config& cfg) {
  auto one = [](double v) { return fixed(v, 1); };
  const double gamma = cfg.model_config().effective_gamma();
  return {
      {"use_dpc", cfg.use_dpc ? "true" : "false"},
      {"gamma", one(gamma)},
      // Without the dense stream there is no predictive loss to weigh.
      {"alpha", cfg.use_dpc ? one(cfg.alpha) : "n/a"},
      {"use_residual_mlp", cfg.use_residual_mlp ? "true" : "false"},
      {"use_ln_gate", cfg.use_ln_gate ? "true" : "false"},
      {"lambda", one(cfg.use_dpc ? cfg.lambda : 1.0)},
  };
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Metadata run_metadata(const Config& cfg, const std::string& kind) {
  return {{"kind", kind}, {"config", render_config(cfg)}};
}

}  // namespace

ParamStore warmed_encoders(const Config& cfg, const std::vector<CorpusRecord>& train, std::ostream& log) {
  // Warm-up always includes the dense stream so every variant starts from the same encoders.
  Config c = cfg;
  c.use_dpc = true;
  Model model(c.model_config(), cfg.seed);
  if (cfg.warmup_steps > 0) {
    const auto t0 = Clock::now();
    const auto losses = warm_up_encoders(model, train, warmup_config(c));
    log << "encoder warm-up: " << losses.size() << " steps, loss " << fixed(losses.front(), 4) << " -> "
        << fixed(losses.back(), 4) << " (" << fixed(seconds_since(t0), 1) << " s)\n";
  }
  ParamStore out;
  for (const auto& [name, p] : model.params().entries()) {
    if (is_encoder_param(name)) out.add(name, p.value, false);
  }
  return out;
}

RunResult train_and_evaluate(const Config& cfg, const ParamStore& encoders, const std::vector<CorpusRecord>& train_set,
                             const std::vector<CorpusRecord>& eval_set, const std::filesystem::path& out_dir,
                             std::ostream& log) {
  Model model(cfg.model_config(), cfg.seed);
  copy_params(encoders, model.params(), is_encoder_param);
  const auto t0 = Clock::now();
  RunResult r;
  r.training = train(model, train_set, train_config(cfg));
  const auto [first, last] = smoothed_loss_ends(r.training.log);
  log << "  trained " << r.training.log.size() << " steps, smoothed loss " << fixed(first, 4) << " -> "
      << fixed(last, 4) << " (" << fixed(seconds_since(t0), 1) << " s)\n";
  const auto t1 = Clock::now();
  r.report = evaluate(model, eval_set, eval_options(cfg));
  log << "  evaluated " << r.report.videos.size() << " videos: roc_auc " << fixed(r.report.roc_auc, 4)
      << ", pr_auc " << fixed(r.report.pr_auc, 4) << " (" << fixed(seconds_since(t1), 1) << " s)\n";
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_loss_log(out_dir / "loss_log.csv", r.training.log);
    save_checkpoint(out_dir / "model.ckpt", model.params(), run_metadata(cfg, "final"));
    save_checkpoint(out_dir / "best.ckpt", r.training.best_params, run_metadata(cfg, "best"));
    write_text(out_dir / "config.txt", render_config(cfg));
    write_eval_outputs(out_dir / "eval", r.report);
  }
  return r;
}

namespace {

struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f, const std::string& out_help) {
  cmd->add_option("--config", f.config_path, "flat key=value config file (defaults apply to missing keys)");
  cmd->add_option("--seed", f.seed, "run seed (overrides the config)");
  cmd->add_option("--out", f.out, out_help);
  cmd->add_option("--threads", f.threads, "worker threads (1 gives bit-reproducible runs)")->check(CLI::NonNegativeNumber);
}

Config resolve_config(CLI::App* cmd, const CommonFlags& f) {
  Config cfg = f.config_path.empty() ? Config{} : load_config(f.config_path);
  if (cmd->count("--seed")) cfg.seed = f.seed;
  if (f.threads > 0) kernels::set_threads(f.threads);
  return cfg;
}

std::vector<CorpusRecord> load_split(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error("corpus manifest not found: " + path.string() + " (run `zsad gen` first)");
  }
  return read_manifest(path);
}

int cmd_gen(CLI::App* cmd, const CommonFlags& f, std::ostream& out) {
  Config cfg = resolve_config(cmd, f);
  if (!f.out.empty()) cfg.corpus_dir = f.out;
  const CorpusSummary s = write_corpus(cfg, cfg.corpus_dir);
  out << "corpus written to " << cfg.corpus_dir << "\n";
  out << "  train: " << s.train << " normal windows (" << cfg.train_videos_per_scene << " per scene, "
      << all_scenes().size() << " scenes)\n";
  out << "  eval:  " << s.eval_normal << " normal videos, " << s.eval_anomaly << " anomalous (" << s.contextual
      << " contextual, " << s.temporal << " temporal)\n";
  return 0;
}

int cmd_train(CLI::App* cmd, const CommonFlags& f, std::ostream& out) {
  const Config cfg = resolve_config(cmd, f);
  const std::filesystem::path dir = f.out.empty() ? "runs/train" : f.out;
  const auto corpus = load_split(train_manifest_path(cfg.corpus_dir));
  check_training_corpus(corpus);
  const ParamStore encoders = warmed_encoders(cfg, corpus, out);
  Model model(cfg.model_config(), cfg.seed);
  copy_params(encoders, model.params(), is_encoder_param);
  const auto t0 = Clock::now();
  const TrainResult r = train(model, corpus, train_config(cfg), [&](const LossRecord& rec) {
    if (rec.step % 50 == 0 || rec.step + 1 == cfg.steps) {
      out << "step " << rec.step << "  l_align " << rec.l_align << "  l_pred " << rec.l_pred << "  l_total "
          << rec.l_total << "\n";
    }
  });
  std::filesystem::create_directories(dir);
  write_loss_log(dir / "loss_log.csv", r.log);
  save_checkpoint(dir / "model.ckpt", model.params(), run_metadata(cfg, "final"));
  save_checkpoint(dir / "best.ckpt", r.best_params, run_metadata(cfg, "best"));
  write_text(dir / "config.txt", render_config(cfg));
  const auto [first, last] = smoothed_loss_ends(r.log);
  out << "trained " << r.log.size() << " steps in " << fixed(seconds_since(t0), 1) << " s; smoothed loss "
      << fixed(first, 4) << " -> " << fixed(last, 4) << "\n";
  if (!r.spot.entries.empty()) {
    out << "step-0 gradient spot check: " << (r.spot.passed() ? "passed" : "FAILED") << "\n";
    if (!r.spot.passed()) throw Error("gradient spot check failed");
  }
  out << "checkpoint: " << (dir / "model.ckpt").string() << "\n";
  return 0;
}

int cmd_eval(CLI::App* cmd, const CommonFlags& f, const std::string& checkpoint, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  Config cfg;
  if (!f.config_path.empty()) {
    cfg = load_config(f.config_path);
  } else if (auto it = ck.metadata.find("config"); it != ck.metadata.end()) {
    cfg = parse_config(it->second, checkpoint);
  }
  if (cmd->count("--seed")) cfg.seed = f.seed;
  if (f.threads > 0) kernels::set_threads(f.threads);
  const std::filesystem::path dir = f.out.empty() ? "runs/eval" : f.out;
  const auto corpus = load_split(eval_manifest_path(cfg.corpus_dir));
  Model model(cfg.model_config(), cfg.seed);
  model.load_params(ck.params);
  const MetricReport report = evaluate(model, corpus, eval_options(cfg));
  write_eval_outputs(dir, report);
  out << render_report_table(report);
  out << "report: " << (dir / "report.csv").string() << "\n";
  return 0;
}

int cmd_ablate(CLI::App* cmd, const CommonFlags& f, std::ostream& out) {
  const Config cfg = resolve_config(cmd, f);
  const std::filesystem::path dir = f.out.empty() ? "runs/ablate" : f.out;
  const auto train = load_split(train_manifest_path(cfg.corpus_dir));
  const auto eval = load_split(eval_manifest_path(cfg.corpus_dir));
  check_training_corpus(train);
  const ParamStore encoders = warmed_encoders(cfg, train, out);
  std::vector<AblationRow> rows;
  for (const auto& v : ablation_ladder()) {
    const Config vc = apply_variant(cfg, v);
    AblationRow row;
    row.variant = v.id;
    row.echo = variant_echo(vc);
    out << v.id << ":\n";
    try {
      const RunResult r = train_and_evaluate(vc, encoders, train, eval, dir / v.id, out);
      row.ok = true;
      row.roc_auc = r.report.roc_auc;
      row.pr_auc = r.report.pr_auc;
    } catch (const std::exception& e) {
      row.error = e.what();
      out << "  failed: " << e.what() << "\n";
    }
    rows.push_back(row);
  }
  std::filesystem::create_directories(dir);
  write_ablation_csv(dir / "ablation.csv", rows);
  const std::string table = render_ablation_table(rows);
  write_text(dir / "ablation.txt", table);
  out << table;
  for (const auto& r : rows) {
    if (!r.ok) return 1;
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Zero-shot video anomaly detection on a synthetic surveillance corpus", "zsad"};
  app.require_subcommand(1);
  CommonFlags gen_f, train_f, eval_f, ablate_f;
  std::string checkpoint;
  CLI::App* gen = app.add_subcommand("gen", "generate the synthetic train/eval corpus");
  add_common(gen, gen_f, "corpus directory (overrides corpus_dir)");
  CLI::App* train_cmd = app.add_subcommand("train", "warm up the encoders, then train on the normal corpus");
  add_common(train_cmd, train_f, "run directory for checkpoints and the loss log (default runs/train)");
  CLI::App* eval = app.add_subcommand("eval", "score the eval split and write metrics, traces and plots");
  add_common(eval, eval_f, "report directory (default runs/eval)");
  eval->add_option("--checkpoint", checkpoint, "trained checkpoint to evaluate")->required();
  CLI::App* ablate = app.add_subcommand("ablate", "train and evaluate the B1..B5 ablation ladder");
  add_common(ablate, ablate_f, "output directory (default runs/ablate)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen(gen, gen_f, out);
    if (*train_cmd) return cmd_train(train_cmd, train_f, out);
    if (*eval) return cmd_eval(eval, eval_f, checkpoint, out);
    if (*ablate) return cmd_ablate(ablate, ablate_f, out);
  } catch (const ContractViolation& e) {
    err << "contract violation: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace zsad
