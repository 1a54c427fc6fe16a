#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support.hpp"
#include "zsad/context_gate.hpp"
#include "zsad/encoders.hpp"
#include "zsad/model.hpp"
#include "zsad/predictor.hpp"
#include "zsad/projection.hpp"
#include "zsad/scene.hpp"

using namespace zsad;
using test::random_tensor;

namespace {

using Vec = std::vector<double>;

Vec affine(const Vec& x, const Tensor& w, const Tensor& b) {
  const std::size_t in = w.dim(0), out = w.dim(1);
  Vec y(out);
  for (std::size_t j = 0; j < out; ++j) {
    double s = b[j];
    for (std::size_t i = 0; i < in; ++i) s += x[i] * w[i * out + j];
    y[j] = s;
  }
  return y;
}

Vec norm_layer(const Vec& x, const Tensor& g, const Tensor& b) {
  const double n = static_cast<double>(x.size());
  const double mu = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= n;
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mu) / std::sqrt(var + 1e-5) * g[i] + b[i];
  return y;
}

double gelu_ref(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

void randomize(ParamStore& store, const std::string& prefix, Rng& rng, double lo, double hi) {
  for (const auto& name : store.names()) {
    if (name.rfind(prefix, 0) != 0) continue;
    Tensor& v = store.mutable_value(name);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(lo, hi);
  }
}

}  // namespace

TEST_CASE("video transformer shapes and symmetries") {
  TsfConfig cfg;
  cfg.image_size = 16;
  cfg.dim = 8;
  cfg.mlp_hidden = 16;
  Rng rng(1);
  ParamStore store;
  init_tsf(store, cfg, rng);
  ad::Tape tape = ad::Tape::inference(store);

  const Tensor clip = random_tensor({8, 16, 16, 3}, rng, 0, 1);
  const Tensor y = encode_tsf(tape, cfg, clip).value();
  CHECK(y.shape() == Shape{8, 8});
  y.check_finite();

  CHECK_THROWS(patchify(random_tensor({8, 12, 12, 3}, rng), 8));
  TsfConfig bad = cfg;
  bad.image_size = 12;
  ParamStore s2;
  CHECK_THROWS(init_tsf(s2, bad, rng));

  SUBCASE("identical frames without time embeddings give identical features") {
    Tensor same({8, 16, 16, 3});
    for (std::size_t f = 0; f < 8; ++f) {
      std::copy_n(clip.ptr(), 16 * 16 * 3, same.ptr() + f * 16 * 16 * 3);
    }
    store.mutable_value("tsf.pos_time").fill(0.0);
    ad::Tape t2 = ad::Tape::inference(store);
    const Tensor z = encode_tsf(t2, cfg, same).value();
    for (std::size_t f = 1; f < 8; ++f) {
      for (std::size_t d = 0; d < 8; ++d) CHECK(std::abs(z[f * 8 + d] - z[d]) < 1e-9);
    }
  }

  SUBCASE("patch permutation with matching position embeddings") {
    const Tensor patches = patchify(clip, cfg.patch);
    const std::size_t p = cfg.patches_per_frame(), pd = cfg.patch_dim();
    const std::vector<std::size_t> perm = {2, 0, 3, 1};
    Tensor permuted(patches.shape());
    for (std::size_t f = 0; f < 8; ++f) {
      for (std::size_t i = 0; i < p; ++i) {
        std::copy_n(patches.ptr() + (f * p + perm[i]) * pd, pd, permuted.ptr() + (f * p + i) * pd);
      }
    }
    ParamStore moved = store;
    const Tensor& pos = store.value("tsf.pos_space");
    Tensor& mpos = moved.mutable_value("tsf.pos_space");
    for (std::size_t i = 0; i < p; ++i) std::copy_n(pos.ptr() + perm[i] * 8, 8, mpos.ptr() + i * 8);
    ad::Tape ta = ad::Tape::inference(store);
    ad::Tape tb = ad::Tape::inference(moved);
    const Tensor a = encode_tsf_patches(ta, cfg, patches).value();
    const Tensor b = encode_tsf_patches(tb, cfg, permuted).value();
    CHECK(max_abs_diff(a, b) < 1e-9);
  }
}

TEST_CASE("video transformer with uniform attention matches a hand-composed block") {
  TsfConfig cfg;
  cfg.frames = 3;
  cfg.image_size = 8;
  cfg.patch = 4;
  cfg.dim = 5;
  cfg.blocks = 1;
  cfg.mlp_hidden = 7;
  Rng rng(2);
  ParamStore store;
  init_tsf(store, cfg, rng);
  randomize(store, "tsf.block0.ln", rng, 0.5, 1.5);
  randomize(store, "tsf.ln_final", rng, 0.5, 1.5);
  randomize(store, "tsf.block0.attn_time.v.bias", rng, -0.2, 0.2);
  const Tensor clip = random_tensor({3, 8, 8, 3}, rng, 0, 1);
  ad::Tape tape = ad::Tape::inference(store);
  const Tensor got = encode_tsf(tape, cfg, clip, TsfOptions{true}).value();

  const std::size_t T = 3, P = 4, D = 5;
  auto pv = [&](const std::string& n) -> const Tensor& { return store.value(n); };
  const Tensor patches = patchify(clip, cfg.patch);
  std::vector<std::vector<Vec>> x(T, std::vector<Vec>(P));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t p = 0; p < P; ++p) {
      Vec in(patches.ptr() + (t * P + p) * cfg.patch_dim(), patches.ptr() + (t * P + p + 1) * cfg.patch_dim());
      x[t][p] = affine(in, pv("tsf.patch_embed.weight"), pv("tsf.patch_embed.bias"));
      for (std::size_t d = 0; d < D; ++d) x[t][p][d] += pv("tsf.pos_space")[p * D + d] + pv("tsf.pos_time")[t * D + d];
    }
  }
  // Uniform attention: every token receives out(mean of v over its group).
  auto uniform_pass = [&](const std::string& name, const std::string& ln, bool over_time) {
    const std::size_t groups = over_time ? P : T, members = over_time ? T : P;
    for (std::size_t g = 0; g < groups; ++g) {
      Vec mean_v(D, 0.0);
      for (std::size_t m = 0; m < members; ++m) {
        const Vec& tok = over_time ? x[m][g] : x[g][m];
        const Vec v = affine(norm_layer(tok, pv(ln + ".gain"), pv(ln + ".bias")), pv(name + ".v.weight"),
                             pv(name + ".v.bias"));
        for (std::size_t d = 0; d < D; ++d) mean_v[d] += v[d] / static_cast<double>(members);
      }
      const Vec o = affine(mean_v, pv(name + ".out.weight"), pv(name + ".out.bias"));
      for (std::size_t m = 0; m < members; ++m) {
        Vec& tok = over_time ? x[m][g] : x[g][m];
        for (std::size_t d = 0; d < D; ++d) tok[d] += o[d];
      }
    }
  };
  uniform_pass("tsf.block0.attn_time", "tsf.block0.ln_time", true);
  uniform_pass("tsf.block0.attn_space", "tsf.block0.ln_space", false);
  for (auto& frame : x) {
    for (auto& tok : frame) {
      Vec h = affine(norm_layer(tok, pv("tsf.block0.ln_mlp.gain"), pv("tsf.block0.ln_mlp.bias")),
                     pv("tsf.block0.mlp_up.weight"), pv("tsf.block0.mlp_up.bias"));
      for (double& v : h) v = gelu_ref(v);
      const Vec down = affine(h, pv("tsf.block0.mlp_down.weight"), pv("tsf.block0.mlp_down.bias"));
      for (std::size_t d = 0; d < D; ++d) tok[d] += down[d];
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    Vec feat(D, 0.0);
    for (std::size_t p = 0; p < P; ++p) {
      const Vec n = norm_layer(x[t][p], pv("tsf.ln_final.gain"), pv("tsf.ln_final.bias"));
      for (std::size_t d = 0; d < D; ++d) feat[d] += n[d] / static_cast<double>(P);
    }
    for (std::size_t d = 0; d < D; ++d) CHECK(std::abs(got[t * D + d] - feat[d]) < 1e-9);
  }
}

TEST_CASE("block encoder") {
  DpcConfig cfg;
  cfg.image_size = 16;
  cfg.channels1 = 4;
  cfg.channels2 = 6;
  cfg.latent = 8;
  Rng rng(3);
  ParamStore store;
  init_dpc(store, cfg, rng);
  ad::Tape tape = ad::Tape::inference(store);
  const Tensor clip = random_tensor({30, 16, 16, 3}, rng, 0, 1);
  const Tensor z = encode_dpc(tape, cfg, clip).value();
  CHECK(z.shape() == Shape{6, 8});
  for (std::size_t b = 0; b < 6; ++b) CHECK(std::abs(l2_norm({z.ptr() + b * 8, 8}) - 1.0) < 1e-9);

  Tensor other = clip;
  for (std::size_t i = 25 * 16 * 16 * 3; i < other.size(); ++i) other[i] = 1.0 - other[i];
  const Tensor z2 = encode_dpc(tape, cfg, other).value();
  for (std::size_t i = 0; i < 5 * 8; ++i) CHECK(z2[i] == z[i]);
  CHECK(max_abs_diff(z, z2) > 0.0);

  CHECK_THROWS(encode_dpc(tape, cfg, random_tensor({28, 16, 16, 3}, rng, 0, 1)));
  CHECK_THROWS(encode_dpc(tape, cfg, Tensor({30, 16, 16, 3}, 0.0)));

  const Tensor block = dpc_block_input(clip, 1, 5);
  CHECK(block.shape() == Shape{16, 16, dpc_input_channels(5)});
}

TEST_CASE("text encoder") {
  TextConfig cfg;
  Rng rng(0x7e47);
  ParamStore store;
  init_text(store, cfg, rng);
  for (const auto& name : store.names()) CHECK_FALSE(store.trainable(name));
  ad::Tape tape = ad::Tape::inference(store);
  const std::string s = "a gate at day with busy pedestrian activity";
  const Tensor a = encode_text(tape, cfg, s).value();
  CHECK(a.identical(encode_text(tape, cfg, s).value()));
  CHECK(std::abs(l2_norm(a.data()) - 1.0) < 1e-9);
  CHECK_THROWS(encode_text(tape, cfg, ""));
  CHECK(tokenize("A Zebra") == std::vector<std::size_t>{1, 0});

  std::vector<Tensor> embs;
  for (const auto& sc : all_scenes()) embs.push_back(encode_text(tape, cfg, describe(sc)).value());
  double min_dist = 2.0;
  for (std::size_t i = 0; i < embs.size(); ++i) {
    for (std::size_t j = i + 1; j < embs.size(); ++j) min_dist = std::min(min_dist, 1.0 - dot(embs[i].data(), embs[j].data()));
  }
  CHECK(min_dist > 0.0);
}

TEST_CASE("projection head") {
  ProjectionConfig cfg;
  cfg.tsf_dim = 6;
  cfg.dpc_dim = 6;
  cfg.hidden = 10;
  cfg.out_dim = 6;
  cfg.blocks = 4;
  Rng rng(4);
  ParamStore store;
  init_projection(store, cfg, rng);
  const Tensor a = random_tensor({6}, rng), b = random_tensor({6}, rng);

  ad::Tape tape = ad::Tape::inference(store);
  const ProjectionTrace tr = project(tape, cfg, ad::constant(a), ad::constant(b), 0.5, false);
  CHECK(std::abs(l2_norm(tr.output.value().data()) - 1.0) < 1e-9);
  CHECK(max_abs_diff(tr.after_blocks.value(), tr.input_proj.value()) <= 1e-12);
  CHECK(tr.output.value().identical(project(tape, cfg, ad::constant(a), ad::constant(b), 0.5, false).output.value()));

  const Tensor v1 = project(tape, cfg, ad::constant(a), ad::constant(b), 1.0, false).output.value();
  const Tensor v2 = project(tape, cfg, ad::constant(a), ad::constant(random_tensor({6}, rng)), 1.0, false).output.value();
  CHECK(v1.identical(v2));
  CHECK_THROWS(project(tape, cfg, ad::constant(a), ad::constant(b), 1.5, false));

  // Gradient reaches the input projection through four blocks.
  randomize(store, "proj.block", rng, -0.3, 0.3);
  ad::Tape tg(store);
  const Tensor target = random_tensor({6}, rng);
  const ad::Var out = project(tg, cfg, ad::constant(a), ad::constant(b), 0.5, false).output;
  const ad::GradMap g = ad::grad(ad::sum(ad::mul(out, ad::constant(target))), tg);
  CHECK(l2_norm(g.at("proj.in.weight").data()) > 1e-12);

  const auto r = test::check_params(
      store, [&](ad::Tape& t) {
        return ad::sum(ad::mul(project(t, cfg, ad::constant(a), ad::constant(b), 0.5, false).output,
                               ad::constant(target)));
      },
      [](const std::string&) { return true; }, 6);
  CHECK_MESSAGE(r.failed == 0, r.first_failure);
  const auto ri = test::check_inputs(
      [&](const std::vector<ad::Var>& v) {
        ad::Tape t = ad::Tape::inference(store);
        return ad::sum(ad::mul(project(t, cfg, v[0], v[1], 0.3, false).output, ad::constant(target)));
      },
      {a, b});
  CHECK_MESSAGE(ri.failed == 0, ri.first_failure);
}

TEST_CASE("context network and gate") {
  ContextConfig cc;
  cc.image_size = 16;
  cc.channels1 = 4;
  cc.channels2 = 4;
  cc.dim = 5;
  GateConfig gc;
  gc.text_dim = 6;
  gc.context_dim = 5;
  Rng rng(6);
  ParamStore store;
  init_context(store, cc, rng);
  init_gate(store, gc, rng);
  CHECK(store.value("gate.beta").item() == 0.0);

  ad::Tape tape = ad::Tape::inference(store);
  const Tensor frame = random_tensor({16, 16, 3}, rng, 0, 1);
  const Tensor u = context_vector(tape, cc, frame).value();
  CHECK(u.shape() == Shape{5});
  CHECK(u.identical(context_vector(tape, cc, frame).value()));
  const Tensor zero = context_vector(tape, cc, Tensor({16, 16, 3}, 0.0)).value();
  for (double v : zero.values()) CHECK(v == 0.0);
  CHECK(mid_frame_index(8) == 4);

  const Tensor t = test::unit_rows(1, 6, rng).reshaped({6});
  const GateOutput id = gate_fuse(tape, ad::constant(t), ad::constant(u));
  CHECK(id.fused.value().identical(t));
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor tt = test::unit_rows(3, 6, rng);
    const Tensor uu = random_tensor({3, 5}, rng);
    CHECK(gate_fuse(tape, ad::constant(tt), ad::constant(uu)).fused.value().identical(tt));
  }

  auto residual_norm = [&](double beta) {
    store.mutable_value("gate.beta")[0] = beta;
    ad::Tape tb = ad::Tape::inference(store);
    const GateOutput o = gate_fuse(tb, ad::constant(t), ad::constant(u));
    Tensor diff = o.pre_norm.value();
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= t[i];
    return std::pair{l2_norm(diff.data()), l2_norm(o.residual.value().data())};
  };
  const auto [n1, r1] = residual_norm(0.1);
  const auto [n2, r2] = residual_norm(0.2);
  CHECK(r1 == doctest::Approx(r2).epsilon(1e-15));
  CHECK(n1 / n2 == doctest::Approx(std::tanh(0.1) / std::tanh(0.2)).epsilon(1e-12));
  CHECK(n1 == doctest::Approx(std::tanh(0.1) * r1).epsilon(1e-12));

  store.mutable_value("gate.beta")[0] = 1.0;
  ad::Tape t1 = ad::Tape::inference(store);
  CHECK(std::abs(l2_norm(gate_fuse(t1, ad::constant(t), ad::constant(u)).fused.value().data()) - 1.0) < 1e-9);

  // ∂L/∂β at β = 0 for a loss aligned with the residual direction.
  store.mutable_value("gate.beta")[0] = 0.0;
  ad::Tape tg(store);
  const GateOutput o = gate_fuse(tg, ad::constant(t), ad::constant(u));
  const Tensor dir = o.residual.value();
  const ad::GradMap g = ad::grad(ad::sum(ad::mul(o.fused, ad::constant(dir))), tg);
  CHECK(std::abs(g.at("gate.beta").item()) > 1e-6);

  store.mutable_value("gate.beta")[0] = 0.4;
  const auto r = test::check_params(
      store,
      [&](ad::Tape& tp) {
        const ad::Var cu = context_vector(tp, cc, frame);
        return ad::sum(ad::mul(gate_fuse(tp, ad::constant(t), cu).fused, ad::constant(dir)));
      },
      [](const std::string&) { return true; }, 6);
  CHECK_MESSAGE(r.failed == 0, r.first_failure);
}

TEST_CASE("recurrent aggregator and prediction heads") {
  PredictorConfig cfg;
  cfg.latent = 5;
  cfg.hidden = 4;
  cfg.trunk = 6;
  cfg.horizons = 3;
  Rng rng(8);
  ParamStore store;
  init_predictor(store, cfg, rng);

  SUBCASE("zero weights keep the zero state") {
    for (const auto& n : store.names()) store.mutable_value(n).fill(0.0);
    ad::Tape tape = ad::Tape::inference(store);
    const Tensor h = aggregate(tape, cfg, ad::constant(random_tensor({4, 5}, rng))).value();
    CHECK(h.shape() == Shape{4, 4});
    for (double v : h.values()) CHECK(v == 0.0);
  }
  SUBCASE("a closed update gate carries the state") {
    store.mutable_value("gru.update.weight").fill(0.0);
    store.mutable_value("gru.update.bias").fill(-20.0);
    ad::Tape tape = ad::Tape::inference(store);
    const Tensor h0 = random_tensor({4}, rng, -0.5, 0.5);
    const Tensor h = aggregate(tape, cfg, ad::constant(Tensor({3, 5}, 0.0)), ad::constant(h0)).value();
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t d = 0; d < 4; ++d) CHECK(std::abs(h[t * 4 + d] - h0[d]) < 1e-8);
    }
  }
  SUBCASE("predictions") {
    ad::Tape tape = ad::Tape::inference(store);
    const ad::Var c = ad::constant(random_tensor({4}, rng));
    const Tensor p = predict(tape, cfg, c).value();
    CHECK(p.shape() == Shape{3, 5});
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(l2_norm({p.ptr() + k * 5, 5}) - 1.0) < 1e-9);
    CHECK(p.identical(predict(tape, cfg, c).value()));
    double diff = 0.0;
    for (std::size_t d = 0; d < 5; ++d) diff += std::abs(p[d] - p[5 + d]);
    CHECK(diff > 1e-6);
  }
  SUBCASE("long sequences stay bounded") {
    ad::Tape tape = ad::Tape::inference(store);
    const Tensor h = aggregate(tape, cfg, ad::constant(random_tensor({60, 5}, rng, -3, 3))).value();
    for (std::size_t t = 0; t < 60; ++t) CHECK(l2_norm({h.ptr() + t * 4, 4}) <= std::sqrt(4.0));
  }
  SUBCASE("gradients through the recurrence") {
    const Tensor x = random_tensor({4, 5}, rng);
    const Tensor w = random_tensor({4, 4}, rng);
    const auto r = test::check_params(
        store,
        [&](ad::Tape& t) {
          const ad::Var h = aggregate(t, cfg, ad::constant(x));
          const ad::Var p = predict(t, cfg, ad::reshape(ad::slice(h, 3, 4), {4}));
          return ad::add(ad::sum(ad::mul(h, ad::constant(w))), ad::sum(p));
        },
        [](const std::string&) { return true; });
    CHECK_MESSAGE(r.failed == 0, r.first_failure);
  }
}

TEST_CASE("freeze profile") {
  CHECK(frozen_in_profile("paper", "tsf.patch_embed.weight"));
  CHECK(frozen_in_profile("paper", "text.proj.weight"));
  CHECK(frozen_in_profile("paper", "dpc.conv1.weight"));
  CHECK(frozen_in_profile("paper", "dpc.conv2.bias"));
  CHECK_FALSE(frozen_in_profile("paper", "dpc.conv3.weight"));
  CHECK_FALSE(frozen_in_profile("paper", "gru.update.weight"));
  CHECK_FALSE(frozen_in_profile("paper", "gate.beta"));
  CHECK_FALSE(frozen_in_profile("paper", "proj.in.weight"));
  CHECK_FALSE(frozen_in_profile("paper", "ctx.conv1.weight"));
  CHECK_THROWS(frozen_in_profile("nothing", "x"));

  const Model m(test::tiny_model_config(), 3);
  for (const auto& [name, p] : m.params().entries()) CHECK(p.trainable == !frozen_in_profile("paper", name));
}
