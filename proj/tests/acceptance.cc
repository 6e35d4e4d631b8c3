// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Acceptance run: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 100).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "avu/checkpoint.h"
#include "avu/errors.h"
#include "avu/metrics.h"
#include "avu/objectives.h"
#include "avu/pipeline.h"

namespace {

namespace fs = std::filesystem;
using namespace avu;
using Clock = std::chrono::steady_clock;
using MatD = Mat<double>;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Waveform noise(std::uint64_t seed, Eigen::Index n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Waveform w;
  w.sample_rate = 8000;
  w.samples = Eigen::VectorXd::NullaryExpr(n, [&] { return u(rng); });
  return w;
}

Waveform tone(double hz, double amp) {
  Waveform w;
  w.sample_rate = 8000;
  w.samples.resize(24000);
  for (Eigen::Index t = 0; t < 24000; ++t)
    w.samples(t) = amp * std::sin(2.0 * std::numbers::pi * hz * t / 8000.0);
  return w;
}

// 1. DSP oracle suite.
Outcome dsp_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  DspConfig cfg;
  double round_trip = 0.0, linearity = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Waveform x = noise(seed, 24000);
    round_trip = std::max(
        round_trip, (istft(stft(x, cfg), cfg, x.size()).samples - x.samples).cwiseAbs().maxCoeff());
    const Waveform y = noise(1000 + seed, 24000);
    Waveform s = x;
    s.samples += y.samples;
    linearity = std::max(
        linearity, (stft(s, cfg).bins - stft(x, cfg).bins - stft(y, cfg).bins).abs().maxCoeff());
  }
  o.check(round_trip < 1e-6, "iSTFT(STFT(x)) max error " + fmt("%.2e", round_trip) + " < 1e-6");
  o.check(linearity < 1e-9, "STFT linearity max error " + fmt("%.2e", linearity) + " < 1e-9");

  double worst_sdr = 1e9;
  for (auto [fa, fb] : {std::pair{500.0, 2000.0}, {700.0, 1300.0}, {400.0, 2500.0}}) {
    const Waveform a = tone(fa, 0.5), b = tone(fb, 0.4);
    Waveform m = a;
    m.samples += b.samples;
    const ComplexSpectrogram sa = stft(a, cfg), sm = stft(m, cfg);
    const Waveform est =
        apply_mask(sm, target_binary_mask(sa, sm, MaskRule::kDominant), cfg, m.size());
    worst_sdr = std::min(worst_sdr, sdr_sar(est, a, b).sdr);
  }
  o.check(worst_sdr >= 10.0, "ideal dominant mask SDR " + fmt("%.2f", worst_sdr) + " dB >= 10");
  const double t = seconds_since(t0);
  o.check(t < 30.0, "runtime " + fmt("%.1f", t) + " s < 30");
  return o;
}

// 2. Loss identity suite.
Outcome loss_identities() {
  Outcome o;
  const auto t0 = Clock::now();
  MatD one(1, 1);
  one << 0.8;
  o.check(contrastive_loss<double>(one, 0.07) == 0.0, "L_CL = 0 at B = 1");
  const double expect = 2.0 * std::log(1.0 + std::exp(-1.0));
  const double got = contrastive_loss<double>(MatD::Identity(2, 2), 1.0);
  o.check(std::abs(got - expect) <= 1e-6,
          "L_CL(I2, tau=1) = " + fmt("%.8f", got) + " vs 2 ln(1+e^-1) = " + fmt("%.8f", expect));
  Eigen::ArrayXXd target(4, 3);
  target << 1, 0, 1, 0, 0, 1, 1, 1, 0, 0, 1, 0;
  const double mas = separation_loss<double>(Eigen::ArrayXXd::Constant(4, 3, 0.5), target);
  o.check(std::abs(mas - std::log(2.0)) <= 1e-6, "L_MAS(0.5) = " + fmt("%.8f", mas) + " = ln 2");

  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    MatD vm = MatD::NullaryExpr(8, 4 * 5, [&] { return g(rng); });
    MatD ai = MatD::NullaryExpr(8, 4, [&] { return g(rng); });
    MatD aj = MatD::NullaryExpr(8, 4, [&] { return g(rng); });
    vm.colwise().normalize();
    ai.colwise().normalize();
    aj.colwise().normalize();
    const double li = contrastive_loss<double>(local_max_scores<double>(ai, vm, 5).values, 0.07);
    const double lj = contrastive_loss<double>(local_max_scores<double>(aj, vm, 5).values, 0.07);
    worst = std::max({worst, std::abs(mva_loss<double>(vm, ai, aj, 5, 1.0, 0.07) - li),
                      std::abs(mva_loss<double>(vm, ai, aj, 5, 0.0, 0.07) - lj)});
  }
  o.check(worst <= 1e-12, "L_MVA collapses to L_CL at alpha in {0, 1} (max gap " +
                              fmt("%.1e", worst) + ")");
  const LossBundle b = total_loss(0.5, 0.7, 0.3);
  o.check(b.total == b.cl + b.mas + b.mva && std::abs(b.total - 1.5) < 1e-15,
          "total = cl + mas + mva");
  const double t = seconds_since(t0);
  o.check(t < 10.0, "runtime " + fmt("%.2f", t) + " s < 10");
  return o;
}

MatD numeric_gradient(MatD& x, const std::function<double()>& f) {
  const double h = 1e-6;
  MatD out(x.rows(), x.cols());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double keep = x.reshaped()(k);
    x.reshaped()(k) = keep + h;
    const double up = f();
    x.reshaped()(k) = keep - h;
    const double down = f();
    x.reshaped()(k) = keep;
    out.reshaped()(k) = (up - down) / (2 * h);
  }
  return out;
}

double rel_err(const MatD& a, const MatD& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

// 3. Gradient checks on 20 random B=3, 8-dimensional instances.
Outcome gradient_checks() {
  Outcome o;
  const auto t0 = Clock::now();
  double cl = 0, mas = 0, mva = 0;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    auto unit = [&](int cols) {
      MatD m = MatD::NullaryExpr(8, cols, [&] { return g(rng); });
      m.colwise().normalize();
      return m;
    };
    MatD ag = unit(3), al = unit(3), vg = unit(3), vl = unit(12);
    CorrespondenceGrad<double> cg;
    cl_loss<double>(ag, al, vg, vl, 4, 0.3, &cg);
    auto fcl = [&] { return cl_loss<double>(ag, al, vg, vl, 4, 0.3); };
    cl = std::max({cl, rel_err(cg.a_glb, numeric_gradient(ag, fcl)),
                   rel_err(cg.a_loc, numeric_gradient(al, fcl)),
                   rel_err(cg.v_glb, numeric_gradient(vg, fcl)),
                   rel_err(cg.v_loc, numeric_gradient(vl, fcl))});

    std::uniform_real_distribution<double> u(0.05, 0.95);
    MatD pred = MatD::NullaryExpr(3, 8, [&] { return u(rng); });
    const Eigen::ArrayXXd target =
        Eigen::ArrayXXd::NullaryExpr(3, 8, [&] { return u(rng) > 0.5 ? 1.0 : 0.0; });
    Eigen::ArrayXXd dg;
    separation_loss<double>(pred.array(), target, &dg);
    auto fmas = [&] { return separation_loss<double>(pred.array(), target); };
    mas = std::max(mas, rel_err(dg.matrix(), numeric_gradient(pred, fmas)));

    MatD vm = unit(12), ai = unit(3), aj = unit(3);
    const double alpha = u(rng);
    MvaGrad<double> mg;
    mva_loss<double>(vm, ai, aj, 4, alpha, 0.3, &mg);
    auto fmva = [&] { return mva_loss<double>(vm, ai, aj, 4, alpha, 0.3); };
    mva = std::max({mva, rel_err(mg.v_mix, numeric_gradient(vm, fmva)),
                    rel_err(mg.a_i, numeric_gradient(ai, fmva)),
                    rel_err(mg.a_j, numeric_gradient(aj, fmva))});
  }
  o.check(cl < 1e-4, "L_CL worst relative error " + fmt("%.2e", cl) + " < 1e-4");
  o.check(mas < 1e-4, "L_MAS worst relative error " + fmt("%.2e", mas) + " < 1e-4");
  o.check(mva < 1e-4, "L_MVA worst relative error " + fmt("%.2e", mva) + " < 1e-4");
  const double t = seconds_since(t0);
  o.check(t < 60.0, "runtime " + fmt("%.2f", t) + " s < 60");
  return o;
}

// Explicit PR sweep with tie groups and trapezoids from recall 0.
double brute_force_ap(const Eigen::ArrayXXd& scores, const Eigen::ArrayXXd& gt) {
  std::map<double, std::pair<int, int>, std::greater<>> groups;
  for (Eigen::Index k = 0; k < scores.size(); ++k) {
    auto& grp = groups[scores.reshaped()(k)];
    grp.first += gt.reshaped()(k) > 0.5;
    grp.second += 1;
  }
  const double pos = (gt > 0.5).count();
  double tp = 0, n = 0, prev_r = 0, prev_p = -1, area = 0;
  for (const auto& [s, grp] : groups) {
    tp += grp.first;
    n += grp.second;
    const double p = tp / n, r = tp / pos;
    if (prev_p < 0) prev_p = p;
    area += (r - prev_r) * (p + prev_p) / 2;
    prev_r = r;
    prev_p = p;
  }
  return area;
}

// 4. Metric oracle suite.
Outcome metric_oracles() {
  Outcome o;
  const auto t0 = Clock::now();
  Eigen::ArrayXXd gt = Eigen::ArrayXXd::Zero(224, 224);
  gt.block(40, 60, 50, 70) = 1.0;
  const double frac = gt.sum() / gt.size();

  const Heatmap perfect = normalize_heatmap(gt);
  const auto pr = *precision_f1(perfect, gt);
  o.check(piap({perfect}, {gt}).piap == 100.0 && pr.precision == 100.0 && pr.f1 == 100.0,
          "heatmap == mask gives PIAP/precision/F1 = 100");
  const double inverted = *average_precision(1.0 - gt, gt);
  o.check(std::abs(inverted - brute_force_ap(1.0 - gt, gt)) < 1e-12,
          "inverted map AP matches brute-force oracle");
  const double constant = *average_precision(Eigen::ArrayXXd::Constant(224, 224, 0.2), gt);
  o.check(std::abs(constant - frac) < 1e-12, "constant map AP = positive fraction");
  const auto whole = *precision_f1(normalize_heatmap(Eigen::ArrayXXd::Ones(224, 224)), gt);
  o.check(std::abs(whole.precision - 100 * frac) < 1e-9 && whole.recall == 100.0,
          "whole-image prediction precision = 100|gt|/|image|, recall = 100");
  Eigen::ArrayXXd half = Eigen::ArrayXXd::Zero(224, 224);
  half.block(40, 95, 50, 70) = 1.0;
  const auto h = *precision_f1(normalize_heatmap(half), gt);
  o.check(h.precision == 50.0 && h.recall == 50.0 && h.f1 == 50.0, "half-overlap case = (50, 50, 50)");

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double ap_gap = 0.0;
  for (int t = 0; t < 20; ++t) {
    Eigen::ArrayXXd s = Eigen::ArrayXXd::NullaryExpr(32, 32, [&] { return std::floor(8 * u(rng)); });
    Eigen::ArrayXXd m = Eigen::ArrayXXd::Zero(32, 32);
    m.block(t % 9, t % 7, 10, 12) = 1.0;
    ap_gap = std::max(ap_gap, std::abs(*average_precision(s, m) - brute_force_ap(s, m)));
  }
  o.check(ap_gap < 1e-12, "AP matches brute force on 20 tied random maps");

  std::normal_distribution<double> g;
  const Eigen::VectorXd ref = Eigen::VectorXd::NullaryExpr(8000, [&] { return g(rng); });
  const Eigen::VectorXd itf = Eigen::VectorXd::NullaryExpr(8000, [&] { return g(rng); });
  Eigen::MatrixXd basis(8000, 2);
  basis << ref, itf;
  const Eigen::MatrixXd q =
      Eigen::HouseholderQR<Eigen::MatrixXd>(basis).householderQ() * Eigen::MatrixXd::Identity(8000, 2);
  Eigen::VectorXd n = Eigen::VectorXd::NullaryExpr(8000, [&] { return g(rng); });
  n -= q * (q.transpose() * n);
  n *= std::sqrt(ref.squaredNorm() / 10.0) / n.norm();
  const double sdr = sdr_sar(ref + n, ref, itf).sdr;
  o.check(std::abs(sdr - 10.0) <= 0.01, "orthogonal-noise SDR " + fmt("%.4f", sdr) + " = 10 +- 0.01");

  Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(6, 6);
  Eigen::PermutationMatrix<6> shift;
  shift.indices() << 1, 2, 3, 4, 5, 0;
  o.check(retrieval_accuracy(eye, eye * shift) == 0.0, "retrieval on a derangement = 0 exactly");

  // Monotone invariance: PIAP is rank based for every strictly increasing
  // map; precision/F1 are invariant under the quantile rule for every such
  // map and under the default half rule for positive affine maps.
  const std::vector<std::function<double(double)>> maps = {
      [](double x) { return std::exp(4 * x); }, [](double x) { return x * x * x; },
      [](double x) { return std::atan(5 * x - 2); }, [](double x) { return 2.5 * x - 7; }};
  bool piap_inv = true, quant_inv = true, affine_inv = true, half_nonlinear_inv = true;
  for (int t = 0; t < 20; ++t) {
    const Eigen::ArrayXXd raw = Eigen::ArrayXXd::NullaryExpr(64, 64, [&] { return u(rng); });
    Eigen::ArrayXXd m = Eigen::ArrayXXd::Zero(64, 64);
    m.block(10 + t, 5 + t, 20, 25) = 1.0;
    const Heatmap base = normalize_heatmap(raw);
    const double ap = *average_precision(base.values, m);
    const auto q0 = *precision_f1(base, m, ThresholdRule::kQuantile, 0.7);
    const auto h0 = *precision_f1(base, m);
    for (std::size_t k = 0; k < maps.size(); ++k) {
      const Heatmap tr = normalize_heatmap(raw.unaryExpr(maps[k]));
      piap_inv = piap_inv && std::abs(*average_precision(tr.values, m) - ap) < 1e-12;
      const auto qt = *precision_f1(tr, m, ThresholdRule::kQuantile, 0.7);
      quant_inv = quant_inv && qt.precision == q0.precision && qt.f1 == q0.f1;
      const auto ht = *precision_f1(tr, m);
      const bool same = std::abs(ht.precision - h0.precision) < 1e-9 && std::abs(ht.f1 - h0.f1) < 1e-9;
      if (k == maps.size() - 1) affine_inv = affine_inv && same;
      else half_nonlinear_inv = half_nonlinear_inv && same;
    }
  }
  o.check(piap_inv, "PIAP invariant under strictly monotone maps");
  o.check(quant_inv, "precision/F1 (quantile rule) invariant under strictly monotone maps");
  o.check(affine_inv, "precision/F1 (half rule) invariant under positive affine maps");
  o.notes.push_back(std::string("note ") +
                    "precision/F1 (half rule) under nonlinear monotone maps: " +
                    (half_nonlinear_inv ? "invariant" : "not invariant, as expected for a fixed "
                                                        "threshold on min-max scores"));
  const double t = seconds_since(t0);
  o.check(t < 30.0, "runtime " + fmt("%.2f", t) + " s < 30");
  return o;
}

struct DeskRun {
  std::string objectives;
  std::uint64_t seed = 0;
  fs::path checkpoint;
  fs::path run_log;
  MetricsReport report;
  double train_seconds = 0.0;
};

struct DeskContext {
  fs::path work;
  Manifest train_set, test_set;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::vector<DeskRun>> runs;  // by objectives
};

DeskRun desk_run(DeskContext& ctx, const std::string& objectives, std::uint64_t seed,
                 const std::string& tag = "") {
  RunConfig cfg = RunConfig::desk();
  cfg.train.objectives = Objectives::parse(objectives);
  cfg.train.seed = seed;
  cfg.train.keep_epoch_checkpoints = false;
  DeskRun r;
  r.objectives = objectives;
  r.seed = seed;
  const fs::path dir = ctx.work / "runs" / (objectives + "_seed" + std::to_string(seed) + tag);
  fs::remove_all(dir);
  const auto t0 = Clock::now();
  const TrainResult tr = train(cfg, ctx.train_set, dir);
  r.train_seconds = seconds_since(t0);
  r.checkpoint = tr.last_checkpoint;
  r.run_log = tr.run_log;
  r.report = evaluate(r.checkpoint, ctx.test_set, EvalOptions{});
  std::cout << "  [" << objectives << " seed " << seed << tag << "] train "
            << fmt("%.0f", r.train_seconds) << " s";
  auto show = [](const char* k, const std::optional<double>& v) {
    if (v) std::cout << "  " << k << " " << fmt("%.2f", *v);
  };
  show("f1", r.report.f1);
  show("piap", r.report.piap);
  show("sdr", r.report.sdr);
  show("sdr_mix", r.report.sdr_mixture);
  show("ir", r.report.ir_acc);
  show("xnn", r.report.xnn_acc);
  std::cout << std::endl;
  return r;
}

double mean_of(const std::vector<DeskRun>& runs,
               const std::function<std::optional<double>(const MetricsReport&)>& pick) {
  double s = 0;
  int n = 0;
  for (const auto& r : runs)
    if (auto v = pick(r.report)) {
      s += *v;
      ++n;
    }
  return n == static_cast<int>(runs.size()) && n > 0 ? s / n : std::nan("");
}

// 5. Desk-scale end-to-end runs.
Outcome desk_scale(DeskContext& ctx) {
  Outcome o;
  for (const char* obj : {"cl+mas+mva", "cl+mva", "cl", "mas"})
    for (std::uint64_t seed : ctx.seeds) ctx.runs[obj].push_back(desk_run(ctx, obj, seed));

  const auto& full = ctx.runs["cl+mas+mva"];
  double slowest = 0;
  for (const auto& r : full) slowest = std::max(slowest, r.train_seconds);
  o.check(slowest < 15 * 60, "full-model training " + fmt("%.0f", slowest) + " s < 900 s");

  const double ir = mean_of(full, [](auto& r) { return r.ir_acc; });
  const double xnn = mean_of(full, [](auto& r) { return r.xnn_acc; });
  const double f1 = mean_of(full, [](auto& r) { return r.f1; });
  const double sdr = mean_of(full, [](auto& r) { return r.sdr; });
  const double mix = mean_of(full, [](auto& r) { return r.sdr_mixture; });
  o.check(ir >= 50.0, "(a) IR-Acc " + fmt("%.2f", ir) + " >= 50");
  o.check(xnn >= 70.0, "(a) xNN-Acc " + fmt("%.2f", xnn) + " >= 70");
  o.check(f1 >= 40.0, "(a) localization F1 " + fmt("%.2f", f1) + " >= 40");
  o.check(sdr >= mix + 3.0,
          "(a) SDR " + fmt("%.2f", sdr) + " >= mixture " + fmt("%.2f", mix) + " + 3 dB");

  const double f1_clmva = mean_of(ctx.runs["cl+mva"], [](auto& r) { return r.f1; });
  const double f1_cl = mean_of(ctx.runs["cl"], [](auto& r) { return r.f1; });
  const double sdr_mas = mean_of(ctx.runs["mas"], [](auto& r) { return r.sdr; });
  o.check(f1 >= f1_clmva && f1_clmva >= f1_cl,
          "(b) F1 {CL,MAS,MVA} " + fmt("%.2f", f1) + " >= {CL,MVA} " + fmt("%.2f", f1_clmva) +
              " >= {CL} " + fmt("%.2f", f1_cl));
  o.check(sdr >= sdr_mas,
          "(b) SDR {CL,MAS,MVA} " + fmt("%.2f", sdr) + " >= {MAS} " + fmt("%.2f", sdr_mas));
  return o;
}

// 6. One checkpoint, three tasks; removed heads fail their task.
Outcome single_model(DeskContext& ctx) {
  Outcome o;
  const DeskRun& full = ctx.runs["cl+mas+mva"].front();
  const MetricsReport& r = full.report;
  o.check(r.task_errors.empty() && r.piap && r.precision && r.f1 && r.sdr && r.sar && r.ir_acc &&
              r.xnn_acc && r.wnn_acc,
          "full checkpoint reports localization, separation and recognition");

  const std::map<Component, std::string> task_of = {
      {Component::kHeadALoc, "loc"}, {Component::kHeadVLoc, "loc"},
      {Component::kHeadAGlb, "recog"}, {Component::kHeadVGlb, "recog"},
      {Component::kDecoder, "sep"}};
  auto probe = [&](const DeskRun& run, Component c) {
    Checkpoint ck = load_checkpoint(run.checkpoint);
    remove_component(ck, c);
    const fs::path pruned = ctx.work / "pruned.ckpt";
    save_checkpoint(pruned, ck);
    const MetricsReport rep = evaluate(pruned, ctx.test_set, EvalOptions{});
    const std::string task = task_of.at(c);
    const bool failed = rep.task_errors.count(task) == 1 && rep.task_errors.size() == 1;
    const bool silent = (task == "loc" && rep.f1) || (task == "sep" && rep.sdr) ||
                        (task == "recog" && rep.ir_acc);
    o.check(failed && !silent, "[" + run.objectives + "] without " + to_string(c) + ": " + task +
                                   " evaluation fails");
  };
  // Heads of objectives the run did not use.
  probe(ctx.runs["cl"].front(), Component::kDecoder);
  probe(ctx.runs["cl+mva"].front(), Component::kDecoder);
  for (Component c : {Component::kHeadALoc, Component::kHeadVLoc, Component::kHeadAGlb,
                      Component::kHeadVGlb})
    probe(ctx.runs["mas"].front(), c);
  for (const auto& [c, task] : task_of) probe(full, c);
  return o;
}

// 7. Determinism of a repeated seeded run.
Outcome determinism(DeskContext& ctx) {
  Outcome o;
  const DeskRun& first = ctx.runs["cl+mas+mva"].front();
  const DeskRun again = desk_run(ctx, first.objectives, first.seed, "_repeat");
  o.check(read_runlog(first.run_log, true) == read_runlog(again.run_log, true),
          "RunLogs identical (wall-clock fields excluded)");
  o.check(first.report == again.report, "MetricsReports identical");
  o.check(load_checkpoint(first.checkpoint).params == load_checkpoint(again.checkpoint).params,
          "final parameters bitwise identical");
  return o;
}

void print(int id, const std::string& title, const Outcome& o, int& failures) {
  std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << title << "\n";
  for (const auto& n : o.notes) std::cout << "    " << n << "\n";
  std::cout << std::flush;
  failures += o.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance_work";
  bool skip_desk = false;
  int n_seeds = 3;
  app.add_option("--work-dir", work, "Scratch directory for corpora and runs");
  app.add_flag("--skip-desk", skip_desk, "Only run the fast suites (criteria 1-4)");
  app.add_option("--seeds", n_seeds, "Seeds per desk-scale configuration")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  int failures = 0;
  auto guarded = [&](int id, const std::string& title, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.check(false, std::string("error: ") + e.what());
    }
    print(id, title, o, failures);
  };

  guarded(1, "DSP oracle suite", dsp_suite);
  guarded(2, "loss identity suite", loss_identities);
  guarded(3, "gradient checks", gradient_checks);
  guarded(4, "metric oracle suite", metric_oracles);
  if (skip_desk) {
    std::cout << "criteria 5-7 skipped (--skip-desk)\n";
    return std::min(failures, 100);
  }

  DeskContext ctx;
  ctx.work = work;
  for (int s = 0; s < n_seeds; ++s) ctx.seeds.push_back(static_cast<std::uint64_t>(s));
  bool corpora_ok = true;
  try {
    fs::create_directories(ctx.work);
    SyntheticSpec train_spec;  // 8 classes x 250
    train_spec.seed = 1;
    SyntheticSpec test_spec;
    test_spec.samples_per_class = 50;
    test_spec.seed = 2;
    fs::remove_all(ctx.work / "train");
    fs::remove_all(ctx.work / "test");
    ctx.train_set = generate_synthetic(train_spec, ctx.work / "train");
    ctx.test_set = generate_synthetic(test_spec, ctx.work / "test");
    std::cout << "desk corpora: " << ctx.train_set.size() << " train / " << ctx.test_set.size()
              << " test samples\n";
  } catch (const std::exception& e) {
    std::cout << "desk corpora could not be generated: " << e.what() << "\n";
    corpora_ok = false;
  }
  bool desk_ok = corpora_ok;
  guarded(5, "desk-scale end-to-end", [&] {
    if (!corpora_ok) throw Error("no corpora");
    try {
      return desk_scale(ctx);
    } catch (...) {
      desk_ok = false;
      throw;
    }
  });
  guarded(6, "single-model contract", [&] {
    if (!desk_ok) throw Error("desk-scale runs unavailable");
    return single_model(ctx);
  });
  guarded(7, "determinism", [&] {
    if (!desk_ok) throw Error("desk-scale runs unavailable");
    return determinism(ctx);
  });
  return std::min(failures, 100);
}
