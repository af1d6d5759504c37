// Copyright 2026 The boxlm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Acceptance suite. Nine numbered criteria gate a release; each prints one
// "ACCEPTANCE <n>: PASS|FAIL" line. Criteria 1-6 and 8-9 are property checks
// (oracle equivalence, gradient correctness, pinned arithmetic, invariants,
// determinism); criterion 7 trains the two regimes at full reference scale
// and checks the directional claims, so it runs last and dominates the
// suite's runtime (~35 minutes on one core). Criterion 7 always writes its
// run artifacts (training curves, evaluation reports, a summary table) to
// acceptance_c7/ under the working directory for diagnosis.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "gtest/gtest.h"

#include "boxlm/codec.hpp"
#include "boxlm/common.hpp"
#include "boxlm/eval.hpp"
#include "boxlm/geometry.hpp"
#include "boxlm/gradcheck.hpp"
#include "boxlm/model.hpp"
#include "boxlm/scenegen.hpp"
#include "boxlm/train.hpp"
#include "oracles.hpp"

namespace boxlm {
namespace {

namespace fs = std::filesystem;

// Prints the criterion verdict when the enclosing test body ends, whether it
// ended normally or via a failed assertion.
class Criterion {
 public:
  explicit Criterion(int n) : n_(n), start_(std::chrono::steady_clock::now()) {}
  ~Criterion() {
    double secs = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start_)
                      .count();
    std::printf("ACCEPTANCE %d: %s (%.1f s)\n", n_,
                ::testing::Test::HasFailure() ? "FAIL" : "PASS", secs);
    std::fflush(stdout);
  }
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  int n_;
  std::chrono::steady_clock::time_point start_;
};

// The reference dataset and model scale used by criteria 6 and 7.
GenConfig reference_gen_config() {
  GenConfig g;
  g.n_scenes = 42;  // ~2000 dialog samples at the default knobs
  g.grid_size = 8;
  g.max_overlap_iou = 0.0;
  g.seed = 2026;
  return g;
}

TrainConfig reference_train_config(const Dataset& data) {
  TrainConfig cfg;  // defaults: d=64, 2 layers, 4 heads, batch 16, lr 3e-4
  cfg.model.grid_size = data.config.grid_size;
  cfg.model.vocab_size = Vocab::instance().size();
  cfg.n_steps = 5000;
  return cfg;
}

// --------------------------------------------------------------------------
// 1. Closed-form IoU and the GIoU penalty match a 1000x1000 rasterization
//    oracle on 10,000 seeded box pairs within 2e-3 absolute.
// --------------------------------------------------------------------------
TEST(Acceptance, C1_GeometryMatchesRasterizationOracle) {
  Criterion c(1);

  // The rasterization count is exact for boxes on the 1/1000 lattice (the
  // coordinate-token grid), so every discrepancy is the closed form's fault.
  Rng rng(2026);
  auto lattice_box = [&rng] {
    int x1 = rng.uniform_int(1000), y1 = rng.uniform_int(1000);
    int x2 = x1 + 1 + rng.uniform_int(1000 - x1);
    int y2 = y1 + 1 + rng.uniform_int(1000 - y1);
    return BoxN{x1 / 1000.0, y1 / 1000.0, x2 / 1000.0, y2 / 1000.0};
  };

  double worst_iou = 0.0, worst_pen = 0.0;
  for (int i = 0; i < 10000; ++i) {
    BoxN a = lattice_box(), b = lattice_box();
    worst_iou = std::max(worst_iou,
                         std::abs(iou(a, b) - testonly::raster_iou(a, b)));
    double analytic_penalty = iou(a, b) - giou(a, b);
    worst_pen = std::max(worst_pen, std::abs(analytic_penalty -
                                             testonly::raster_giou_penalty(
                                                 a, b)));
  }
  EXPECT_LE(worst_iou, 2e-3);
  EXPECT_LE(worst_pen, 2e-3);
  std::printf("  geometry: worst |iou diff| %.3e, worst |penalty diff| %.3e\n",
              worst_iou, worst_pen);

  // Certify the separable cell count against the literal 2-D sweep, at the
  // oracle resolution itself so no box edge can land on a cell center.
  for (int i = 0; i < 3; ++i) {
    BoxN a = lattice_box(), b = lattice_box();
    EXPECT_DOUBLE_EQ(testonly::raster_iou(a, b, 1000),
                     testonly::raster_iou_2d(a, b, 1000));
  }
  EXPECT_LE(c.elapsed(), 60.0);
}

// --------------------------------------------------------------------------
// 2. Full-model finite-difference gradient check: >= 200 kink-avoiding
//    probes across every tensor family, max relative error <= 1e-4.
// --------------------------------------------------------------------------
TEST(Acceptance, C2_GradientsMatchFiniteDifferences) {
  Criterion c(2);
  GradcheckReport r = gradcheck_model(/*probes_per_tensor=*/5, /*seed=*/2026);
  EXPECT_GE(r.probes, 200);
  EXPECT_EQ(r.failures, 0);
  EXPECT_LE(r.worst_rel_err, 1e-4);
  std::printf("  gradcheck: %d probes, worst relative error %.3e\n", r.probes,
              r.worst_rel_err);
  EXPECT_LE(c.elapsed(), 300.0);
}

// --------------------------------------------------------------------------
// 3. Loss arithmetic: the disjoint-corner worked example, cross-entropy on
//    uniform logits, and the logged alpha/beta decomposition of every step.
// --------------------------------------------------------------------------
TEST(Acceptance, C3_LossArithmeticIsExact) {
  Criterion c(3);

  BoxN pred{0.0, 0.0, 0.2, 0.2}, gold{0.8, 0.8, 1.0, 1.0};
  EXPECT_NEAR(giou(pred, gold), -0.92, 1e-12);
  EXPECT_NEAR(giou_loss(pred, gold), 1.92, 1e-12);
  EXPECT_NEAR(l1_loss(pred, gold), 3.2, 1e-12);
  EXPECT_NEAR(arl_loss(pred, gold, RegWeights{0.2, 0.8}), 2.176, 1e-12);

  // Cross-entropy on uniform logits is ln(V) per supervised position. First
  // the 10-way identity by direct evaluation of the formula...
  {
    double lse = 0.0;
    for (int k = 0; k < 10; ++k) lse += std::exp(0.0);
    double loss_two_positions = 2.0 * (std::log(lse) - 0.0);
    EXPECT_NEAR(loss_two_positions, 2.0 * std::log(10.0), 1e-12);
  }
  // ...then the same property through the real forward pass: an all-zero
  // parameter set produces exactly uniform logits at every position.
  {
    GenConfig g;
    g.n_scenes = 4;
    g.grid_size = 4;
    g.seed = 9;
    Dataset data = generate_dataset(g);
    ModelConfig mc;
    mc.d_model = 8;
    mc.n_layers = 1;
    mc.n_heads = 2;
    mc.max_response_len = 24;
    mc.grid_size = 4;
    mc.vocab_size = Vocab::instance().size();
    Model zero(mc);  // constructed, never initialized: all tensors zero
    SampleEncoder enc(data, mc.prompt_variant, mc.grid_size);
    EncodedDialog e = enc.encode(data.samples.front());
    ForwardCache cache = zero.forward(*e.grid, e.prompt, e.response, e.gold,
                                      RegWeights{});
    double n_sup = static_cast<double>(e.response.size()) - 1.0;
    EXPECT_NEAR(cache.clm, n_sup * std::log(double(mc.vocab_size)), 1e-9);
  }

  // Every logged step of a real run decomposes as alpha*clm + beta*arl.
  {
    GenConfig g;
    g.n_scenes = 6;
    g.grid_size = 4;
    g.seed = 5;
    Dataset data = generate_dataset(g);
    TrainConfig cfg;
    cfg.model.d_model = 8;
    cfg.model.n_layers = 1;
    cfg.model.n_heads = 2;
    cfg.model.max_response_len = 24;
    cfg.model.grid_size = 4;
    cfg.model.vocab_size = Vocab::instance().size();
    cfg.batch_size = 4;
    cfg.n_steps = 50;
    cfg.seed = 11;
    TrainOutput out = train_model(cfg, data);
    ASSERT_EQ(out.log.size(), 50u);
    for (const StepStats& s : out.log)
      EXPECT_NEAR(s.total, 0.2 * s.clm + 0.8 * s.arl, 1e-12) << s.step;
  }
}

// --------------------------------------------------------------------------
// 4. Codec roundtrip over 100,000 random boxes: per-coordinate error at most
//    5e-4, zero parse exceptions; all six exception reasons constructible.
// --------------------------------------------------------------------------
TEST(Acceptance, C4_CodecRoundTripAndExceptionTaxonomy) {
  Criterion c(4);
  const Vocab& v = Vocab::instance();

  Rng rng(77);
  double worst = 0.0;
  int exceptions = 0;
  for (int i = 0; i < 100000; ++i) {
    double x1 = rng.uniform(0.0, 1.0), x2 = rng.uniform(0.0, 1.0);
    double y1 = rng.uniform(0.0, 1.0), y2 = rng.uniform(0.0, 1.0);
    BoxN b{std::min(x1, x2), std::min(y1, y2), std::max(x1, x2),
           std::max(y1, y2)};
    ParsedBox p = parse_box(v, encode_box(v, b));
    if (p.outcome != ParseOutcome::kOk) {
      ++exceptions;
      continue;
    }
    worst = std::max({worst, std::abs(p.box.x1 - b.x1),
                      std::abs(p.box.y1 - b.y1), std::abs(p.box.x2 - b.x2),
                      std::abs(p.box.y2 - b.y2)});
  }
  EXPECT_EQ(exceptions, 0);
  EXPECT_LE(worst, 5e-4 + 1e-15);
  std::printf("  codec: worst roundtrip error %.6e, %d exceptions\n", worst,
              exceptions);

  const TokenId coord = v.coord_token(500);
  const TokenId lo = v.coord_token(200), hi = v.coord_token(900);
  const TokenId word = 6;  // first plain text token
  ASSERT_FALSE(v.is_coord(word));
  using S = std::vector<TokenId>;
  auto outcome = [&](const S& seq) { return parse_box(v, seq).outcome; };
  EXPECT_EQ(outcome({Vocab::kBos, word, Vocab::kEos}), ParseOutcome::kNoBox);
  EXPECT_EQ(outcome({Vocab::kBoxOpen, coord, Vocab::kSep, coord}),
            ParseOutcome::kUnterminatedBox);
  EXPECT_EQ(outcome({Vocab::kBoxOpen, Vocab::kBoxClose, Vocab::kBoxOpen}),
            ParseOutcome::kMultipleBoxes);
  EXPECT_EQ(outcome({Vocab::kBoxOpen, coord, Vocab::kSep, coord,
                     Vocab::kBoxClose}),
            ParseOutcome::kWrongArity);
  EXPECT_EQ(outcome({Vocab::kBoxOpen, coord, Vocab::kSep, word, Vocab::kSep,
                     coord, Vocab::kSep, coord, Vocab::kBoxClose}),
            ParseOutcome::kNonCoordToken);
  EXPECT_EQ(outcome({Vocab::kBoxOpen, coord, Vocab::kSep, coord, Vocab::kSep,
                     lo, Vocab::kSep, hi, Vocab::kBoxClose}),
            ParseOutcome::kOrderViolation);
}

// --------------------------------------------------------------------------
// 5. The regression head is training-only: zeroing its weights in a trained
//    checkpoint changes no decoded token on the full held-out split.
// --------------------------------------------------------------------------
TEST(Acceptance, C5_RegressionHeadDoesNotAffectDecoding) {
  Criterion c(5);
  GenConfig g;
  g.n_scenes = 6;
  g.grid_size = 4;
  g.seed = 5;
  Dataset data = generate_dataset(g);

  TrainConfig cfg;
  cfg.model.d_model = 8;
  cfg.model.n_layers = 1;
  cfg.model.n_heads = 2;
  cfg.model.max_response_len = 24;
  cfg.model.grid_size = 4;
  cfg.model.vocab_size = Vocab::instance().size();
  cfg.batch_size = 4;
  cfg.n_steps = 300;
  cfg.seed = 11;
  TrainOutput out = train_model(cfg, data);

  // Round-trip through checkpoint bytes, then erase the regression head.
  fs::path ck = fs::temp_directory_path() / "boxlm_acceptance_c5.bxlm";
  out.model.save_checkpoint(ck);
  Model trained = Model::load_checkpoint(ck);
  fs::remove(ck);
  Model headless = trained;
  headless.params().arl_w1.setZero();
  headless.params().arl_b1.setZero();
  headless.params().arl_w2.setZero();
  headless.params().arl_b2.setZero();

  SampleEncoder enc(data, cfg.model.prompt_variant, cfg.model.grid_size);
  int n_compared = 0;
  for (const DialogSample& s : data.samples) {
    if (!data.is_test(s)) continue;
    EncodedDialog e = enc.encode(s);
    EXPECT_EQ(trained.decode(*e.grid, e.prompt),
              headless.decode(*e.grid, e.prompt))
        << s.id;
    ++n_compared;
  }
  EXPECT_GT(n_compared, 0);
  std::printf("  decoded %d held-out dialogs identically\n", n_compared);
}

// --------------------------------------------------------------------------
// 6. Training with beta = 0 reproduces the language-model-only trajectory
//    bit-identically for 200 steps at reference scale.
// --------------------------------------------------------------------------
TEST(Acceptance, C6_ZeroBetaEqualsLanguageModelOnlyBitwise) {
  Criterion c(6);
  Dataset data = generate_dataset(reference_gen_config());

  TrainConfig base = reference_train_config(data);
  base.n_steps = 200;
  base.seed = 2026;

  TrainConfig zero_beta = base;
  zero_beta.regime = Regime::kArl;
  zero_beta.beta = 0.0;
  TrainConfig clm_only = base;
  clm_only.regime = Regime::kClm;

  TrainOutput a = train_model(zero_beta, data);
  TrainOutput b = train_model(clm_only, data);
  EXPECT_EQ(a.model.serialize(), b.model.serialize());
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].total, b.log[i].total);
    EXPECT_EQ(a.log[i].clm, b.log[i].clm);
    EXPECT_EQ(a.log[i].arl, b.log[i].arl);
  }
}

// --------------------------------------------------------------------------
// 8. gen/train/eval each produce byte-identical artifacts when invoked twice
//    with the same inputs and seeds. Exercises the real binary.
// --------------------------------------------------------------------------

struct CmdResult {
  int exit_code = -1;
  std::string output;
};

CmdResult run_cli(const std::string& args) {
  std::string cmd = std::string(BOXLM_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  EXPECT_NE(pipe, nullptr) << cmd;
  CmdResult r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0)
    r.output.append(buf, n);
  int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

TEST(Acceptance, C8_CommandsAreByteDeterministic) {
  Criterion c(8);
  fs::path root = fs::temp_directory_path() / "boxlm_acceptance_c8";
  fs::remove_all(root);
  fs::create_directories(root);
  auto at = [&root](const std::string& rel) { return (root / rel).string(); };

  // Two gen invocations with the same config; then two train and two eval
  // invocations that are argument-identical except for the run directory
  // (train) or completely identical reruns into fresh dirs (eval).
  for (const char* t : {"1", "2"}) {
    ASSERT_EQ(run_cli("gen --out " + at(std::string("ds") + t) +
                      " --scenes 6 --grid 4 --seed 7")
                  .exit_code,
              0);
    CmdResult tr = run_cli(
        "train --dataset " + at("ds1") + " --run " + at(std::string("run") + t) +
        " --steps 20 --batch-size 4 --d-model 8 --n-layers 1 --n-heads 2"
        " --max-response-len 24 --seed 11");
    ASSERT_EQ(tr.exit_code, 0) << tr.output;
    CmdResult ev = run_cli("eval --dataset " + at("ds1") + " --checkpoint " +
                           at("run1/checkpoints/final.bxlm") + " --run " +
                           at(std::string("run") + t) + " --overlays 2");
    ASSERT_EQ(ev.exit_code, 0) << ev.output;
  }

  for (const char* f :
       {"gen_config.json", "scenes.jsonl", "samples.jsonl", "summary.csv"})
    EXPECT_EQ(read_file(root / "ds1" / f), read_file(root / "ds2" / f)) << f;
  for (const char* f : {"config.json", "checkpoints/final.bxlm",
                        "logs/train_log.csv", "reports/report.jsonl"})
    EXPECT_EQ(read_file(root / "run1" / f), read_file(root / "run2" / f)) << f;
  for (const auto& o : fs::directory_iterator(root / "run1" / "overlays"))
    EXPECT_EQ(read_file(o.path()),
              read_file(root / "run2" / "overlays" / o.path().filename()));
  fs::remove_all(root);
}

// --------------------------------------------------------------------------
// 9. Dataset construction invariants: three dialogs per kept expression,
//    affordance boxes contained in their object boxes, and a scene-level
//    held-out share within one scene of the configured fraction.
// --------------------------------------------------------------------------
TEST(Acceptance, C9_DatasetConstructionInvariants) {
  Criterion c(9);
  Dataset data = generate_dataset(reference_gen_config());

  std::set<std::tuple<int, int, std::string, Task>> expressions;
  for (const DialogSample& s : data.samples)
    expressions.insert({s.scene_id, s.object_id, s.phrase, s.task});
  ASSERT_FALSE(expressions.empty());
  EXPECT_EQ(data.samples.size(), 3 * expressions.size());

  int affordance_checked = 0;
  for (const DialogSample& s : data.samples) {
    if (s.task != Task::kAffordance) continue;
    const SceneSpec& scene = data.scene(s.scene_id);
    const BoxN& obj = scene.objects[static_cast<std::size_t>(s.object_id)].box;
    EXPECT_GE(s.gold.x1, obj.x1) << s.id;
    EXPECT_GE(s.gold.y1, obj.y1) << s.id;
    EXPECT_LE(s.gold.x2, obj.x2) << s.id;
    EXPECT_LE(s.gold.y2, obj.y2) << s.id;
    ++affordance_checked;
  }
  EXPECT_GT(affordance_checked, 0);

  double configured = data.config.test_fraction;
  double realized = static_cast<double>(data.test_scene_ids.size()) /
                    static_cast<double>(data.scenes.size());
  EXPECT_NEAR(configured, 0.112, 1e-15);  // pinned default
  EXPECT_LE(std::abs(realized - configured),
            1.0 / static_cast<double>(data.scenes.size()));
  std::printf(
      "  %zu dialogs / %zu expressions, %d affordance boxes contained, "
      "held-out share %.4f (configured %.3f)\n",
      data.samples.size(), expressions.size(), affordance_checked, realized,
      configured);
}

// --------------------------------------------------------------------------
// 7. Directional result at reference scale, averaged over 3 seeds: with the
//    auxiliary regression loss, held-out Acc@0.5 on affordance >= without,
//    detection within 1 point, and exception rate no worse on both tasks.
//    Artifacts are always written to acceptance_c7/ for diagnosis.
// --------------------------------------------------------------------------
TEST(Acceptance, C7_RegressionLossImprovesLocalizationDirectionally) {
  Criterion c(7);
  Dataset data = generate_dataset(reference_gen_config());

  fs::path art = fs::current_path() / "acceptance_c7";
  fs::create_directories(art);

  struct RunMetrics {
    double det_acc, aff_acc, det_exc, aff_exc;
  };
  auto mean = [](const std::vector<RunMetrics>& v, auto field) {
    double s = 0.0;
    for (const RunMetrics& m : v) s += m.*field;
    return s / static_cast<double>(v.size());
  };

  std::map<Regime, std::vector<RunMetrics>> metrics;
  std::map<std::string, std::vector<StepStats>> logs;
  std::string summary = "regime,seed,detection_acc,affordance_acc,"
                        "detection_exception_rate,affordance_exception_rate\n";
  for (std::uint64_t seed : {1, 2, 3}) {
    for (Regime regime : {Regime::kArl, Regime::kClm}) {
      TrainConfig cfg = reference_train_config(data);
      cfg.regime = regime;
      cfg.seed = seed;
      TrainOutput out = train_model(cfg, data);
      EvalReport report = evaluate(out.model, data, /*test_split=*/true);
      report.regime = std::string(regime_name(regime));

      std::string name =
          std::string(regime_name(regime)) + "_s" + std::to_string(seed);
      write_file(art / (name + ".train_log.csv"), train_log_csv(out.log));
      write_file(art / (name + ".report.jsonl"), report_jsonl(report));
      logs[name] = out.log;

      RunMetrics m{report.detection.acc(), report.affordance.acc(),
                   report.detection.exception_rate(),
                   report.affordance.exception_rate()};
      metrics[regime].push_back(m);
      summary += name.substr(0, name.find('_')) + "," + std::to_string(seed) +
                 "," + fmt_double(m.det_acc) + "," + fmt_double(m.aff_acc) +
                 "," + fmt_double(m.det_exc) + "," + fmt_double(m.aff_exc) +
                 "\n";
      std::printf(
          "  %s seed %llu: detection acc %.4f exc %.4f | affordance acc %.4f "
          "exc %.4f\n",
          std::string(regime_name(regime)).c_str(),
          static_cast<unsigned long long>(seed), m.det_acc, m.det_exc,
          m.aff_acc, m.aff_exc);

      // The training loss must end below where it started (both regimes).
      EXPECT_LT(out.log.back().total, out.log.front().total);
    }
    write_file(art / ("curves_s" + std::to_string(seed) + ".csv"),
               merged_curves_csv(logs["arl_s" + std::to_string(seed)],
                                 logs["clm_s" + std::to_string(seed)]));
  }
  write_file(art / "summary.csv", summary);

  double arl_det = mean(metrics[Regime::kArl], &RunMetrics::det_acc);
  double clm_det = mean(metrics[Regime::kClm], &RunMetrics::det_acc);
  double arl_aff = mean(metrics[Regime::kArl], &RunMetrics::aff_acc);
  double clm_aff = mean(metrics[Regime::kClm], &RunMetrics::aff_acc);
  double arl_det_exc = mean(metrics[Regime::kArl], &RunMetrics::det_exc);
  double clm_det_exc = mean(metrics[Regime::kClm], &RunMetrics::det_exc);
  double arl_aff_exc = mean(metrics[Regime::kArl], &RunMetrics::aff_exc);
  double clm_aff_exc = mean(metrics[Regime::kClm], &RunMetrics::aff_exc);

  std::printf(
      "  means over 3 seeds (with-regression vs language-model-only):\n"
      "    detection acc  %.4f vs %.4f (delta %+.4f, floor -0.01)\n"
      "    affordance acc %.4f vs %.4f (delta %+.4f, floor 0)\n"
      "    detection exc  %.4f vs %.4f | affordance exc %.4f vs %.4f\n",
      arl_det, clm_det, arl_det - clm_det, arl_aff, clm_aff,
      arl_aff - clm_aff, arl_det_exc, clm_det_exc, arl_aff_exc, clm_aff_exc);
  std::printf("  artifacts: %s\n", art.string().c_str());

  EXPECT_GE(arl_aff, clm_aff);
  EXPECT_GE(arl_det, clm_det - 0.01);
  EXPECT_LE(arl_det_exc, clm_det_exc);
  EXPECT_LE(arl_aff_exc, clm_aff_exc);
}

}  // namespace
}  // namespace boxlm
