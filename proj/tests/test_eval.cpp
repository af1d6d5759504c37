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

#include "boxlm/eval.hpp"

#include <gtest/gtest.h>

#include "boxlm/gradcheck.hpp"
#include "boxlm/svg.hpp"

namespace boxlm {
namespace {

Dataset small_dataset() {
  GenConfig g;
  g.n_scenes = 8;
  g.grid_size = 4;
  g.min_objects = 3;
  g.max_objects = 4;
  g.seed = 5;
  return generate_dataset(g);
}

ModelConfig small_model_config() {
  ModelConfig c;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.max_response_len = 24;
  c.grid_size = 4;
  c.vocab_size = Vocab::instance().size();
  return c;
}

SampleEval make_eval(std::string id, Task task, ParseOutcome outcome,
                     BoxN pred, BoxN gold) {
  SampleEval s;
  s.id = std::move(id);
  s.task = task;
  s.outcome = outcome;
  s.gold = gold;
  if (outcome == ParseOutcome::kOk) {
    s.pred = pred;
    s.iou = iou(pred, gold);
    s.hit = s.iou >= kHitIou;
  }
  s.text = "stub";
  return s;
}

EvalReport synthetic_report(std::string split, int copies = 1) {
  EvalReport r;
  r.checkpoint = "deadbeef00000000";
  r.split = std::move(split);
  r.regime = "arl";
  for (int i = 0; i < copies; ++i) {
    SampleEval hit =
        make_eval("s" + std::to_string(3 * i), Task::kDetection,
                  ParseOutcome::kOk, BoxN{0.25, 0.25, 0.5, 0.5},
                  BoxN{0.25, 0.25, 0.5, 0.5});
    SampleEval miss =
        make_eval("s" + std::to_string(3 * i + 1), Task::kAffordance,
                  ParseOutcome::kOk, BoxN{0.0, 0.0, 0.25, 0.25},
                  BoxN{0.5, 0.5, 1.0, 1.0});
    SampleEval ex =
        make_eval("s" + std::to_string(3 * i + 2), Task::kAffordance,
                  ParseOutcome::kNoBox, BoxN{}, BoxN{0.5, 0.5, 1.0, 1.0});
    for (SampleEval* s : {&hit, &miss, &ex}) {
      (s->task == Task::kDetection ? r.detection : r.affordance).add(*s);
      r.overall.add(*s);
      if (s->outcome != ParseOutcome::kOk)
        ++r.exception_counts[std::string(parse_outcome_name(s->outcome))];
      r.samples.push_back(*s);
    }
  }
  return r;
}

TEST(GradcheckLoss, PassesWithManyProbes) {
  GradcheckReport r = gradcheck_loss(240, 3);
  EXPECT_TRUE(r.ok());
  EXPECT_GE(r.probes, 240);
  EXPECT_LE(r.worst_rel_err, 1e-4);
}

TEST(GradcheckLoss, DetectsInjectedFault) {
  GradcheckReport r = gradcheck_loss(40, 3, 1e-4, 1e-3, 1e-2);
  EXPECT_FALSE(r.ok());
  EXPECT_GT(r.failures, 0);
}

TEST(GradcheckModel, PassesAcrossAllTensorFamilies) {
  GradcheckReport r = gradcheck_model(2, 5);
  EXPECT_TRUE(r.ok());
  EXPECT_GE(r.probes, 60);  // every tensor of a 2-layer model, twice
  EXPECT_LE(r.worst_rel_err, 1e-4);
}

TEST(GradcheckModel, DetectsInjectedFault) {
  GradcheckReport r = gradcheck_model(1, 5, 1e-4, 1e-2);
  EXPECT_FALSE(r.ok());
}

TEST(SplitFingerprint, TracksConfigAndHeldOutScenes) {
  Dataset a = small_dataset();
  Dataset b = small_dataset();
  EXPECT_EQ(split_fingerprint(a), split_fingerprint(b));
  GenConfig other = a.config;
  other.seed = 6;
  Dataset c = generate_dataset(other);
  EXPECT_NE(split_fingerprint(a), split_fingerprint(c));
  b.test_scene_ids.insert(0);
  EXPECT_NE(split_fingerprint(a), split_fingerprint(b));
}

// A zero model decodes all-pad responses: every sample is a no_box
// exception, scored as an IoU-0 miss.
TEST(Evaluate, ZeroModelYieldsAllExceptions) {
  Dataset data = small_dataset();
  Model model(small_model_config());
  EvalReport r = evaluate(model, data);
  int test_dialogs = data.summary().test_dialogs;
  ASSERT_GT(test_dialogs, 0);
  EXPECT_EQ(r.overall.n, test_dialogs);
  EXPECT_EQ(r.detection.n + r.affordance.n, r.overall.n);
  EXPECT_EQ(r.overall.exceptions, r.overall.n);
  EXPECT_EQ(r.overall.hits, 0);
  EXPECT_EQ(r.overall.acc(), 0.0);
  EXPECT_EQ(r.overall.exception_rate(), 1.0);
  EXPECT_EQ(r.exception_counts.at("no_box"), r.overall.n);
  for (const SampleEval& s : r.samples) {
    EXPECT_EQ(s.outcome, ParseOutcome::kNoBox);
    EXPECT_EQ(s.iou, 0.0);
    EXPECT_TRUE(s.text.empty());
  }
  EXPECT_EQ(r.split, hex64(split_fingerprint(data)));
}

TEST(Evaluate, TrainSplitSelection) {
  Dataset data = small_dataset();
  Model model(small_model_config());
  EvalReport train_side = evaluate(model, data, /*test_split=*/false);
  DatasetSummary sum = data.summary();
  EXPECT_EQ(train_side.overall.n, sum.dialogs - sum.test_dialogs);
}

TEST(Evaluate, BriefTrainingProducesParseableWellFormedReport) {
  Dataset data = small_dataset();
  TrainConfig cfg;
  cfg.model = small_model_config();
  cfg.batch_size = 4;
  cfg.n_steps = 120;
  cfg.seed = 3;
  TrainOutput out = train_model(cfg, data);
  EvalReport r = evaluate(out.model, data);
  r.checkpoint = checkpoint_id(out.model.serialize());
  r.regime = std::string(regime_name(cfg.regime));
  EXPECT_EQ(r.overall.n, data.summary().test_dialogs);
  int tallied = 0;
  for (const auto& [name, count] : r.exception_counts) tallied += count;
  EXPECT_EQ(tallied, r.overall.exceptions);
  EXPECT_GE(r.overall.acc(), 0.0);
  EXPECT_LE(r.overall.acc(), 1.0);

  EvalReport back = report_from_jsonl(report_jsonl(r));
  EXPECT_EQ(back.checkpoint, r.checkpoint);
  EXPECT_EQ(back.overall.n, r.overall.n);
  EXPECT_EQ(back.overall.hits, r.overall.hits);
  EXPECT_EQ(back.samples.size(), r.samples.size());
}

TEST(ReportJsonl, RoundTripPreservesEverything) {
  EvalReport r = synthetic_report("00000000000000aa");
  std::string text = report_jsonl(r);
  EvalReport back = report_from_jsonl(text);
  EXPECT_EQ(back.checkpoint, r.checkpoint);
  EXPECT_EQ(back.split, r.split);
  EXPECT_EQ(back.regime, "arl");
  EXPECT_EQ(back.overall.n, 3);
  EXPECT_EQ(back.overall.hits, 1);
  EXPECT_EQ(back.overall.exceptions, 1);
  EXPECT_DOUBLE_EQ(back.overall.acc(), 1.0 / 3.0);
  EXPECT_EQ(back.exception_counts.at("no_box"), 1);
  ASSERT_EQ(back.samples.size(), 3u);
  EXPECT_EQ(back.samples[0].outcome, ParseOutcome::kOk);
  EXPECT_TRUE(back.samples[0].hit);
  EXPECT_EQ(back.samples[0].pred, (BoxN{0.25, 0.25, 0.5, 0.5}));
  EXPECT_EQ(back.samples[2].outcome, ParseOutcome::kNoBox);
  // Serialization is deterministic.
  EXPECT_EQ(report_jsonl(back), text);
}

TEST(ReportJsonl, RejectsMalformedInput) {
  EXPECT_THROW(report_from_jsonl("{\"type\":\"sample\"}\n"), SchemaViolation);
  EXPECT_THROW(report_from_jsonl("not json\n"), SchemaViolation);
  EXPECT_THROW(report_from_jsonl(""), SchemaViolation);
  std::string two_headers =
      report_jsonl(synthetic_report("01")) + report_jsonl(synthetic_report("01"));
  EXPECT_THROW(report_from_jsonl(two_headers), SchemaViolation);
}

TEST(Compare, DeltasAndSplitGuard) {
  EvalReport a = synthetic_report("aa", 2);  // acc 1/3, exceptions 1/3
  EvalReport b = synthetic_report("aa", 2);
  // Flip b's miss into a hit: recompute from scratch with a closer box.
  b = EvalReport{};
  b.checkpoint = "feedface00000000";
  b.split = "aa";
  for (int i = 0; i < 2; ++i) {
    SampleEval hit = make_eval("h" + std::to_string(i), Task::kDetection,
                               ParseOutcome::kOk, BoxN{0.25, 0.25, 0.5, 0.5},
                               BoxN{0.25, 0.25, 0.5, 0.5});
    SampleEval hit2 = make_eval("i" + std::to_string(i), Task::kAffordance,
                                ParseOutcome::kOk, BoxN{0.5, 0.5, 1.0, 1.0},
                                BoxN{0.5, 0.5, 1.0, 1.0});
    SampleEval ex = make_eval("e" + std::to_string(i), Task::kAffordance,
                              ParseOutcome::kWrongArity, BoxN{},
                              BoxN{0.5, 0.5, 1.0, 1.0});
    for (SampleEval* s : {&hit, &hit2, &ex}) {
      (s->task == Task::kDetection ? b.detection : b.affordance).add(*s);
      b.overall.add(*s);
      if (s->outcome != ParseOutcome::kOk)
        ++b.exception_counts[std::string(parse_outcome_name(s->outcome))];
      b.samples.push_back(*s);
    }
  }
  CompareResult d = compare_reports(a, b);
  EXPECT_NEAR(d.overall_acc, 2.0 / 6.0, 1e-12);  // 4/6 - 2/6
  EXPECT_NEAR(d.affordance_acc, 0.5, 1e-12);     // 2/4 - 0/4
  EXPECT_NEAR(d.overall_exception_rate, 0.0, 1e-12);
  EXPECT_EQ(d.detection_acc, 0.0);

  std::string csv = compare_csv(a, b);
  EXPECT_NE(csv.find("metric,a,b,delta"), std::string::npos);
  EXPECT_NE(csv.find("affordance_acc,0,0.5,0.5"), std::string::npos);
  std::string text = compare_text(a, b, "clm", "arl");
  EXPECT_NE(text.find("negative favors b"), std::string::npos);

  EvalReport other_split = synthetic_report("bb", 2);
  EXPECT_THROW(compare_reports(a, other_split), SplitMismatchError);
  EvalReport other_n = synthetic_report("aa", 3);
  EXPECT_THROW(compare_reports(a, other_n), SplitMismatchError);
}

TEST(TrainLogCsv, RoundTripAndMergedCurves) {
  std::vector<StepStats> a = {{1, 3.5, 10.0, 1.25, 6e-5},
                              {2, 3.25, 9.5, 1.125, 1.2e-4},
                              {3, 3.0, 9.0, 1.0, 1.8e-4}};
  std::vector<StepStats> back = train_log_from_csv(train_log_csv(a));
  ASSERT_EQ(back.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(back[i].step, a[i].step);
    EXPECT_EQ(back[i].total, a[i].total);  // shortest-round-trip formatting
    EXPECT_EQ(back[i].clm, a[i].clm);
    EXPECT_EQ(back[i].arl, a[i].arl);
    EXPECT_EQ(back[i].lr, a[i].lr);
  }
  std::vector<StepStats> b = {{2, 2.0, 8.0, 0.5, 1.2e-4},
                              {3, 1.75, 7.5, 0.4375, 1.8e-4},
                              {4, 1.5, 7.0, 0.375, 2.4e-4}};
  std::string merged = merged_curves_csv(a, b);
  EXPECT_EQ(merged,
            "step,total_a,clm_a,arl_a,total_b,clm_b,arl_b\n"
            "2,3.25,9.5,1.125,2,8,0.5\n"
            "3,3,9,1,1.75,7.5,0.4375\n");
  EXPECT_THROW(train_log_from_csv("bogus\n1,2,3,4,5\n"), SchemaViolation);
}

TEST(Svg, DeterministicOverlayWithHitAndExceptionVariants) {
  Dataset data = small_dataset();
  const SceneSpec& scene = data.scenes.front();
  SampleEval ok = make_eval("sample.ok", Task::kDetection, ParseOutcome::kOk,
                            scene.objects[0].box, scene.objects[0].box);
  std::string svg1 = overlay_svg(scene, ok, data.config.grid_size);
  std::string svg2 = overlay_svg(scene, ok, data.config.grid_size);
  EXPECT_EQ(svg1, svg2);
  EXPECT_NE(svg1.find("#2e8b57"), std::string::npos);  // gold box
  EXPECT_NE(svg1.find("#008080"), std::string::npos);  // hit prediction
  EXPECT_EQ(svg1.find("#ff8c00"), std::string::npos);

  SampleEval miss = make_eval("sample.miss", Task::kDetection,
                              ParseOutcome::kOk, BoxN{0.0, 0.0, 0.1, 0.1},
                              scene.objects[0].box);
  EXPECT_NE(overlay_svg(scene, miss, 0).find("#ff8c00"), std::string::npos);

  SampleEval ex = make_eval("sample.ex", Task::kDetection,
                            ParseOutcome::kUnterminatedBox, BoxN{},
                            scene.objects[0].box);
  std::string ex_svg = overlay_svg(scene, ex, data.config.grid_size);
  EXPECT_EQ(ex_svg.find("stroke-dasharray"), std::string::npos);
  EXPECT_NE(ex_svg.find("unterminated_box"), std::string::npos);
}

}  // namespace
}  // namespace boxlm
