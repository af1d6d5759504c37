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

// Evaluation: greedy-decode every held-out dialog, parse the box fragment
// out of the generated sequence, and score it against the gold box.
//
//  - hit       : parse succeeded and IoU >= 0.5
//  - exception : any parse failure; scored as a miss with IoU 0 and tallied
//                by failure kind
//
// Reports serialize as JSON lines: one header object with the aggregate
// metrics, then one object per sample. The header carries a checkpoint id
// (hash of the checkpoint bytes) and a split fingerprint (hash of the
// generation config and held-out scene ids) so that comparisons between
// incompatible runs are refused rather than silently wrong.

#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "boxlm/codec.hpp"
#include "boxlm/common.hpp"
#include "boxlm/geometry.hpp"
#include "boxlm/model.hpp"
#include "boxlm/scenegen.hpp"
#include "boxlm/train.hpp"

namespace boxlm {

inline constexpr double kHitIou = 0.5;

// Order-sensitive hash of everything that defines the evaluation split.
inline std::uint64_t split_fingerprint(const Dataset& data) {
  std::string blob = to_json(data.config).dump();
  blob += '|';
  blob += std::to_string(data.samples.size());
  for (int id : data.test_scene_ids) {  // std::set: ascending
    blob += '|';
    blob += std::to_string(id);
  }
  return fnv1a_64(blob.data(), blob.size());
}

inline std::string checkpoint_id(const std::string& checkpoint_bytes) {
  return hex64(fnv1a_64(checkpoint_bytes.data(), checkpoint_bytes.size()));
}

struct SampleEval {
  std::string id;
  Task task = Task::kDetection;
  ParseOutcome outcome = ParseOutcome::kNoBox;
  BoxN pred;  // meaningful only when outcome is kOk
  BoxN gold;
  double iou = 0.0;
  bool hit = false;
  std::string text;  // decoded response, specials stripped
};

struct TaskMetrics {
  int n = 0;
  int hits = 0;
  int exceptions = 0;
  double iou_sum = 0.0;

  double acc() const { return n ? static_cast<double>(hits) / n : 0.0; }
  double exception_rate() const {
    return n ? static_cast<double>(exceptions) / n : 0.0;
  }
  double mean_iou() const { return n ? iou_sum / n : 0.0; }

  void add(const SampleEval& s) {
    ++n;
    hits += s.hit ? 1 : 0;
    exceptions += s.outcome != ParseOutcome::kOk ? 1 : 0;
    iou_sum += s.iou;
  }
};

struct EvalReport {
  std::string checkpoint;           // hex id of the checkpoint evaluated
  std::string split;                // hex split fingerprint
  std::string regime;               // carried from the training config
  TaskMetrics detection, affordance, overall;
  std::map<std::string, int> exception_counts;  // by parse-outcome name
  std::vector<SampleEval> samples;
};

// Decodes and scores one dialog.
inline SampleEval evaluate_sample(const Model& model, SampleEncoder& encoder,
                                  const DialogSample& s) {
  const Vocab& v = Vocab::instance();
  EncodedDialog e = encoder.encode(s);
  std::vector<TokenId> decoded = model.decode(*e.grid, e.prompt);

  SampleEval out;
  out.id = s.id;
  out.task = s.task;
  out.gold = s.gold;
  ParsedBox parsed = parse_box(v, decoded);
  out.outcome = parsed.outcome;
  if (parsed.outcome == ParseOutcome::kOk) {
    out.pred = parsed.box;
    out.iou = iou(parsed.box, s.gold);
    out.hit = out.iou >= kHitIou;
  }
  std::string text;
  for (TokenId t : decoded) {
    if (t == Vocab::kBos || t == Vocab::kEos || t == Vocab::kPad) continue;
    if (!text.empty()) text += ' ';
    text += v.surface(t);
  }
  out.text = std::move(text);
  return out;
}

// Scores the dataset's held-out dialogs (or the train split when
// `test_split` is false, for diagnostics).
inline EvalReport evaluate(const Model& model, const Dataset& data,
                           bool test_split = true) {
  if (model.config().grid_size != data.config.grid_size)
    throw ConfigError("model grid_size does not match dataset grid_size");
  SampleEncoder encoder(data, model.config().prompt_variant,
                        model.config().grid_size);
  EvalReport report;
  report.split = hex64(split_fingerprint(data));
  for (const DialogSample& s : data.samples) {
    if (data.is_test(s) != test_split) continue;
    SampleEval se = evaluate_sample(model, encoder, s);
    (se.task == Task::kDetection ? report.detection : report.affordance)
        .add(se);
    report.overall.add(se);
    if (se.outcome != ParseOutcome::kOk)
      ++report.exception_counts[std::string(parse_outcome_name(se.outcome))];
    report.samples.push_back(std::move(se));
  }
  if (report.overall.n == 0)
    throw ConfigError("no dialogs in the requested split");
  return report;
}

// ---------------------------------------------------------------------------
// JSONL serialization.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const TaskMetrics& m) {
  return {{"n", m.n},
          {"hits", m.hits},
          {"exceptions", m.exceptions},
          {"acc", m.acc()},
          {"exception_rate", m.exception_rate()},
          {"mean_iou", m.mean_iou()}};
}

inline TaskMetrics task_metrics_from_json(const nlohmann::json& j) {
  TaskMetrics m;
  m.n = j.at("n").get<int>();
  m.hits = j.at("hits").get<int>();
  m.exceptions = j.at("exceptions").get<int>();
  m.iou_sum = j.at("mean_iou").get<double>() * m.n;
  return m;
}

inline nlohmann::json box_json(const BoxN& b) {
  return nlohmann::json::array({b.x1, b.y1, b.x2, b.y2});
}

inline std::string report_jsonl(const EvalReport& r) {
  nlohmann::json header = {{"type", "header"},
                           {"checkpoint", r.checkpoint},
                           {"split", r.split},
                           {"regime", r.regime},
                           {"detection", to_json(r.detection)},
                           {"affordance", to_json(r.affordance)},
                           {"overall", to_json(r.overall)},
                           {"exceptions", r.exception_counts}};
  std::string out = header.dump() + "\n";
  for (const SampleEval& s : r.samples) {
    nlohmann::json line = {{"type", "sample"},
                           {"id", s.id},
                           {"task", task_name(s.task)},
                           {"outcome", parse_outcome_name(s.outcome)},
                           {"iou", s.iou},
                           {"hit", s.hit},
                           {"gold", box_json(s.gold)},
                           {"text", s.text}};
    if (s.outcome == ParseOutcome::kOk) line["pred"] = box_json(s.pred);
    out += line.dump() + "\n";
  }
  return out;
}

inline ParseOutcome parse_outcome_from_name(std::string_view n) {
  for (ParseOutcome o :
       {ParseOutcome::kOk, ParseOutcome::kNoBox, ParseOutcome::kUnterminatedBox,
        ParseOutcome::kMultipleBoxes, ParseOutcome::kWrongArity,
        ParseOutcome::kNonCoordToken, ParseOutcome::kOrderViolation})
    if (parse_outcome_name(o) == n) return o;
  throw SchemaViolation("unknown parse outcome: '" + std::string(n) + "'");
}

inline BoxN box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4)
    throw SchemaViolation("box must be a 4-element array");
  return BoxN{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
              j[3].get<double>()};
}

inline EvalReport report_from_jsonl(const std::string& text) {
  EvalReport r;
  bool have_header = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      std::string type = j.at("type").get<std::string>();
      if (type == "header") {
        if (have_header) throw SchemaViolation("duplicate report header");
        have_header = true;
        r.checkpoint = j.at("checkpoint").get<std::string>();
        r.split = j.at("split").get<std::string>();
        r.regime = j.value("regime", "");
        r.detection = task_metrics_from_json(j.at("detection"));
        r.affordance = task_metrics_from_json(j.at("affordance"));
        r.overall = task_metrics_from_json(j.at("overall"));
        for (auto& [k, v] : j.at("exceptions").items())
          r.exception_counts[k] = v.get<int>();
      } else if (type == "sample") {
        SampleEval s;
        s.id = j.at("id").get<std::string>();
        s.task = task_from_name(j.at("task").get<std::string>());
        s.outcome =
            parse_outcome_from_name(j.at("outcome").get<std::string>());
        s.iou = j.at("iou").get<double>();
        s.hit = j.at("hit").get<bool>();
        s.gold = box_from_json(j.at("gold"));
        if (j.contains("pred")) s.pred = box_from_json(j.at("pred"));
        s.text = j.at("text").get<std::string>();
        r.samples.push_back(std::move(s));
      } else {
        throw SchemaViolation("unknown report line type: " + type);
      }
    } catch (const nlohmann::json::exception& e) {
      throw SchemaViolation(std::string("report line: ") + e.what());
    }
  }
  if (!have_header) throw SchemaViolation("report has no header line");
  return r;
}

// ---------------------------------------------------------------------------
// Comparison of two runs over the same split.
// ---------------------------------------------------------------------------

struct CompareResult {
  // All deltas are (b - a); positive favors b for accuracies and mean IoU,
  // negative favors b for exception rates.
  double detection_acc = 0.0;
  double affordance_acc = 0.0;
  double overall_acc = 0.0;
  double overall_exception_rate = 0.0;
  double overall_mean_iou = 0.0;
};

inline CompareResult compare_reports(const EvalReport& a,
                                     const EvalReport& b) {
  if (a.split != b.split)
    throw SplitMismatchError("reports cover different splits: " + a.split +
                             " vs " + b.split);
  if (a.overall.n != b.overall.n)
    throw SplitMismatchError("reports cover different sample counts");
  CompareResult r;
  r.detection_acc = b.detection.acc() - a.detection.acc();
  r.affordance_acc = b.affordance.acc() - a.affordance.acc();
  r.overall_acc = b.overall.acc() - a.overall.acc();
  r.overall_exception_rate =
      b.overall.exception_rate() - a.overall.exception_rate();
  r.overall_mean_iou = b.overall.mean_iou() - a.overall.mean_iou();
  return r;
}

inline std::string compare_csv(const EvalReport& a, const EvalReport& b) {
  CompareResult d = compare_reports(a, b);
  auto row = [](std::string_view metric, double va, double vb, double delta) {
    return std::string(metric) + "," + fmt_double(va) + "," + fmt_double(vb) +
           "," + fmt_double(delta) + "\n";
  };
  std::string out = "metric,a,b,delta\n";
  out += row("detection_acc", a.detection.acc(), b.detection.acc(),
             d.detection_acc);
  out += row("affordance_acc", a.affordance.acc(), b.affordance.acc(),
             d.affordance_acc);
  out += row("overall_acc", a.overall.acc(), b.overall.acc(), d.overall_acc);
  out += row("overall_exception_rate", a.overall.exception_rate(),
             b.overall.exception_rate(), d.overall_exception_rate);
  out += row("overall_mean_iou", a.overall.mean_iou(), b.overall.mean_iou(),
             d.overall_mean_iou);
  return out;
}

inline std::string compare_text(const EvalReport& a, const EvalReport& b,
                                std::string_view name_a,
                                std::string_view name_b) {
  CompareResult d = compare_reports(a, b);
  char buf[160];
  std::string out;
  auto line = [&](std::string_view metric, double va, double vb, double delta,
                  std::string_view better) {
    std::snprintf(buf, sizeof buf, "%-24s %10.4f %10.4f %+10.4f  (%s)\n",
                  std::string(metric).c_str(), va, vb, delta,
                  std::string(better).c_str());
    out += buf;
  };
  std::snprintf(buf, sizeof buf, "%-24s %10s %10s %10s\n", "metric",
                std::string(name_a).c_str(), std::string(name_b).c_str(),
                "delta");
  out += buf;
  line("detection_acc", a.detection.acc(), b.detection.acc(),
       d.detection_acc, "positive favors b");
  line("affordance_acc", a.affordance.acc(), b.affordance.acc(),
       d.affordance_acc, "positive favors b");
  line("overall_acc", a.overall.acc(), b.overall.acc(), d.overall_acc,
       "positive favors b");
  line("overall_exception_rate", a.overall.exception_rate(),
       b.overall.exception_rate(), d.overall_exception_rate,
       "negative favors b");
  line("overall_mean_iou", a.overall.mean_iou(), b.overall.mean_iou(),
       d.overall_mean_iou, "positive favors b");
  return out;
}

// Inner join of two training logs on the step column.
inline std::string merged_curves_csv(const std::vector<StepStats>& a,
                                     const std::vector<StepStats>& b) {
  std::map<int, const StepStats*> bs;
  for (const StepStats& s : b) bs[s.step] = &s;
  std::string out = "step,total_a,clm_a,arl_a,total_b,clm_b,arl_b\n";
  for (const StepStats& s : a) {
    auto it = bs.find(s.step);
    if (it == bs.end()) continue;
    out += std::to_string(s.step) + "," + fmt_double(s.total) + "," +
           fmt_double(s.clm) + "," + fmt_double(s.arl) + "," +
           fmt_double(it->second->total) + "," + fmt_double(it->second->clm) +
           "," + fmt_double(it->second->arl) + "\n";
  }
  return out;
}

// Parses a train_log.csv produced by train_log_csv().
inline std::vector<StepStats> train_log_from_csv(const std::string& text) {
  std::vector<StepStats> out;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line != "step,total,clm,arl,lr")
        throw SchemaViolation("unexpected training-log header: " + line);
      continue;
    }
    StepStats s;
    char* cursor = line.data();
    char* next = nullptr;
    s.step = static_cast<int>(std::strtol(cursor, &next, 10));
    double* fields[4] = {&s.total, &s.clm, &s.arl, &s.lr};
    for (double* f : fields) {
      if (*next != ',') throw SchemaViolation("malformed log row: " + line);
      cursor = next + 1;
      *f = std::strtod(cursor, &next);
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace boxlm
