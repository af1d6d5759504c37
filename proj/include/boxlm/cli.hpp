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

// Command-line front end.
//
// Subcommands: gen, train, eval, compare, gradcheck, vocab. Configuration is
// file-first: a JSON config (any subset of keys) establishes the base and
// individual flags override it. Every artifact a command writes is
// byte-deterministic — no timestamps, no absolute paths — so rerunning the
// same command reproduces identical files.
//
// Exit codes:
//   0 success                    5 checkpoint mismatch
//   1 other failure              6 split mismatch
//   2 invalid configuration      7 gradient check failed
//   3 io / schema violation      8 run directory busy or locked
//   4 non-finite number detected

#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "boxlm/codec.hpp"
#include "boxlm/common.hpp"
#include "boxlm/eval.hpp"
#include "boxlm/gradcheck.hpp"
#include "boxlm/model.hpp"
#include "boxlm/scenegen.hpp"
#include "boxlm/svg.hpp"
#include "boxlm/train.hpp"

namespace boxlm {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Partial-config overlays: every key optional, absent keys keep the base.
// ---------------------------------------------------------------------------

inline GenConfig gen_config_overlay(const nlohmann::json& j, GenConfig c) {
  try {
    c.n_scenes = j.value("n_scenes", c.n_scenes);
    c.complex_frac = j.value("complex_frac", c.complex_frac);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.seed = j.value("seed", c.seed);
    c.grid_size = j.value("grid_size", c.grid_size);
    c.allow_ambiguous = j.value("allow_ambiguous", c.allow_ambiguous);
    c.max_overlap_iou = j.value("max_overlap_iou", c.max_overlap_iou);
    c.min_objects = j.value("min_objects", c.min_objects);
    c.max_objects = j.value("max_objects", c.max_objects);
    c.snap_to_grid = j.value("snap_to_grid", c.snap_to_grid);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation(std::string("generation config: ") + e.what());
  }
  return c;
}

inline ModelConfig model_config_overlay(const nlohmann::json& j,
                                        ModelConfig c) {
  try {
    c.d_model = j.value("d_model", c.d_model);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.max_response_len = j.value("max_response_len", c.max_response_len);
    c.grid_size = j.value("grid_size", c.grid_size);
    if (j.contains("head_variant"))
      c.head_variant =
          head_variant_from_name(j.at("head_variant").get<std::string>());
    if (j.contains("prompt_variant"))
      c.prompt_variant =
          prompt_variant_from_name(j.at("prompt_variant").get<std::string>());
    c.vocab_size = j.value("vocab_size", c.vocab_size);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation(std::string("model config: ") + e.what());
  }
  return c;
}

inline TrainConfig train_config_overlay(const nlohmann::json& j,
                                        TrainConfig c) {
  try {
    if (j.contains("model"))
      c.model = model_config_overlay(j.at("model"), c.model);
    if (j.contains("regime"))
      c.regime = regime_from_name(j.at("regime").get<std::string>());
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.reg.gamma = j.value("gamma", c.reg.gamma);
    c.reg.delta = j.value("delta", c.reg.delta);
    c.lr = j.value("lr", c.lr);
    c.warmup_frac = j.value("warmup_frac", c.warmup_frac);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.n_steps = j.value("n_steps", c.n_steps);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation(std::string("train config: ") + e.what());
  }
  return c;
}

inline nlohmann::json load_json_file(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Run directories: config snapshot, checkpoints/, logs/, reports/,
// overlays/, and an exclusive lock for the duration of a command.
// ---------------------------------------------------------------------------

class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : lock_path_(dir / ".lock") {
    int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      if (errno == EEXIST)
        throw RunDirBusyError(
            "run directory is locked (remove " + lock_path_.string() +
            " if no other process is using it)");
      throw IoError("cannot create lock file: " + lock_path_.string());
    }
    ::close(fd);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(lock_path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path lock_path_;
};

struct RunDir {
  fs::path root;

  fs::path config() const { return root / "config.json"; }
  fs::path checkpoints() const { return root / "checkpoints"; }
  fs::path logs() const { return root / "logs"; }
  fs::path reports() const { return root / "reports"; }
  fs::path overlays() const { return root / "overlays"; }

  // `fresh` refuses a non-empty directory (training without --resume);
  // otherwise existing content is allowed (resume, eval into a train dir).
  static RunDir open(const fs::path& root, bool fresh) {
    if (fresh && fs::exists(root) && !fs::is_empty(root))
      throw RunDirBusyError("run directory is not empty: " + root.string() +
                            " (pass --resume to continue an existing run)");
    RunDir rd{root};
    fs::create_directories(rd.checkpoints());
    fs::create_directories(rd.logs());
    fs::create_directories(rd.reports());
    fs::create_directories(rd.overlays());
    return rd;
  }
};

// ---------------------------------------------------------------------------
// Subcommand implementations.
// ---------------------------------------------------------------------------

namespace cli {

struct GenArgs {
  std::string out;
  std::optional<std::string> config;
  bool force = false;
  std::optional<int> scenes, grid, min_objects, max_objects;
  std::optional<double> complex_frac, test_fraction, max_overlap;
  std::optional<std::uint64_t> seed;
  std::optional<bool> allow_ambiguous, snap;
};

inline void run_gen(const GenArgs& a) {
  GenConfig cfg;
  if (a.config) cfg = gen_config_overlay(load_json_file(*a.config), cfg);
  if (a.scenes) cfg.n_scenes = *a.scenes;
  if (a.grid) cfg.grid_size = *a.grid;
  if (a.min_objects) cfg.min_objects = *a.min_objects;
  if (a.max_objects) cfg.max_objects = *a.max_objects;
  if (a.complex_frac) cfg.complex_frac = *a.complex_frac;
  if (a.test_fraction) cfg.test_fraction = *a.test_fraction;
  if (a.max_overlap) cfg.max_overlap_iou = *a.max_overlap;
  if (a.seed) cfg.seed = *a.seed;
  if (a.allow_ambiguous) cfg.allow_ambiguous = *a.allow_ambiguous;
  if (a.snap) cfg.snap_to_grid = *a.snap;

  fs::path out(a.out);
  if (fs::exists(out) && !fs::is_empty(out) && !a.force)
    throw IoError("output directory is not empty: " + out.string() +
                  " (pass --force to overwrite)");
  Dataset ds = generate_dataset(cfg);
  save_dataset(ds, out);
  DatasetSummary s = ds.summary();
  std::printf(
      "wrote %s: %d scenes (%d held out), %d objects, %d dialogs "
      "(%d held out)\n",
      out.string().c_str(), s.scenes, s.test_scenes, s.objects, s.dialogs,
      s.test_dialogs);
}

struct TrainArgs {
  std::string dataset;
  std::string run;
  std::optional<std::string> config;
  bool resume = false;
  std::optional<std::string> regime, head_variant, prompt_variant;
  std::optional<int> steps, batch_size, checkpoint_every, d_model, n_layers,
      n_heads, max_response_len, grid;
  std::optional<double> lr, alpha, beta, gamma, delta, warmup_frac;
  std::optional<std::uint64_t> seed;
};

inline TrainConfig resolve_train_config(const TrainArgs& a,
                                        const Dataset& data) {
  TrainConfig cfg;
  cfg.model.grid_size = data.config.grid_size;
  if (a.config) cfg = train_config_overlay(load_json_file(*a.config), cfg);
  if (a.regime) cfg.regime = regime_from_name(*a.regime);
  if (a.steps) cfg.n_steps = *a.steps;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.checkpoint_every) cfg.checkpoint_every = *a.checkpoint_every;
  if (a.lr) cfg.lr = *a.lr;
  if (a.alpha) cfg.alpha = *a.alpha;
  if (a.beta) cfg.beta = *a.beta;
  if (a.gamma) cfg.reg.gamma = *a.gamma;
  if (a.delta) cfg.reg.delta = *a.delta;
  if (a.warmup_frac) cfg.warmup_frac = *a.warmup_frac;
  if (a.seed) cfg.seed = *a.seed;
  if (a.d_model) cfg.model.d_model = *a.d_model;
  if (a.n_layers) cfg.model.n_layers = *a.n_layers;
  if (a.n_heads) cfg.model.n_heads = *a.n_heads;
  if (a.max_response_len) cfg.model.max_response_len = *a.max_response_len;
  if (a.grid) cfg.model.grid_size = *a.grid;
  if (a.head_variant)
    cfg.model.head_variant = head_variant_from_name(*a.head_variant);
  if (a.prompt_variant)
    cfg.model.prompt_variant = prompt_variant_from_name(*a.prompt_variant);
  cfg.model.vocab_size = Vocab::instance().size();
  validate(cfg);
  return cfg;
}

inline fs::path checkpoint_name(const fs::path& dir, int step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06d.bxlm", step);
  return dir / buf;
}

inline void run_train(const TrainArgs& a) {
  Dataset data = load_dataset(a.dataset);
  TrainConfig cfg = resolve_train_config(a, data);

  RunDir rd = RunDir::open(a.run, /*fresh=*/!a.resume);
  RunLock lock(rd.root);

  nlohmann::json snapshot = {{"dataset", a.dataset},
                             {"train", to_json(cfg)}};
  std::string snapshot_text = snapshot.dump(2) + "\n";

  TrainOutput prior{Model(cfg.model), {}, {}};
  const TrainOutput* resume_from = nullptr;
  if (a.resume) {
    if (!fs::exists(rd.config()))
      throw ConfigError("nothing to resume: no config snapshot in " +
                        rd.root.string());
    if (read_file(rd.config()) != snapshot_text)
      throw ConfigError(
          "resume configuration differs from the run's stored config");
    fs::path ck = rd.checkpoints() / "final.bxlm";
    if (!fs::exists(ck)) {
      for (int step = cfg.n_steps; step >= 1; --step)
        if (fs::exists(checkpoint_name(rd.checkpoints(), step))) {
          ck = checkpoint_name(rd.checkpoints(), step);
          break;
        }
    }
    if (!fs::exists(ck))
      throw ConfigError("nothing to resume: no checkpoint in " +
                        rd.checkpoints().string());
    prior.model = Model::load_checkpoint(ck, &prior.adam);
    fs::path log_path = rd.logs() / "train_log.csv";
    if (fs::exists(log_path)) {
      for (StepStats& s : train_log_from_csv(read_file(log_path)))
        if (s.step <= static_cast<int>(prior.adam.step))
          prior.log.push_back(s);
    }
    if (static_cast<int>(prior.adam.step) >= cfg.n_steps) {
      std::printf("run already complete at step %d\n",
                  static_cast<int>(prior.adam.step));
      return;
    }
    resume_from = &prior;
  } else {
    write_file(rd.config(), snapshot_text);
  }

  // The log is rewritten at every periodic checkpoint so that a killed run
  // leaves a checkpoint/log pair from which --resume reconstructs the
  // uninterrupted byte stream.
  std::vector<StepStats> live_log = prior.log;
  int progress_every = std::max(1, cfg.n_steps / 10);
  auto on_step = [&](const StepStats& st, const Model& m,
                     const Model::AdamState& adam) {
    live_log.push_back(st);
    if (cfg.checkpoint_every > 0 && st.step % cfg.checkpoint_every == 0 &&
        st.step != cfg.n_steps) {
      m.save_checkpoint(checkpoint_name(rd.checkpoints(), st.step), &adam);
      write_file(rd.logs() / "train_log.csv", train_log_csv(live_log));
    }
    if (st.step % progress_every == 0 || st.step == cfg.n_steps)
      std::printf("step %d/%d  total=%.4f  clm=%.4f  arl=%.4f  lr=%.2e\n",
                  st.step, cfg.n_steps, st.total, st.clm, st.arl, st.lr);
  };

  TrainOutput out = train_model(cfg, data, on_step, resume_from);
  write_file(rd.logs() / "train_log.csv", train_log_csv(out.log));
  out.model.save_checkpoint(rd.checkpoints() / "final.bxlm", &out.adam);
  std::printf("final checkpoint: %s\n",
              (rd.checkpoints() / "final.bxlm").string().c_str());
}

struct EvalArgs {
  std::string dataset;
  std::string checkpoint;
  std::string run;
  std::string split = "test";
  std::string report_name = "report.jsonl";
  std::string regime;
  int overlays = 8;
};

inline void run_eval(const EvalArgs& a) {
  if (a.split != "test" && a.split != "train")
    throw ConfigError("--split must be 'test' or 'train'");
  if (a.overlays < 0) throw ConfigError("--overlays must be non-negative");
  Dataset data = load_dataset(a.dataset);
  std::string bytes = read_file(a.checkpoint);
  Model model = Model::load_checkpoint(a.checkpoint);

  RunDir rd = RunDir::open(a.run, /*fresh=*/false);
  RunLock lock(rd.root);

  EvalReport report = evaluate(model, data, a.split == "test");
  report.checkpoint = checkpoint_id(bytes);
  report.regime = a.regime;
  write_file(rd.reports() / a.report_name, report_jsonl(report));

  int n_overlays =
      std::min<int>(a.overlays, static_cast<int>(report.samples.size()));
  for (int i = 0; i < n_overlays; ++i) {
    const SampleEval& s = report.samples[static_cast<std::size_t>(i)];
    // Sample ids encode scene/object/task/template, e.g. sc0003.ob01....
    int scene_id = std::stoi(s.id.substr(2, 4));
    write_file(rd.overlays() / (s.id + ".svg"),
               overlay_svg(data.scene(scene_id), s, data.config.grid_size));
  }

  auto print_metrics = [](std::string_view tag, const TaskMetrics& m) {
    std::printf("%-10s n=%-4d acc=%.4f exception_rate=%.4f mean_iou=%.4f\n",
                std::string(tag).c_str(), m.n, m.acc(), m.exception_rate(),
                m.mean_iou());
  };
  print_metrics("detection", report.detection);
  print_metrics("affordance", report.affordance);
  print_metrics("overall", report.overall);
  std::printf("report: %s\n", (rd.reports() / a.report_name).string().c_str());
}

struct CompareArgs {
  std::string a, b;
  std::optional<std::string> log_a, log_b, out;
  std::string name_a = "a", name_b = "b";
};

inline void run_compare(const CompareArgs& args) {
  EvalReport a = report_from_jsonl(read_file(args.a));
  EvalReport b = report_from_jsonl(read_file(args.b));
  std::string text = compare_text(a, b, args.name_a, args.name_b);
  std::fputs(text.c_str(), stdout);
  if (args.out) {
    fs::create_directories(*args.out);
    write_file(fs::path(*args.out) / "compare.txt", text);
    write_file(fs::path(*args.out) / "compare.csv", compare_csv(a, b));
    if (args.log_a && args.log_b) {
      auto la = train_log_from_csv(read_file(*args.log_a));
      auto lb = train_log_from_csv(read_file(*args.log_b));
      write_file(fs::path(*args.out) / "curves.csv",
                 merged_curves_csv(la, lb));
    }
  }
}

struct GradcheckArgs {
  int probes = 240;
  int per_tensor = 2;
  std::uint64_t seed = 1;
  double tol = 1e-4;
};

inline bool run_gradcheck(const GradcheckArgs& a) {
  GradcheckReport loss = gradcheck_loss(a.probes, a.seed, a.tol);
  std::printf("loss-level:  %d probes, worst rel err %.3e  [%s]\n",
              loss.probes, loss.worst_rel_err, loss.ok() ? "PASS" : "FAIL");
  GradcheckReport model = gradcheck_model(a.per_tensor, a.seed, a.tol);
  std::printf("model-level: %d probes, worst rel err %.3e  [%s]\n",
              model.probes, model.worst_rel_err, model.ok() ? "PASS" : "FAIL");
  return loss.ok() && model.ok();
}

inline void run_vocab(bool dump) {
  const Vocab& v = Vocab::instance();
  std::printf("size: %d\n", v.size());
  std::printf("coordinate tokens: %d (ids %d..%d)\n", kCoordBins,
              v.coord_token(0), v.coord_token(kCoordBins - 1));
  std::printf("fingerprint: %s\n", hex64(v.fingerprint()).c_str());
  if (dump)
    for (TokenId t = 0; t < v.size(); ++t)
      std::printf("%d\t%s\n", t, v.surface(t).c_str());
}

}  // namespace cli

// ---------------------------------------------------------------------------
// Entry point with exception-to-exit-code mapping.
// ---------------------------------------------------------------------------

inline int cli_main(int argc, char** argv) {
  CLI::App app{"synthetic object-state box benchmark toolkit", "boxlm"};
  app.require_subcommand(1);

  cli::GenArgs gen;
  CLI::App* cgen = app.add_subcommand(
      "gen", "generate a dataset of scenes and grounded dialogs");
  cgen->add_option("--out", gen.out, "output dataset directory")->required();
  cgen->add_option("--config", gen.config, "JSON generation config");
  cgen->add_flag("--force", gen.force, "overwrite a non-empty directory");
  cgen->add_option("--scenes", gen.scenes, "number of scenes");
  cgen->add_option("--grid", gen.grid, "feature grid size");
  cgen->add_option("--seed", gen.seed, "master seed");
  cgen->add_option("--complex-frac", gen.complex_frac,
                   "fraction of scenes with a same-category pair");
  cgen->add_option("--test-fraction", gen.test_fraction,
                   "fraction of scenes held out");
  cgen->add_option("--max-overlap", gen.max_overlap,
                   "max pairwise IoU between placed objects");
  cgen->add_option("--min-objects", gen.min_objects, "objects per scene, min");
  cgen->add_option("--max-objects", gen.max_objects, "objects per scene, max");
  cgen->add_option("--allow-ambiguous", gen.allow_ambiguous,
                   "keep phrases matching several objects");
  cgen->add_option("--snap", gen.snap,
                   "snap object boxes to the 1/grid lattice");
  cgen->callback([&] { cli::run_gen(gen); });

  cli::TrainArgs train;
  CLI::App* ctrain = app.add_subcommand("train", "train a model");
  ctrain->add_option("--dataset", train.dataset, "dataset directory")
      ->required();
  ctrain->add_option("--run", train.run, "run directory")->required();
  ctrain->add_option("--config", train.config, "JSON training config");
  ctrain->add_flag("--resume", train.resume, "continue an existing run");
  ctrain->add_option("--regime", train.regime, "arl | clm");
  ctrain->add_option("--steps", train.steps, "optimizer steps");
  ctrain->add_option("--batch-size", train.batch_size, "dialogs per step");
  ctrain->add_option("--lr", train.lr, "base learning rate");
  ctrain->add_option("--alpha", train.alpha, "language-model loss weight");
  ctrain->add_option("--beta", train.beta, "regression loss weight");
  ctrain->add_option("--gamma", train.gamma, "l1 weight inside regression");
  ctrain->add_option("--delta", train.delta, "giou weight inside regression");
  ctrain->add_option("--warmup-frac", train.warmup_frac,
                     "fraction of steps spent in linear warmup");
  ctrain->add_option("--seed", train.seed, "training seed");
  ctrain->add_option("--checkpoint-every", train.checkpoint_every,
                     "periodic checkpoint interval (0 = only final)");
  ctrain->add_option("--d-model", train.d_model, "model width");
  ctrain->add_option("--n-layers", train.n_layers, "transformer layers");
  ctrain->add_option("--n-heads", train.n_heads, "attention heads");
  ctrain->add_option("--max-response-len", train.max_response_len,
                     "decoding cap");
  ctrain->add_option("--grid", train.grid, "feature grid size");
  ctrain->add_option("--head-variant", train.head_variant,
                     "two_layer_relu | one_layer | two_layer_gelu | "
                     "two_layer_sigmoid");
  ctrain->add_option("--prompt-variant", train.prompt_variant,
                     "simple | concrete");
  ctrain->callback([&] { cli::run_train(train); });

  cli::EvalArgs eval;
  CLI::App* ceval =
      app.add_subcommand("eval", "decode and score a checkpoint");
  ceval->add_option("--dataset", eval.dataset, "dataset directory")
      ->required();
  ceval->add_option("--checkpoint", eval.checkpoint, "checkpoint file")
      ->required();
  ceval->add_option("--run", eval.run, "run directory for outputs")
      ->required();
  ceval->add_option("--split", eval.split, "test | train");
  ceval->add_option("--report", eval.report_name, "report file name");
  ceval->add_option("--regime", eval.regime,
                    "training regime label recorded in the report");
  ceval->add_option("--overlays", eval.overlays,
                    "number of overlay images to write");
  ceval->callback([&] { cli::run_eval(eval); });

  cli::CompareArgs compare;
  CLI::App* ccompare =
      app.add_subcommand("compare", "compare two evaluation reports");
  ccompare->add_option("--a", compare.a, "first report (jsonl)")->required();
  ccompare->add_option("--b", compare.b, "second report (jsonl)")->required();
  ccompare->add_option("--log-a", compare.log_a, "first training log (csv)");
  ccompare->add_option("--log-b", compare.log_b, "second training log (csv)");
  ccompare->add_option("--out", compare.out, "directory for comparison files");
  ccompare->add_option("--name-a", compare.name_a, "label for the first run");
  ccompare->add_option("--name-b", compare.name_b, "label for the second run");
  ccompare->callback([&] { cli::run_compare(compare); });

  cli::GradcheckArgs gradcheck;
  bool gradcheck_ok = true;
  CLI::App* cgrad = app.add_subcommand(
      "gradcheck", "verify analytic gradients against finite differences");
  cgrad->add_option("--probes", gradcheck.probes,
                    "loss-level probe count (coordinates)");
  cgrad->add_option("--per-tensor", gradcheck.per_tensor,
                    "model-level probes per tensor");
  cgrad->add_option("--seed", gradcheck.seed, "probe seed");
  cgrad->add_option("--tol", gradcheck.tol, "relative error tolerance");
  cgrad->callback([&] { gradcheck_ok = cli::run_gradcheck(gradcheck); });

  bool vocab_dump = false;
  CLI::App* cvocab =
      app.add_subcommand("vocab", "print vocabulary facts");
  cvocab->add_flag("--dump", vocab_dump, "list every token");
  cvocab->callback([&] { cli::run_vocab(vocab_dump); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const SchemaViolation& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const UnknownTokenError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const CoordOutOfRangeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const InconsistentStateError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const NonFiniteActivationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const NonFiniteGradientError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const NonFiniteUpdateError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const CheckpointMismatchError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 5;
  } catch (const SplitMismatchError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 6;
  } catch (const RunDirBusyError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 8;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return gradcheck_ok ? 0 : 7;
}

}  // namespace boxlm
