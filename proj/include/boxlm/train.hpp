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

// Training loop: Adam with linear warmup over the combined objective
//
//   L_total = alpha * L_clm + beta * L_arl
//
// where L_clm is the batch mean of per-sample summed next-token losses over
// the supervised response span and L_arl is the batch mean of the box
// regression loss. The pure language-modeling regime is the same code path
// with an effective beta of zero: the regression head is still evaluated
// (its loss is logged for comparison) but contributes no gradient, so a
// "clm" run is bitwise identical to an "arl" run configured with beta = 0.

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "boxlm/codec.hpp"
#include "boxlm/common.hpp"
#include "boxlm/model.hpp"
#include "boxlm/scenegen.hpp"

namespace boxlm {

// Seed streams (see derive_seed): model init and per-step batch sampling.
inline constexpr std::uint64_t kInitStream = 0x696e6974;
inline constexpr std::uint64_t kStepStreamBase = 0x74726e00000000ull;

// ---------------------------------------------------------------------------
// Config.
// ---------------------------------------------------------------------------

enum class Regime { kArl, kClm };

inline std::string_view regime_name(Regime r) {
  return r == Regime::kArl ? "arl" : "clm";
}

inline Regime regime_from_name(std::string_view n) {
  if (n == "arl") return Regime::kArl;
  if (n == "clm") return Regime::kClm;
  throw SchemaViolation("unknown training regime: '" + std::string(n) + "'");
}

struct TrainConfig {
  ModelConfig model;
  Regime regime = Regime::kArl;
  double alpha = 0.2;  // language-modeling loss weight
  double beta = 0.8;   // regression loss weight
  RegWeights reg;      // gamma (l1) / delta (giou) inside the regression loss
  double lr = 3e-4;
  double warmup_frac = 0.05;
  int batch_size = 16;
  int n_steps = 1000;
  std::uint64_t seed = 1;
  int checkpoint_every = 0;  // 0: only the final checkpoint

  double effective_beta() const {
    return regime == Regime::kClm ? 0.0 : beta;
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void validate(const TrainConfig& c) {
  validate(c.model);
  if (!(c.alpha >= 0.0) || !(c.beta >= 0.0))
    throw ConfigError("loss weights must be non-negative");
  if (!(c.reg.gamma >= 0.0) || !(c.reg.delta >= 0.0))
    throw ConfigError("regression loss weights must be non-negative");
  if (!(c.lr > 0.0) || !std::isfinite(c.lr))
    throw ConfigError("learning rate must be positive");
  if (!(c.warmup_frac >= 0.0 && c.warmup_frac <= 1.0))
    throw ConfigError("warmup_frac must lie in [0, 1]");
  if (c.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (c.n_steps < 1) throw ConfigError("n_steps must be positive");
  if (c.checkpoint_every < 0)
    throw ConfigError("checkpoint_every must be non-negative");
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"model", to_json(c.model)},
          {"regime", regime_name(c.regime)},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"gamma", c.reg.gamma},
          {"delta", c.reg.delta},
          {"lr", c.lr},
          {"warmup_frac", c.warmup_frac},
          {"batch_size", c.batch_size},
          {"n_steps", c.n_steps},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.model = model_config_from_json(j.at("model"));
    c.regime = regime_from_name(j.at("regime").get<std::string>());
    c.alpha = j.at("alpha").get<double>();
    c.beta = j.at("beta").get<double>();
    c.reg.gamma = j.at("gamma").get<double>();
    c.reg.delta = j.at("delta").get<double>();
    c.lr = j.at("lr").get<double>();
    c.warmup_frac = j.at("warmup_frac").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.n_steps = j.at("n_steps").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.checkpoint_every = j.at("checkpoint_every").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation(std::string("train config: ") + e.what());
  }
  validate(c);
  return c;
}

// Linear warmup (1-indexed step), then constant.
inline double learning_rate(const TrainConfig& c, int step) {
  auto warmup = static_cast<int>(
      std::lround(c.warmup_frac * static_cast<double>(c.n_steps)));
  if (warmup < 1 || step > warmup) return c.lr;
  return c.lr * static_cast<double>(step) / static_cast<double>(warmup);
}

// ---------------------------------------------------------------------------
// Sample encoding: dialogs to model inputs, with per-scene grid caching.
// ---------------------------------------------------------------------------

struct EncodedDialog {
  const FeatureGrid* grid = nullptr;
  std::vector<TokenId> prompt;
  std::vector<TokenId> response;
  BoxN gold;
};

class SampleEncoder {
 public:
  SampleEncoder(const Dataset& data, PromptVariant pv, int grid_size)
      : data_(data), pv_(pv), grid_size_(grid_size) {}

  const FeatureGrid& grid(int scene_id) {
    auto it = grids_.find(scene_id);
    if (it == grids_.end())
      it = grids_.emplace(scene_id, rasterize(data_.scene(scene_id),
                                              grid_size_)).first;
    return it->second;
  }

  EncodedDialog encode(const DialogSample& s) {
    const Vocab& v = Vocab::instance();
    EncodedDialog e;
    e.grid = &grid(s.scene_id);
    e.prompt = prompt_tokens(v, pv_, s.task, s.template_index, s.phrase);
    e.response =
        response_tokens(v, s.task, s.template_index, s.phrase, s.gold);
    e.gold = s.gold;
    return e;
  }

 private:
  const Dataset& data_;
  PromptVariant pv_;
  int grid_size_;
  std::map<int, FeatureGrid> grids_;
};

// ---------------------------------------------------------------------------
// Adam (bias-corrected), fixed accumulation order.
// ---------------------------------------------------------------------------

class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit Adam(const ModelConfig& cfg) {
    state_.step = 0;
    state_.m = ParamSet::zeros(cfg);
    state_.v = ParamSet::zeros(cfg);
  }

  explicit Adam(Model::AdamState state) : state_(std::move(state)) {}

  const Model::AdamState& state() const { return state_; }

  void update(ParamSet& params, const ParamSet& grads, double lr) {
    ++state_.step;
    double bc1 =
        1.0 - std::pow(kBeta1, static_cast<double>(state_.step));
    double bc2 =
        1.0 - std::pow(kBeta2, static_cast<double>(state_.step));
    std::vector<Mat*> ps, ms, vs;
    std::vector<const Mat*> gs;
    params.visit([&](const std::string&, Mat& t) { ps.push_back(&t); });
    grads.visit([&](const std::string&, const Mat& t) { gs.push_back(&t); });
    state_.m.visit([&](const std::string&, Mat& t) { ms.push_back(&t); });
    state_.v.visit([&](const std::string&, Mat& t) { vs.push_back(&t); });
    for (std::size_t i = 0; i < ps.size(); ++i) {
      Mat& p = *ps[i];
      const Mat& g = *gs[i];
      Mat& m = *ms[i];
      Mat& v = *vs[i];
      m = kBeta1 * m + (1.0 - kBeta1) * g;
      v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
      p.array() -=
          lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kEps);
    }
  }

 private:
  Model::AdamState state_;
};

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

struct StepStats {
  int step = 0;
  double total = 0.0;
  double clm = 0.0;
  double arl = 0.0;  // measured in both regimes, applied only when beta > 0
  double lr = 0.0;
};

inline std::string train_log_csv(const std::vector<StepStats>& log) {
  std::string out = "step,total,clm,arl,lr\n";
  for (const StepStats& s : log) {
    out += std::to_string(s.step);
    out += ',';
    out += fmt_double(s.total);
    out += ',';
    out += fmt_double(s.clm);
    out += ',';
    out += fmt_double(s.arl);
    out += ',';
    out += fmt_double(s.lr);
    out += '\n';
  }
  return out;
}

struct TrainOutput {
  Model model;
  Model::AdamState adam;
  std::vector<StepStats> log;
};

// Called after every optimizer step (checkpoint writing, progress display).
using StepCallback = std::function<void(const StepStats&, const Model&,
                                        const Model::AdamState&)>;

// Runs `cfg.n_steps` of training on the dataset's train split. When `resume`
// is given, continues from its weights/optimizer state at step resume->step.
// Batches draw uniformly with replacement from the train split; the stream
// for step s depends only on (cfg.seed, s), so resumed runs sample exactly
// the batches the uninterrupted run would have.
inline TrainOutput train_model(const TrainConfig& cfg, const Dataset& data,
                               const StepCallback& on_step = nullptr,
                               const TrainOutput* resume = nullptr) {
  validate(cfg);
  if (cfg.model.grid_size != data.config.grid_size)
    throw ConfigError("model grid_size " +
                      std::to_string(cfg.model.grid_size) +
                      " does not match dataset grid_size " +
                      std::to_string(data.config.grid_size));

  std::vector<const DialogSample*> pool;
  for (const DialogSample& s : data.samples)
    if (!data.is_test(s)) pool.push_back(&s);
  if (pool.empty()) throw ConfigError("dataset has no training dialogs");

  SampleEncoder encoder(data, cfg.model.prompt_variant, cfg.model.grid_size);

  if (resume && !(resume->model.config() == cfg.model))
    throw CheckpointMismatchError(
        "resume checkpoint was built with a different model config");
  Model model = resume ? resume->model : Model(cfg.model);
  Adam adam = resume ? Adam(resume->adam) : Adam(cfg.model);
  std::vector<StepStats> log = resume ? resume->log : std::vector<StepStats>{};
  int start_step = static_cast<int>(resume ? resume->adam.step : 0);
  if (!resume) model.init(derive_seed(cfg.seed, kInitStream));

  const double alpha_scale =
      cfg.alpha / static_cast<double>(cfg.batch_size);
  const double beta_scale =
      cfg.effective_beta() / static_cast<double>(cfg.batch_size);

  ParamSet grads = ParamSet::zeros(cfg.model);
  for (int step = start_step + 1; step <= cfg.n_steps; ++step) {
    Rng rng(derive_seed(cfg.seed,
                        kStepStreamBase + static_cast<std::uint64_t>(step)));
    grads.set_zero();
    double clm_sum = 0.0, arl_sum = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const DialogSample& s = *pool[rng.uniform_int(pool.size())];
      EncodedDialog e = encoder.encode(s);
      ForwardCache cache =
          model.forward(*e.grid, e.prompt, e.response, e.gold, cfg.reg);
      clm_sum += cache.clm;
      arl_sum += cache.arl;
      model.backward(cache, *e.grid, e.prompt, e.response, e.gold, cfg.reg,
                     alpha_scale, beta_scale, grads);
    }
    grads.visit([&](const std::string& name, const Mat& t) {
      if (!t.allFinite())
        throw NonFiniteGradientError("step " + std::to_string(step) +
                                     ": non-finite gradient in " + name);
    });

    StepStats stats;
    stats.step = step;
    stats.clm = clm_sum / static_cast<double>(cfg.batch_size);
    stats.arl = arl_sum / static_cast<double>(cfg.batch_size);
    stats.total = cfg.alpha * stats.clm + cfg.effective_beta() * stats.arl;
    stats.lr = learning_rate(cfg, step);

    adam.update(model.params(), grads, stats.lr);
    model.params().visit([&](const std::string& name, const Mat& t) {
      if (!t.allFinite())
        throw NonFiniteUpdateError("step " + std::to_string(step) +
                                   ": non-finite parameter in " + name);
    });

    log.push_back(stats);
    if (on_step) on_step(stats, model, adam.state());
  }
  return TrainOutput{std::move(model), adam.state(), std::move(log)};
}

}  // namespace boxlm
