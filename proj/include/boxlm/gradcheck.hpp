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

// Gradient verification harness, exposed as a first-class command so a build
// can certify its analytic gradients on the target machine.
//
// Two levels:
//  - loss level: the closed-form regression-loss gradient against central
//    finite differences on random box pairs kept away from the loss kinks
//    (L1 sign changes, min/max selector ties, vanishing intersection);
//  - model level: reverse-mode gradients of the full network, probing every
//    tensor family round-robin.
//
// An optional injected perturbation corrupts the analytic side so callers
// can verify that the harness actually detects wrong gradients.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "boxlm/codec.hpp"
#include "boxlm/common.hpp"
#include "boxlm/geometry.hpp"
#include "boxlm/model.hpp"
#include "boxlm/scenegen.hpp"

namespace boxlm {

struct GradcheckReport {
  int probes = 0;
  int failures = 0;
  double worst_rel_err = 0.0;
  bool ok() const { return probes > 0 && failures == 0; }
};

namespace detail {

inline double fd_central(const std::function<double(double)>& f, double x,
                         double eps = 1e-5) {
  return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

inline double fd_rel_err(double analytic, double numeric) {
  double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
  return std::abs(analytic - numeric) / denom;
}

// True when every non-differentiable feature of the regression loss is at
// least `margin` away, so a central difference of half that width stays on
// one smooth branch.
inline bool away_from_loss_kinks(const BoxN& p, const BoxN& g, double margin) {
  double diffs[] = {p.x1 - g.x1, p.y1 - g.y1, p.x2 - g.x2, p.y2 - g.y2,
                    std::min(p.x2, g.x2) - std::max(p.x1, g.x1),
                    std::min(p.y2, g.y2) - std::max(p.y1, g.y1)};
  for (double d : diffs)
    if (std::abs(d) < margin) return false;
  return true;
}

inline BoxN random_box(Rng& rng) {
  BoxN b;
  b.x1 = rng.uniform(0.0, 0.9);
  b.y1 = rng.uniform(0.0, 0.9);
  b.x2 = b.x1 + rng.uniform(0.05, 1.0 - b.x1);
  b.y2 = b.y1 + rng.uniform(0.05, 1.0 - b.y1);
  return b;
}

}  // namespace detail

// Checks grad_arl coordinate by coordinate; n_probes counts individual
// coordinate comparisons (4 per box pair).
inline GradcheckReport gradcheck_loss(int n_probes, std::uint64_t seed,
                                      double tol = 1e-4, double margin = 1e-3,
                                      double inject = 0.0) {
  GradcheckReport report;
  Rng rng(seed);
  RegWeights w;
  while (report.probes < n_probes) {
    BoxN p = detail::random_box(rng);
    BoxN g = detail::random_box(rng);
    if (!detail::away_from_loss_kinks(p, g, margin)) continue;
    auto analytic = grad_arl(p, g, w);
    analytic[0] += inject;
    double* coords[4] = {&p.x1, &p.y1, &p.x2, &p.y2};
    for (int i = 0; i < 4 && report.probes < n_probes; ++i) {
      double orig = *coords[i];
      double numeric = detail::fd_central(
          [&](double v) {
            *coords[i] = v;
            return arl_loss(p, g, w);
          },
          orig);
      *coords[i] = orig;
      double err =
          detail::fd_rel_err(analytic[static_cast<std::size_t>(i)], numeric);
      report.worst_rel_err = std::max(report.worst_rel_err, err);
      if (err > tol) ++report.failures;
      ++report.probes;
    }
  }
  return report;
}

// Full-network check on a small self-contained instance: a generated scene,
// one dialog, and a jittered model (the regression head's final layer inits
// at exactly zero, which would both block gradient flow and sit on loss
// kinks). Gradients that vanish by symmetry (key biases under softmax shift
// invariance) are accepted when both sides are below 1e-7.
inline GradcheckReport gradcheck_model(int probes_per_tensor,
                                       std::uint64_t seed, double tol = 1e-4,
                                       double inject = 0.0) {
  GenConfig gen;
  gen.grid_size = 4;
  gen.min_objects = 3;
  gen.max_objects = 4;
  gen.seed = seed;

  SceneSpec scene = [&] {
    for (std::uint64_t attempt = 0;; ++attempt) {
      try {
        return sample_scene(derive_seed(seed, attempt), false, gen, 0);
      } catch (const PlacementFailedError&) {
        if (attempt > 20) throw;
      }
    }
  }();
  FeatureGrid grid = rasterize(scene, gen.grid_size);
  std::vector<DialogSample> dialogs = instantiate_dialogs(scene, false);
  if (dialogs.empty()) throw ConfigError("gradcheck scene has no dialogs");
  const DialogSample& dialog = dialogs.front();
  const Vocab& v = Vocab::instance();
  std::vector<TokenId> prompt = prompt_tokens(
      v, PromptVariant::kSimple, dialog.task, dialog.template_index,
      dialog.phrase);
  std::vector<TokenId> response = response_tokens(
      v, dialog.task, dialog.template_index, dialog.phrase, dialog.gold);

  ModelConfig mc;
  mc.d_model = 8;
  mc.n_layers = 2;
  mc.n_heads = 2;
  mc.max_response_len = 24;
  mc.grid_size = gen.grid_size;
  mc.vocab_size = v.size();
  Model model(mc);

  const RegWeights reg;
  const double clm_scale = 0.35, arl_scale = 0.65;

  // Jitter until the probe point is clear of every kink.
  ForwardCache cache;
  for (std::uint64_t attempt = 0;; ++attempt) {
    if (attempt > 16)
      throw ConfigError("could not find a kink-free gradcheck point");
    model.init(derive_seed(seed, 0x6a69 + attempt));
    Rng jitter(derive_seed(seed, 0x6a6a + attempt));
    model.params().visit([&](const std::string&, Mat& t) {
      for (Eigen::Index i = 0; i < t.size(); ++i)
        t.data()[i] += jitter.normal(0.0, 0.1);
    });
    cache = model.forward(grid, prompt, response, dialog.gold, reg);
    bool clear = detail::away_from_loss_kinks(cache.pred, dialog.gold, 1e-3);
    for (int i = 0; i < cache.arl_u.size(); ++i)
      clear = clear && std::abs(cache.arl_u(i)) > 1e-3;
    if (clear) break;
  }

  ParamSet grads = ParamSet::zeros(mc);
  model.backward(cache, grid, prompt, response, dialog.gold, reg, clm_scale,
                 arl_scale, grads);

  std::vector<Mat*> tensors;
  std::vector<const Mat*> grad_tensors;
  model.params().visit(
      [&](const std::string&, Mat& t) { tensors.push_back(&t); });
  grads.visit(
      [&](const std::string&, const Mat& t) { grad_tensors.push_back(&t); });

  auto loss = [&]() {
    ForwardCache c = model.forward(grid, prompt, response, dialog.gold, reg);
    return clm_scale * c.clm + arl_scale * c.arl;
  };

  GradcheckReport report;
  Rng rng(derive_seed(seed, 0x70726f6265));
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    Mat* tensor = tensors[t];
    if (tensor->size() == 0) continue;
    int n = std::min<int>(probes_per_tensor,
                          static_cast<int>(tensor->size()));
    for (int k = 0; k < n; ++k) {
      auto flat = static_cast<Eigen::Index>(
          rng.uniform_int(static_cast<std::uint64_t>(tensor->size())));
      double* entry = tensor->data() + flat;
      double orig = *entry;
      double numeric = detail::fd_central(
          [&](double val) {
            *entry = val;
            return loss();
          },
          orig);
      *entry = orig;
      double analytic = grad_tensors[t]->coeff(flat) + inject;
      ++report.probes;
      if (std::abs(analytic) <= 1e-7 && std::abs(numeric) <= 1e-7) continue;
      double err = detail::fd_rel_err(analytic, numeric);
      report.worst_rel_err = std::max(report.worst_rel_err, err);
      if (err > tol) ++report.failures;
    }
  }
  return report;
}

}  // namespace boxlm
