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

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "boxlm/common.hpp"

namespace boxlm {

// Axis-aligned box in normalized image coordinates, corner form
// (x1, y1) = top-left, (x2, y2) = bottom-right, with y growing downward.
//
// The struct itself is a plain aggregate: model *predictions* may transiently
// violate the ordering invariants (the regression head emits four independent
// sigmoids), and the losses below are defined for that case via clamping.
// Gold boxes must satisfy is_valid(); producers call require_valid().
struct BoxN {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  friend bool operator==(const BoxN&, const BoxN&) = default;
};

inline bool is_valid(const BoxN& b) {
  return 0.0 <= b.x1 && b.x1 <= b.x2 && b.x2 <= 1.0 &&  //
         0.0 <= b.y1 && b.y1 <= b.y2 && b.y2 <= 1.0;
}

inline void require_valid(const BoxN& b, const std::string& what) {
  if (!is_valid(b))
    throw CoordOutOfRangeError(what + ": invalid box [" + fmt_double(b.x1) +
                               ", " + fmt_double(b.y1) + ", " +
                               fmt_double(b.x2) + ", " + fmt_double(b.y2) +
                               "]");
}

inline double area(const BoxN& b) {
  return std::max(0.0, b.x2 - b.x1) * std::max(0.0, b.y2 - b.y1);
}

// Intersection-over-union. Conventions, shared with grad_arl below:
//   * negative widths/heights clamp to zero (area and intersection),
//   * union <= 0 (two degenerate boxes) yields IoU = 0.
inline double iou(const BoxN& a, const BoxN& b) {
  double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  double inter = iw * ih;
  double uni = area(a) + area(b) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Generalized IoU: IoU - (|C| - |A u B|) / |C| where C is the smallest
// enclosing box. Range (-1, 1]; equals IoU when one box contains the other.
// A degenerate enclosing box (|C| = 0) contributes no penalty.
inline double giou(const BoxN& a, const BoxN& b) {
  double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  double inter = iw * ih;
  double uni = area(a) + area(b) - inter;
  double cw = std::max(0.0, std::max(a.x2, b.x2) - std::min(a.x1, b.x1));
  double ch = std::max(0.0, std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
  double carea = cw * ch;
  double i = uni > 0.0 ? inter / uni : 0.0;
  double penalty = carea > 0.0 ? (carea - uni) / carea : 0.0;
  return i - penalty;
}

inline double giou_loss(const BoxN& pred, const BoxN& gold) {
  return 1.0 - giou(pred, gold);
}

// Sum (not mean) of absolute corner errors.
inline double l1_loss(const BoxN& pred, const BoxN& gold) {
  return std::abs(pred.x1 - gold.x1) + std::abs(pred.y1 - gold.y1) +
         std::abs(pred.x2 - gold.x2) + std::abs(pred.y2 - gold.y2);
}

// Weights of the auxiliary regression loss: gamma * L1 + delta * (1 - GIoU).
struct RegWeights {
  double gamma = 0.2;
  double delta = 0.8;

  friend bool operator==(const RegWeights&, const RegWeights&) = default;
};

inline double arl_loss(const BoxN& pred, const BoxN& gold,
                       const RegWeights& w = {}) {
  return w.gamma * l1_loss(pred, gold) + w.delta * giou_loss(pred, gold);
}

// ---------------------------------------------------------------------------
// Analytic gradient of arl_loss w.r.t. the four prediction coordinates.
//
// The loss is piecewise smooth; at the kinks we fix the following
// subgradient conventions (finite-difference checks must therefore sample
// with a margin away from ties):
//   * relu'(0) = 0: a width/height clamped at exactly zero gets no gradient,
//   * min(p, g) routes gradient to p iff p <= g; max(p, g) iff p >= g
//     (ties go to the prediction),
//   * d|x|/dx at x = 0 is 0.
// ---------------------------------------------------------------------------
inline std::array<double, 4> grad_arl(const BoxN& p, const BoxN& g,
                                      const RegWeights& w = {}) {
  // Forward quantities (mirrors giou() exactly).
  double wp_raw = p.x2 - p.x1, hp_raw = p.y2 - p.y1;
  double wp = std::max(0.0, wp_raw), hp = std::max(0.0, hp_raw);
  double ap = wp * hp;
  double ag = area(g);

  double ix1 = std::max(p.x1, g.x1), iy1 = std::max(p.y1, g.y1);
  double ix2 = std::min(p.x2, g.x2), iy2 = std::min(p.y2, g.y2);
  double iw_raw = ix2 - ix1, ih_raw = iy2 - iy1;
  double iw = std::max(0.0, iw_raw), ih = std::max(0.0, ih_raw);
  double inter = iw * ih;
  double uni = ap + ag - inter;

  double cx1 = std::min(p.x1, g.x1), cy1 = std::min(p.y1, g.y1);
  double cx2 = std::max(p.x2, g.x2), cy2 = std::max(p.y2, g.y2);
  double cw = cx2 - cx1, ch = cy2 - cy1;
  double carea = cw * ch;

  // Selector indicators for the min/max routing (ties -> prediction).
  double sel_ix1 = p.x1 >= g.x1 ? 1.0 : 0.0;  // ix1 == p.x1
  double sel_iy1 = p.y1 >= g.y1 ? 1.0 : 0.0;
  double sel_ix2 = p.x2 <= g.x2 ? 1.0 : 0.0;  // ix2 == p.x2
  double sel_iy2 = p.y2 <= g.y2 ? 1.0 : 0.0;
  double sel_cx1 = p.x1 <= g.x1 ? 1.0 : 0.0;  // cx1 == p.x1
  double sel_cy1 = p.y1 <= g.y1 ? 1.0 : 0.0;
  double sel_cx2 = p.x2 >= g.x2 ? 1.0 : 0.0;  // cx2 == p.x2
  double sel_cy2 = p.y2 >= g.y2 ? 1.0 : 0.0;

  double open_w = wp_raw > 0.0 ? 1.0 : 0.0;  // relu'(wp_raw)
  double open_h = hp_raw > 0.0 ? 1.0 : 0.0;
  double open_iw = iw_raw > 0.0 ? 1.0 : 0.0;
  double open_ih = ih_raw > 0.0 ? 1.0 : 0.0;

  // d(ap)/d{x1,y1,x2,y2} and d(inter)/d... and d(carea)/d...
  std::array<double, 4> dap = {-open_w * hp, -open_h * wp,  //
                               open_w * hp, open_h * wp};
  std::array<double, 4> dinter = {
      -open_iw * ih * sel_ix1, -open_ih * iw * sel_iy1,
      open_iw * ih * sel_ix2, open_ih * iw * sel_iy2};
  std::array<double, 4> dcarea = {-ch * sel_cx1, -cw * sel_cy1,  //
                                  ch * sel_cx2, cw * sel_cy2};

  std::array<double, 4> grad{};
  const double pc[4] = {p.x1, p.y1, p.x2, p.y2};
  const double gc[4] = {g.x1, g.y1, g.x2, g.y2};
  for (int i = 0; i < 4; ++i) {
    double duni = dap[i] - dinter[i];
    double diou = uni > 0.0 ? (dinter[i] * uni - inter * duni) / (uni * uni)
                            : 0.0;
    double dpen = carea > 0.0
                      ? -(duni * carea - uni * dcarea[i]) / (carea * carea)
                      : 0.0;
    double dgiou = diou - dpen;
    double dl1 = pc[i] > gc[i] ? 1.0 : (pc[i] < gc[i] ? -1.0 : 0.0);
    grad[i] = w.gamma * dl1 + w.delta * (-dgiou);
  }
  return grad;
}

}  // namespace boxlm
