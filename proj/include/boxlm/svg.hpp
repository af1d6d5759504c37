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

// Deterministic SVG overlays: the scene's objects in gray, the gold box in
// green, and the predicted box in teal (hit) or orange (miss). Byte-stable
// output so rerun artifacts can be compared directly.

#pragma once

#include <optional>
#include <string>

#include "boxlm/common.hpp"
#include "boxlm/eval.hpp"
#include "boxlm/scenegen.hpp"

namespace boxlm {

namespace detail {

inline std::string svg_px(double unit, int size) {
  return fmt_double(unit * size);
}

inline void svg_rect(std::string& out, const BoxN& b, int size,
                     std::string_view stroke, std::string_view fill,
                     std::string_view extra = "") {
  out += "  <rect x=\"" + svg_px(b.x1, size) + "\" y=\"" + svg_px(b.y1, size) +
         "\" width=\"" + svg_px(b.x2 - b.x1, size) + "\" height=\"" +
         svg_px(b.y2 - b.y1, size) + "\" stroke=\"" + std::string(stroke) +
         "\" fill=\"" + std::string(fill) + "\" stroke-width=\"2\"" +
         std::string(extra) + "/>\n";
}

}  // namespace detail

// Renders one evaluated dialog over its scene. `grid_size` draws the feature
// lattice the model actually saw; pass 0 to omit it.
inline std::string overlay_svg(const SceneSpec& scene, const SampleEval& eval,
                               int grid_size, int size = 512) {
  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(size) + "\" height=\"" + std::to_string(size) +
         "\" viewBox=\"0 0 " + std::to_string(size) + " " +
         std::to_string(size) + "\">\n";
  out += "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int i = 1; grid_size > 1 && i < grid_size; ++i) {
    std::string at = detail::svg_px(static_cast<double>(i) / grid_size, size);
    out += "  <line x1=\"" + at + "\" y1=\"0\" x2=\"" + at + "\" y2=\"" +
           std::to_string(size) + "\" stroke=\"#eeeeee\"/>\n";
    out += "  <line x1=\"0\" y1=\"" + at + "\" x2=\"" + std::to_string(size) +
           "\" y2=\"" + at + "\" stroke=\"#eeeeee\"/>\n";
  }
  for (const ObjectSpec& obj : scene.objects) {
    detail::svg_rect(out, obj.box, size, "#888888", "#cccccc",
                     " fill-opacity=\"0.35\"");
    out += "  <text x=\"" + detail::svg_px(obj.box.x1, size) + "\" y=\"" +
           detail::svg_px(obj.box.y1, size) +
           "\" dy=\"-3\" font-size=\"11\" fill=\"#555555\">" +
           std::string(category_name(obj.category)) + "</text>\n";
  }
  detail::svg_rect(out, eval.gold, size, "#2e8b57", "none");
  if (eval.outcome == ParseOutcome::kOk) {
    detail::svg_rect(out, eval.pred, size, eval.hit ? "#008080" : "#ff8c00",
                     "none", " stroke-dasharray=\"6 3\"");
  }
  std::string caption = eval.id + "  iou=" + fmt_double(eval.iou) + "  " +
                        std::string(parse_outcome_name(eval.outcome));
  out += "  <text x=\"4\" y=\"" + std::to_string(size - 6) +
         "\" font-size=\"12\" fill=\"#333333\">" + caption + "</text>\n";
  out += "</svg>\n";
  return out;
}

}  // namespace boxlm
