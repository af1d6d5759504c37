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

// Synthetic tabletop benchmark: scene sampling, the symbolic feature grid
// that stands in for vision, the state-conditional grasp rules, and dialog
// instantiation with scene-level train/test splitting.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "boxlm/codec.hpp"
#include "boxlm/common.hpp"
#include "boxlm/geometry.hpp"
#include "boxlm/lexicon.hpp"

namespace boxlm {

// ---------------------------------------------------------------------------
// Enum <-> string names for persistence.
// ---------------------------------------------------------------------------

inline std::string_view contents_name(Contents c) {
  switch (c) {
    case Contents::kNone: return "none";
    case Contents::kEmpty: return "empty";
    case Contents::kSemiSolid: return "semi_solid";
    case Contents::kSolid: return "solid";
    case Contents::kLiquid: return "liquid";
  }
  return "?";
}

inline std::string_view residue_name(Residue r) {
  switch (r) {
    case Residue::kNone: return "none";
    case Residue::kWhole: return "whole";
    case Residue::kHandle: return "handle";
    case Residue::kBlade: return "blade";
  }
  return "?";
}

inline std::string_view cap_name(CapState c) {
  switch (c) {
    case CapState::kNa: return "na";
    case CapState::kOpen: return "open";
    case CapState::kClosed: return "closed";
  }
  return "?";
}

inline std::string_view fold_name(FoldState f) {
  switch (f) {
    case FoldState::kNa: return "na";
    case FoldState::kFolded: return "folded";
    case FoldState::kUnfolded: return "unfolded";
  }
  return "?";
}

inline std::string_view task_name(Task t) {
  return t == Task::kDetection ? "detection" : "affordance";
}

template <typename Enum, std::size_t N>
Enum enum_from_name(std::string_view name,
                    const std::array<std::pair<std::string_view, Enum>, N>& table,
                    std::string_view what) {
  for (const auto& [n, v] : table)
    if (n == name) return v;
  throw SchemaViolation("unknown " + std::string(what) + ": '" +
                        std::string(name) + "'");
}

inline Category category_from_name(std::string_view n) {
  for (Category c : kAllCategories)
    if (category_name(c) == n) return c;
  throw SchemaViolation("unknown category: '" + std::string(n) + "'");
}

inline Contents contents_from_name(std::string_view n) {
  return enum_from_name<Contents, 5>(
      n,
      {{{"none", Contents::kNone},
        {"empty", Contents::kEmpty},
        {"semi_solid", Contents::kSemiSolid},
        {"solid", Contents::kSolid},
        {"liquid", Contents::kLiquid}}},
      "contents");
}

inline Residue residue_from_name(std::string_view n) {
  return enum_from_name<Residue, 4>(n,
                                    {{{"none", Residue::kNone},
                                      {"whole", Residue::kWhole},
                                      {"handle", Residue::kHandle},
                                      {"blade", Residue::kBlade}}},
                                    "residue");
}

inline CapState cap_from_name(std::string_view n) {
  return enum_from_name<CapState, 3>(n,
                                     {{{"na", CapState::kNa},
                                       {"open", CapState::kOpen},
                                       {"closed", CapState::kClosed}}},
                                     "cap state");
}

inline FoldState fold_from_name(std::string_view n) {
  return enum_from_name<FoldState, 3>(n,
                                      {{{"na", FoldState::kNa},
                                        {"folded", FoldState::kFolded},
                                        {"unfolded", FoldState::kUnfolded}}},
                                      "fold state");
}

inline Task task_from_name(std::string_view n) {
  return enum_from_name<Task, 2>(
      n, {{{"detection", Task::kDetection}, {"affordance", Task::kAffordance}}},
      "task");
}

// ---------------------------------------------------------------------------
// Scene data model.
// ---------------------------------------------------------------------------

struct ObjectSpec {
  int id = 0;  // index within the scene; doubles as the z-order (higher on top)
  Category category = Category::kPlate;
  ObjectState state;
  BoxN box;

  friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

struct SceneSpec {
  int id = 0;
  std::uint64_t seed = 0;
  bool complex_scene = false;  // holds a same-category pair in distinct states
  std::vector<ObjectSpec> objects;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

// ---------------------------------------------------------------------------
// Grasp rules: which part of an object a robot should take hold of, as a
// function of category and physical state. Every rule returns a sub-box of
// the object box.
//   containers: empty -> whole object; solid contents -> the centered
//     half-size region (pick the food, not the dish); semi-solid or liquid
//     contents -> the left quarter rim band (grip the rim, contents can't
//     be lifted directly).
//   cutlery: clean or uniformly dirty -> whole object; knife with a dirty
//     blade -> the handle half; knife with a dirty handle -> the blade half.
//     The handle is the low-coordinate half of the major axis, the blade the
//     high-coordinate half.
//   napkin: whole object.
// ---------------------------------------------------------------------------

inline BoxN grasp_box(Category cat, const ObjectState& s, const BoxN& b) {
  validate_state(cat, s);
  require_valid(b, "grasp_box");
  switch (category_kind(cat)) {
    case CategoryKind::kContainer: {
      if (s.contents == Contents::kEmpty) return b;
      if (s.contents == Contents::kSolid) {
        double cx = 0.5 * (b.x1 + b.x2), cy = 0.5 * (b.y1 + b.y2);
        double qw = 0.25 * (b.x2 - b.x1), qh = 0.25 * (b.y2 - b.y1);
        return {cx - qw, cy - qh, cx + qw, cy + qh};
      }
      // Semi-solid or liquid: left rim band, a quarter of the width.
      return {b.x1, b.y1, b.x1 + 0.25 * (b.x2 - b.x1), b.y2};
    }
    case CategoryKind::kCutlery: {
      if (s.residue != Residue::kHandle && s.residue != Residue::kBlade)
        return b;
      bool x_major = (b.x2 - b.x1) >= (b.y2 - b.y1);
      bool take_low = s.residue == Residue::kBlade;  // avoid the dirty blade
      if (x_major) {
        double mid = 0.5 * (b.x1 + b.x2);
        return take_low ? BoxN{b.x1, b.y1, mid, b.y2}
                        : BoxN{mid, b.y1, b.x2, b.y2};
      }
      double mid = 0.5 * (b.y1 + b.y2);
      return take_low ? BoxN{b.x1, b.y1, b.x2, mid}
                      : BoxN{b.x1, mid, b.x2, b.y2};
    }
    case CategoryKind::kNapkin:
      return b;
  }
  throw ConfigError("unknown category kind");
}

// ---------------------------------------------------------------------------
// Feature grid: the symbolic substitute for an image. G x G cells, each a
// 17-dim vector describing the topmost object covering the cell center:
//   [0..9]  category one-hot
//   [10]    has contents (semi-solid, solid or liquid)
//   [11]    contents code A (set for semi-solid and liquid)
//   [12]    contents code B (set for solid and liquid)
//   [13]    reads as dirty/used
//   [14]    aux flag: bottle cap open / napkin unfolded
//   [15]    residue locus (0 none or whole, 0.5 handle, 1 blade)
//   [16]    occupancy (0 for empty cells)
// Food identity is deliberately absent: the grid carries physical state, not
// menu entries.
// ---------------------------------------------------------------------------

inline constexpr int kFeatureDim = 17;

inline std::array<double, kFeatureDim> feature_vector(Category cat,
                                                      const ObjectState& s) {
  validate_state(cat, s);
  std::array<double, kFeatureDim> f{};
  f[static_cast<std::size_t>(cat)] = 1.0;
  bool has = s.contents == Contents::kSemiSolid ||
             s.contents == Contents::kSolid || s.contents == Contents::kLiquid;
  f[10] = has ? 1.0 : 0.0;
  f[11] = (s.contents == Contents::kSemiSolid ||
           s.contents == Contents::kLiquid)
              ? 1.0
              : 0.0;
  f[12] = (s.contents == Contents::kSolid || s.contents == Contents::kLiquid)
              ? 1.0
              : 0.0;
  f[13] = is_dirty(cat, s) ? 1.0 : 0.0;
  f[14] = (s.cap == CapState::kOpen || s.fold == FoldState::kUnfolded) ? 1.0
                                                                       : 0.0;
  f[15] = s.residue == Residue::kHandle ? 0.5
          : s.residue == Residue::kBlade ? 1.0
                                         : 0.0;
  f[16] = 1.0;
  return f;
}

struct FeatureGrid {
  int size = 0;                 // G
  std::vector<double> cells;    // G*G*kFeatureDim, cell (ix, iy) at
                                // (iy*G + ix)*kFeatureDim (row-major, y outer)

  const double* cell(int ix, int iy) const {
    return cells.data() +
           static_cast<std::size_t>(iy * size + ix) * kFeatureDim;
  }
};

// Cell centers fall at ((i + 0.5)/G); a cell belongs to the topmost (highest
// object id) object strictly containing its center. Boxes aligned to the
// 1/G lattice therefore rasterize exactly.
inline FeatureGrid rasterize(const SceneSpec& scene, int grid_size) {
  if (grid_size < 2 || grid_size > 64)
    throw ConfigError("grid size out of range: " + std::to_string(grid_size));
  FeatureGrid g;
  g.size = grid_size;
  g.cells.assign(
      static_cast<std::size_t>(grid_size) * grid_size * kFeatureDim, 0.0);
  for (const ObjectSpec& obj : scene.objects) {
    require_valid(obj.box, "rasterize");
    auto f = feature_vector(obj.category, obj.state);
    for (int iy = 0; iy < grid_size; ++iy) {
      double cy = (iy + 0.5) / grid_size;
      if (!(obj.box.y1 < cy && cy < obj.box.y2)) continue;
      for (int ix = 0; ix < grid_size; ++ix) {
        double cx = (ix + 0.5) / grid_size;
        if (!(obj.box.x1 < cx && cx < obj.box.x2)) continue;
        // Objects iterate in ascending id == ascending z: later wins.
        std::copy(f.begin(), f.end(),
                  g.cells.begin() +
                      static_cast<std::ptrdiff_t>(iy * grid_size + ix) *
                          kFeatureDim);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Generation config.
// ---------------------------------------------------------------------------

struct GenConfig {
  int n_scenes = 40;
  double complex_frac = 0.335;   // share of scenes with a same-category pair
  double test_fraction = 0.112;  // scene-level split
  std::uint64_t seed = 0;
  int grid_size = 16;
  bool allow_ambiguous = false;  // keep phrases matching several objects?
  double max_overlap_iou = 0.3;  // pairwise placement bound (<= 0.3)
  int min_objects = 3;
  int max_objects = 6;
  bool snap_to_grid = true;      // align object boxes to the 1/G lattice

  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

inline void validate(const GenConfig& c) {
  if (c.n_scenes < 1) throw ConfigError("n_scenes must be positive");
  if (c.complex_frac < 0.0 || c.complex_frac > 1.0)
    throw ConfigError("complex_frac must be in [0, 1]");
  if (c.test_fraction < 0.0 || c.test_fraction > 1.0)
    throw ConfigError("test_fraction must be in [0, 1]");
  if (c.grid_size < 2 || c.grid_size > 64)
    throw ConfigError("grid_size must be in [2, 64]");
  if (c.max_overlap_iou < 0.0 || c.max_overlap_iou > 0.3)
    throw ConfigError("max_overlap_iou must be in [0, 0.3]");
  if (c.min_objects < 1 || c.max_objects < c.min_objects)
    throw ConfigError("object count range is empty");
  if (c.max_objects > kNumCategories)
    throw ConfigError("max_objects exceeds the distinct category count");
}

inline nlohmann::json to_json(const GenConfig& c) {
  return {{"n_scenes", c.n_scenes},
          {"complex_frac", c.complex_frac},
          {"test_fraction", c.test_fraction},
          {"seed", c.seed},
          {"grid_size", c.grid_size},
          {"allow_ambiguous", c.allow_ambiguous},
          {"max_overlap_iou", c.max_overlap_iou},
          {"min_objects", c.min_objects},
          {"max_objects", c.max_objects},
          {"snap_to_grid", c.snap_to_grid}};
}

inline GenConfig gen_config_from_json(const nlohmann::json& j) {
  GenConfig c;
  try {
    c.n_scenes = j.at("n_scenes").get<int>();
    c.complex_frac = j.at("complex_frac").get<double>();
    c.test_fraction = j.at("test_fraction").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.grid_size = j.at("grid_size").get<int>();
    c.allow_ambiguous = j.at("allow_ambiguous").get<bool>();
    c.max_overlap_iou = j.at("max_overlap_iou").get<double>();
    c.min_objects = j.at("min_objects").get<int>();
    c.max_objects = j.at("max_objects").get<int>();
    c.snap_to_grid = j.at("snap_to_grid").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation(std::string("generator config: ") + e.what());
  }
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// Scene sampling.
// ---------------------------------------------------------------------------

namespace detail {

// Plausible normalized footprints per category (before lattice snapping).
struct SizePrior {
  double wlo, whi, hlo, hhi;
  bool orientable;  // elongated cutlery may lie horizontally or vertically
};

inline SizePrior size_prior(Category c) {
  switch (c) {
    case Category::kPlate: return {0.20, 0.35, 0.20, 0.35, false};
    case Category::kBowl: return {0.15, 0.30, 0.15, 0.30, false};
    case Category::kCup: return {0.10, 0.18, 0.10, 0.18, false};
    case Category::kMug: return {0.10, 0.18, 0.10, 0.18, false};
    case Category::kGlass: return {0.08, 0.15, 0.12, 0.20, false};
    case Category::kBottle: return {0.08, 0.14, 0.25, 0.40, false};
    case Category::kSpoon:
    case Category::kFork:
    case Category::kKnife: return {0.05, 0.09, 0.25, 0.40, true};
    case Category::kNapkin: return {0.15, 0.30, 0.15, 0.30, false};
  }
  throw ConfigError("unknown category");
}

inline ObjectState sample_state(Rng& rng, Category cat) {
  auto states = all_states(cat);
  return states[static_cast<std::size_t>(rng.uniform_int(states.size()))];
}

// A same-category pair is usable only if the two states are told apart by
// the feature grid *and* share no referring phrase (else every mention would
// be ambiguous and the pair would contribute nothing).
inline bool distinguishable(Category cat, const ObjectState& a,
                            const ObjectState& b) {
  if (feature_vector(cat, a) == feature_vector(cat, b)) return false;
  auto ea = expressions_for(cat, a);
  auto eb = expressions_for(cat, b);
  for (const auto& pa : ea)
    for (const auto& pb : eb)
      if (pa == pb) return false;
  return true;
}

}  // namespace detail

// Samples one scene. Deterministic in (seed, complex_scene, config).
// Throws PlacementFailedError when rejection sampling cannot satisfy the
// overlap/visibility constraints within its attempt budget.
inline SceneSpec sample_scene(std::uint64_t seed, bool complex_scene,
                              const GenConfig& cfg, int scene_id = 0) {
  validate(cfg);
  Rng rng(seed);
  SceneSpec scene;
  scene.id = scene_id;
  scene.seed = seed;
  scene.complex_scene = complex_scene;

  int lo = cfg.min_objects, hi = cfg.max_objects;
  if (complex_scene) lo = std::max(lo, 2);
  int n_objects =
      lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(
               hi - lo + 1)));

  // Category multiset: distinct categories, except a forced duplicate pair
  // in complex scenes.
  std::vector<Category> cats(kAllCategories.begin(), kAllCategories.end());
  rng.shuffle(cats);
  std::vector<Category> chosen;
  if (complex_scene) {
    Category dup = cats[0];
    chosen.push_back(dup);
    chosen.push_back(dup);
    for (int i = 1; static_cast<int>(chosen.size()) < n_objects; ++i)
      chosen.push_back(cats[static_cast<std::size_t>(i)]);
  } else {
    for (int i = 0; i < n_objects; ++i)
      chosen.push_back(cats[static_cast<std::size_t>(i)]);
  }

  // States. The duplicate pair must stay distinguishable; every pair of
  // same-category objects must differ in features (here only the forced pair
  // can collide).
  std::vector<ObjectState> states;
  for (std::size_t i = 0; i < chosen.size(); ++i)
    states.push_back(detail::sample_state(rng, chosen[i]));
  if (complex_scene) {
    int attempts = 0;
    while (!detail::distinguishable(chosen[0], states[0], states[1])) {
      if (++attempts > 200)
        throw PlacementFailedError(
            "no distinguishable state pair for category " +
            std::string(category_name(chosen[0])));
      states[1] = detail::sample_state(rng, chosen[0]);
    }
  }

  // Placement: rejection-sample boxes under the pairwise overlap bound.
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    detail::SizePrior prior = detail::size_prior(chosen[i]);
    int attempts = 0;
    for (;; ++attempts) {
      if (attempts >= 1000)
        throw PlacementFailedError("scene " + std::to_string(scene_id) +
                                   ": no valid placement for object " +
                                   std::to_string(i));
      double w = rng.uniform(prior.wlo, prior.whi);
      double h = rng.uniform(prior.hlo, prior.hhi);
      if (prior.orientable && rng.uniform() < 0.5) std::swap(w, h);
      BoxN box;
      if (cfg.snap_to_grid) {
        int G = cfg.grid_size;
        auto wc = std::max<std::int64_t>(1, std::llround(w * G));
        auto hc = std::max<std::int64_t>(1, std::llround(h * G));
        wc = std::min<std::int64_t>(wc, G);
        hc = std::min<std::int64_t>(hc, G);
        auto x0 = static_cast<std::int64_t>(
            rng.uniform_int(static_cast<std::uint64_t>(G - wc + 1)));
        auto y0 = static_cast<std::int64_t>(
            rng.uniform_int(static_cast<std::uint64_t>(G - hc + 1)));
        box = {static_cast<double>(x0) / G, static_cast<double>(y0) / G,
               static_cast<double>(x0 + wc) / G,
               static_cast<double>(y0 + hc) / G};
      } else {
        double x0 = rng.uniform(0.0, 1.0 - w);
        double y0 = rng.uniform(0.0, 1.0 - h);
        box = {x0, y0, x0 + w, y0 + h};
      }
      bool ok = true;
      for (const ObjectSpec& placed : scene.objects)
        if (iou(placed.box, box) > cfg.max_overlap_iou + 1e-12) ok = false;
      if (!ok) continue;
      scene.objects.push_back(ObjectSpec{static_cast<int>(i), chosen[i],
                                         states[i], box});
      break;
    }
  }

  // Visibility: with overlap allowed, a low-z object could lose every grid
  // cell to occluders, making it unlocatable. Require one owned cell each.
  if (cfg.max_overlap_iou > 0.0) {
    FeatureGrid grid = rasterize(scene, cfg.grid_size);
    std::vector<bool> owns(scene.objects.size(), false);
    for (int iy = 0; iy < grid.size; ++iy)
      for (int ix = 0; ix < grid.size; ++ix) {
        double cx = (ix + 0.5) / grid.size, cy = (iy + 0.5) / grid.size;
        for (std::size_t k = scene.objects.size(); k-- > 0;) {
          const BoxN& b = scene.objects[k].box;
          if (b.x1 < cx && cx < b.x2 && b.y1 < cy && cy < b.y2) {
            owns[k] = true;
            break;  // topmost only
          }
        }
      }
    for (std::size_t k = 0; k < owns.size(); ++k)
      if (!owns[k])
        throw PlacementFailedError("scene " + std::to_string(scene_id) +
                                   ": object " + std::to_string(k) +
                                   " fully occluded on the grid");
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Dialog instantiation.
// ---------------------------------------------------------------------------

struct DialogSample {
  std::string id;
  int scene_id = 0;
  int object_id = 0;
  Task task = Task::kDetection;
  int template_index = 0;
  std::string phrase;
  BoxN gold;

  friend bool operator==(const DialogSample&, const DialogSample&) = default;
};

inline std::string sample_id(int scene, int object, Task task, int tmpl,
                             std::string_view phrase) {
  std::string slug(phrase);
  for (char& ch : slug)
    if (ch == ' ') ch = '-';
  char buf[64];
  std::snprintf(buf, sizeof(buf), "sc%04d.ob%02d.%s.t%d.", scene, object,
                std::string(task_name(task)).c_str(), tmpl);
  return buf + slug;
}

// Expands one scene into dialog samples: each object contributes its two
// phrases x both tasks x three templates, except phrases that refer to more
// than one object in the scene (those are skipped unless allow_ambiguous).
// Detection supervises the object box; affordance supervises the grasp box.
inline std::vector<DialogSample> instantiate_dialogs(const SceneSpec& scene,
                                                     bool allow_ambiguous) {
  std::map<std::string, int> phrase_count;
  std::vector<std::vector<std::string>> per_object;
  for (const ObjectSpec& obj : scene.objects) {
    per_object.push_back(expressions_for(obj.category, obj.state));
    for (const std::string& p : per_object.back()) ++phrase_count[p];
  }
  std::vector<DialogSample> out;
  for (const ObjectSpec& obj : scene.objects) {
    for (const std::string& phrase :
         per_object[static_cast<std::size_t>(obj.id)]) {
      if (!allow_ambiguous && phrase_count[phrase] > 1) continue;
      for (Task task : {Task::kDetection, Task::kAffordance}) {
        BoxN gold = task == Task::kDetection
                        ? obj.box
                        : grasp_box(obj.category, obj.state, obj.box);
        for (int t = 0; t < kTemplatesPerTask; ++t)
          out.push_back(DialogSample{
              sample_id(scene.id, obj.id, task, t, phrase), scene.id, obj.id,
              task, t, phrase, gold});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset: scenes + samples + scene-level split.
// ---------------------------------------------------------------------------

struct DatasetSummary {
  int scenes = 0;
  int objects = 0;
  int expressions = 0;  // kept (object, phrase, task) instances
  int dialogs = 0;
  int test_scenes = 0;
  int test_dialogs = 0;
};

struct Dataset {
  GenConfig config;
  std::vector<SceneSpec> scenes;
  std::vector<DialogSample> samples;
  std::set<int> test_scene_ids;

  bool is_test(const DialogSample& s) const {
    return test_scene_ids.count(s.scene_id) > 0;
  }

  const SceneSpec& scene(int id) const {
    for (const SceneSpec& s : scenes)
      if (s.id == id) return s;
    throw SchemaViolation("sample references unknown scene " +
                          std::to_string(id));
  }

  DatasetSummary summary() const {
    DatasetSummary s;
    s.scenes = static_cast<int>(scenes.size());
    for (const SceneSpec& sc : scenes)
      s.objects += static_cast<int>(sc.objects.size());
    s.dialogs = static_cast<int>(samples.size());
    s.expressions = s.dialogs / kTemplatesPerTask;
    s.test_scenes = static_cast<int>(test_scene_ids.size());
    for (const DialogSample& d : samples)
      if (is_test(d)) ++s.test_dialogs;
    return s;
  }
};

// Stream tags for derive_seed: scenes use their index, the split shuffle its
// own reserved stream.
inline constexpr std::uint64_t kSceneStreamBase = 0x7363656e65ull;  // "scene"
inline constexpr std::uint64_t kSplitStream = 0x73706c6974ull;      // "split"

inline Dataset generate_dataset(const GenConfig& cfg) {
  validate(cfg);
  Dataset ds;
  ds.config = cfg;
  int n_complex =
      static_cast<int>(std::lround(cfg.complex_frac * cfg.n_scenes));
  for (int i = 0; i < cfg.n_scenes; ++i) {
    bool complex_scene = i < n_complex;
    std::uint64_t seed = derive_seed(cfg.seed, kSceneStreamBase +
                                     static_cast<std::uint64_t>(i));
    // A pathological seed can fail placement; retry with fresh substreams a
    // few times before giving up (each retry is still deterministic).
    SceneSpec scene;
    int attempt = 0;
    for (;; ++attempt) {
      try {
        scene = sample_scene(derive_seed(seed, attempt), complex_scene, cfg, i);
        break;
      } catch (const PlacementFailedError&) {
        if (attempt >= 20) throw;
      }
    }
    ds.scenes.push_back(std::move(scene));
  }
  // Scene-level split: shuffle ids, take the rounded test share.
  std::vector<int> ids(static_cast<std::size_t>(cfg.n_scenes));
  for (int i = 0; i < cfg.n_scenes; ++i) ids[static_cast<std::size_t>(i)] = i;
  Rng split_rng(derive_seed(cfg.seed, kSplitStream));
  split_rng.shuffle(ids);
  int n_test = static_cast<int>(std::lround(cfg.test_fraction * cfg.n_scenes));
  for (int i = 0; i < n_test; ++i)
    ds.test_scene_ids.insert(ids[static_cast<std::size_t>(i)]);

  for (const SceneSpec& scene : ds.scenes) {
    auto dialogs = instantiate_dialogs(scene, cfg.allow_ambiguous);
    ds.samples.insert(ds.samples.end(), dialogs.begin(), dialogs.end());
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Persistence: gen_config.json, scenes.jsonl, samples.jsonl, summary.csv.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const ObjectSpec& o) {
  return {{"id", o.id},
          {"category", category_name(o.category)},
          {"contents", contents_name(o.state.contents)},
          {"food", o.state.food},
          {"residue", residue_name(o.state.residue)},
          {"cap", cap_name(o.state.cap)},
          {"fold", fold_name(o.state.fold)},
          {"box", {o.box.x1, o.box.y1, o.box.x2, o.box.y2}}};
}

inline ObjectSpec object_from_json(const nlohmann::json& j) {
  ObjectSpec o;
  try {
    o.id = j.at("id").get<int>();
    o.category = category_from_name(j.at("category").get<std::string>());
    o.state.contents = contents_from_name(j.at("contents").get<std::string>());
    o.state.food = j.at("food").get<std::string>();
    o.state.residue = residue_from_name(j.at("residue").get<std::string>());
    o.state.cap = cap_from_name(j.at("cap").get<std::string>());
    o.state.fold = fold_from_name(j.at("fold").get<std::string>());
    auto b = j.at("box");
    if (!b.is_array() || b.size() != 4)
      throw SchemaViolation("object box must be a 4-array");
    o.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
             b[3].get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation(std::string("object spec: ") + e.what());
  }
  validate_state(o.category, o.state);
  require_valid(o.box, "object spec");
  return o;
}

inline nlohmann::json to_json(const SceneSpec& s) {
  nlohmann::json objs = nlohmann::json::array();
  for (const ObjectSpec& o : s.objects) objs.push_back(to_json(o));
  return {{"id", s.id},
          {"seed", s.seed},
          {"complex", s.complex_scene},
          {"objects", objs}};
}

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec s;
  try {
    s.id = j.at("id").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.complex_scene = j.at("complex").get<bool>();
    for (const auto& oj : j.at("objects")) s.objects.push_back(object_from_json(oj));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation(std::string("scene spec: ") + e.what());
  }
  // Object ids double as z-order and vector index; enforce the contract.
  for (std::size_t i = 0; i < s.objects.size(); ++i)
    if (s.objects[i].id != static_cast<int>(i))
      throw SchemaViolation("scene " + std::to_string(s.id) +
                            ": object ids must be 0..n-1 in order");
  return s;
}

inline nlohmann::json to_json(const DialogSample& d, bool test) {
  return {{"id", d.id},
          {"scene", d.scene_id},
          {"object", d.object_id},
          {"split", test ? "test" : "train"},
          {"task", task_name(d.task)},
          {"template", d.template_index},
          {"phrase", d.phrase},
          {"gold", {d.gold.x1, d.gold.y1, d.gold.x2, d.gold.y2}}};
}

inline DialogSample sample_from_json(const nlohmann::json& j, bool& test) {
  DialogSample d;
  try {
    d.id = j.at("id").get<std::string>();
    d.scene_id = j.at("scene").get<int>();
    d.object_id = j.at("object").get<int>();
    std::string split = j.at("split").get<std::string>();
    if (split != "train" && split != "test")
      throw SchemaViolation("split must be train or test, got " + split);
    test = split == "test";
    d.task = task_from_name(j.at("task").get<std::string>());
    d.template_index = j.at("template").get<int>();
    if (d.template_index < 0 || d.template_index >= kTemplatesPerTask)
      throw SchemaViolation("template index out of range");
    d.phrase = j.at("phrase").get<std::string>();
    auto b = j.at("gold");
    if (!b.is_array() || b.size() != 4)
      throw SchemaViolation("gold box must be a 4-array");
    d.gold = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
              b[3].get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation(std::string("dialog sample: ") + e.what());
  }
  require_valid(d.gold, "dialog sample gold");
  return d;
}

inline void save_dataset(const Dataset& ds,
                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "gen_config.json", to_json(ds.config).dump(2) + "\n");

  std::string scenes;
  for (const SceneSpec& s : ds.scenes) scenes += to_json(s).dump() + "\n";
  write_file(dir / "scenes.jsonl", scenes);

  std::string samples;
  for (const DialogSample& d : ds.samples)
    samples += to_json(d, ds.is_test(d)).dump() + "\n";
  write_file(dir / "samples.jsonl", samples);

  DatasetSummary sum = ds.summary();
  std::string csv = "key,value\n";
  csv += "scenes," + std::to_string(sum.scenes) + "\n";
  csv += "objects," + std::to_string(sum.objects) + "\n";
  csv += "expressions," + std::to_string(sum.expressions) + "\n";
  csv += "dialogs," + std::to_string(sum.dialogs) + "\n";
  csv += "test_scenes," + std::to_string(sum.test_scenes) + "\n";
  csv += "test_dialogs," + std::to_string(sum.test_dialogs) + "\n";
  write_file(dir / "summary.csv", csv);
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(read_file(dir / "gen_config.json"));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation(std::string("gen_config.json: ") + e.what());
  }
  ds.config = gen_config_from_json(cfg);

  auto parse_lines = [](const std::string& text, auto&& fn) {
    std::size_t start = 0, line_no = 1;
    while (start < text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      if (end > start) {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(text.substr(start, end - start));
        } catch (const nlohmann::json::exception& e) {
          throw SchemaViolation("line " + std::to_string(line_no) + ": " +
                                e.what());
        }
        fn(j);
      }
      start = end + 1;
      ++line_no;
    }
  };

  parse_lines(read_file(dir / "scenes.jsonl"), [&](const nlohmann::json& j) {
    ds.scenes.push_back(scene_from_json(j));
  });
  std::map<int, bool> scene_split;  // split must be scene-consistent
  parse_lines(read_file(dir / "samples.jsonl"), [&](const nlohmann::json& j) {
    bool test = false;
    DialogSample d = sample_from_json(j, test);
    ds.scene(d.scene_id);  // validates the reference
    auto [it, inserted] = scene_split.emplace(d.scene_id, test);
    if (!inserted && it->second != test)
      throw SchemaViolation("scene " + std::to_string(d.scene_id) +
                            " has samples in both splits");
    if (test) ds.test_scene_ids.insert(d.scene_id);
    ds.samples.push_back(std::move(d));
  });
  return ds;
}

}  // namespace boxlm
