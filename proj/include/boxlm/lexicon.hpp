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

// The closed linguistic world of the benchmark: tableware categories, their
// physical states, the state-dependent referring expressions (each physical
// condition has a physical-wording phrase and a semantic-interpretation
// synonym), the six dialog templates, and the system preambles. Everything
// the generator can ever emit is enumerable from this header, which is what
// keeps the vocabulary closed and stable.

#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "boxlm/common.hpp"

namespace boxlm {

// ---------------------------------------------------------------------------
// Categories.
// ---------------------------------------------------------------------------

enum class Category {
  kPlate,
  kBowl,
  kCup,
  kMug,
  kGlass,
  kBottle,
  kSpoon,
  kFork,
  kKnife,
  kNapkin,
};

inline constexpr int kNumCategories = 10;

inline constexpr std::array<Category, kNumCategories> kAllCategories = {
    Category::kPlate, Category::kBowl,  Category::kCup,   Category::kMug,
    Category::kGlass, Category::kBottle, Category::kSpoon, Category::kFork,
    Category::kKnife, Category::kNapkin};

inline std::string_view category_name(Category c) {
  switch (c) {
    case Category::kPlate: return "plate";
    case Category::kBowl: return "bowl";
    case Category::kCup: return "cup";
    case Category::kMug: return "mug";
    case Category::kGlass: return "glass";
    case Category::kBottle: return "bottle";
    case Category::kSpoon: return "spoon";
    case Category::kFork: return "fork";
    case Category::kKnife: return "knife";
    case Category::kNapkin: return "napkin";
  }
  throw ConfigError("unknown category");
}

enum class CategoryKind { kContainer, kCutlery, kNapkin };

inline CategoryKind category_kind(Category c) {
  switch (c) {
    case Category::kPlate:
    case Category::kBowl:
    case Category::kCup:
    case Category::kMug:
    case Category::kGlass:
    case Category::kBottle:
      return CategoryKind::kContainer;
    case Category::kSpoon:
    case Category::kFork:
    case Category::kKnife:
      return CategoryKind::kCutlery;
    case Category::kNapkin:
      return CategoryKind::kNapkin;
  }
  throw ConfigError("unknown category");
}

// ---------------------------------------------------------------------------
// Physical state.
// ---------------------------------------------------------------------------

// kNone marks non-containers; containers are kEmpty or hold contents of one
// of three physical kinds (which drive the grasp rules).
enum class Contents { kNone, kEmpty, kSemiSolid, kSolid, kLiquid };

enum class Residue { kNone, kWhole, kHandle, kBlade };

enum class CapState { kNa, kOpen, kClosed };

enum class FoldState { kNa, kFolded, kUnfolded };

struct ObjectState {
  Contents contents = Contents::kNone;
  std::string food;  // non-empty iff contents is semi-solid/solid/liquid
  Residue residue = Residue::kNone;
  CapState cap = CapState::kNa;
  FoldState fold = FoldState::kNa;

  friend bool operator==(const ObjectState&, const ObjectState&) = default;
};

struct FoodItem {
  std::string_view word;
  Contents kind;
};

// Per-category menu of plausible contents. Food identity is surface flavor
// only (the feature grid encodes just the contents kind); scene construction
// guarantees each phrase still resolves uniquely.
inline const std::vector<FoodItem>& food_menu(Category c) {
  static const std::vector<FoodItem> kPlate = {{"sauce", Contents::kSemiSolid},
                                               {"pasta", Contents::kSemiSolid},
                                               {"bread", Contents::kSolid},
                                               {"apples", Contents::kSolid},
                                               {"oranges", Contents::kSolid}};
  static const std::vector<FoodItem> kBowl = {{"noodles", Contents::kSemiSolid},
                                              {"soup", Contents::kSemiSolid},
                                              {"sauce", Contents::kSemiSolid},
                                              {"bread", Contents::kSolid}};
  static const std::vector<FoodItem> kCup = {{"water", Contents::kLiquid},
                                             {"juice", Contents::kLiquid},
                                             {"tea", Contents::kLiquid}};
  static const std::vector<FoodItem> kMug = {{"coffee", Contents::kLiquid},
                                             {"tea", Contents::kLiquid}};
  static const std::vector<FoodItem> kGlass = {{"water", Contents::kLiquid},
                                               {"juice", Contents::kLiquid},
                                               {"milk", Contents::kLiquid}};
  static const std::vector<FoodItem> kBottle = {{"water", Contents::kLiquid},
                                                {"juice", Contents::kLiquid},
                                                {"milk", Contents::kLiquid}};
  static const std::vector<FoodItem> kNone = {};
  switch (c) {
    case Category::kPlate: return kPlate;
    case Category::kBowl: return kBowl;
    case Category::kCup: return kCup;
    case Category::kMug: return kMug;
    case Category::kGlass: return kGlass;
    case Category::kBottle: return kBottle;
    default: return kNone;
  }
}

// Throws InconsistentStateError unless the combination is one the domain
// rules allow (cap only on bottles, fold only on napkins, residue loci only
// on knives, contents only in containers and drawn from the category menu).
inline void validate_state(Category cat, const ObjectState& s) {
  auto fail = [&](const std::string& why) {
    throw InconsistentStateError(std::string(category_name(cat)) + ": " + why);
  };
  CategoryKind kind = category_kind(cat);
  bool is_bottle = cat == Category::kBottle;

  if ((s.cap != CapState::kNa) != is_bottle)
    fail("cap state is for bottles only and mandatory there");
  if ((s.fold != FoldState::kNa) != (kind == CategoryKind::kNapkin))
    fail("fold state is for napkins only and mandatory there");
  if ((s.residue == Residue::kHandle || s.residue == Residue::kBlade) &&
      cat != Category::kKnife)
    fail("residue locus is for knives only");

  if (kind == CategoryKind::kContainer) {
    if (s.contents == Contents::kNone) fail("containers need a contents state");
    if (is_bottle && !(s.contents == Contents::kEmpty ||
                       s.contents == Contents::kLiquid))
      fail("bottles hold liquid or nothing");
    if (!is_bottle && s.residue == Residue::kWhole &&
        s.contents != Contents::kEmpty)
      fail("residue is tracked only on empty containers");
    if (is_bottle && s.residue != Residue::kNone)
      fail("bottle state is expressed via the cap, not residue");
  } else if (s.contents != Contents::kNone) {
    fail("only containers hold contents");
  }

  bool has_food = s.contents == Contents::kSemiSolid ||
                  s.contents == Contents::kSolid ||
                  s.contents == Contents::kLiquid;
  if (has_food != !s.food.empty())
    fail("food word present iff the object holds contents");
  if (has_food) {
    bool listed = false;
    for (const auto& item : food_menu(cat))
      if (item.word == s.food && item.kind == s.contents) listed = true;
    if (!listed) fail("food '" + s.food + "' not plausible for this category");
  }
}

// Whether the physical condition reads as dirty/used (drives a grid feature
// and the phrase pair selection). Bottles are judged by their cap instead.
inline bool is_dirty(Category cat, const ObjectState& s) {
  switch (category_kind(cat)) {
    case CategoryKind::kContainer:
      if (cat == Category::kBottle) return false;
      return s.contents != Contents::kEmpty || s.residue == Residue::kWhole;
    case CategoryKind::kCutlery:
      return s.residue != Residue::kNone;
    case CategoryKind::kNapkin:
      return s.residue == Residue::kWhole || s.fold == FoldState::kUnfolded;
  }
  return false;
}

// Semantic interpretation classes from the ambiguous-opposites table.
enum class SemanticClass {
  kCleanUnused,
  kUsedDirty,
  kPossiblyUsed,
  kPossiblyUnused,
};

inline SemanticClass semantic_class(Category cat, const ObjectState& s) {
  if (cat == Category::kBottle)
    return s.cap == CapState::kOpen ? SemanticClass::kPossiblyUsed
                                    : SemanticClass::kPossiblyUnused;
  return is_dirty(cat, s) ? SemanticClass::kUsedDirty
                          : SemanticClass::kCleanUnused;
}

// ---------------------------------------------------------------------------
// Referring expressions: each state yields a pair {physical wording,
// semantic-interpretation synonym}.
// ---------------------------------------------------------------------------

inline std::vector<std::string> expressions_for(Category cat,
                                                const ObjectState& s) {
  validate_state(cat, s);
  std::string name(category_name(cat));
  switch (category_kind(cat)) {
    case CategoryKind::kContainer:
      if (cat == Category::kBottle) {
        if (s.cap == CapState::kOpen)
          return {"open bottle", "possibly used bottle"};
        return {"closed bottle", "possibly unused bottle"};
      }
      if (s.contents == Contents::kEmpty) {
        if (s.residue == Residue::kWhole)
          return {"dirty " + name, "used " + name};
        return {"empty " + name, "clean " + name};
      }
      return {name + " with " + s.food, "used " + name};
    case CategoryKind::kCutlery:
      switch (s.residue) {
        case Residue::kNone: return {"clean " + name, "unused " + name};
        case Residue::kWhole: return {"dirty " + name, "used " + name};
        case Residue::kHandle:
          return {"knife with dirty handle", "partly used knife"};
        case Residue::kBlade:
          return {"knife with dirty blade", "partly dirty knife"};
      }
      break;
    case CategoryKind::kNapkin:
      if (is_dirty(cat, s)) return {"dirty napkin", "used napkin"};
      return {"clean napkin", "unused napkin"};
  }
  throw InconsistentStateError("unreachable state");
}

// Every valid state of a category, in a fixed deterministic order. Used for
// vocabulary closure, exhaustive property tests, and state sampling.
inline std::vector<ObjectState> all_states(Category cat) {
  std::vector<ObjectState> out;
  auto add = [&](ObjectState s) {
    validate_state(cat, s);
    out.push_back(std::move(s));
  };
  switch (category_kind(cat)) {
    case CategoryKind::kContainer:
      if (cat == Category::kBottle) {
        for (CapState cap : {CapState::kOpen, CapState::kClosed}) {
          add({Contents::kEmpty, "", Residue::kNone, cap, FoldState::kNa});
          for (const auto& f : food_menu(cat))
            add({f.kind, std::string(f.word), Residue::kNone, cap,
                 FoldState::kNa});
        }
        break;
      }
      add({Contents::kEmpty, "", Residue::kNone, CapState::kNa,
           FoldState::kNa});
      add({Contents::kEmpty, "", Residue::kWhole, CapState::kNa,
           FoldState::kNa});
      for (const auto& f : food_menu(cat))
        add({f.kind, std::string(f.word), Residue::kNone, CapState::kNa,
             FoldState::kNa});
      break;
    case CategoryKind::kCutlery: {
      std::vector<Residue> loci = {Residue::kNone, Residue::kWhole};
      if (cat == Category::kKnife) {
        loci.push_back(Residue::kHandle);
        loci.push_back(Residue::kBlade);
      }
      for (Residue r : loci)
        add({Contents::kNone, "", r, CapState::kNa, FoldState::kNa});
      break;
    }
    case CategoryKind::kNapkin:
      for (FoldState fold : {FoldState::kFolded, FoldState::kUnfolded})
        for (Residue r : {Residue::kNone, Residue::kWhole})
          add({Contents::kNone, "", r, CapState::kNa, fold});
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dialog templates and system preambles.
// ---------------------------------------------------------------------------

enum class Task { kDetection, kAffordance };

inline constexpr int kTemplatesPerTask = 3;

// response_prefix is the assistant text up to (excluding) the box fragment;
// the rendered response is prefix + box tokens + a closing period.
struct DialogTemplate {
  std::string_view prompt;
  std::string_view response_prefix;
};

inline const DialogTemplate& dialog_template(Task task, int index) {
  static const std::array<DialogTemplate, 3> kDetection = {{
      {"Show me the [target].", "response: Here is the [target]."},
      {"Where is the [target]?", "response: Here is the [target]."},
      {"Where is the location of the [target]?",
       "response: Here is the location of the [target]."},
  }};
  static const std::array<DialogTemplate, 3> kAffordance = {{
      {"Hand me the [target].", "response: Sure. I will hand you the [target]."},
      {"Pass me the [target].",
       "response: Alright, I will pick up the [target] for you."},
      {"Give me the [target].",
       "response: Okay, I will give you the [target]."},
  }};
  if (index < 0 || index >= kTemplatesPerTask)
    throw ConfigError("template index out of range");
  return task == Task::kDetection ? kDetection[static_cast<std::size_t>(index)]
                                  : kAffordance[static_cast<std::size_t>(index)];
}

// Replaces the [target] placeholder. The placeholder position varies per
// template, so plain substring replacement is the whole job.
inline std::string substitute_target(std::string_view tmpl,
                                     std::string_view phrase) {
  static constexpr std::string_view kHole = "[target]";
  std::string out(tmpl);
  auto pos = out.find(kHole);
  if (pos == std::string::npos)
    throw ConfigError("template lacks [target] placeholder");
  out.replace(pos, kHole.size(), phrase);
  return out;
}

enum class PromptVariant { kSimple, kConcrete };

inline std::string_view preamble(PromptVariant v) {
  switch (v) {
    case PromptVariant::kSimple:
      return "A chat between a human and an AI that understands visuals. "
             "Follow instructions.";
    case PromptVariant::kConcrete:
      return "A chat between a human and an AI that understands visuals. In "
             "images, [x, y] denotes points: top-left is [0, 0], bottom-right "
             "is [1, 1]. Increasing x moves right; y moves down. A bounding "
             "box is defined as [x1, y1, x2, y2] where (x1, y1) is the "
             "top-left corner and (x2, y2) is the bottom-right corner. Follow "
             "instructions.";
  }
  throw ConfigError("unknown prompt variant");
}

}  // namespace boxlm
