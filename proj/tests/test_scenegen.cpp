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

#include "boxlm/scenegen.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <map>

namespace boxlm {
namespace {

namespace fs = std::filesystem;

ObjectState state_of(Contents c, std::string food = "",
                     Residue r = Residue::kNone, CapState cap = CapState::kNa,
                     FoldState fold = FoldState::kNa) {
  return {c, std::move(food), r, cap, fold};
}

bool contains_box(const BoxN& outer, const BoxN& inner) {
  return outer.x1 <= inner.x1 + 1e-12 && outer.y1 <= inner.y1 + 1e-12 &&
         inner.x2 <= outer.x2 + 1e-12 && inner.y2 <= outer.y2 + 1e-12;
}

TEST(GraspRules, FrozenExamples) {
  BoxN b{0.2, 0.2, 0.6, 0.6};
  // Semi-solid contents: left quarter rim band.
  BoxN rim = grasp_box(Category::kBowl,
                       state_of(Contents::kSemiSolid, "noodles"), b);
  EXPECT_DOUBLE_EQ(rim.x1, 0.2);
  EXPECT_DOUBLE_EQ(rim.y1, 0.2);
  EXPECT_DOUBLE_EQ(rim.x2, 0.3);
  EXPECT_DOUBLE_EQ(rim.y2, 0.6);
  // Liquid behaves like semi-solid.
  BoxN lrim =
      grasp_box(Category::kGlass, state_of(Contents::kLiquid, "water"), b);
  EXPECT_DOUBLE_EQ(lrim.x2, 0.3);
  // Solid contents: centered half-size region.
  BoxN core =
      grasp_box(Category::kPlate, state_of(Contents::kSolid, "bread"), b);
  EXPECT_DOUBLE_EQ(core.x1, 0.3);
  EXPECT_DOUBLE_EQ(core.y1, 0.3);
  EXPECT_DOUBLE_EQ(core.x2, 0.5);
  EXPECT_DOUBLE_EQ(core.y2, 0.5);
  // Empty container and napkin: the whole object.
  EXPECT_EQ(grasp_box(Category::kMug, state_of(Contents::kEmpty), b), b);
  EXPECT_EQ(grasp_box(Category::kNapkin,
                      state_of(Contents::kNone, "", Residue::kNone,
                               CapState::kNa, FoldState::kFolded),
                      b),
            b);
}

TEST(GraspRules, KnifeHalvesFollowMajorAxis) {
  // Horizontal knife: handle is the left (low-x) half.
  BoxN h{0.1, 0.4, 0.5, 0.5};
  BoxN handle = grasp_box(Category::kKnife,
                          state_of(Contents::kNone, "", Residue::kBlade), h);
  EXPECT_EQ(handle, (BoxN{0.1, 0.4, 0.3, 0.5}));
  BoxN blade = grasp_box(Category::kKnife,
                         state_of(Contents::kNone, "", Residue::kHandle), h);
  EXPECT_EQ(blade, (BoxN{0.3, 0.4, 0.5, 0.5}));
  // Vertical knife: halves split along y.
  BoxN v{0.4, 0.1, 0.5, 0.5};
  EXPECT_EQ(grasp_box(Category::kKnife,
                      state_of(Contents::kNone, "", Residue::kBlade), v),
            (BoxN{0.4, 0.1, 0.5, 0.3}));
  EXPECT_EQ(grasp_box(Category::kKnife,
                      state_of(Contents::kNone, "", Residue::kHandle), v),
            (BoxN{0.4, 0.3, 0.5, 0.5}));
  // Uniformly dirty or clean cutlery: whole object.
  EXPECT_EQ(grasp_box(Category::kSpoon,
                      state_of(Contents::kNone, "", Residue::kWhole), h),
            h);
}

TEST(GraspRules, GraspIsAlwaysInsideObject) {
  BoxN boxes[] = {{0.0, 0.0, 1.0, 1.0},
                  {0.125, 0.25, 0.5, 0.375},
                  {0.04, 0.9, 0.96, 1.0}};
  for (Category cat : kAllCategories)
    for (const ObjectState& s : all_states(cat))
      for (const BoxN& b : boxes) {
        BoxN g = grasp_box(cat, s, b);
        EXPECT_TRUE(is_valid(g));
        EXPECT_TRUE(contains_box(b, g));
      }
}

TEST(FeatureVector, SeparatesStatesThatPhrasesSeparate) {
  auto f = [](Category c, const ObjectState& s) { return feature_vector(c, s); };
  // One-hot category prefix and occupancy.
  auto plate = f(Category::kPlate, state_of(Contents::kEmpty));
  EXPECT_DOUBLE_EQ(plate[0], 1.0);
  EXPECT_DOUBLE_EQ(plate[1], 0.0);
  EXPECT_DOUBLE_EQ(plate[16], 1.0);
  // Clean vs dirty empty container.
  EXPECT_NE(f(Category::kPlate, state_of(Contents::kEmpty)),
            f(Category::kPlate, state_of(Contents::kEmpty, "", Residue::kWhole)));
  // Contents kinds are pairwise distinct.
  auto semi = f(Category::kBowl, state_of(Contents::kSemiSolid, "soup"));
  auto solid = f(Category::kBowl, state_of(Contents::kSolid, "bread"));
  auto liquid = f(Category::kGlass, state_of(Contents::kLiquid, "milk"));
  EXPECT_NE(semi, solid);
  EXPECT_NE(std::vector<double>(semi.begin() + 10, semi.end()),
            std::vector<double>(liquid.begin() + 10, liquid.end()));
  // Knife residue loci.
  auto whole = f(Category::kKnife, state_of(Contents::kNone, "", Residue::kWhole));
  auto hdl = f(Category::kKnife, state_of(Contents::kNone, "", Residue::kHandle));
  auto bld = f(Category::kKnife, state_of(Contents::kNone, "", Residue::kBlade));
  EXPECT_NE(whole, hdl);
  EXPECT_NE(hdl, bld);
  // Bottle cap and napkin fold drive the aux flag.
  auto open = f(Category::kBottle,
                state_of(Contents::kEmpty, "", Residue::kNone, CapState::kOpen));
  auto closed = f(Category::kBottle, state_of(Contents::kEmpty, "",
                                              Residue::kNone, CapState::kClosed));
  EXPECT_NE(open, closed);
}

TEST(Rasterize, LatticeBoxIsExact) {
  SceneSpec scene;
  scene.objects.push_back(
      {0, Category::kPlate, state_of(Contents::kEmpty), {0.25, 0.25, 0.75, 0.75}});
  FeatureGrid g = rasterize(scene, 8);
  int occupied = 0;
  for (int iy = 0; iy < 8; ++iy)
    for (int ix = 0; ix < 8; ++ix) {
      bool inside = ix >= 2 && ix <= 5 && iy >= 2 && iy <= 5;
      EXPECT_DOUBLE_EQ(g.cell(ix, iy)[16], inside ? 1.0 : 0.0)
          << "cell " << ix << "," << iy;
      if (inside) {
        EXPECT_DOUBLE_EQ(g.cell(ix, iy)[0], 1.0);  // plate one-hot
        ++occupied;
      }
    }
  EXPECT_EQ(occupied, 16);
}

TEST(Rasterize, HigherIdWinsOverlap) {
  SceneSpec scene;
  scene.objects.push_back(
      {0, Category::kPlate, state_of(Contents::kEmpty), {0.0, 0.0, 0.5, 0.5}});
  scene.objects.push_back({1, Category::kBowl,
                           state_of(Contents::kSemiSolid, "soup"),
                           {0.25, 0.25, 0.75, 0.75}});
  FeatureGrid g = rasterize(scene, 8);
  // Shared cell (2,2) center (0.3125, 0.3125) is inside both: bowl wins.
  EXPECT_DOUBLE_EQ(g.cell(2, 2)[1], 1.0);
  EXPECT_DOUBLE_EQ(g.cell(2, 2)[0], 0.0);
  // Plate-only cell.
  EXPECT_DOUBLE_EQ(g.cell(0, 0)[0], 1.0);
  EXPECT_THROW(rasterize(scene, 1), ConfigError);
}

TEST(SampleScene, DeterministicInSeed) {
  GenConfig cfg;
  SceneSpec a = sample_scene(42, false, cfg, 7);
  SceneSpec b = sample_scene(42, false, cfg, 7);
  EXPECT_EQ(a, b);
  SceneSpec c = sample_scene(43, false, cfg, 7);
  EXPECT_NE(a, c);
}

TEST(SampleScene, InvariantsOverManySeeds) {
  GenConfig cfg;
  cfg.grid_size = 8;
  // Retry rejected seeds the same way generate_dataset does: occlusion or
  // packing failures are expected rejections, not errors.
  auto sample_with_retry = [&](std::uint64_t seed, bool complex_scene) {
    for (int attempt = 0;; ++attempt) {
      try {
        return sample_scene(derive_seed(seed, attempt), complex_scene, cfg);
      } catch (const PlacementFailedError&) {
        if (attempt >= 20) throw;
      }
    }
  };
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    bool complex_scene = seed % 3 == 0;
    SceneSpec s = sample_with_retry(derive_seed(999, seed), complex_scene);
    ASSERT_GE(static_cast<int>(s.objects.size()), cfg.min_objects);
    ASSERT_LE(static_cast<int>(s.objects.size()), cfg.max_objects);
    std::map<Category, int> cat_count;
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      const ObjectSpec& o = s.objects[i];
      EXPECT_EQ(o.id, static_cast<int>(i));
      EXPECT_NO_THROW(validate_state(o.category, o.state));
      EXPECT_TRUE(is_valid(o.box));
      EXPECT_GE(area(o.box), 1e-4);
      ++cat_count[o.category];
      // Lattice snapping: every coordinate is a multiple of 1/G.
      for (double v : {o.box.x1, o.box.y1, o.box.x2, o.box.y2})
        EXPECT_DOUBLE_EQ(v * cfg.grid_size, std::round(v * cfg.grid_size));
      for (std::size_t j = 0; j < i; ++j)
        EXPECT_LE(iou(s.objects[j].box, o.box), cfg.max_overlap_iou + 1e-12);
    }
    int max_dup = 0;
    for (auto& [cat, n] : cat_count) max_dup = std::max(max_dup, n);
    if (complex_scene) {
      EXPECT_EQ(max_dup, 2);
      // The duplicate pair must differ in grid features.
      for (auto& [cat, n] : cat_count)
        if (n == 2) {
          std::vector<const ObjectSpec*> pair;
          for (const ObjectSpec& o : s.objects)
            if (o.category == cat) pair.push_back(&o);
          EXPECT_NE(feature_vector(cat, pair[0]->state),
                    feature_vector(cat, pair[1]->state));
        }
    } else {
      EXPECT_EQ(max_dup, 1);
    }
  }
}

TEST(SampleScene, ImpossiblePackingFails) {
  GenConfig cfg;
  cfg.grid_size = 2;
  cfg.min_objects = cfg.max_objects = 6;
  cfg.max_overlap_iou = 0.0;
  // Six objects of at least half the table each cannot be disjoint.
  EXPECT_THROW(sample_scene(1, false, cfg), PlacementFailedError);
}

TEST(InstantiateDialogs, TwelvePerUnambiguousObject) {
  SceneSpec scene;
  scene.objects.push_back(
      {0, Category::kPlate, state_of(Contents::kEmpty), {0.0, 0.0, 0.25, 0.25}});
  scene.objects.push_back({1, Category::kBowl,
                           state_of(Contents::kSemiSolid, "noodles"),
                           {0.5, 0.5, 0.75, 0.75}});
  auto dialogs = instantiate_dialogs(scene, false);
  EXPECT_EQ(dialogs.size(), 24u);  // 2 objects x 2 phrases x 2 tasks x 3
  int affordance = 0;
  for (const DialogSample& d : dialogs) {
    EXPECT_TRUE(is_valid(d.gold));
    const ObjectSpec& obj = scene.objects[static_cast<std::size_t>(d.object_id)];
    if (d.task == Task::kAffordance) {
      ++affordance;
      EXPECT_EQ(d.gold, grasp_box(obj.category, obj.state, obj.box));
      EXPECT_TRUE(contains_box(obj.box, d.gold));
    } else {
      EXPECT_EQ(d.gold, obj.box);
    }
  }
  EXPECT_EQ(affordance, 12);
  // Sample ids are unique.
  std::set<std::string> ids;
  for (const DialogSample& d : dialogs) EXPECT_TRUE(ids.insert(d.id).second);
}

TEST(InstantiateDialogs, AmbiguousPhrasesSkipped) {
  // Two bowls sharing the "used bowl" synonym: only the distinct physical
  // phrases survive.
  SceneSpec scene;
  scene.objects.push_back({0, Category::kBowl,
                           state_of(Contents::kEmpty, "", Residue::kWhole),
                           {0.0, 0.0, 0.25, 0.25}});
  scene.objects.push_back({1, Category::kBowl,
                           state_of(Contents::kSemiSolid, "noodles"),
                           {0.5, 0.5, 0.75, 0.75}});
  auto dialogs = instantiate_dialogs(scene, false);
  EXPECT_EQ(dialogs.size(), 12u);  // "dirty bowl" x6 + "bowl with noodles" x6
  for (const DialogSample& d : dialogs) EXPECT_NE(d.phrase, "used bowl");
  // Fully ambiguous scene: identical twins contribute nothing...
  SceneSpec twins;
  twins.objects.push_back(
      {0, Category::kPlate, state_of(Contents::kEmpty), {0.0, 0.0, 0.25, 0.25}});
  twins.objects.push_back(
      {1, Category::kPlate, state_of(Contents::kEmpty), {0.5, 0.5, 0.75, 0.75}});
  EXPECT_TRUE(instantiate_dialogs(twins, false).empty());
  // ...unless ambiguity is explicitly allowed.
  EXPECT_EQ(instantiate_dialogs(twins, true).size(), 24u);
}

TEST(GenerateDataset, SummaryAndDeterminism) {
  GenConfig cfg;
  cfg.n_scenes = 12;
  cfg.grid_size = 8;
  cfg.seed = 7;
  Dataset ds = generate_dataset(cfg);
  DatasetSummary sum = ds.summary();
  EXPECT_EQ(sum.scenes, 12);
  EXPECT_EQ(sum.test_scenes, 1);  // round(0.112 * 12)
  EXPECT_EQ(sum.dialogs, static_cast<int>(ds.samples.size()));
  // Dialogs are exactly three per (object, phrase, task) expression.
  EXPECT_EQ(sum.dialogs, 3 * sum.expressions);
  EXPECT_GT(sum.dialogs, 0);
  EXPECT_GT(sum.test_dialogs, 0);

  Dataset again = generate_dataset(cfg);
  EXPECT_EQ(ds.scenes, again.scenes);
  EXPECT_EQ(ds.samples, again.samples);
  EXPECT_EQ(ds.test_scene_ids, again.test_scene_ids);

  cfg.seed = 8;
  Dataset other = generate_dataset(cfg);
  EXPECT_NE(ds.scenes, other.scenes);
}

TEST(GenerateDataset, SaveLoadRoundTrip) {
  GenConfig cfg;
  cfg.n_scenes = 6;
  cfg.grid_size = 8;
  cfg.seed = 21;
  Dataset ds = generate_dataset(cfg);

  fs::path dir = fs::temp_directory_path() / "boxlm_test_dataset";
  fs::remove_all(dir);
  save_dataset(ds, dir);
  Dataset loaded = load_dataset(dir);
  EXPECT_EQ(ds.config, loaded.config);
  EXPECT_EQ(ds.scenes, loaded.scenes);
  EXPECT_EQ(ds.samples, loaded.samples);
  EXPECT_EQ(ds.test_scene_ids, loaded.test_scene_ids);

  // Byte-identical re-serialization.
  fs::path dir2 = fs::temp_directory_path() / "boxlm_test_dataset2";
  fs::remove_all(dir2);
  save_dataset(loaded, dir2);
  for (const char* name :
       {"gen_config.json", "scenes.jsonl", "samples.jsonl", "summary.csv"})
    EXPECT_EQ(read_file(dir / name), read_file(dir2 / name)) << name;
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST(GenerateDataset, SchemaViolationsSurface) {
  fs::path dir = fs::temp_directory_path() / "boxlm_test_badschema";
  fs::remove_all(dir);
  GenConfig cfg;
  cfg.n_scenes = 3;
  cfg.grid_size = 8;
  Dataset ds = generate_dataset(cfg);
  save_dataset(ds, dir);

  // Corrupt JSON line.
  std::string good = read_file(dir / "samples.jsonl");
  write_file(dir / "samples.jsonl", "{not json\n");
  EXPECT_THROW(load_dataset(dir), SchemaViolation);
  // Unknown enum value.
  std::string swapped = good;
  auto pos = swapped.find("\"detection\"");
  ASSERT_NE(pos, std::string::npos);
  swapped.replace(pos, 11, "\"teleport?\"");
  write_file(dir / "samples.jsonl", swapped);
  EXPECT_THROW(load_dataset(dir), SchemaViolation);
  // Invalid gold box (x2 < x1).
  write_file(dir / "samples.jsonl", good);
  std::string scenes = read_file(dir / "scenes.jsonl");
  write_file(dir / "samples.jsonl",
             nlohmann::json{{"id", "x"},
                            {"scene", ds.scenes[0].id},
                            {"object", 0},
                            {"split", "train"},
                            {"task", "detection"},
                            {"template", 0},
                            {"phrase", "empty plate"},
                            {"gold", {0.5, 0.1, 0.2, 0.9}}}
                     .dump() +
                 "\n");
  EXPECT_THROW(load_dataset(dir), CoordOutOfRangeError);
  // Missing file.
  fs::remove(dir / "scenes.jsonl");
  EXPECT_THROW(load_dataset(dir), IoError);
  fs::remove_all(dir);
}

TEST(GenConfigJson, RoundTripAndValidation) {
  GenConfig c;
  c.n_scenes = 99;
  c.seed = 123456789012345ull;
  c.grid_size = 8;
  c.max_overlap_iou = 0.0;
  GenConfig back = gen_config_from_json(to_json(c));
  EXPECT_EQ(c, back);
  nlohmann::json bad = to_json(c);
  bad["test_fraction"] = 1.5;
  EXPECT_THROW(gen_config_from_json(bad), ConfigError);
  bad = to_json(c);
  bad.erase("seed");
  EXPECT_THROW(gen_config_from_json(bad), SchemaViolation);
}

}  // namespace
}  // namespace boxlm
