#pragma once

#include "dsg/geometry.hpp"
#include "dsg/rng.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dsg {

inline constexpr int kNumShapes = 3;
inline constexpr int kNumColors = 8;
inline constexpr int kNumSizes = 2;
inline constexpr int kNumCategories = kNumShapes * kNumColors * kNumSizes;  // 48
inline constexpr int kNumRelations = 4;

enum Relation : int { kLeft = 0, kRight = 1, kFront = 2, kBehind = 3 };

const char* shape_name(int shape);
const char* color_name(int color);
const char* size_name(int size);
const char* relation_name(int relation);
int shape_index(const std::string& name);
int color_index(const std::string& name);
int size_index(const std::string& name);
int relation_index(const std::string& name);
std::array<unsigned char, 3> color_rgb(int color);

struct Entity {
  int id = 0;
  int shape = 0;
  int color = 0;
  int size = 0;
  Box box;
  double depth = 0.0;  // smaller = further behind

  int category() const { return (shape * kNumColors + color) * kNumSizes + size; }

  bool operator==(const Entity& o) const {
    return id == o.id && shape == o.shape && color == o.color && size == o.size &&
           box == o.box && depth == o.depth;
  }
};

struct Query {
  int subject_cat = 0;
  int relation = kLeft;
  int object_cat = 0;
  std::vector<int> gt_subject_ids;
  std::vector<int> gt_object_ids;

  bool operator==(const Query& o) const {
    return subject_cat == o.subject_cat && relation == o.relation && object_cat == o.object_cat &&
           gt_subject_ids == o.gt_subject_ids && gt_object_ids == o.gt_object_ids;
  }
};

struct Scene {
  int scene_id = 0;
  int canvas_px = 64;
  std::vector<Entity> entities;
  std::vector<Query> queries;

  bool operator==(const Scene& o) const {
    return scene_id == o.scene_id && canvas_px == o.canvas_px && entities == o.entities &&
           queries == o.queries;
  }
};

struct SceneConfig {
  int canvas_px = 64;
  int min_entities = 2;
  int max_entities = 8;
  double ambiguity_rate = 0.33;
  // Geometry is laid out on an integer milli-canvas grid (step 50 = 0.05) so
  // that spatial margins are exact and relations never hinge on FP dust.
  int grid_units = 50;              // placement grid, in 1/1000 canvas units
  int small_units = 120;            // small entity box side
  int large_units = 220;            // large entity box side
  int min_center_sep_units = 150;   // pairwise Euclidean center separation
  int axis_margin_units = 50;       // min |dx| between centers
  double depth_margin = 0.05;
  double horizontal_dominance = 0.22;  // |dx| >= this emits a left query, else behind
  int max_queries = 4;
  int max_scene_retries = 50;
  int max_place_retries = 200;
};

// left: center_x(a) < center_x(b); right: converse.
// behind: depth(a) < depth(b); front: converse. Exact ties: no relation.
bool relation_holds(const Entity& a, const Entity& b, int relation);

// Deterministic in seed. Throws std::runtime_error if entities cannot be
// placed under the separation constraints after bounded retries.
Scene generate_scene(std::uint64_t seed, const SceneConfig& config, int scene_id = 0);

// One canonical query per unordered entity pair (relation by dominant axis,
// then deduplicated by triple); ground-truth id lists are the exhaustive
// satisfier sets for the triple. Capped to max_queries by a seeded shuffle.
std::vector<Query> generate_queries(const Scene& scene, int max_queries, std::uint64_t seed,
                                    double horizontal_dominance = 0.22);

// JSON-lines dataset, one scene per line. load(save(x)) == x.
void save_dataset(const std::string& path, const std::vector<Scene>& scenes);
std::vector<Scene> load_dataset(const std::string& path);

}  // namespace dsg
