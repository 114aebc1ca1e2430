#include "dsg/scene.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dsg {

namespace {

const char* kShapeNames[kNumShapes] = {"square", "circle", "triangle"};
const char* kColorNames[kNumColors] = {"gray", "red",    "blue", "green",
                                       "brown", "purple", "cyan", "yellow"};
const char* kSizeNames[kNumSizes] = {"small", "large"};
const char* kRelationNames[kNumRelations] = {"left", "right", "front", "behind"};

const std::array<unsigned char, 3> kPalette[kNumColors] = {
    {87, 87, 87},   {173, 35, 35},  {42, 75, 215}, {29, 105, 20},
    {129, 74, 25},  {129, 38, 192}, {41, 208, 208}, {255, 238, 51}};

int name_index(const std::string& name, const char* const* table, int n, const char* what) {
  for (int i = 0; i < n; ++i) {
    if (name == table[i]) return i;
  }
  throw std::invalid_argument(std::string("unknown ") + what + ": " + name);
}

}  // namespace

const char* shape_name(int shape) { return kShapeNames[shape]; }
const char* color_name(int color) { return kColorNames[color]; }
const char* size_name(int size) { return kSizeNames[size]; }
const char* relation_name(int relation) { return kRelationNames[relation]; }
int shape_index(const std::string& n) { return name_index(n, kShapeNames, kNumShapes, "shape"); }
int color_index(const std::string& n) { return name_index(n, kColorNames, kNumColors, "color"); }
int size_index(const std::string& n) { return name_index(n, kSizeNames, kNumSizes, "size"); }
int relation_index(const std::string& n) {
  return name_index(n, kRelationNames, kNumRelations, "relation");
}
std::array<unsigned char, 3> color_rgb(int color) { return kPalette[color]; }

bool relation_holds(const Entity& a, const Entity& b, int relation) {
  switch (relation) {
    case kLeft:
      return a.box.center_x() < b.box.center_x();
    case kRight:
      return a.box.center_x() > b.box.center_x();
    case kBehind:
      return a.depth < b.depth;
    case kFront:
      return a.depth > b.depth;
    default:
      throw std::invalid_argument("relation_holds: bad relation id");
  }
}

namespace {

struct Placement {
  int xu = 0, yu = 0, wu = 0, hu = 0;  // milli-canvas units
  double depth = 0.0;

  int cx2() const { return 2 * xu + wu; }  // doubled center, exact
  int cy2() const { return 2 * yu + hu; }
};

bool placement_ok(const Placement& p, const std::vector<Placement>& placed,
                  const SceneConfig& cfg) {
  for (const Placement& q : placed) {
    long dx2 = p.cx2() - q.cx2();
    long dy2 = p.cy2() - q.cy2();
    long adx2 = dx2 < 0 ? -dx2 : dx2;
    if (adx2 < 2L * cfg.axis_margin_units) return false;
    long sep2 = 2L * cfg.min_center_sep_units;
    if (dx2 * dx2 + dy2 * dy2 < sep2 * sep2) return false;
    if (std::abs(p.depth - q.depth) < cfg.depth_margin) return false;
  }
  return true;
}

}  // namespace

Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg, int scene_id) {
  if (cfg.min_entities < 2 || cfg.max_entities < cfg.min_entities) {
    throw std::invalid_argument("generate_scene: bad entity count range");
  }
  Rng rng(seed);
  Scene scene;
  scene.scene_id = scene_id;
  scene.canvas_px = cfg.canvas_px;

  int n = cfg.min_entities + rng.uniform_int(cfg.max_entities - cfg.min_entities + 1);
  bool ambiguous = rng.uniform() < cfg.ambiguity_rate;

  std::vector<int> cats(kNumCategories);
  for (int i = 0; i < kNumCategories; ++i) cats[i] = i;
  rng.shuffle(cats);
  cats.resize(n);
  if (ambiguous) cats[1] = cats[0];

  // Keep a safety margin off the far edges so stored doubles never exceed 1.
  const int max_units = 950;
  for (int attempt = 0;; ++attempt) {
    std::vector<Placement> placed;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      int size = cats[i] % kNumSizes;
      int side = size == 0 ? cfg.small_units : cfg.large_units;
      int ncols = (max_units - side) / cfg.grid_units + 1;
      bool found = false;
      for (int t = 0; t < cfg.max_place_retries; ++t) {
        Placement p;
        p.wu = side;
        p.hu = side;
        p.xu = rng.uniform_int(ncols) * cfg.grid_units;
        p.yu = rng.uniform_int(ncols) * cfg.grid_units;
        p.depth = rng.uniform();
        if (placement_ok(p, placed, cfg)) {
          placed.push_back(p);
          found = true;
          break;
        }
      }
      ok = found;
    }
    if (ok) {
      for (int i = 0; i < n; ++i) {
        Entity e;
        e.id = i;
        int cat = cats[i];
        e.size = cat % kNumSizes;
        e.color = (cat / kNumSizes) % kNumColors;
        e.shape = cat / (kNumSizes * kNumColors);
        e.box = Box{placed[i].xu / 1000.0, placed[i].yu / 1000.0, placed[i].wu / 1000.0,
                    placed[i].hu / 1000.0};
        e.depth = placed[i].depth;
        scene.entities.push_back(e);
      }
      break;
    }
    if (attempt + 1 >= cfg.max_scene_retries) {
      throw std::runtime_error(
          "generate_scene: cannot place entities with the configured separation "
          "(config infeasible)");
    }
  }

  scene.queries = generate_queries(scene, cfg.max_queries, rng.next_u64(),
                                   cfg.horizontal_dominance);
  return scene;
}

std::vector<Query> generate_queries(const Scene& scene, int max_queries, std::uint64_t seed,
                                    double horizontal_dominance) {
  if (scene.entities.size() < 2) {
    throw std::invalid_argument("generate_queries: scene needs at least 2 entities");
  }
  const auto& ents = scene.entities;
  int n = static_cast<int>(ents.size());

  // Candidate triples: one canonical (subject, relation, object) per
  // unordered pair, in encounter order.
  std::vector<std::array<int, 3>> triples;
  std::set<std::array<int, 3>> seen;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const Entity& a = ents[i];
      const Entity& b = ents[j];
      double dx = b.box.center_x() - a.box.center_x();
      std::array<int, 3> t{};
      if (std::abs(dx) >= horizontal_dominance) {
        const Entity& subj = dx > 0 ? a : b;
        const Entity& obj = dx > 0 ? b : a;
        t = {subj.category(), kLeft, obj.category()};
      } else {
        const Entity& subj = a.depth < b.depth ? a : b;
        const Entity& obj = a.depth < b.depth ? b : a;
        t = {subj.category(), kBehind, obj.category()};
      }
      if (seen.insert(t).second) triples.push_back(t);
    }
  }

  std::vector<Query> queries;
  for (const auto& t : triples) {
    Query q;
    q.subject_cat = t[0];
    q.relation = t[1];
    q.object_cat = t[2];
    for (const Entity& s : ents) {
      if (s.category() != q.subject_cat) continue;
      for (const Entity& o : ents) {
        if (o.id == s.id || o.category() != q.object_cat) continue;
        if (relation_holds(s, o, q.relation)) {
          q.gt_subject_ids.push_back(s.id);
          break;
        }
      }
    }
    for (const Entity& o : ents) {
      if (o.category() != q.object_cat) continue;
      for (const Entity& s : ents) {
        if (s.id == o.id || s.category() != q.subject_cat) continue;
        if (relation_holds(s, o, q.relation)) {
          q.gt_object_ids.push_back(o.id);
          break;
        }
      }
    }
    if (!q.gt_subject_ids.empty() && !q.gt_object_ids.empty()) queries.push_back(q);
  }

  if (static_cast<int>(queries.size()) > max_queries) {
    // Queries with a same-category distractor (an entity of the queried
    // category outside the ground-truth list) are the ones that exercise
    // relational disambiguation; keep them first under the cap.
    auto cat_count = [&](int cat) {
      int c = 0;
      for (const Entity& e : ents) c += e.category() == cat;
      return c;
    };
    Rng rng(seed);
    rng.shuffle(queries);
    std::stable_sort(queries.begin(), queries.end(), [&](const Query& a, const Query& b) {
      bool ma = cat_count(a.subject_cat) > static_cast<int>(a.gt_subject_ids.size()) ||
                cat_count(a.object_cat) > static_cast<int>(a.gt_object_ids.size());
      bool mb = cat_count(b.subject_cat) > static_cast<int>(b.gt_subject_ids.size()) ||
                cat_count(b.object_cat) > static_cast<int>(b.gt_object_ids.size());
      return ma > mb;
    });
    queries.resize(max_queries);
  }
  return queries;
}

// ---------------------------------------------------------------------------
// JSON-lines dataset IO

namespace {

using nlohmann::json;

json scene_to_json(const Scene& s) {
  json j;
  j["scene_id"] = s.scene_id;
  j["canvas_px"] = s.canvas_px;
  j["entities"] = json::array();
  for (const Entity& e : s.entities) {
    j["entities"].push_back({{"id", e.id},
                             {"shape", shape_name(e.shape)},
                             {"color", color_name(e.color)},
                             {"size", size_name(e.size)},
                             {"box", {e.box.x, e.box.y, e.box.w, e.box.h}},
                             {"depth", e.depth}});
  }
  j["queries"] = json::array();
  for (const Query& q : s.queries) {
    j["queries"].push_back({{"s", q.subject_cat},
                            {"r", relation_name(q.relation)},
                            {"o", q.object_cat},
                            {"gt_s", q.gt_subject_ids},
                            {"gt_o", q.gt_object_ids}});
  }
  return j;
}

[[noreturn]] void line_error(size_t line_no, const std::string& what) {
  throw std::runtime_error("dataset line " + std::to_string(line_no) + ": " + what);
}

Scene scene_from_json(const json& j, size_t line_no) {
  Scene s;
  s.scene_id = j.at("scene_id").get<int>();
  s.canvas_px = j.at("canvas_px").get<int>();
  if (s.canvas_px <= 0) line_error(line_no, "canvas_px must be positive");
  std::set<int> ids;
  for (const json& je : j.at("entities")) {
    Entity e;
    e.id = je.at("id").get<int>();
    e.shape = shape_index(je.at("shape").get<std::string>());
    e.color = color_index(je.at("color").get<std::string>());
    e.size = size_index(je.at("size").get<std::string>());
    const json& b = je.at("box");
    if (!b.is_array() || b.size() != 4) line_error(line_no, "box must have 4 numbers");
    e.box = Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    e.depth = je.at("depth").get<double>();
    if (e.box.w <= 0.0 || e.box.h <= 0.0) line_error(line_no, "box width/height out of range");
    if (e.box.x < 0.0 || e.box.y < 0.0 || e.box.x2() > 1.0 || e.box.y2() > 1.0) {
      line_error(line_no, "box outside unit canvas");
    }
    if (e.depth < 0.0 || e.depth > 1.0) line_error(line_no, "depth out of range");
    if (!ids.insert(e.id).second) line_error(line_no, "duplicate entity id");
    s.entities.push_back(e);
  }
  for (const json& jq : j.at("queries")) {
    Query q;
    q.subject_cat = jq.at("s").get<int>();
    q.relation = relation_index(jq.at("r").get<std::string>());
    q.object_cat = jq.at("o").get<int>();
    if (q.subject_cat < 0 || q.subject_cat >= kNumCategories || q.object_cat < 0 ||
        q.object_cat >= kNumCategories) {
      line_error(line_no, "query category out of range");
    }
    q.gt_subject_ids = jq.at("gt_s").get<std::vector<int>>();
    q.gt_object_ids = jq.at("gt_o").get<std::vector<int>>();
    if (q.gt_subject_ids.empty() || q.gt_object_ids.empty()) {
      line_error(line_no, "query ground-truth lists must be nonempty");
    }
    for (int id : q.gt_subject_ids) {
      if (!ids.count(id)) line_error(line_no, "gt_s references unknown entity id");
    }
    for (int id : q.gt_object_ids) {
      if (!ids.count(id)) line_error(line_no, "gt_o references unknown entity id");
    }
    s.queries.push_back(q);
  }
  return s;
}

}  // namespace

void save_dataset(const std::string& path, const std::vector<Scene>& scenes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open dataset for writing: " + path);
  for (const Scene& s : scenes) {
    os << scene_to_json(s).dump() << "\n";
  }
  if (!os) throw std::runtime_error("dataset write failed: " + path);
}

std::vector<Scene> load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset: " + path);
  std::vector<Scene> scenes;
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      line_error(line_no, std::string("JSON parse error: ") + e.what());
    }
    try {
      scenes.push_back(scene_from_json(j, line_no));
    } catch (const json::exception& e) {
      line_error(line_no, std::string("schema violation: ") + e.what());
    }
  }
  return scenes;
}

}  // namespace dsg
