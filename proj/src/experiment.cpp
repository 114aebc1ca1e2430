#include "dsg/experiment.hpp"

#include "dsg/raster.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

namespace dsg {

namespace fs = std::filesystem;
using nlohmann::json;

int env_threads() {
  const char* v = std::getenv("DSG_THREADS");
  if (!v) return 1;
  int n = std::atoi(v);
  return n < 1 ? 1 : n;
}

std::vector<Scene> load_split(const std::string& data_dir, const std::string& split) {
  return load_dataset((fs::path(data_dir) / (split + ".jsonl")).string());
}

std::vector<ScenePack> make_packs(const std::vector<Scene>& scenes, const ProposalConfig& pcfg,
                                  std::uint64_t seed, int threads) {
  std::vector<ScenePack> packs(scenes.size());
  auto work = [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      packs[i] = pack_scene(scenes[i], pcfg, seed + static_cast<std::uint64_t>(scenes[i].scene_id));
    }
  };
  threads = std::max(1, std::min<int>(threads, static_cast<int>(scenes.size())));
  if (threads == 1) {
    work(0, scenes.size());
  } else {
    std::vector<std::thread> pool;
    size_t chunk = (scenes.size() + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      size_t begin = t * chunk;
      size_t end = std::min(scenes.size(), begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (std::thread& th : pool) th.join();
  }
  return packs;
}

namespace {

QueryPrediction select_prediction(const SceneEval& ev, const Scene& scene, int query_idx,
                                  bool two_step) {
  QueryPrediction pred;
  std::vector<int> subjects, objects;
  if (two_step) {
    DecodedSceneGraph sg = decode_scene_graph(ev.entity_logits, ev.relation_logits, ev.pairs, 0);
    SelectedBoxes sel = two_step_reason(sg, scene.queries[query_idx]);
    subjects = sel.subjects;
    objects = sel.objects;
  } else {
    SelectedBoxes sel = select_boxes(ev.query_role_logits[query_idx]);
    subjects = sel.subjects;
    objects = sel.objects;
  }
  for (int i : subjects) pred.subject_boxes.push_back(ev.out_boxes[i]);
  for (int j : objects) pred.object_boxes.push_back(ev.out_boxes[j]);
  return pred;
}

}  // namespace

RrPredictor make_rr_predictor(const ModelParams& params, const ModelConfig& cfg,
                              const std::vector<ScenePack>& packs) {
  auto current = std::make_shared<int>(-1);
  auto ev = std::make_shared<SceneEval>();
  return [&params, cfg, &packs, current, ev](const Scene& scene, int query_idx) {
    if (*current != scene.scene_id) {
      const ScenePack* pack = nullptr;
      for (const ScenePack& p : packs) {
        if (p.scene.scene_id == scene.scene_id) {
          pack = &p;
          break;
        }
      }
      if (!pack) throw std::runtime_error("make_rr_predictor: scene not packed");
      *ev = evaluate_scene(params, cfg, pack->scene, pack->boxset);
      *current = scene.scene_id;
    }
    return select_prediction(*ev, scene, query_idx, cfg.flags.two_step);
  };
}

void run_gen(const ExperimentConfig& cfg, const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "images");
  struct Split {
    const char* name;
    int count;
  };
  const Split splits[] = {{"train", cfg.n_train}, {"val", cfg.n_val}, {"test", cfg.n_test}};
  int next_id = 0;
  int threads = env_threads();
  for (const Split& split : splits) {
    std::vector<Scene> scenes(split.count);
    auto work = [&](int begin, int end) {
      for (int i = begin; i < end; ++i) {
        int id = next_id + i;
        scenes[i] = generate_scene(cfg.seed + static_cast<std::uint64_t>(id), cfg.scene, id);
      }
    };
    int t = std::max(1, std::min(threads, split.count));
    if (t == 1) {
      work(0, split.count);
    } else {
      std::vector<std::thread> pool;
      int chunk = (split.count + t - 1) / t;
      for (int k = 0; k < t; ++k) {
        int begin = k * chunk;
        int end = std::min(split.count, begin + chunk);
        if (begin < end) pool.emplace_back(work, begin, end);
      }
      for (std::thread& th : pool) th.join();
    }
    save_dataset((fs::path(out_dir) / (std::string(split.name) + ".jsonl")).string(), scenes);
    for (const Scene& s : scenes) {
      std::ostringstream name;
      name << "scene_" << std::setw(6) << std::setfill('0') << s.scene_id << ".ppm";
      write_ppm((fs::path(out_dir) / "images" / name.str()).string(), rasterize(s));
    }
    next_id += split.count;
  }
  save_config(cfg, (fs::path(out_dir) / "config.txt").string());
}

TrainResult run_train(const ExperimentConfig& cfg, const std::string& data_dir,
                      const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<Scene> train_scenes = load_split(data_dir, "train");
  std::vector<Scene> val_scenes = load_split(data_dir, "val");
  int threads = env_threads();
  std::vector<ScenePack> train_packs = make_packs(train_scenes, cfg.proposals, cfg.seed, threads);
  std::vector<ScenePack> val_packs = make_packs(val_scenes, cfg.proposals, cfg.seed, threads);

  ParamStore store;
  Rng rng(cfg.seed);
  ModelParams params = build_model(store, cfg.model, rng);
  TrainConfig tcfg = cfg.train;
  tcfg.seed = cfg.seed;
  TrainResult result = train(train_packs, val_packs, store, params, cfg.model, tcfg, cfg.map_l);

  save_params(store, (fs::path(out_dir) / "model.ckpt").string());
  save_config(cfg, (fs::path(out_dir) / "config.txt").string());
  std::ofstream log((fs::path(out_dir) / "metrics.jsonl").string(), std::ios::trunc);
  if (!log) throw std::runtime_error("cannot open metrics log for writing");
  for (const EpochMetrics& m : result.epochs) {
    json j = {{"epoch", m.epoch},         {"loss_rr", m.loss_rr},
              {"loss_box", m.loss_box},   {"loss_sgl", m.loss_sgl},
              {"val_subj_iou", m.val_subj_iou}, {"val_obj_iou", m.val_obj_iou},
              {"lr", m.lr}};
    log << j.dump() << "\n";
  }
  return result;
}

namespace {

void render_map_pair(const AttentionMap& gt, const AttentionMap& pred, const std::string& path) {
  const int scale = 12, gap = 4;
  Image img;
  img.width = gt.L * scale * 2 + gap;
  img.height = gt.L * scale;
  img.rgb.assign(static_cast<size_t>(img.width) * img.height * 3, 40);
  auto paint = [&](const AttentionMap& m, int x_off, std::array<std::uint8_t, 3> on) {
    for (int r = 0; r < m.L; ++r) {
      for (int c = 0; c < m.L; ++c) {
        std::array<std::uint8_t, 3> col = m.get(r, c) ? on : std::array<std::uint8_t, 3>{90, 90, 90};
        for (int py = r * scale; py < (r + 1) * scale - 1; ++py) {
          for (int px = c * scale; px < (c + 1) * scale - 1; ++px) {
            std::uint8_t* p = img.pixel(x_off + px, py);
            p[0] = col[0];
            p[1] = col[1];
            p[2] = col[2];
          }
        }
      }
    }
  };
  paint(gt, 0, {60, 200, 60});
  paint(pred, gt.L * scale + gap, {220, 80, 80});
  write_ppm(path, img);
}

void draw_box_outline(Image& img, const Box& b, std::array<std::uint8_t, 3> col) {
  int n = img.width;
  int x0 = std::clamp(static_cast<int>(std::floor(b.x * n)), 0, n - 1);
  int x1 = std::clamp(static_cast<int>(std::ceil(b.x2() * n)) - 1, 0, n - 1);
  int y0 = std::clamp(static_cast<int>(std::floor(b.y * n)), 0, n - 1);
  int y1 = std::clamp(static_cast<int>(std::ceil(b.y2() * n)) - 1, 0, n - 1);
  for (int x = x0; x <= x1; ++x) {
    for (int y : {y0, y1}) {
      std::uint8_t* p = img.pixel(x, y);
      p[0] = col[0];
      p[1] = col[1];
      p[2] = col[2];
    }
  }
  for (int y = y0; y <= y1; ++y) {
    for (int x : {x0, x1}) {
      std::uint8_t* p = img.pixel(x, y);
      p[0] = col[0];
      p[1] = col[1];
      p[2] = col[2];
    }
  }
}

Image upscale(const Image& src, int factor) {
  Image out;
  out.width = src.width * factor;
  out.height = src.height * factor;
  out.rgb.resize(static_cast<size_t>(out.width) * out.height * 3);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const std::uint8_t* s = src.pixel(x / factor, y / factor);
      std::uint8_t* d = out.pixel(x, y);
      d[0] = s[0];
      d[1] = s[1];
      d[2] = s[2];
    }
  }
  return out;
}

double std_error(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return sd / std::sqrt(static_cast<double>(xs.size()));
}

}  // namespace

EvalResult run_eval(const std::string& model_dir, const std::string& data_dir,
                    const std::string& split, const std::string& render_dir) {
  ExperimentConfig cfg = load_config((fs::path(model_dir) / "config.txt").string());
  std::vector<Scene> scenes = load_split(data_dir, split);

  ParamStore store;
  Rng rng(cfg.seed);
  ModelParams params = build_model(store, cfg.model, rng);
  load_params(store, (fs::path(model_dir) / "model.ckpt").string());

  std::vector<ScenePack> packs = make_packs(scenes, cfg.proposals, cfg.seed, env_threads());
  RrReport rr = evaluate_rr(make_rr_predictor(params, cfg.model, packs), scenes, cfg.map_l);

  auto decode = [&](const Scene& scene, const BoxSet& boxset) {
    SceneEval ev = evaluate_scene(params, cfg.model, scene, boxset);
    return decode_scene_graph(ev.entity_logits, ev.relation_logits, ev.pairs, cfg.decode_top_k);
  };
  SgReport sg = evaluate_sg_decoding(decode, scenes, cfg.proposals, cfg.seed, cfg.sg_iou_floor);

  if (!render_dir.empty()) {
    fs::create_directories(render_dir);
    int rendered = 0;
    for (const ScenePack& pack : packs) {
      if (rendered >= 8) break;
      SceneEval ev = evaluate_scene(params, cfg.model, pack.scene, pack.boxset);
      for (size_t q = 0; q < pack.scene.queries.size() && rendered < 8; ++q, ++rendered) {
        const Query& query = pack.scene.queries[q];
        QueryPrediction pred =
            select_prediction(ev, pack.scene, static_cast<int>(q), cfg.model.flags.two_step);
        std::vector<Box> gt_subj, gt_obj;
        for (int id : query.gt_subject_ids) gt_subj.push_back(pack.scene.entities[id].box);
        for (int id : query.gt_object_ids) gt_obj.push_back(pack.scene.entities[id].box);
        std::string base =
            "q" + std::to_string(rendered) + "_scene" + std::to_string(pack.scene.scene_id);
        render_map_pair(boxes_to_map(gt_subj, cfg.map_l),
                        boxes_to_map(pred.subject_boxes, cfg.map_l),
                        (fs::path(render_dir) / (base + "_subject.ppm")).string());
        render_map_pair(boxes_to_map(gt_obj, cfg.map_l),
                        boxes_to_map(pred.object_boxes, cfg.map_l),
                        (fs::path(render_dir) / (base + "_object.ppm")).string());
        Image overlay = upscale(rasterize(pack.scene), 4);
        for (const Box& b : gt_subj) draw_box_outline(overlay, b, {60, 220, 60});
        for (const Box& b : gt_obj) draw_box_outline(overlay, b, {60, 60, 220});
        for (const Box& b : pred.subject_boxes) draw_box_outline(overlay, b, {250, 250, 250});
        for (const Box& b : pred.object_boxes) draw_box_outline(overlay, b, {250, 250, 20});
        write_ppm((fs::path(render_dir) / (base + "_boxes.ppm")).string(), overlay);
      }
    }
  }

  EvalResult out;
  out.subject_iou = rr.subject_iou;
  out.object_iou = rr.object_iou;
  out.n_queries = rr.n_queries;
  out.sg = sg;
  out.per_query_subject = rr.per_query_subject;
  out.per_query_object = rr.per_query_object;
  json j;
  j["subject_iou"] = rr.subject_iou;
  j["object_iou"] = rr.object_iou;
  j["entity_acc"] = sg.entity_defined ? json(sg.entity_acc) : json(nullptr);
  j["relation_acc"] = sg.relation_defined ? json(sg.relation_acc) : json(nullptr);
  j["n_queries"] = rr.n_queries;
  j["n_entities"] = sg.n_entities;
  j["n_relations"] = sg.n_relations;
  out.json = j.dump();
  return out;
}

std::vector<AblateRow> run_ablate(const ExperimentConfig& cfg, const std::string& data_dir,
                                  const std::string& out_dir) {
  fs::create_directories(out_dir);
  const std::pair<const char*, const char*> variants[] = {
      {"DSG", "dsg"},       {"Two-step", "two-step"}, {"DSG-SGL", "no-sgl"},
      {"DSG-BR", "no-br"},  {"no-DSG", "no-dsg"}};
  std::vector<AblateRow> rows;
  json jrows = json::array();
  for (const auto& [label, ablation] : variants) {
    ExperimentConfig vcfg = cfg;
    apply_ablation(vcfg, ablation);
    std::string run_dir = (fs::path(out_dir) / ablation).string();
    run_train(vcfg, data_dir, run_dir);
    EvalResult ev = run_eval(run_dir, data_dir, "val", "");
    AblateRow row;
    row.name = label;
    row.subject_iou = ev.subject_iou;
    row.subject_se = std_error(ev.per_query_subject);
    row.object_iou = ev.object_iou;
    row.object_se = std_error(ev.per_query_object);
    rows.push_back(row);
    jrows.push_back({{"name", row.name},
                     {"subject_iou", row.subject_iou},
                     {"subject_se", row.subject_se},
                     {"object_iou", row.object_iou},
                     {"object_se", row.object_se}});
  }

  std::ofstream jf((fs::path(out_dir) / "ablation.json").string(), std::ios::trunc);
  jf << json({{"rows", jrows}}).dump(2) << "\n";

  std::ofstream tf((fs::path(out_dir) / "ablation.txt").string(), std::ios::trunc);
  tf << std::left << std::setw(12) << "variant" << std::right << std::setw(22) << "subject IOU"
     << std::setw(22) << "object IOU" << "\n";
  for (const AblateRow& r : rows) {
    std::ostringstream s1, s2;
    s1 << std::fixed << std::setprecision(4) << r.subject_iou << " +/- " << r.subject_se;
    s2 << std::fixed << std::setprecision(4) << r.object_iou << " +/- " << r.object_se;
    tf << std::left << std::setw(12) << r.name << std::right << std::setw(22) << s1.str()
       << std::setw(22) << s2.str() << "\n";
  }
  return rows;
}

}  // namespace dsg
