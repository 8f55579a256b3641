#include "lesionkit/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <set>

#include "lesionkit/rng.hpp"

namespace lesionkit {

std::vector<SadMixtureComponent> default_sad_mixture() {
  return {{1.0, 4.0, 10.0}, {1.0, 10.0, 30.0}, {1.0, 30.0, 60.0}};
}

void validate(const SceneConfig& cfg) {
  if (cfg.n_images < 1) throw ValidationError("scene config: n_images must be >= 1");
  if (cfg.image_width < 1 || cfg.image_height < 1) {
    throw ValidationError("scene config: image dimensions must be >= 1");
  }
  if (!(cfg.pixel_spacing_mm > 0.0)) {
    throw ValidationError("scene config: pixel spacing must be > 0");
  }
  if (cfg.min_lesions < 0 || cfg.max_lesions < cfg.min_lesions) {
    throw ValidationError("scene config: lesions-per-image range is invalid");
  }
  if (cfg.sad_mixture.empty()) throw ValidationError("scene config: sad_mixture is empty");
  double max_hi = 0.0;
  for (const SadMixtureComponent& c : cfg.sad_mixture) {
    if (!(c.weight > 0.0)) throw ValidationError("scene config: mixture weights must be > 0");
    if (!(c.lo_mm > 0.0 && c.hi_mm > c.lo_mm)) {
      throw ValidationError("scene config: mixture components need 0 < lo_mm < hi_mm");
    }
    max_hi = std::max(max_hi, c.hi_mm);
  }
  if (!(cfg.recist_pad_px >= 0.0)) throw ValidationError("scene config: pad must be >= 0");
  if (!(cfg.long_axis_ratio_min >= 1.0 && cfg.long_axis_ratio_max >= cfg.long_axis_ratio_min)) {
    throw ValidationError("scene config: long axis ratio range is invalid");
  }
  // Worst case: a long axis at 0 or 90 degrees spans its full length.
  const double worst_px =
      max_hi * cfg.long_axis_ratio_max / cfg.pixel_spacing_mm + 2.0 * cfg.recist_pad_px;
  if (worst_px > std::min(cfg.image_width, cfg.image_height)) {
    throw ValidationError("scene config: image too small for the requested SAD range");
  }
}

namespace {

std::string image_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%06d", index);
  return buf;
}

struct LesionGeometry {
  RecistMeasurement recist;
  double sad_mm = 0;
};

// Draw order: mixture component, SAD, long-axis ratio, angle, center x, y.
LesionGeometry draw_lesion(Rng& rng, const SceneConfig& cfg) {
  double total_w = 0.0;
  for (const SadMixtureComponent& c : cfg.sad_mixture) total_w += c.weight;
  double pick = rng.uniform01() * total_w;
  const SadMixtureComponent* comp = &cfg.sad_mixture.back();
  for (const SadMixtureComponent& c : cfg.sad_mixture) {
    if (pick < c.weight) {
      comp = &c;
      break;
    }
    pick -= c.weight;
  }
  const double sad_mm = rng.uniform(comp->lo_mm, comp->hi_mm);
  const double lad_mm = sad_mm * rng.uniform(cfg.long_axis_ratio_min, cfg.long_axis_ratio_max);
  const double theta = rng.uniform(0.0, std::numbers::pi);

  const double sad_px = sad_mm / cfg.pixel_spacing_mm;
  const double lad_px = lad_mm / cfg.pixel_spacing_mm;
  const double c = std::cos(theta), s = std::sin(theta);
  const double dx =
      std::max(std::abs(lad_px / 2.0 * c), std::abs(sad_px / 2.0 * s)) + cfg.recist_pad_px;
  const double dy =
      std::max(std::abs(lad_px / 2.0 * s), std::abs(sad_px / 2.0 * c)) + cfg.recist_pad_px;
  const double cx = rng.uniform(dx, cfg.image_width - dx);
  const double cy = rng.uniform(dy, cfg.image_height - dy);

  LesionGeometry g;
  g.sad_mm = sad_mm;
  g.recist.long_axis = {{cx - lad_px / 2.0 * c, cy - lad_px / 2.0 * s},
                        {cx + lad_px / 2.0 * c, cy + lad_px / 2.0 * s}};
  g.recist.short_axis = {{cx + sad_px / 2.0 * s, cy - sad_px / 2.0 * c},
                         {cx - sad_px / 2.0 * s, cy + sad_px / 2.0 * c}};
  return g;
}

}  // namespace

Scene gen_scene(const SceneConfig& cfg) {
  validate(cfg);
  Scene scene;
  scene.manifest.image_width = cfg.image_width;
  scene.manifest.image_height = cfg.image_height;
  scene.manifest.pixel_spacing_mm = cfg.pixel_spacing_mm;
  scene.manifest.config = cfg;
  scene.manifest.image_ids.reserve(cfg.n_images);

  for (int i = 0; i < cfg.n_images; ++i) {
    const std::string id = image_name(i);
    scene.manifest.image_ids.push_back(id);
    Rng rng(derive_subseed(cfg.seed, static_cast<std::uint64_t>(i)));
    const int count = cfg.min_lesions == cfg.max_lesions
                          ? cfg.min_lesions
                          : rng.uniform_int(cfg.min_lesions, cfg.max_lesions);
    for (int k = 0; k < count; ++k) {
      const LesionGeometry g = draw_lesion(rng, cfg);
      LesionAnnotation ann;
      ann.image_id = id;
      ann.recist = g.recist;
      ann.sad_mm = g.sad_mm;
      ann.box = recist_to_box(g.recist, cfg.recist_pad_px);
      validate(ann);
      scene.annotations.push_back(std::move(ann));
    }
  }
  return scene;
}

void validate(const DetectorProfile& profile) {
  if (profile.name.empty()) throw ValidationError("detector profile: name is empty");
  if (!(profile.jitter_sigma_px >= 0.0)) {
    throw ValidationError("detector profile: jitter sigma must be >= 0");
  }
  if (!(profile.miss_prob >= 0.0 && profile.miss_prob <= 1.0)) {
    throw ValidationError("detector profile: miss probability must lie in [0,1]");
  }
  if (!(profile.fp_rate >= 0.0)) throw ValidationError("detector profile: fp rate must be >= 0");
  if (!(profile.tp_score.sigma >= 0.0 && profile.fp_score.sigma >= 0.0)) {
    throw ValidationError("detector profile: score sigmas must be >= 0");
  }
}

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

Box jitter_box(const Box& b, double sigma, double width, double height, Rng& rng) {
  double x1 = b.x1 + sigma * rng.gaussian(0.0, 1.0);
  double y1 = b.y1 + sigma * rng.gaussian(0.0, 1.0);
  double x2 = b.x2 + sigma * rng.gaussian(0.0, 1.0);
  double y2 = b.y2 + sigma * rng.gaussian(0.0, 1.0);
  if (x1 > x2) std::swap(x1, x2);
  if (y1 > y2) std::swap(y1, y2);
  auto clip = [](double v, double hi) { return std::min(hi, std::max(0.0, v)); };
  return Box{clip(x1, width), clip(y1, height), clip(x2, width), clip(y2, height)};
}

}  // namespace

std::vector<Detection> simulate_detector(const Scene& scene, const DetectorProfile& profile,
                                         std::uint64_t seed) {
  validate(profile);
  const SceneConfig& cfg = scene.manifest.config;
  const double w = scene.manifest.image_width;
  const double h = scene.manifest.image_height;

  std::map<std::string, std::vector<const LesionAnnotation*>> by_image;
  for (const LesionAnnotation& a : scene.annotations) by_image[a.image_id].push_back(&a);

  std::vector<Detection> dets;
  for (std::size_t i = 0; i < scene.manifest.image_ids.size(); ++i) {
    const std::string& id = scene.manifest.image_ids[i];
    Rng rng(derive_subseed(seed, i));
    if (auto it = by_image.find(id); it != by_image.end()) {
      for (const LesionAnnotation* ann : it->second) {
        if (rng.uniform01() < profile.miss_prob) continue;
        Detection d;
        d.image_id = id;
        d.box = jitter_box(ann->box, profile.jitter_sigma_px, w, h, rng);
        d.score = clamp01(rng.gaussian(profile.tp_score.mean, profile.tp_score.sigma));
        d.source_model = profile.name;
        dets.push_back(std::move(d));
      }
    }
    const int n_fp = rng.poisson(profile.fp_rate);
    for (int k = 0; k < n_fp; ++k) {
      const LesionGeometry g = draw_lesion(rng, cfg);
      Detection d;
      d.image_id = id;
      d.box = recist_to_box(g.recist, cfg.recist_pad_px);
      d.score = clamp01(rng.gaussian(profile.fp_score.mean, profile.fp_score.sigma));
      d.source_model = profile.name;
      dets.push_back(std::move(d));
    }
  }
  return dets;
}

std::uint64_t detector_seed(std::uint64_t scene_seed, std::size_t profile_index) {
  // Distinct stream family from the per-image scene streams.
  return derive_subseed(scene_seed ^ 0x6A09E667F3BCC909ULL, profile_index);
}

ExperimentResult ensemble_experiment(const SceneConfig& scene_cfg,
                                     const std::vector<DetectorProfile>& profiles,
                                     FusionConfig fusion_cfg, EvalConfig eval_cfg) {
  if (profiles.size() < 2) {
    throw ValidationError("ensemble_experiment: at least two detector profiles are required");
  }
  std::set<std::string> names;
  for (const DetectorProfile& p : profiles) {
    validate(p);
    if (!names.insert(p.name).second) {
      throw ValidationError("ensemble_experiment: duplicate profile name '" + p.name + "'");
    }
  }

  const Scene scene = gen_scene(scene_cfg);
  if (!eval_cfg.n_images) eval_cfg.n_images = scene.manifest.image_ids.size();

  ExperimentResult result;
  result.n_annotations = scene.annotations.size();
  std::vector<DetectionRun> runs;
  for (std::size_t k = 0; k < profiles.size(); ++k) {
    std::vector<Detection> dets =
        simulate_detector(scene, profiles[k], detector_seed(scene_cfg.seed, k));
    result.individual.emplace_back(profiles[k].name,
                                   stratified_report(dets, scene.annotations, eval_cfg));
    runs.push_back({profiles[k].name, std::nullopt, std::move(dets)});
  }
  const std::vector<Detection> fused = fuse_runs(runs, fusion_cfg);
  result.fused = stratified_report(fused, scene.annotations, eval_cfg);
  return result;
}

std::string render_comparison_table(const ExperimentResult& result) {
  const EvalReport& ref = result.fused;
  std::string out;
  char line[512];
  std::string header = "method                    mAP";
  for (double t : ref.fp_targets) {
    char cell[32];
    std::snprintf(cell, sizeof(cell), "   S@%-5.3g", t);
    header += cell;
  }
  out += header + "\n";
  auto row = [&](const std::string& name, const EvalReport& r) {
    std::snprintf(line, sizeof(line), "%-22s %6.2f", name.c_str(), r.overall.map * 100.0);
    out += line;
    for (double s : r.overall.sensitivity_at) {
      std::snprintf(line, sizeof(line), "   %6.2f", s * 100.0);
      out += line;
    }
    out += "\n";
  };
  for (const auto& [name, report] : result.individual) row(name, report);
  row("fused", result.fused);
  return out;
}

}  // namespace lesionkit
