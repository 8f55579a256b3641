#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lesionkit/box.hpp"
#include "lesionkit/eval.hpp"
#include "lesionkit/fusion.hpp"

namespace lesionkit {

// One component of the lesion-size mixture: with probability proportional to
// weight, SAD is drawn uniformly from [lo_mm, hi_mm).
struct SadMixtureComponent {
  double weight = 1.0;
  double lo_mm = 0.0;
  double hi_mm = 0.0;
};

// Default mixture places equal mass in each size stratum.
std::vector<SadMixtureComponent> default_sad_mixture();

struct SceneConfig {
  std::uint64_t seed = 0;
  int n_images = 1;
  int image_width = 512;
  int image_height = 512;
  double pixel_spacing_mm = 0.8;
  int min_lesions = 1;
  int max_lesions = 3;
  std::vector<SadMixtureComponent> sad_mixture = default_sad_mixture();
  double recist_pad_px = kDefaultRecistPadPx;
  // Long axis = SAD times a ratio drawn uniformly from this range.
  double long_axis_ratio_min = 1.05;
  double long_axis_ratio_max = 1.6;
};

void validate(const SceneConfig& cfg);

struct SceneManifest {
  std::vector<std::string> image_ids;
  int image_width = 0;
  int image_height = 0;
  double pixel_spacing_mm = 1.0;
  SceneConfig config;
};

struct Scene {
  std::vector<LesionAnnotation> annotations;
  SceneManifest manifest;
};

// Synthetic ground truth: for each image, 1-3 lesions (configurable) with a
// RECIST cross at random orientation, SAD drawn from the mixture, placed so
// the padded box stays fully inside the image. Deterministic per seed; each
// image uses sub-stream derive_subseed(seed, image_index).
Scene gen_scene(const SceneConfig& cfg);

struct ScoreModel {
  double mean = 0.5;
  double sigma = 0.1;  // Gaussian, clipped into [0,1]
};

// A synthetic detector: per lesion it either misses or emits the ground-truth
// box with per-corner Gaussian jitter and a TP-model score; per image it adds
// Poisson(fp_rate) false positives at uniform positions with lesion-like
// sizes and FP-model scores.
struct DetectorProfile {
  std::string name;
  double jitter_sigma_px = 0.0;
  double miss_prob = 0.0;
  double fp_rate = 0.0;  // Poisson mean per image
  ScoreModel tp_score{0.8, 0.1};
  ScoreModel fp_score{0.3, 0.1};
};

void validate(const DetectorProfile& profile);

std::vector<Detection> simulate_detector(const Scene& scene, const DetectorProfile& profile,
                                         std::uint64_t seed);

struct ExperimentResult {
  std::vector<std::pair<std::string, EvalReport>> individual;
  EvalReport fused;
  std::size_t n_annotations = 0;
};

// The per-detector seed used by ensemble_experiment for profile index k.
std::uint64_t detector_seed(std::uint64_t scene_seed, std::size_t profile_index);

// Simulate every profile on one scene, fuse the runs, and score individuals
// and the fusion side by side (stratified reports).
ExperimentResult ensemble_experiment(const SceneConfig& scene_cfg,
                                     const std::vector<DetectorProfile>& profiles,
                                     FusionConfig fusion_cfg = {}, EvalConfig eval_cfg = {});

// Plain-text side-by-side table (mAP and S@ each FP target per method).
std::string render_comparison_table(const ExperimentResult& result);

}  // namespace lesionkit
