#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lesionkit/box.hpp"

namespace lesionkit {

struct MatchedDetection {
  Detection det;
  // Index into the annotation vector the match ran against; empty for FPs.
  std::optional<std::size_t> annotation_index;
  bool is_tp = false;
  double iou = 0.0;
};

// Outcome of greedy IoU matching at full recall. tp + fp equals the number
// of detections, tp + fn the number of annotations.
struct MatchResult {
  // Per-image processing order: image_id ascending, then score descending.
  std::vector<MatchedDetection> detections;
  std::size_t tp = 0, fp = 0, fn = 0;
  std::size_t n_annotations = 0;
  std::map<int, std::size_t> annotations_per_label;
  // Distinct ids observed in detections or annotations, sorted.
  std::vector<std::string> image_ids;
};

// Greedy matcher: per image, detections are processed by descending score
// (total tie order); each matches the still-unmatched same-label annotation
// with highest IoU when that IoU >= iou_thresh, otherwise it counts as FP.
// Duplicate hits on an already-matched annotation are FPs.
MatchResult match(const std::vector<Detection>& dets, const std::vector<LesionAnnotation>& gts,
                  double iou_thresh = 0.5);

struct FrocPoint {
  double score_threshold = 0;
  double fp_per_image = 0;
  double sensitivity = 0;
};

// Operating points swept over the distinct detection scores, thresholds
// descending, so fp_per_image and sensitivity are both non-decreasing.
struct FrocCurve {
  std::vector<FrocPoint> points;
};

inline const std::vector<double> kDefaultFpTargets = {0.5, 1, 2, 4, 6, 8, 16};

// n_images must cover every observed image id, including pure-FP images.
FrocCurve froc_curve(const MatchResult& matched, std::size_t n_images);

// Best sensitivity over operating points with fp_per_image <= fp_target,
// 0 when no point qualifies.
double sensitivity_at(const FrocCurve& curve, double fp_target);
std::vector<double> sensitivities_at(const FrocCurve& curve, const std::vector<double>& targets);

struct ApResult {
  double map = 0;  // mean over labels with annotations; equals the single AP in single-class use
  std::map<int, double> per_label;
};

// Area under the all-point interpolated precision envelope at the matcher's
// IoU threshold. Labels without annotations are skipped.
ApResult average_precision(const MatchResult& matched);

struct EvalConfig {
  double match_iou = 0.5;
  std::vector<double> fp_targets = kDefaultFpTargets;
  // Number of evaluated images. Defaults to the distinct ids observed in
  // detections and annotations together.
  std::optional<std::size_t> n_images;
  // Fallback pixel spacing for deriving SAD from RECIST endpoints when an
  // annotation carries neither sad_mm nor its own spacing.
  std::optional<double> default_spacing_mm_px;
};

void validate(const EvalConfig& cfg);

struct MetricBlock {
  double map = 0;
  std::map<int, double> ap_per_label;
  FrocCurve froc;
  std::vector<double> sensitivity_at;  // parallel to EvalReport::fp_targets
  std::size_t tp = 0, fp = 0, fn = 0;
};

struct BinReport {
  SizeBin bin = SizeBin::Small;
  std::size_t gt_count = 0;
  bool empty = true;  // no annotations fell into this bin; metrics are absent
  MetricBlock metrics;
};

struct EvalReport {
  std::size_t n_images = 0, n_annotations = 0, n_detections = 0;
  double match_iou = 0.5;
  std::vector<double> fp_targets;
  MetricBlock overall;
  std::vector<BinReport> bins;  // small/medium/large when stratified, else empty
};

// sad_mm if present, else short_axis_mm(recist, spacing) when derivable.
std::optional<double> resolved_sad_mm(const LesionAnnotation& ann,
                                      std::optional<double> default_spacing_mm_px);

// Full evaluation: matching, FROC sensitivities at the configured FP targets
// and average precision.
EvalReport evaluate(const std::vector<Detection>& dets, const std::vector<LesionAnnotation>& gts,
                    const EvalConfig& cfg = {});

// evaluate() plus one sub-report per size bin. For each bin, annotations in
// the other bins act as IGNORE regions: a detection whose best overlap
// (IoU >= match_iou, same label) is an out-of-bin annotation is excluded from
// both TP and FP counts before the bin is scored. Every annotation must have
// a derivable SAD.
EvalReport stratified_report(const std::vector<Detection>& dets,
                             const std::vector<LesionAnnotation>& gts,
                             const EvalConfig& cfg = {});

}  // namespace lesionkit
