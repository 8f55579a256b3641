#include "lesionkit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace lesionkit {

void validate(const EvalConfig& cfg) {
  if (!(std::isfinite(cfg.match_iou) && cfg.match_iou > 0.0 && cfg.match_iou <= 1.0)) {
    throw ValidationError("eval config: match_iou must lie in (0,1]");
  }
  if (cfg.fp_targets.empty()) {
    throw ValidationError("eval config: fp_targets must be non-empty");
  }
  for (double t : cfg.fp_targets) {
    if (!(std::isfinite(t) && t >= 0.0)) {
      throw ValidationError("eval config: fp targets must be >= 0");
    }
  }
  if (cfg.n_images && *cfg.n_images < 1) {
    throw ValidationError("eval config: n_images must be >= 1");
  }
  if (cfg.default_spacing_mm_px && !(*cfg.default_spacing_mm_px > 0.0)) {
    throw ValidationError("eval config: default spacing must be > 0");
  }
}

MatchResult match(const std::vector<Detection>& dets, const std::vector<LesionAnnotation>& gts,
                  double iou_thresh) {
  if (!(std::isfinite(iou_thresh) && iou_thresh > 0.0 && iou_thresh <= 1.0)) {
    throw ValidationError("match: iou_thresh must lie in (0,1]");
  }
  for (const Detection& d : dets) validate(d);
  for (const LesionAnnotation& a : gts) validate(a);

  std::map<std::string, std::vector<std::size_t>> dets_by_image;
  std::map<std::string, std::vector<std::size_t>> gts_by_image;
  for (std::size_t i = 0; i < dets.size(); ++i) dets_by_image[dets[i].image_id].push_back(i);
  for (std::size_t i = 0; i < gts.size(); ++i) gts_by_image[gts[i].image_id].push_back(i);

  MatchResult r;
  r.n_annotations = gts.size();
  if (!gts.empty()) r.annotations_per_label[0] = gts.size();  // single-class ground truth

  std::set<std::string> ids;
  for (const auto& [id, _] : dets_by_image) ids.insert(id);
  for (const auto& [id, _] : gts_by_image) ids.insert(id);
  r.image_ids.assign(ids.begin(), ids.end());

  r.detections.reserve(dets.size());
  for (const std::string& image_id : r.image_ids) {
    auto dit = dets_by_image.find(image_id);
    if (dit == dets_by_image.end()) continue;
    std::vector<std::size_t> order = dit->second;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return score_descending(dets[a], dets[b]);
    });
    const auto git = gts_by_image.find(image_id);
    static const std::vector<std::size_t> kNone;
    const std::vector<std::size_t>& gt_idx = git == gts_by_image.end() ? kNone : git->second;
    std::vector<bool> taken(gt_idx.size(), false);

    for (std::size_t di : order) {
      const Detection& d = dets[di];
      if (d.label != 0) {
        // Annotations are single-class; off-label detections can never match.
        r.detections.push_back({d, std::nullopt, false, 0.0});
        ++r.fp;
        continue;
      }
      int best = -1;
      double best_iou = 0.0;
      for (std::size_t j = 0; j < gt_idx.size(); ++j) {
        if (taken[j]) continue;
        const double v = iou(d.box, gts[gt_idx[j]].box);
        if (v > best_iou) {
          best_iou = v;
          best = static_cast<int>(j);
        }
      }
      if (best >= 0 && best_iou >= iou_thresh) {
        taken[best] = true;
        r.detections.push_back({d, gt_idx[best], true, best_iou});
        ++r.tp;
      } else {
        r.detections.push_back({d, std::nullopt, false, best >= 0 ? best_iou : 0.0});
        ++r.fp;
      }
    }
  }
  r.fn = r.n_annotations - r.tp;
  return r;
}

FrocCurve froc_curve(const MatchResult& matched, std::size_t n_images) {
  if (matched.n_annotations == 0) {
    throw EvalError("froc: sensitivity is undefined with zero annotations");
  }
  if (n_images < 1 || n_images < matched.image_ids.size()) {
    throw ValidationError("froc: n_images must cover every observed image id");
  }
  std::vector<std::pair<double, bool>> hits;  // (score, is_tp)
  hits.reserve(matched.detections.size());
  for (const MatchedDetection& m : matched.detections) hits.emplace_back(m.det.score, m.is_tp);
  std::sort(hits.begin(), hits.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  FrocCurve curve;
  const double total_gt = static_cast<double>(matched.n_annotations);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < hits.size();) {
    const double threshold = hits[i].first;
    for (; i < hits.size() && hits[i].first == threshold; ++i) {
      if (hits[i].second) ++tp;
      else ++fp;
    }
    curve.points.push_back({threshold, static_cast<double>(fp) / static_cast<double>(n_images),
                            static_cast<double>(tp) / total_gt});
  }
  return curve;
}

double sensitivity_at(const FrocCurve& curve, double fp_target) {
  double best = 0.0;
  for (const FrocPoint& p : curve.points) {
    if (p.fp_per_image <= fp_target) best = std::max(best, p.sensitivity);
  }
  return best;
}

std::vector<double> sensitivities_at(const FrocCurve& curve, const std::vector<double>& targets) {
  std::vector<double> out;
  out.reserve(targets.size());
  for (double t : targets) out.push_back(sensitivity_at(curve, t));
  return out;
}

ApResult average_precision(const MatchResult& matched) {
  if (matched.n_annotations == 0) {
    throw EvalError("average_precision: undefined with zero annotations");
  }
  // Group detections per label; annotations are single-class (label 0).
  std::map<int, std::vector<const MatchedDetection*>> per_label;
  for (const MatchedDetection& m : matched.detections) per_label[m.det.label].push_back(&m);

  ApResult result;
  double sum = 0.0;
  std::size_t n_labels = 0;
  for (const auto& [label, gt_count] : matched.annotations_per_label) {
    if (gt_count == 0) continue;
    std::vector<const MatchedDetection*> dets;
    if (auto it = per_label.find(label); it != per_label.end()) dets = it->second;
    std::sort(dets.begin(), dets.end(), [](const MatchedDetection* a, const MatchedDetection* b) {
      return score_descending(a->det, b->det);
    });
    std::vector<double> recall, precision;
    std::size_t tp = 0, fp = 0;
    for (const MatchedDetection* m : dets) {
      if (m->is_tp) ++tp;
      else ++fp;
      recall.push_back(static_cast<double>(tp) / static_cast<double>(gt_count));
      precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    }
    // All-point interpolation: envelope of max precision at recall >= r.
    double ap = 0.0;
    double run_max = 0.0;
    std::vector<double> envelope(precision.size());
    for (std::size_t i = precision.size(); i-- > 0;) {
      run_max = std::max(run_max, precision[i]);
      envelope[i] = run_max;
    }
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i) {
      ap += (recall[i] - prev_recall) * envelope[i];
      prev_recall = recall[i];
    }
    result.per_label[label] = ap;
    sum += ap;
    ++n_labels;
  }
  result.map = n_labels > 0 ? sum / static_cast<double>(n_labels) : 0.0;
  return result;
}

std::optional<double> resolved_sad_mm(const LesionAnnotation& ann,
                                      std::optional<double> default_spacing_mm_px) {
  if (ann.sad_mm) return ann.sad_mm;
  if (ann.recist && default_spacing_mm_px) {
    return short_axis_mm(*ann.recist, *default_spacing_mm_px);
  }
  return std::nullopt;
}

namespace {

MetricBlock metrics_from(const MatchResult& m, std::size_t n_images,
                         const std::vector<double>& fp_targets) {
  MetricBlock block;
  block.tp = m.tp;
  block.fp = m.fp;
  block.fn = m.fn;
  block.froc = froc_curve(m, n_images);
  block.sensitivity_at = sensitivities_at(block.froc, fp_targets);
  const ApResult ap = average_precision(m);
  block.map = ap.map;
  block.ap_per_label = ap.per_label;
  return block;
}

// IGNORE semantics: a detection whose best same-label overlap at or above
// iou_thresh lands on an out-of-bin annotation is dropped from the bin's
// evaluation entirely.
std::vector<Detection> drop_ignored(const std::vector<Detection>& dets,
                                    const std::vector<LesionAnnotation>& gts,
                                    const std::vector<bool>& in_bin, double iou_thresh) {
  std::map<std::string, std::vector<std::size_t>> gts_by_image;
  for (std::size_t i = 0; i < gts.size(); ++i) gts_by_image[gts[i].image_id].push_back(i);

  std::vector<Detection> kept;
  kept.reserve(dets.size());
  for (const Detection& d : dets) {
    int best = -1;
    double best_iou = 0.0;
    if (d.label == 0) {
      if (auto it = gts_by_image.find(d.image_id); it != gts_by_image.end()) {
        for (std::size_t gi : it->second) {
          const double v = iou(d.box, gts[gi].box);
          if (v >= iou_thresh && v > best_iou) {
            best_iou = v;
            best = static_cast<int>(gi);
          }
        }
      }
    }
    if (best >= 0 && !in_bin[static_cast<std::size_t>(best)]) continue;
    kept.push_back(d);
  }
  return kept;
}

std::size_t resolve_n_images(const MatchResult& m, const EvalConfig& cfg) {
  const std::size_t observed = m.image_ids.size();
  if (cfg.n_images) {
    if (*cfg.n_images < observed) {
      throw ValidationError("eval: n_images is smaller than the number of observed image ids");
    }
    return *cfg.n_images;
  }
  return std::max<std::size_t>(observed, 1);
}

}  // namespace

EvalReport evaluate(const std::vector<Detection>& dets, const std::vector<LesionAnnotation>& gts,
                    const EvalConfig& cfg) {
  validate(cfg);
  if (gts.empty()) throw EvalError("evaluate: no annotations to score against");
  EvalReport report;
  report.match_iou = cfg.match_iou;
  report.fp_targets = cfg.fp_targets;
  report.n_annotations = gts.size();
  report.n_detections = dets.size();
  const MatchResult m = match(dets, gts, cfg.match_iou);
  report.n_images = resolve_n_images(m, cfg);
  report.overall = metrics_from(m, report.n_images, cfg.fp_targets);
  return report;
}

EvalReport stratified_report(const std::vector<Detection>& dets,
                             const std::vector<LesionAnnotation>& gts, const EvalConfig& cfg) {
  EvalReport report = evaluate(dets, gts, cfg);

  std::vector<double> sad(gts.size());
  std::string missing;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto v = resolved_sad_mm(gts[i], cfg.default_spacing_mm_px);
    if (!v) {
      if (!missing.empty()) missing += ", ";
      missing += gts[i].image_id + "[" + std::to_string(i) + "]";
      continue;
    }
    sad[i] = *v;
  }
  if (!missing.empty()) {
    throw EvalError("stratified evaluation needs a SAD for every annotation; missing for: " +
                    missing);
  }

  for (SizeBin bin : kAllSizeBins) {
    BinReport sub;
    sub.bin = bin;
    std::vector<bool> in_bin(gts.size());
    std::vector<LesionAnnotation> bin_gts;
    for (std::size_t i = 0; i < gts.size(); ++i) {
      in_bin[i] = bin_of(sad[i]) == bin;
      if (in_bin[i]) bin_gts.push_back(gts[i]);
    }
    sub.gt_count = bin_gts.size();
    if (!bin_gts.empty()) {
      sub.empty = false;
      const std::vector<Detection> kept = drop_ignored(dets, gts, in_bin, cfg.match_iou);
      const MatchResult m = match(kept, bin_gts, cfg.match_iou);
      sub.metrics = metrics_from(m, report.n_images, cfg.fp_targets);
    }
    report.bins.push_back(std::move(sub));
  }
  return report;
}

}  // namespace lesionkit
