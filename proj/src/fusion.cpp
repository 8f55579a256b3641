#include "lesionkit/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "lesionkit/parallel.hpp"

namespace lesionkit {

RescaleMode rescale_mode_from_string(std::string_view name) {
  if (name == "min_clamp") return RescaleMode::MinClamp;
  if (name == "proportional") return RescaleMode::Proportional;
  if (name == "none") return RescaleMode::None;
  throw ValidationError("unknown rescale mode: " + std::string(name) +
                        " (expected min_clamp, proportional or none)");
}

const char* to_string(RescaleMode mode) {
  switch (mode) {
    case RescaleMode::MinClamp: return "min_clamp";
    case RescaleMode::Proportional: return "proportional";
    case RescaleMode::None: return "none";
  }
  return "?";
}

double FusionConfig::weight_of(const std::string& model) const {
  const auto it = model_weights.find(model);
  return it == model_weights.end() ? 1.0 : it->second;
}

double FusionConfig::mean_weight() const {
  if (model_weights.empty()) return 1.0;
  double sum = 0.0;
  for (const auto& [_, w] : model_weights) sum += w;
  return sum / static_cast<double>(model_weights.size());
}

void validate(const FusionConfig& cfg) {
  if (!(std::isfinite(cfg.iou_thresh) && cfg.iou_thresh > 0.0 && cfg.iou_thresh <= 1.0)) {
    throw ValidationError("fusion config: iou_thresh must lie in (0,1]");
  }
  if (!std::isfinite(cfg.score_thresh) || cfg.score_thresh < 0.0) {
    throw ValidationError("fusion config: score_thresh must be >= 0");
  }
  for (const auto& [model, w] : cfg.model_weights) {
    if (!(std::isfinite(w) && w > 0.0)) {
      throw ValidationError("fusion config: weight for model '" + model + "' must be > 0");
    }
  }
  if (cfg.n_sources && *cfg.n_sources < 1) {
    throw ValidationError("fusion config: n_sources must be >= 1");
  }
}

double rescale_factor(int cluster_sources, int total_sources, RescaleMode mode) {
  if (cluster_sources < 1 || total_sources < 1) {
    throw ValidationError("rescale_factor: source counts must be >= 1");
  }
  switch (mode) {
    case RescaleMode::MinClamp:
      return static_cast<double>(std::min(cluster_sources, total_sources)) / total_sources;
    case RescaleMode::Proportional:
      return static_cast<double>(cluster_sources) / total_sources;
    case RescaleMode::None:
      return 1.0;
  }
  return 1.0;
}

namespace {

using SourceTag = std::pair<std::string, std::optional<int>>;

SourceTag tag_of(const Detection& d) { return {d.source_model, d.source_epoch}; }

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Effective-score-weighted average of member coordinates, clamped into the
// member envelope so the Cluster invariant survives floating-point rounding.
// Falls back to the plain mean when every effective score is zero.
void refit_fused(Cluster& c) {
  double sw = 0.0;
  for (const auto& [_, w] : c.members) sw += w;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  if (sw > 0.0) {
    for (const auto& [d, w] : c.members) {
      x1 += w * d.box.x1;
      y1 += w * d.box.y1;
      x2 += w * d.box.x2;
      y2 += w * d.box.y2;
    }
    x1 /= sw;
    y1 /= sw;
    x2 /= sw;
    y2 /= sw;
  } else {
    const double n = static_cast<double>(c.members.size());
    for (const auto& [d, _] : c.members) {
      x1 += d.box.x1;
      y1 += d.box.y1;
      x2 += d.box.x2;
      y2 += d.box.y2;
    }
    x1 /= n;
    y1 /= n;
    x2 /= n;
    y2 /= n;
  }
  Box lo = c.members.front().first.box;
  Box hi = lo;
  for (const auto& [d, _] : c.members) {
    lo.x1 = std::min(lo.x1, d.box.x1);
    lo.y1 = std::min(lo.y1, d.box.y1);
    lo.x2 = std::min(lo.x2, d.box.x2);
    lo.y2 = std::min(lo.y2, d.box.y2);
    hi.x1 = std::max(hi.x1, d.box.x1);
    hi.y1 = std::max(hi.y1, d.box.y1);
    hi.x2 = std::max(hi.x2, d.box.x2);
    hi.y2 = std::max(hi.y2, d.box.y2);
  }
  auto clamp_env = [](double v, double a, double b) { return std::min(b, std::max(a, v)); };
  c.fused.box.x1 = clamp_env(x1, lo.x1, hi.x1);
  c.fused.box.y1 = clamp_env(y1, lo.y1, hi.y1);
  c.fused.box.x2 = clamp_env(x2, lo.x2, hi.x2);
  c.fused.box.y2 = clamp_env(y2, lo.y2, hi.y2);
}

}  // namespace

int Cluster::distinct_sources() const {
  std::set<SourceTag> tags;
  for (const auto& [d, _] : members) tags.insert(tag_of(d));
  return static_cast<int>(tags.size());
}

std::vector<Cluster> wbf_clusters(const std::vector<Detection>& dets, const FusionConfig& cfg) {
  validate(cfg);
  if (dets.empty()) return {};

  const std::string& image_id = dets.front().image_id;
  std::set<SourceTag> observed;
  for (const Detection& d : dets) {
    validate(d);
    if (d.image_id != image_id) {
      throw ValidationError("weighted_boxes_fusion: detections span multiple image_ids (" +
                            image_id + " vs " + d.image_id + ")");
    }
    observed.insert(tag_of(d));
  }
  const int total_sources =
      cfg.n_sources ? *cfg.n_sources : static_cast<int>(observed.size());

  const double mean_w = cfg.mean_weight();
  struct Ranked {
    const Detection* det;
    double eff;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(dets.size());
  for (const Detection& d : dets) {
    if (d.score < cfg.score_thresh) continue;
    ranked.push_back({&d, d.score * cfg.weight_of(d.source_model) / mean_w});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.eff != b.eff) return a.eff > b.eff;
    return detection_tie_before(*a.det, *b.det);
  });

  std::vector<Cluster> clusters;
  for (const Ranked& r : ranked) {
    // Match against the current fused box of each cluster, not its members.
    int best = -1;
    double best_iou = cfg.iou_thresh;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      if (clusters[i].fused.label != r.det->label) continue;
      const double v = iou(clusters[i].fused.box, r.det->box);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) {
      Cluster c;
      c.members.emplace_back(*r.det, r.eff);
      c.fused = *r.det;
      c.fused.score = clamp01(r.eff);
      clusters.push_back(std::move(c));
    } else {
      clusters[best].members.emplace_back(*r.det, r.eff);
      refit_fused(clusters[best]);
    }
  }

  for (Cluster& c : clusters) {
    double mean = 0.0;
    for (const auto& [_, w] : c.members) mean += w;
    mean /= static_cast<double>(c.members.size());
    const double f = rescale_factor(c.distinct_sources(), total_sources, cfg.rescale_mode);
    c.fused.score = clamp01(mean * f);
  }
  std::sort(clusters.begin(), clusters.end(),
            [](const Cluster& a, const Cluster& b) { return score_descending(a.fused, b.fused); });
  return clusters;
}

std::vector<Detection> weighted_boxes_fusion(const std::vector<Detection>& dets,
                                             const FusionConfig& cfg) {
  std::vector<Detection> out;
  for (Cluster& c : wbf_clusters(dets, cfg)) out.push_back(std::move(c.fused));
  return out;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thresh) {
  if (!(std::isfinite(iou_thresh) && iou_thresh > 0.0 && iou_thresh <= 1.0)) {
    throw ValidationError("nms: iou_thresh must lie in (0,1]");
  }
  if (dets.empty()) return {};
  const std::string& image_id = dets.front().image_id;
  for (const Detection& d : dets) {
    validate(d);
    if (d.image_id != image_id) {
      throw ValidationError("nms: detections span multiple image_ids");
    }
  }
  std::vector<Detection> sorted = dets;
  std::sort(sorted.begin(), sorted.end(), score_descending);
  std::vector<Detection> kept;
  for (const Detection& d : sorted) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.label == d.label && iou(k.box, d.box) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> fuse_runs(const std::vector<DetectionRun>& runs, FusionConfig cfg,
                                 int n_threads) {
  if (runs.empty()) throw ValidationError("fuse_runs: at least one run is required");
  std::set<SourceTag> tags;
  for (const DetectionRun& run : runs) {
    if (!tags.insert({run.source_model, run.source_epoch}).second) {
      throw ValidationError("fuse_runs: duplicate source tag (" + run.source_model + ", " +
                            (run.source_epoch ? std::to_string(*run.source_epoch) : "-") + ")");
    }
  }
  validate(cfg);
  if (!cfg.n_sources) cfg.n_sources = static_cast<int>(runs.size());

  std::map<std::string, std::vector<Detection>> per_image;
  for (const DetectionRun& run : runs) {
    for (Detection d : run.detections) {
      d.source_model = run.source_model;
      d.source_epoch = run.source_epoch;
      validate(d);
      per_image[d.image_id].push_back(std::move(d));
    }
  }

  std::vector<const std::vector<Detection>*> buckets;
  buckets.reserve(per_image.size());
  for (const auto& [_, dets] : per_image) buckets.push_back(&dets);

  std::vector<std::vector<Detection>> fused(buckets.size());
  parallel_for(buckets.size(), n_threads,
               [&](std::size_t i) { fused[i] = weighted_boxes_fusion(*buckets[i], cfg); });

  std::vector<Detection> out;
  for (auto& group : fused) {
    out.insert(out.end(), std::make_move_iterator(group.begin()),
               std::make_move_iterator(group.end()));
  }
  return out;
}

}  // namespace lesionkit
