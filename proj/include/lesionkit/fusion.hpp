#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lesionkit/box.hpp"

namespace lesionkit {

// How a fused score is rescaled by cluster consensus, with n = number of
// distinct sources in the cluster and N = total number of sources.
enum class RescaleMode {
  MinClamp,      // s * min(n, N) / N
  Proportional,  // s * n / N
  None,
};

RescaleMode rescale_mode_from_string(std::string_view name);
const char* to_string(RescaleMode mode);

struct FusionConfig {
  // Minimum IoU (strict) between a detection and a cluster's current fused
  // box for the detection to join that cluster.
  double iou_thresh = 0.55;
  // Inputs scoring below this are dropped before clustering.
  double score_thresh = 0.0;
  // Per-model weight; models not listed weigh 1.0.
  std::map<std::string, double> model_weights;
  RescaleMode rescale_mode = RescaleMode::MinClamp;
  // Total number of contributing sources N. When unset, the number of
  // distinct (source_model, source_epoch) pairs observed in the input is
  // used; fuse_runs fills in the run count.
  std::optional<int> n_sources;

  double weight_of(const std::string& model) const;
  // Normalizer for effective scores: the mean of the declared model weights
  // (1.0 when none are declared). Effective score = score * weight / mean.
  double mean_weight() const;
};

void validate(const FusionConfig& cfg);

double rescale_factor(int cluster_sources, int total_sources, RescaleMode mode);

// A group of mutually overlapping detections and their fused representative.
// members hold (detection, effective score used as averaging weight) in the
// order the detections were placed. The fused box always lies inside the
// per-coordinate envelope of its members.
struct Cluster {
  std::vector<std::pair<Detection, double>> members;
  Detection fused;

  int distinct_sources() const;
};

// Weighted boxes fusion for the detections of a single image. Deterministic:
// inputs are ranked by effective score with a total tie order, each is merged
// into the cluster whose current fused box overlaps it most (IoU strictly
// above cfg.iou_thresh, same label) or opens a new cluster. Fused coordinates
// are effective-score-weighted member averages, the fused score is the member
// mean rescaled per cfg.rescale_mode and clamped to [0,1]. Identity fields of
// the fused detection are taken from the highest-ranked member.
std::vector<Cluster> wbf_clusters(const std::vector<Detection>& dets, const FusionConfig& cfg);
std::vector<Detection> weighted_boxes_fusion(const std::vector<Detection>& dets,
                                             const FusionConfig& cfg);

// Greedy non-maximum suppression baseline: keep the highest-scoring box,
// discard remaining same-label boxes with IoU strictly above iou_thresh
// against any kept box.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thresh);

// One detector run: every detection it contributes is stamped with this tag.
struct DetectionRun {
  std::string source_model;
  std::optional<int> source_epoch;
  std::vector<Detection> detections;
};

// Fuses several runs image by image and returns the union, ordered by
// image_id then descending score. Runs must carry distinct
// (source_model, source_epoch) tags. cfg.n_sources defaults to the number of
// runs. Per-image work fans out over n_threads with a deterministic merge.
std::vector<Detection> fuse_runs(const std::vector<DetectionRun>& runs, FusionConfig cfg = {},
                                 int n_threads = 1);

}  // namespace lesionkit
