#pragma once

// Top-k mean average precision for short-term anticipation.
//
// Each image keeps only its k highest-scored detections. Within a noun class,
// detections are visited in descending score order and matched greedily to
// the unmatched ground truth box with the highest IoU (at least the
// threshold). A matched detection is a true positive for a criterion when the
// pair also satisfies that criterion's verb and time-to-contact conditions, so
// true positives are nested across criteria. AP uses all-point interpolation;
// mAP averages over the noun classes that have ground truth.
//
// Four criteria are evaluated in one pass:
//   N      box (IoU >= threshold) and noun
//   N+V    ... and verb
//   N+δ    ... and |ttc_pred - ttc_gt| <= tolerance
//   All    box, noun, verb and ttc

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stakit/detection.hpp"

namespace stakit {

inline constexpr double kDefaultIouThreshold = 0.5;
inline constexpr double kDefaultTtcTolerance = 0.25;
inline constexpr std::size_t kDefaultTopK = 5;

// IoU of two boxes; 0 when either has zero area or they are disjoint.
double iou(const Box& a, const Box& b);

struct MatchCriterion {
  std::string name;
  double iou_threshold = kDefaultIouThreshold;
  bool require_verb = false;
  bool require_ttc = false;
  double ttc_tolerance = kDefaultTtcTolerance;

  bool accepts(const Detection& det, const GroundTruth& gt) const;
};

struct EvalParams {
  double iou_threshold = kDefaultIouThreshold;
  double ttc_tolerance = kDefaultTtcTolerance;
  std::size_t top_k = kDefaultTopK;
  unsigned jobs = 1;

  void validate() const;
};

inline const std::vector<std::string> kMetricNames = {"N", "N+V", "N+delta", "All"};

std::vector<MatchCriterion> standard_criteria(const EvalParams& params);

struct MetricResult {
  std::string name;
  double map = 0.0;
  std::map<Label, double> class_ap;
};

struct EvalCounts {
  std::size_t images = 0;
  std::size_t ground_truth = 0;
  std::size_t predictions = 0;
  std::size_t kept = 0;
};

struct EvalReport {
  std::vector<MetricResult> metrics;  // N, N+V, N+delta, All
  EvalCounts counts;
  EvalParams params;

  // Throws not_found for an unknown metric name.
  double metric(const std::string& name) const;
};

// Stable: ties keep input order.
std::vector<Detection> top_k_per_image(const std::vector<Detection>& dets, std::size_t k);

// All-point interpolated AP of a ranked list of TP/FP decisions.
double average_precision(const std::vector<bool>& true_positive, std::size_t num_ground_truth);

// `images` lists every evaluated image (including images without ground
// truth); uids from the ground truth are added automatically. Throws
// undefined when there is no ground truth at all and invalid_argument when a
// detection refers to an unknown image.
EvalReport evaluate(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                    const std::set<std::string>& images = {}, const EvalParams& params = {});

struct MetricDelta {
  std::string name;
  double candidate = 0.0;
  double baseline = 0.0;
  double delta = 0.0;
  std::optional<double> relative_gain_pct;  // unset when the baseline is 0
};

// 100 * (x - y) / y, unset for y == 0.
std::optional<double> relative_gain(double x, double y);

// Per-metric deltas of `candidate` relative to `baseline`.
std::vector<MetricDelta> diff_reports(const EvalReport& candidate, const EvalReport& baseline);

}  // namespace stakit
