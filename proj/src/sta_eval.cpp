#include "stakit/sta_eval.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include "stakit/error.hpp"

namespace stakit {

double iou(const Box& a, const Box& b) {
  if (a.area() <= 0.0 || b.area() <= 0.0) return 0.0;
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

bool MatchCriterion::accepts(const Detection& det, const GroundTruth& gt) const {
  if (det.noun != gt.noun) return false;
  if (require_verb && det.verb != gt.verb) return false;
  if (require_ttc && !(std::abs(det.ttc - gt.ttc) <= ttc_tolerance)) return false;
  return iou(det.box, gt.box) >= iou_threshold;
}

void EvalParams::validate() const {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "--iou must lie in (0, 1)");
  }
  if (!(ttc_tolerance > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "--ttc-tol must be positive");
  }
  if (top_k == 0) throw Error(ErrorCode::invalid_argument, "--topk must be at least 1");
  if (jobs == 0) throw Error(ErrorCode::invalid_argument, "--jobs must be at least 1");
}

std::vector<MatchCriterion> standard_criteria(const EvalParams& params) {
  const double iou_t = params.iou_threshold;
  const double tol = params.ttc_tolerance;
  return {{kMetricNames[0], iou_t, false, false, tol},
          {kMetricNames[1], iou_t, true, false, tol},
          {kMetricNames[2], iou_t, false, true, tol},
          {kMetricNames[3], iou_t, true, true, tol}};
}

double EvalReport::metric(const std::string& name) const {
  for (const MetricResult& m : metrics)
    if (m.name == name) return m.map;
  throw Error(ErrorCode::not_found, "report has no metric '" + name + "'");
}

namespace {

// Indices of the detections that survive the per-image top-k cut, in input order.
std::vector<std::size_t> top_k_indices(const std::vector<Detection>& dets, std::size_t k) {
  std::map<std::string, std::vector<std::size_t>> per_image;
  for (std::size_t i = 0; i < dets.size(); ++i) per_image[dets[i].uid].push_back(i);
  std::vector<bool> keep(dets.size(), false);
  for (auto& [uid, idx] : per_image) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return dets[a].score > dets[b].score;
    });
    for (std::size_t i = 0; i < std::min(k, idx.size()); ++i) keep[idx[i]] = true;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dets.size(); ++i)
    if (keep[i]) out.push_back(i);
  return out;
}

struct ClassWork {
  Label noun;
  std::size_t num_gt;
};

// Greedy box+noun matching of one class: each ranked detection takes the
// unmatched ground truth with the highest IoU >= threshold (first on ties).
std::vector<const GroundTruth*> match_class(
    const std::vector<Detection>& dets, const std::vector<std::size_t>& ranked,
    const std::map<std::string, std::vector<const GroundTruth*>>& gt_by_image,
    const ClassWork& work, double iou_threshold) {
  std::set<const GroundTruth*> taken;
  std::vector<const GroundTruth*> matches;
  matches.reserve(ranked.size());
  for (std::size_t idx : ranked) {
    const Detection& d = dets[idx];
    const GroundTruth* best = nullptr;
    double best_iou = -1.0;
    auto it = gt_by_image.find(d.uid);
    if (it != gt_by_image.end()) {
      for (const GroundTruth* g : it->second) {
        if (g->noun != work.noun || taken.contains(g)) continue;
        const double o = iou(d.box, g->box);
        if (o >= iou_threshold && o > best_iou) {
          best_iou = o;
          best = g;
        }
      }
    }
    if (best) taken.insert(best);
    matches.push_back(best);
  }
  return matches;
}

}  // namespace

std::vector<Detection> top_k_per_image(const std::vector<Detection>& dets, std::size_t k) {
  std::vector<Detection> out;
  for (std::size_t i : top_k_indices(dets, k)) out.push_back(dets[i]);
  return out;
}

double average_precision(const std::vector<bool>& true_positive, std::size_t num_ground_truth) {
  if (num_ground_truth == 0) return 0.0;
  const std::size_t n = true_positive.size();
  std::vector<double> precision(n);
  std::vector<double> recall(n);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (true_positive[i]) ++hits;
    precision[i] = static_cast<double>(hits) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(hits) / static_cast<double>(num_ground_truth);
  }
  // Precision envelope: best precision at any recall >= the current one.
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  double previous_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ap += (recall[i] - previous_recall) * precision[i];
    previous_recall = recall[i];
  }
  return ap;
}

EvalReport evaluate(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                    const std::set<std::string>& images, const EvalParams& params) {
  params.validate();
  if (gts.empty()) {
    throw Error(ErrorCode::undefined, "no ground truth boxes: mAP is undefined");
  }
  std::set<std::string> image_set = images;
  std::map<std::string, std::vector<const GroundTruth*>> gt_by_image;
  std::map<Label, std::size_t> gt_per_class;
  for (const GroundTruth& g : gts) {
    image_set.insert(g.uid);
    gt_by_image[g.uid].push_back(&g);
    ++gt_per_class[g.noun];
  }
  for (const Detection& d : dets) {
    if (!image_set.contains(d.uid)) {
      throw Error(ErrorCode::invalid_argument,
                  "detection refers to image '" + d.uid + "' which has no ground truth entry");
    }
  }

  const std::vector<std::size_t> kept = top_k_indices(dets, params.top_k);
  std::map<Label, std::vector<std::size_t>> ranked;
  for (std::size_t idx : kept) ranked[dets[idx].noun].push_back(idx);
  for (auto& [noun, idx] : ranked) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return dets[a].score > dets[b].score;
    });
  }

  std::vector<ClassWork> classes;
  for (const auto& [noun, count] : gt_per_class) classes.push_back({noun, count});

  EvalReport report;
  report.params = params;
  report.counts = {image_set.size(), gts.size(), dets.size(), kept.size()};

  static const std::vector<std::size_t> kNone;
  const std::vector<MatchCriterion> criteria = standard_criteria(params);
  // aps[criterion][class]
  std::vector<std::vector<double>> aps(criteria.size(), std::vector<double>(classes.size(), 0.0));
  auto run = [&](std::size_t first, std::size_t stride) {
    for (std::size_t c = first; c < classes.size(); c += stride) {
      auto it = ranked.find(classes[c].noun);
      const std::vector<std::size_t>& order = it == ranked.end() ? kNone : it->second;
      const auto matches = match_class(dets, order, gt_by_image, classes[c], params.iou_threshold);
      for (std::size_t m = 0; m < criteria.size(); ++m) {
        std::vector<bool> tp(order.size());
        for (std::size_t i = 0; i < order.size(); ++i)
          tp[i] = matches[i] != nullptr && criteria[m].accepts(dets[order[i]], *matches[i]);
        aps[m][c] = average_precision(tp, classes[c].num_gt);
      }
    }
  };
  if (params.jobs > 1 && classes.size() > 1) {
    std::vector<std::future<void>> workers;
    for (unsigned j = 0; j < params.jobs; ++j)
      workers.push_back(std::async(std::launch::async, run, j, params.jobs));
    for (auto& w : workers) w.get();
  } else {
    run(0, 1);
  }

  for (std::size_t m = 0; m < criteria.size(); ++m) {
    MetricResult result;
    result.name = criteria[m].name;
    double total = 0.0;
    for (std::size_t c = 0; c < classes.size(); ++c) {
      result.class_ap[classes[c].noun] = aps[m][c];
      total += aps[m][c];
    }
    result.map = total / static_cast<double>(classes.size());
    report.metrics.push_back(std::move(result));
  }
  return report;
}

std::optional<double> relative_gain(double x, double y) {
  if (y == 0.0) return std::nullopt;
  return 100.0 * ((x - y) / y);
}

std::vector<MetricDelta> diff_reports(const EvalReport& candidate, const EvalReport& baseline) {
  if (candidate.metrics.size() != baseline.metrics.size()) {
    throw Error(ErrorCode::invalid_argument, "reports were computed with different criteria");
  }
  std::vector<MetricDelta> out;
  for (const MetricResult& m : candidate.metrics) {
    const double y = baseline.metric(m.name);
    out.push_back({m.name, m.map, y, m.map - y, relative_gain(m.map, y)});
  }
  return out;
}

}  // namespace stakit
