#pragma once

// Synthetic end-to-end scenario: kitchens with a few activity zones, a noisy
// detector, Gaussian interaction hotspots around the true objects.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "stakit/affordance.hpp"
#include "stakit/hotspot.hpp"
#include "stakit/sta_eval.hpp"

namespace stakit {

struct DemoOptions {
  std::uint64_t seed = 7;
  std::size_t videos = 3;
  std::size_t zones_per_video = 2;
  std::size_t test_images = 24;
  std::size_t detections_per_image = 6;
  std::size_t k = kDefaultNeighbours;
  bool weighted = kDefaultSimilarityWeighting;
  bool hotspot_first = false;
  unsigned jobs = 1;
};

struct DemoData {
  std::vector<ClipRecord> clips;
  std::vector<GroundTruth> ground_truth;
  std::vector<Detection> detections;
  std::map<std::string, Vector> descriptors;  // per test image
  std::map<std::string, HotspotMap> hotspots;
  std::size_t num_nouns = 0;
  std::size_t num_verbs = 0;
};

DemoData synth_demo_data(const DemoOptions& options);

struct DemoResult {
  ZoneDatabase database;
  EvalReport baseline;  // raw detector
  EvalReport final;     // affordance fusion and hotspot re-weighting
  std::vector<MetricDelta> diff;
};

DemoResult run_demo(const DemoOptions& options);

}  // namespace stakit
