#pragma once

// Interaction-hotspot maps and confidence re-weighting: a detection's score is
// multiplied by the hotspot probability at its box center.

#include <map>
#include <string>
#include <vector>

#include "stakit/detection.hpp"

namespace stakit {

struct HotspotMap {
  std::string uid;
  std::size_t height = 0;
  std::size_t width = 0;
  Vector p;  // row-major, sums to 1
  // Frame resolution the detections live in; 0 means the grid itself.
  std::size_t frame_height = 0;
  std::size_t frame_width = 0;

  double at(std::size_t row, std::size_t col) const { return p[row * width + col]; }

  // Entries >= 0, sum within 1e-6 of 1, length height * width.
  void validate() const;

  static HotspotMap uniform(std::string uid, std::size_t height, std::size_t width);
};

enum class Sampling { nearest, bilinear };

// Nearest: value of the cell containing (x, y), coordinates clamped to the
// grid. Bilinear: interpolation between cell centers with edge clamping.
double sample_at(const HotspotMap& map, double x, double y, Sampling mode = Sampling::nearest);

// Upsamples to the map's frame resolution (when set) and renormalizes.
HotspotMap resize_to_frame(const HotspotMap& map);

// s <- s * p(center of box). Order and all other fields are preserved.
std::vector<Detection> reweight(const std::vector<Detection>& dets,
                                const std::map<std::string, HotspotMap>& maps,
                                Sampling mode = Sampling::nearest);

struct GaussianCenter {
  double x;
  double y;
  double sigma;
};

// Normalized sum of isotropic Gaussians evaluated at cell centers
// (col + 0.5, row + 0.5). No centers gives the uniform map.
HotspotMap synth_gaussian_map(std::string uid, std::size_t height, std::size_t width,
                              const std::vector<GaussianCenter>& centers);

}  // namespace stakit
