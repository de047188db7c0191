#include "stakit/hotspot.hpp"

#include <algorithm>
#include <cmath>

#include "stakit/error.hpp"

namespace stakit {

void HotspotMap::validate() const {
  if (height == 0 || width == 0) {
    throw Error(ErrorCode::invalid_argument, "hotspot map '" + uid + "' is empty");
  }
  if (p.size() != height * width) {
    throw Error(ErrorCode::dimension_mismatch,
                "hotspot map '" + uid + "' has " + std::to_string(p.size()) +
                    " values for a " + std::to_string(height) + "x" + std::to_string(width) +
                    " grid");
  }
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::invalid_argument,
                  "hotspot map '" + uid + "' has a negative or non-finite entry");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw Error(ErrorCode::invalid_argument,
                "hotspot map '" + uid + "' sums to " + std::to_string(total) + ", not 1");
  }
}

HotspotMap HotspotMap::uniform(std::string uid, std::size_t height, std::size_t width) {
  HotspotMap m;
  m.uid = std::move(uid);
  m.height = height;
  m.width = width;
  m.p.assign(height * width, 1.0 / static_cast<double>(height * width));
  return m;
}

double sample_at(const HotspotMap& map, double x, double y, Sampling mode) {
  const double max_col = static_cast<double>(map.width - 1);
  const double max_row = static_cast<double>(map.height - 1);
  if (mode == Sampling::nearest) {
    const double col = std::clamp(std::floor(x), 0.0, max_col);
    const double row = std::clamp(std::floor(y), 0.0, max_row);
    return map.at(static_cast<std::size_t>(row), static_cast<std::size_t>(col));
  }
  const double fx = std::clamp(x - 0.5, 0.0, max_col);
  const double fy = std::clamp(y - 0.5, 0.0, max_row);
  const auto c0 = static_cast<std::size_t>(std::floor(fx));
  const auto r0 = static_cast<std::size_t>(std::floor(fy));
  const std::size_t c1 = std::min(c0 + 1, map.width - 1);
  const std::size_t r1 = std::min(r0 + 1, map.height - 1);
  const double tx = fx - static_cast<double>(c0);
  const double ty = fy - static_cast<double>(r0);
  const double top = map.at(r0, c0) * (1.0 - tx) + map.at(r0, c1) * tx;
  const double bottom = map.at(r1, c0) * (1.0 - tx) + map.at(r1, c1) * tx;
  return top * (1.0 - ty) + bottom * ty;
}

HotspotMap resize_to_frame(const HotspotMap& map) {
  if (map.frame_height == 0 || map.frame_width == 0 ||
      (map.frame_height == map.height && map.frame_width == map.width)) {
    return map;
  }
  const Grid resized =
      bilinear_resize(Grid(map.height, map.width, 1, map.p), map.frame_height, map.frame_width);
  HotspotMap out;
  out.uid = map.uid;
  out.height = map.frame_height;
  out.width = map.frame_width;
  out.frame_height = map.frame_height;
  out.frame_width = map.frame_width;
  out.p.assign(resized.data().begin(), resized.data().end());
  double total = 0.0;
  for (double v : out.p) total += v;
  if (total > 0.0)
    for (double& v : out.p) v /= total;
  return out;
}

std::vector<Detection> reweight(const std::vector<Detection>& dets,
                                const std::map<std::string, HotspotMap>& maps, Sampling mode) {
  std::map<std::string, HotspotMap> resized;
  std::vector<Detection> out;
  out.reserve(dets.size());
  for (const Detection& d : dets) {
    auto it = resized.find(d.uid);
    if (it == resized.end()) {
      auto src = maps.find(d.uid);
      if (src == maps.end()) {
        throw Error(ErrorCode::not_found, "no hotspot map for uid '" + d.uid + "'");
      }
      it = resized.emplace(d.uid, resize_to_frame(src->second)).first;
    }
    Detection r = d;
    r.score = d.score * sample_at(it->second, d.box.center_x(), d.box.center_y(), mode);
    out.push_back(std::move(r));
  }
  return out;
}

HotspotMap synth_gaussian_map(std::string uid, std::size_t height, std::size_t width,
                              const std::vector<GaussianCenter>& centers) {
  if (height == 0 || width == 0) {
    throw Error(ErrorCode::invalid_argument, "hotspot map size must be positive");
  }
  if (centers.empty()) return HotspotMap::uniform(std::move(uid), height, width);
  for (const auto& c : centers) {
    if (!(c.sigma > 0.0)) {
      throw Error(ErrorCode::invalid_argument, "gaussian sigma must be positive");
    }
  }
  HotspotMap m;
  m.uid = std::move(uid);
  m.height = height;
  m.width = width;
  m.p.assign(height * width, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < height; ++r) {
    const double y = static_cast<double>(r) + 0.5;
    for (std::size_t c = 0; c < width; ++c) {
      const double x = static_cast<double>(c) + 0.5;
      double v = 0.0;
      for (const auto& g : centers) {
        const double dx = x - g.x;
        const double dy = y - g.y;
        v += std::exp(-(dx * dx + dy * dy) / (2.0 * g.sigma * g.sigma));
      }
      m.p[r * width + c] = v;
      total += v;
    }
  }
  if (!(total > 0.0)) return HotspotMap::uniform(std::move(m.uid), height, width);
  for (double& v : m.p) v /= total;
  return m;
}

}  // namespace stakit
