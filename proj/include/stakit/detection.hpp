#pragma once

#include <optional>
#include <string>

#include "stakit/tensor.hpp"

namespace stakit {

using Label = int;

// Pixel box with x1 < x2 and y1 < y2.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }
  double center_x() const noexcept { return 0.5 * (x1 + x2); }
  double center_y() const noexcept { return 0.5 * (y1 + y2); }
  bool ordered() const noexcept { return x1 < x2 && y1 < y2; }

  friend bool operator==(const Box&, const Box&) = default;
};

// One short-term anticipation prediction: where (box), what (noun, verb),
// when (time to contact, seconds) and how sure (score).
struct Detection {
  std::string uid;
  Box box;
  Label noun = 0;
  Label verb = 0;
  double ttc = 0.0;
  double score = 0.0;
  std::optional<Vector> noun_probs;
  std::optional<Vector> verb_probs;

  // Throws invalid_argument on an unordered box, ttc <= 0 or score outside [0, 1].
  void validate() const;
};

struct GroundTruth {
  std::string uid;
  Box box;
  Label noun = 0;
  Label verb = 0;
  double ttc = 0.0;

  void validate() const;
};

}  // namespace stakit
