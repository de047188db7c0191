#include "stakit/detection.hpp"

#include "stakit/error.hpp"

namespace stakit {

void Detection::validate() const {
  if (!box.ordered()) {
    throw Error(ErrorCode::invalid_argument, "detection in '" + uid + "' has an unordered box");
  }
  if (!(ttc > 0.0)) {
    throw Error(ErrorCode::invalid_argument,
                "detection in '" + uid + "' has non-positive time to contact");
  }
  if (!(score >= 0.0 && score <= 1.0)) {
    throw Error(ErrorCode::invalid_argument,
                "detection in '" + uid + "' has score outside [0, 1]");
  }
}

void GroundTruth::validate() const {
  if (!box.ordered()) {
    throw Error(ErrorCode::invalid_argument, "ground truth in '" + uid + "' has an unordered box");
  }
  if (!(ttc > 0.0)) {
    throw Error(ErrorCode::invalid_argument,
                "ground truth in '" + uid + "' has non-positive time to contact");
  }
}

}  // namespace stakit
