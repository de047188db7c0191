#include "stakit/ek_curation.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "stakit/error.hpp"

namespace stakit {

std::string StaRecord::uid() const { return video_id + "_" + std::to_string(frame); }

std::vector<ObjectTrack> build_tracks(std::span<const BoxAnnotation> boxes, long max_gap) {
  if (max_gap < 0) throw Error(ErrorCode::invalid_argument, "--gap must be non-negative");
  std::map<std::pair<std::string, Label>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (boxes[i].frame < 0) {
      throw Error(ErrorCode::invalid_argument,
                  "box in video '" + boxes[i].video_id + "' has a negative frame");
    }
    if (!boxes[i].box.ordered()) {
      throw Error(ErrorCode::invalid_argument, "box in video '" + boxes[i].video_id + "' frame " +
                                                   std::to_string(boxes[i].frame) + " is unordered");
    }
    groups[{boxes[i].video_id, boxes[i].noun}].push_back(i);
  }
  std::vector<ObjectTrack> tracks;
  for (auto& [key, idx] : groups) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return boxes[a].frame < boxes[b].frame; });
    ObjectTrack* current = nullptr;
    for (std::size_t i : idx) {
      const BoxAnnotation& b = boxes[i];
      if (current && b.frame == current->last_frame()) continue;
      if (!current || b.frame - current->last_frame() > max_gap) {
        tracks.push_back({tracks.size(), key.first, key.second, {}, std::nullopt});
        current = &tracks.back();
      }
      current->points.push_back({b.frame, b.box});
    }
  }
  return tracks;
}

std::vector<ObjectTrack> drop_ambiguous_tracks(std::vector<ObjectTrack> tracks,
                                               std::span<const BoxAnnotation> boxes) {
  std::map<std::tuple<std::string, long, Label>, std::size_t> counts;
  for (const BoxAnnotation& b : boxes) ++counts[{b.video_id, b.frame, b.noun}];
  std::erase_if(tracks, [&](const ObjectTrack& t) {
    return std::any_of(t.points.begin(), t.points.end(), [&](const TrackPoint& p) {
      return counts[{t.video_id, p.frame, t.noun}] >= 2;
    });
  });
  return tracks;
}

ObjectTrack match_track_to_segment(ObjectTrack track, std::span<const ActionSegment> segments) {
  track.segment.reset();
  if (track.points.empty()) return track;
  const ActionSegment* best = nullptr;
  for (const ActionSegment& s : segments) {
    if (s.video_id != track.video_id || s.noun != track.noun) continue;
    if (s.start < track.first_frame()) continue;
    if (!best || s.start < best->start) best = &s;
  }
  if (best) track.segment = *best;
  return track;
}

std::optional<ObjectTrack> truncate_track(ObjectTrack track) {
  if (!track.segment) return std::nullopt;
  const long start = track.segment->start;
  std::erase_if(track.points, [&](const TrackPoint& p) { return p.frame >= start; });
  if (track.points.empty()) return std::nullopt;
  return track;
}

std::vector<StaRecord> emit_sta_records(const ObjectTrack& track, double fps,
                                        const std::string& split) {
  if (!(fps > 0.0)) throw Error(ErrorCode::invalid_argument, "--fps must be positive");
  if (!track.segment) {
    throw Error(ErrorCode::invalid_argument, "track " + std::to_string(track.id) + " has no segment");
  }
  std::vector<StaRecord> out;
  for (const TrackPoint& p : track.points) {
    if (p.frame >= track.segment->start) {
      throw Error(ErrorCode::invalid_argument, "track " + std::to_string(track.id) +
                                                   " has a frame at or after its segment start");
    }
    out.push_back({track.video_id, p.frame, p.box, track.noun, track.segment->verb,
                   static_cast<double>(track.segment->start - p.frame) / fps, split});
  }
  return out;
}

std::vector<StaRecord> curate(std::span<const BoxAnnotation> boxes,
                              std::span<const ActionSegment> segments,
                              const CurationParams& params) {
  if (!(params.fps > 0.0)) throw Error(ErrorCode::invalid_argument, "--fps must be positive");
  for (const ActionSegment& s : segments) {
    if (s.stop <= s.start) {
      throw Error(ErrorCode::invalid_argument,
                  "segment in video '" + s.video_id + "' does not stop after it starts");
    }
  }
  std::vector<StaRecord> records;
  for (ObjectTrack& t : drop_ambiguous_tracks(build_tracks(boxes, params.max_gap), boxes)) {
    auto truncated = truncate_track(match_track_to_segment(std::move(t), segments));
    if (!truncated) continue;
    for (StaRecord& r : emit_sta_records(*truncated, params.fps, params.split))
      records.push_back(std::move(r));
  }
  std::stable_sort(records.begin(), records.end(), [](const StaRecord& a, const StaRecord& b) {
    return std::tie(a.video_id, a.frame, a.noun) < std::tie(b.video_id, b.frame, b.noun);
  });
  return records;
}

}  // namespace stakit
