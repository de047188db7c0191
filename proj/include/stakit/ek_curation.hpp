#pragma once

// Converts EPIC-Kitchens style active-object boxes and action segments into
// short-term anticipation records:
//   1. chain boxes of the same (video, noun) into tracks, dropping tracks
//      that pass through a frame with more than one box of that noun;
//   2. attach the earliest same-noun action segment starting at or after the
//      track's first frame;
//   3. cut the track before the segment starts;
//   4. emit one record per remaining box with the segment verb and the time
//      to contact (segment start - frame) / fps.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stakit/detection.hpp"

namespace stakit {

inline constexpr long kDefaultTrackGap = 30;
inline constexpr double kDefaultFps = 30.0;

struct BoxAnnotation {
  std::string video_id;
  long frame = 0;
  Label noun = 0;
  Box box;
};

struct ActionSegment {
  std::string video_id;
  long start = 0;
  long stop = 0;
  Label verb = 0;
  Label noun = 0;

  friend bool operator==(const ActionSegment&, const ActionSegment&) = default;
};

struct TrackPoint {
  long frame = 0;
  Box box;

  friend bool operator==(const TrackPoint&, const TrackPoint&) = default;
};

struct ObjectTrack {
  std::size_t id = 0;
  std::string video_id;
  Label noun = 0;
  std::vector<TrackPoint> points;  // strictly increasing frames
  std::optional<ActionSegment> segment;

  long first_frame() const { return points.front().frame; }
  long last_frame() const { return points.back().frame; }
};

struct StaRecord {
  std::string video_id;
  long frame = 0;
  Box box;
  Label noun = 0;
  Label verb = 0;
  double ttc = 0.0;
  std::string split;

  // "<video_id>_<frame>", the image key shared with detections.
  std::string uid() const;
};

// Per (video, noun), boxes sorted by frame are chained while consecutive
// frames differ by at most max_gap. Repeated boxes on one frame keep the
// first; the repetition is what drop_ambiguous_tracks looks for.
std::vector<ObjectTrack> build_tracks(std::span<const BoxAnnotation> boxes, long max_gap);

std::vector<ObjectTrack> drop_ambiguous_tracks(std::vector<ObjectTrack> tracks,
                                               std::span<const BoxAnnotation> boxes);

// Leaves `segment` empty when no candidate exists.
ObjectTrack match_track_to_segment(ObjectTrack track, std::span<const ActionSegment> segments);

// Removes points at or after the segment start; nullopt when nothing is left
// or the track has no segment.
std::optional<ObjectTrack> truncate_track(ObjectTrack track);

std::vector<StaRecord> emit_sta_records(const ObjectTrack& track, double fps,
                                        const std::string& split = "train");

struct CurationParams {
  double fps = kDefaultFps;
  long max_gap = kDefaultTrackGap;
  std::string split = "train";
};

// Full pipeline; records sorted by (video, frame, noun).
std::vector<StaRecord> curate(std::span<const BoxAnnotation> boxes,
                              std::span<const ActionSegment> segments,
                              const CurationParams& params = {});

}  // namespace stakit
