#pragma once

// Text formats for every artifact the toolkit reads or writes.
//
// Writers are deterministic: fixed key order, shortest round-trip decimal
// text for doubles, one record per line for JSON-lines, trailing newline.
// Readers raise ParseError naming the source, the 1-based line and the field.

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stakit/affordance.hpp"
#include "stakit/ek_curation.hpp"
#include "stakit/grad_check.hpp"
#include "stakit/hotspot.hpp"
#include "stakit/sta_eval.hpp"

namespace stakit::io {

using Json = nlohmann::ordered_json;

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

// Parses one JSON document; `line` is the line it came from (0 for a whole file).
Json parse_json(std::string_view text, const std::string& source, std::size_t line = 0);
// Compact for JSON-lines records, two-space indented for documents.
std::string dump_compact(const Json& j);
std::string dump_document(const Json& j);

// Location of a value being decoded, used to build ParseErrors.
struct Where {
  std::string source;
  std::size_t line = 0;
};

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j, const Where& where, const std::string& field);
Json grid_to_json(const Grid& g);
Grid grid_from_json(const Json& j, const Where& where, const std::string& field);

// Weight files: one JSON object keyed by tensor name.
std::string format_tensors(const TensorSet& set);
TensorSet parse_tensors(std::string_view text, const std::string& source);

// Clips, one ClipRecord per line.
std::string format_clips(const std::vector<ClipRecord>& clips);
std::vector<ClipRecord> parse_clips(std::string_view text, const std::string& source);

std::string format_zones(const ZoneDatabase& db);
ZoneDatabase parse_zones(std::string_view text, const std::string& source);

// A query descriptor: either a bare array or {"visual": [...]}.
Vector parse_descriptor(std::string_view text, const std::string& source);

Json distribution_to_json(const CategoricalDistribution& d);
CategoricalDistribution distribution_from_json(const Json& j, const Where& where,
                                               const std::string& field);

// Noun and verb distributions travelling together.
struct LabelDistributions {
  CategoricalDistribution nouns;
  CategoricalDistribution verbs;
};
Json label_distributions_to_json(const LabelDistributions& d);
// Accepts {"nouns": {...}, "verbs": {...}} (extra keys ignored).
LabelDistributions parse_label_distributions(std::string_view text, const std::string& source);

Json knn_to_json(const KnnResult& knn);

Json detection_to_json(const Detection& d);
std::string format_detections(const std::vector<Detection>& dets);
std::vector<Detection> parse_detections(std::string_view text, const std::string& source);

struct GroundTruthSet {
  std::vector<GroundTruth> boxes;
  std::set<std::string> images;  // every uid seen, including lines without a box
};
std::string format_ground_truth(const std::vector<GroundTruth>& gts);
GroundTruthSet parse_ground_truth(std::string_view text, const std::string& source);

std::string format_hotspots(const std::vector<HotspotMap>& maps);
std::map<std::string, HotspotMap> parse_hotspots(std::string_view text, const std::string& source);

Json eval_report_to_json(const EvalReport& r);
EvalReport eval_report_from_json(const Json& j, const Where& where);
std::string format_eval_report(const EvalReport& r);
EvalReport parse_eval_report(std::string_view text, const std::string& source);

Json deltas_to_json(const std::vector<MetricDelta>& deltas);

std::string format_grad_check(const GradCheckReport& r);
GradCheckReport parse_grad_check(std::string_view text, const std::string& source);

// CSV with an optional header row. Boxes: video_id,frame,noun,x1,y1,x2,y2.
// Segments: video_id,start,stop,verb,noun.
std::vector<BoxAnnotation> parse_box_csv(std::string_view text, const std::string& source);
std::vector<ActionSegment> parse_segment_csv(std::string_view text, const std::string& source);

// JSON-lines readable as ground truth (extra keys: video_id, frame, split).
std::string format_sta_records(const std::vector<StaRecord>& records);
std::vector<StaRecord> parse_sta_records(std::string_view text, const std::string& source);

}  // namespace stakit::io
