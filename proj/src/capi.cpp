#include "stakit/stakit.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "stakit/affordance.hpp"
#include "stakit/demo.hpp"
#include "stakit/ek_curation.hpp"
#include "stakit/error.hpp"
#include "stakit/grad_check.hpp"
#include "stakit/hotspot.hpp"
#include "stakit/io.hpp"
#include "stakit/sta_eval.hpp"

struct stakit_zone_db {
  stakit::ZoneDatabase db;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_error_json;

void set_error(stakit_status status, const std::string& message, const stakit::io::Json& extra = {}) {
  g_last_error = message;
  stakit::io::Json j{{"error", stakit_status_name(status)}, {"message", message}};
  if (extra.is_object())
    for (const auto& [k, v] : extra.items()) j[k] = v;
  g_last_error_json = j.dump();
}

template <typename F>
stakit_status guarded(F&& body) {
  try {
    body();
    return STAKIT_OK;
  } catch (const stakit::ParseError& e) {
    set_error(STAKIT_E_PARSE, e.what(),
              stakit::io::Json{{"file", e.file()}, {"line", e.line()}, {"field", e.field()}});
    return STAKIT_E_PARSE;
  } catch (const stakit::Error& e) {
    const auto status = static_cast<stakit_status>(static_cast<int>(e.code()));
    set_error(status, e.what());
    return status;
  } catch (const std::bad_alloc&) {
    set_error(STAKIT_E_INTERNAL, "out of memory");
    return STAKIT_E_INTERNAL;
  } catch (const std::exception& e) {
    set_error(STAKIT_E_INTERNAL, e.what());
    return STAKIT_E_INTERNAL;
  }
}

void require(const void* p, const char* name) {
  if (p == nullptr) {
    throw stakit::Error(stakit::ErrorCode::invalid_argument, std::string(name) + " is null");
  }
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const std::string& text) {
  require(out, "output pointer");
  *out = duplicate(text);
}

// Source name for error messages; null paths are rejected by load().
std::string src(const char* path) { return path ? path : ""; }

std::string load(const char* path, const char* what) {
  require(path, what);
  return stakit::io::read_text(path);
}

stakit::KnnOptions knn_options(const stakit_afford_options* options) {
  const stakit_afford_options o = options ? *options : stakit_afford_default_options();
  return {o.k, o.rescale_to_unit != 0};
}

std::string afford_query_json(const stakit::ZoneDatabase& db, std::span<const double> descriptor,
                              const stakit_afford_options* options) {
  const stakit_afford_options o = options ? *options : stakit_afford_default_options();
  const stakit::KnnResult knn = stakit::knn_query(descriptor, db.zones, knn_options(options));
  stakit::io::LabelDistributions dists{
      stakit::affordance_distribution(knn, db.zones, db.noun_vocab, stakit::LabelKind::noun,
                                      o.weighted != 0),
      stakit::affordance_distribution(knn, db.zones, db.verb_vocab, stakit::LabelKind::verb,
                                      o.weighted != 0)};
  stakit::io::Json doc{{"k", knn.k}, {"weighted", o.weighted != 0}, {"neighbours", stakit::io::knn_to_json(knn)}};
  const stakit::io::Json labels = stakit::io::label_distributions_to_json(dists);
  for (const auto& [key, value] : labels.items()) doc[key] = value;
  return stakit::io::dump_document(doc);
}

stakit::EvalParams eval_params(const stakit_eval_params* params) {
  const stakit_eval_params p = params ? *params : stakit_eval_default_params();
  stakit::EvalParams out;
  out.iou_threshold = p.iou_threshold;
  out.ttc_tolerance = p.ttc_tolerance;
  out.top_k = p.top_k;
  out.jobs = p.jobs;
  return out;
}

}  // namespace

extern "C" {

const char* stakit_version(void) { return "1.0.0"; }

const char* stakit_status_name(stakit_status status) {
  switch (status) {
    case STAKIT_OK: return "ok";
    case STAKIT_E_INTERNAL: return "internal";
    default: break;
  }
  const int code = static_cast<int>(status);
  if (code >= 1 && code <= 7) return stakit::error_code_name(static_cast<stakit::ErrorCode>(code));
  return "unknown";
}

const char* stakit_last_error(void) { return g_last_error.c_str(); }

const char* stakit_last_error_json(void) { return g_last_error_json.c_str(); }

void stakit_string_free(char* s) { std::free(s); }

stakit_status stakit_zone_db_build(const char* clips_path, double theta, size_t history,
                                   stakit_zone_db** out) {
  return guarded([&] {
    require(out, "output pointer");
    const auto clips = stakit::io::parse_clips(load(clips_path, "clips path"), src(clips_path));
    auto handle = std::make_unique<stakit_zone_db>();
    handle->db = stakit::build_database(clips, stakit::visual_same_zone, {theta, history});
    *out = handle.release();
  });
}

stakit_status stakit_zone_db_load(const char* zones_path, stakit_zone_db** out) {
  return guarded([&] {
    require(out, "output pointer");
    auto handle = std::make_unique<stakit_zone_db>();
    handle->db = stakit::io::parse_zones(load(zones_path, "zones path"), src(zones_path));
    *out = handle.release();
  });
}

stakit_status stakit_zone_db_save(const stakit_zone_db* db, const char* zones_path) {
  return guarded([&] {
    require(db, "zone database");
    require(zones_path, "zones path");
    stakit::io::write_text(zones_path, stakit::io::format_zones(db->db));
  });
}

stakit_status stakit_zone_db_to_json(const stakit_zone_db* db, char** out) {
  return guarded([&] {
    require(db, "zone database");
    emit(out, stakit::io::format_zones(db->db));
  });
}

stakit_status stakit_zone_db_zone_count(const stakit_zone_db* db, size_t* out) {
  return guarded([&] {
    require(db, "zone database");
    require(out, "output pointer");
    *out = db->db.zones.size();
  });
}

void stakit_zone_db_free(stakit_zone_db* db) { delete db; }

stakit_afford_options stakit_afford_default_options(void) {
  return {stakit::kDefaultNeighbours, stakit::kDefaultSimilarityWeighting ? 1 : 0, 0};
}

stakit_status stakit_afford_query(const stakit_zone_db* db, const double* descriptor,
                                  size_t length, const stakit_afford_options* options, char** out) {
  return guarded([&] {
    require(db, "zone database");
    require(descriptor, "descriptor");
    emit(out, afford_query_json(db->db, {descriptor, length}, options));
  });
}

stakit_status stakit_afford_query_file(const stakit_zone_db* db, const char* descriptor_path,
                                       const stakit_afford_options* options, char** out) {
  return guarded([&] {
    require(db, "zone database");
    const stakit::Vector desc =
        stakit::io::parse_descriptor(load(descriptor_path, "descriptor path"), src(descriptor_path));
    emit(out, afford_query_json(db->db, desc, options));
  });
}

stakit_status stakit_afford_fuse(const char* affordance_path, const char* detector_path, char** out) {
  return guarded([&] {
    const auto aff = stakit::io::parse_label_distributions(load(affordance_path, "affordance path"),
                                                           src(affordance_path));
    const auto sta =
        stakit::io::parse_label_distributions(load(detector_path, "detector path"), src(detector_path));
    const stakit::io::LabelDistributions fused{stakit::fuse_distributions(aff.nouns, sta.nouns),
                                               stakit::fuse_distributions(aff.verbs, sta.verbs)};
    emit(out, stakit::io::dump_document(stakit::io::label_distributions_to_json(fused)));
  });
}

stakit_status stakit_afford_apply(const char* detections_path, const char* distributions_path,
                                  char** out) {
  return guarded([&] {
    const auto dets =
        stakit::io::parse_detections(load(detections_path, "detections path"), src(detections_path));
    const auto dists = stakit::io::parse_label_distributions(
        load(distributions_path, "distributions path"), src(distributions_path));
    emit(out, stakit::io::format_detections(
                  stakit::apply_affordance_to_detections(dets, dists.nouns, dists.verbs)));
  });
}

stakit_status stakit_hotspot_reweight(const char* detections_path, const char* maps_path,
                                      int bilinear, char** out) {
  return guarded([&] {
    const auto dets =
        stakit::io::parse_detections(load(detections_path, "detections path"), src(detections_path));
    const auto maps = stakit::io::parse_hotspots(load(maps_path, "maps path"), src(maps_path));
    const auto mode = bilinear ? stakit::Sampling::bilinear : stakit::Sampling::nearest;
    emit(out, stakit::io::format_detections(stakit::reweight(dets, maps, mode)));
  });
}

stakit_eval_params stakit_eval_default_params(void) {
  return {stakit::kDefaultIouThreshold, stakit::kDefaultTtcTolerance, stakit::kDefaultTopK, 1};
}

stakit_status stakit_eval_sta(const char* detections_path, const char* ground_truth_path,
                              const stakit_eval_params* params, char** out) {
  return guarded([&] {
    const stakit::EvalParams p = eval_params(params);
    p.validate();
    const auto dets =
        stakit::io::parse_detections(load(detections_path, "detections path"), src(detections_path));
    const auto gt = stakit::io::parse_ground_truth(load(ground_truth_path, "ground truth path"),
                                                   src(ground_truth_path));
    emit(out, stakit::io::format_eval_report(stakit::evaluate(dets, gt.boxes, gt.images, p)));
  });
}

stakit_status stakit_eval_diff(const char* candidate_report_path, const char* baseline_report_path,
                               char** out) {
  return guarded([&] {
    const auto candidate = stakit::io::parse_eval_report(
        load(candidate_report_path, "candidate report path"), src(candidate_report_path));
    const auto baseline = stakit::io::parse_eval_report(
        load(baseline_report_path, "baseline report path"), src(baseline_report_path));
    stakit::io::Json doc{{"deltas", stakit::io::deltas_to_json(stakit::diff_reports(candidate, baseline))}};
    emit(out, stakit::io::dump_document(doc));
  });
}

stakit_status stakit_relative_gain(double candidate, double baseline, double* out) {
  return guarded([&] {
    require(out, "output pointer");
    const auto gain = stakit::relative_gain(candidate, baseline);
    if (!gain) throw stakit::Error(stakit::ErrorCode::undefined, "relative gain over a zero baseline");
    *out = *gain;
  });
}

stakit_status stakit_curate_ek(const char* boxes_csv_path, const char* segments_csv_path,
                               double fps, long max_gap, const char* split, char** out) {
  return guarded([&] {
    const auto boxes = stakit::io::parse_box_csv(load(boxes_csv_path, "boxes path"), src(boxes_csv_path));
    const auto segments =
        stakit::io::parse_segment_csv(load(segments_csv_path, "segments path"), src(segments_csv_path));
    stakit::CurationParams params;
    params.fps = fps;
    params.max_gap = max_gap;
    if (split != nullptr) params.split = split;
    emit(out, stakit::io::format_sta_records(stakit::curate(boxes, segments, params)));
  });
}

stakit_grad_check_options stakit_grad_check_default_options(void) {
  const stakit::ProblemShape shape;
  return {0, 1e-5, shape.d_model, shape.heads, shape.tokens, shape.kv_tokens, shape.frames, 0};
}

stakit_status stakit_grad_check(const char* op, const stakit_grad_check_options* options,
                                char** report_out, char** weights_out) {
  return guarded([&] {
    require(op, "op");
    require(report_out, "report pointer");
    const stakit_grad_check_options o = options ? *options : stakit_grad_check_default_options();
    if (!(o.epsilon > 0.0)) {
      throw stakit::Error(stakit::ErrorCode::invalid_argument, "--eps must be positive");
    }
    stakit::ProblemShape shape;
    shape.d_model = o.d_model;
    shape.heads = o.heads;
    shape.tokens = o.tokens;
    shape.kv_tokens = o.kv_tokens;
    shape.frames = o.frames;
    shape.pooling_pre_norm = o.pooling_pre_norm != 0;
    const auto problem = stakit::random_problem(stakit::parse_attention_op(op), o.seed, shape);
    const std::string report = stakit::io::format_grad_check(stakit::grad_check(problem, o.epsilon));
    std::string weights;
    if (weights_out != nullptr) {
      stakit::TensorSet all = problem.inputs;
      all.insert(all.end(), problem.weights.begin(), problem.weights.end());
      weights = stakit::io::format_tensors(all);
    }
    *report_out = duplicate(report);
    if (weights_out != nullptr) *weights_out = duplicate(weights);
  });
}

stakit_demo_options stakit_demo_default_options(void) {
  return {7, stakit::kDefaultNeighbours, stakit::kDefaultSimilarityWeighting ? 1 : 0, 0, 1};
}

stakit_status stakit_demo_synth(const stakit_demo_options* options, char** out) {
  return guarded([&] {
    const stakit_demo_options o = options ? *options : stakit_demo_default_options();
    stakit::DemoOptions d;
    d.seed = o.seed;
    d.k = o.k;
    d.weighted = o.weighted != 0;
    d.hotspot_first = o.hotspot_first != 0;
    d.jobs = o.jobs;
    const stakit::DemoResult r = stakit::run_demo(d);
    stakit::io::Json doc = stakit::io::eval_report_to_json(r.final);
    doc["baseline"] = stakit::io::eval_report_to_json(r.baseline);
    doc["deltas"] = stakit::io::deltas_to_json(r.diff);
    emit(out, stakit::io::dump_document(doc));
  });
}

}  // extern "C"
