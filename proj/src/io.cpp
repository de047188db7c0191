#include "stakit/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "stakit/error.hpp"

namespace stakit::io {

namespace {

[[noreturn]] void fail(const Where& w, const std::string& field, const std::string& message) {
  throw ParseError(w.source, w.line, field, message);
}

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

std::string indexed(const std::string& prefix, std::size_t i) {
  return prefix + "[" + std::to_string(i) + "]";
}

const Json& require(const Json& obj, const std::string& key, const Where& w,
                    const std::string& prefix) {
  if (!obj.is_object()) fail(w, prefix, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(w, join(prefix, key), "missing");
  return *it;
}

const Json* optional_field(const Json& obj, const std::string& key) {
  auto it = obj.find(key);
  return (it == obj.end() || it->is_null()) ? nullptr : &*it;
}

double as_double(const Json& j, const Where& w, const std::string& field) {
  if (!j.is_number()) fail(w, field, "expected a number");
  return j.get<double>();
}

long as_long(const Json& j, const Where& w, const std::string& field) {
  if (!j.is_number_integer()) fail(w, field, "expected an integer");
  return j.get<long>();
}

std::size_t as_size(const Json& j, const Where& w, const std::string& field) {
  if (!j.is_number_unsigned()) fail(w, field, "expected a non-negative integer");
  return j.get<std::size_t>();
}

std::string as_string(const Json& j, const Where& w, const std::string& field) {
  if (!j.is_string()) fail(w, field, "expected a string");
  return j.get<std::string>();
}

Vector as_doubles(const Json& j, const Where& w, const std::string& field) {
  if (!j.is_array()) fail(w, field, "expected an array of numbers");
  Vector out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_double(j[i], w, indexed(field, i)));
  return out;
}

std::vector<Label> as_labels(const Json& j, const Where& w, const std::string& field) {
  if (!j.is_array()) fail(w, field, "expected an array of integer labels");
  std::vector<Label> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(static_cast<Label>(as_long(j[i], w, indexed(field, i))));
  return out;
}

std::vector<std::string> as_strings(const Json& j, const Where& w, const std::string& field) {
  if (!j.is_array()) fail(w, field, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_string(j[i], w, indexed(field, i)));
  return out;
}

Box as_box(const Json& j, const Where& w, const std::string& field) {
  Vector v = as_doubles(j, w, field);
  if (v.size() != 4) fail(w, field, "expected [x1, y1, x2, y2]");
  Box b{v[0], v[1], v[2], v[3]};
  if (!b.ordered()) fail(w, field, "box needs x1 < x2 and y1 < y2");
  return b;
}

Json box_to_json(const Box& b) { return Json::array({b.x1, b.y1, b.x2, b.y2}); }

template <typename T>
Json array_of(const std::vector<T>& v) {
  Json out = Json::array();
  for (const T& x : v) out.push_back(x);
  return out;
}

// Runs `body` on each non-blank line with its 1-based line number.
template <typename F>
void for_each_line(std::string_view text, F&& body) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (line.find_first_not_of(" \t") != std::string_view::npos) body(line, line_no);
    if (end == text.size()) break;
    pos = end + 1;
  }
}

template <typename F>
void for_each_record(std::string_view text, const std::string& source, F&& body) {
  for_each_line(text, [&](std::string_view line, std::size_t n) {
    Json j = parse_json(line, source, n);
    if (!j.is_object()) fail({source, n}, "", "expected a JSON object");
    body(j, Where{source, n});
  });
}

std::string lines_of(const std::vector<Json>& records) {
  std::string out;
  for (const Json& j : records) {
    out += dump_compact(j);
    out += '\n';
  }
  return out;
}

// Re-raises a domain check failure as a ParseError at `field`.
template <typename F>
void checked(const Where& w, const std::string& field, F&& check) {
  try {
    check();
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    fail(w, field, e.what());
  }
}

}  // namespace

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::io, "failed writing '" + path.string() + "'");
}

Json parse_json(std::string_view text, const std::string& source, std::size_t line) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t at = line;
    if (line == 0) {
      const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
      at = 1 + static_cast<std::size_t>(
                   std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
    }
    std::string message = e.what();
    const std::size_t cut = message.find("] ");
    if (cut != std::string::npos) message = message.substr(cut + 2);
    throw ParseError(source, at, "", "malformed JSON (" + message + ")");
  }
}

std::string dump_compact(const Json& j) { return j.dump(); }

std::string dump_document(const Json& j) { return j.dump(2) + "\n"; }

Json matrix_to_json(const Matrix& m) {
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

Matrix matrix_from_json(const Json& j, const Where& w, const std::string& field) {
  const std::size_t rows = as_size(require(j, "rows", w, field), w, join(field, "rows"));
  const std::size_t cols = as_size(require(j, "cols", w, field), w, join(field, "cols"));
  Vector data = as_doubles(require(j, "data", w, field), w, join(field, "data"));
  if (data.size() != rows * cols) {
    fail(w, join(field, "data"),
         "has " + std::to_string(data.size()) + " values for a " + std::to_string(rows) + "x" +
             std::to_string(cols) + " matrix");
  }
  return Matrix(rows, cols, std::move(data));
}

Json grid_to_json(const Grid& g) {
  return Json{{"h", g.height()},
              {"w", g.width()},
              {"c", g.channels()},
              {"data", Vector(g.data().begin(), g.data().end())}};
}

Grid grid_from_json(const Json& j, const Where& w, const std::string& field) {
  const std::size_t h = as_size(require(j, "h", w, field), w, join(field, "h"));
  const std::size_t wd = as_size(require(j, "w", w, field), w, join(field, "w"));
  const std::size_t c = as_size(require(j, "c", w, field), w, join(field, "c"));
  Vector data = as_doubles(require(j, "data", w, field), w, join(field, "data"));
  if (data.size() != h * wd * c) fail(w, join(field, "data"), "length does not match h * w * c");
  return Grid(h, wd, c, std::move(data));
}

std::string format_tensors(const TensorSet& set) {
  Json doc = Json::object();
  for (const NamedTensor& t : set) doc[t.name] = matrix_to_json(t.value);
  return dump_document(doc);
}

TensorSet parse_tensors(std::string_view text, const std::string& source) {
  const Json doc = parse_json(text, source);
  const Where w{source, 0};
  if (!doc.is_object()) fail(w, "", "expected an object keyed by tensor name");
  TensorSet out;
  for (const auto& [name, value] : doc.items()) out.push_back({name, matrix_from_json(value, w, name)});
  return out;
}

std::string format_clips(const std::vector<ClipRecord>& clips) {
  std::vector<Json> lines;
  for (const ClipRecord& c : clips) {
    Json j{{"clip_id", c.clip_id}, {"video_id", c.video_id}, {"frame", c.frame}, {"visual", c.visual}};
    if (c.text) j["text"] = *c.text;
    j["nouns"] = array_of(c.nouns);
    j["verbs"] = array_of(c.verbs);
    lines.push_back(std::move(j));
  }
  return lines_of(lines);
}

std::vector<ClipRecord> parse_clips(std::string_view text, const std::string& source) {
  std::vector<ClipRecord> out;
  for_each_record(text, source, [&](const Json& j, const Where& w) {
    ClipRecord c;
    c.clip_id = as_string(require(j, "clip_id", w, ""), w, "clip_id");
    c.video_id = as_string(require(j, "video_id", w, ""), w, "video_id");
    if (const Json* f = optional_field(j, "frame")) c.frame = as_long(*f, w, "frame");
    c.visual = as_doubles(require(j, "visual", w, ""), w, "visual");
    if (c.visual.empty()) fail(w, "visual", "descriptor is empty");
    if (const Json* t = optional_field(j, "text")) {
      c.text = as_doubles(*t, w, "text");
      if (c.text->size() != c.visual.size()) fail(w, "text", "length differs from visual");
    }
    if (const Json* n = optional_field(j, "nouns")) c.nouns = as_labels(*n, w, "nouns");
    if (const Json* v = optional_field(j, "verbs")) c.verbs = as_labels(*v, w, "verbs");
    out.push_back(std::move(c));
  });
  return out;
}

std::string format_zones(const ZoneDatabase& db) {
  Json zones = Json::array();
  for (const Zone& z : db.zones) {
    zones.push_back(Json{{"id", z.id},
                         {"video_id", z.video_id},
                         {"members", z.members},
                         {"nouns", array_of(z.nouns)},
                         {"verbs", array_of(z.verbs)},
                         {"z_visual", z.z_visual},
                         {"z_text", z.z_text}});
  }
  Json doc{{"zones", zones},
           {"noun_vocab", array_of(db.noun_vocab)},
           {"verb_vocab", array_of(db.verb_vocab)},
           {"params", Json{{"theta", db.params.theta}, {"M", db.params.history}}}};
  return dump_document(doc);
}

ZoneDatabase parse_zones(std::string_view text, const std::string& source) {
  const Json doc = parse_json(text, source);
  const Where w{source, 0};
  ZoneDatabase db;
  const Json& zones = require(doc, "zones", w, "");
  if (!zones.is_array()) fail(w, "zones", "expected an array");
  std::set<std::size_t> ids;
  for (std::size_t i = 0; i < zones.size(); ++i) {
    const std::string f = indexed("zones", i);
    const Json& j = zones[i];
    Zone z;
    z.id = as_size(require(j, "id", w, f), w, f + ".id");
    if (!ids.insert(z.id).second) fail(w, f + ".id", "duplicate zone id");
    z.video_id = as_string(require(j, "video_id", w, f), w, f + ".video_id");
    z.members = as_strings(require(j, "members", w, f), w, f + ".members");
    z.nouns = as_labels(require(j, "nouns", w, f), w, f + ".nouns");
    z.verbs = as_labels(require(j, "verbs", w, f), w, f + ".verbs");
    z.z_visual = as_doubles(require(j, "z_visual", w, f), w, f + ".z_visual");
    if (const Json* t = optional_field(j, "z_text")) z.z_text = as_doubles(*t, w, f + ".z_text");
    if (!z.z_text.empty() && z.z_text.size() != z.z_visual.size()) {
      fail(w, f + ".z_text", "length differs from z_visual");
    }
    if (!db.zones.empty() && z.z_visual.size() != db.zones.front().z_visual.size()) {
      fail(w, f + ".z_visual", "descriptor length differs from zone 0");
    }
    db.zones.push_back(std::move(z));
  }
  db.noun_vocab = as_labels(require(doc, "noun_vocab", w, ""), w, "noun_vocab");
  db.verb_vocab = as_labels(require(doc, "verb_vocab", w, ""), w, "verb_vocab");
  if (const Json* p = optional_field(doc, "params")) {
    if (const Json* t = optional_field(*p, "theta")) db.params.theta = as_double(*t, w, "params.theta");
    if (const Json* m = optional_field(*p, "M")) db.params.history = as_size(*m, w, "params.M");
  }
  return db;
}

Vector parse_descriptor(std::string_view text, const std::string& source) {
  const Json doc = parse_json(text, source);
  const Where w{source, 0};
  Vector v = doc.is_array() ? as_doubles(doc, w, "") : as_doubles(require(doc, "visual", w, ""), w, "visual");
  if (v.empty()) fail(w, doc.is_array() ? "" : "visual", "descriptor is empty");
  return v;
}

Json distribution_to_json(const CategoricalDistribution& d) {
  return Json{{"vocab", array_of(d.vocab)}, {"p", d.p}};
}

CategoricalDistribution distribution_from_json(const Json& j, const Where& w,
                                               const std::string& field) {
  CategoricalDistribution d;
  d.vocab = as_labels(require(j, "vocab", w, field), w, join(field, "vocab"));
  d.p = as_doubles(require(j, "p", w, field), w, join(field, "p"));
  checked(w, field, [&] { d.validate(); });
  return d;
}

Json label_distributions_to_json(const LabelDistributions& d) {
  return Json{{"nouns", distribution_to_json(d.nouns)}, {"verbs", distribution_to_json(d.verbs)}};
}

LabelDistributions parse_label_distributions(std::string_view text, const std::string& source) {
  const Json doc = parse_json(text, source);
  const Where w{source, 0};
  return {distribution_from_json(require(doc, "nouns", w, ""), w, "nouns"),
          distribution_from_json(require(doc, "verbs", w, ""), w, "verbs")};
}

Json knn_to_json(const KnnResult& knn) {
  Json out = Json::array();
  for (const KnnEntry& e : knn.entries) {
    out.push_back(Json{{"zone", e.zone_id},
                       {"channel", e.channel == Channel::visual ? "visual" : "text"},
                       {"similarity", e.similarity}});
  }
  return out;
}

Json detection_to_json(const Detection& d) {
  Json j{{"uid", d.uid},   {"box", box_to_json(d.box)}, {"noun", d.noun},
         {"verb", d.verb}, {"ttc", d.ttc},              {"score", d.score}};
  if (d.noun_probs) j["noun_probs"] = *d.noun_probs;
  if (d.verb_probs) j["verb_probs"] = *d.verb_probs;
  return j;
}

std::string format_detections(const std::vector<Detection>& dets) {
  std::vector<Json> lines;
  for (const Detection& d : dets) lines.push_back(detection_to_json(d));
  return lines_of(lines);
}

std::vector<Detection> parse_detections(std::string_view text, const std::string& source) {
  std::vector<Detection> out;
  for_each_record(text, source, [&](const Json& j, const Where& w) {
    Detection d;
    d.uid = as_string(require(j, "uid", w, ""), w, "uid");
    d.box = as_box(require(j, "box", w, ""), w, "box");
    d.noun = static_cast<Label>(as_long(require(j, "noun", w, ""), w, "noun"));
    d.verb = static_cast<Label>(as_long(require(j, "verb", w, ""), w, "verb"));
    d.ttc = as_double(require(j, "ttc", w, ""), w, "ttc");
    if (!(d.ttc > 0.0)) fail(w, "ttc", "must be positive");
    d.score = as_double(require(j, "score", w, ""), w, "score");
    if (!(d.score >= 0.0 && d.score <= 1.0)) fail(w, "score", "must lie in [0, 1]");
    if (const Json* p = optional_field(j, "noun_probs")) d.noun_probs = as_doubles(*p, w, "noun_probs");
    if (const Json* p = optional_field(j, "verb_probs")) d.verb_probs = as_doubles(*p, w, "verb_probs");
    out.push_back(std::move(d));
  });
  return out;
}

std::string format_ground_truth(const std::vector<GroundTruth>& gts) {
  std::vector<Json> lines;
  for (const GroundTruth& g : gts) {
    lines.push_back(Json{{"uid", g.uid},
                         {"box", box_to_json(g.box)},
                         {"noun", g.noun},
                         {"verb", g.verb},
                         {"ttc", g.ttc}});
  }
  return lines_of(lines);
}

GroundTruthSet parse_ground_truth(std::string_view text, const std::string& source) {
  GroundTruthSet out;
  for_each_record(text, source, [&](const Json& j, const Where& w) {
    GroundTruth g;
    g.uid = as_string(require(j, "uid", w, ""), w, "uid");
    out.images.insert(g.uid);
    if (!optional_field(j, "box")) return;
    g.box = as_box(j["box"], w, "box");
    g.noun = static_cast<Label>(as_long(require(j, "noun", w, ""), w, "noun"));
    g.verb = static_cast<Label>(as_long(require(j, "verb", w, ""), w, "verb"));
    g.ttc = as_double(require(j, "ttc", w, ""), w, "ttc");
    if (!(g.ttc > 0.0)) fail(w, "ttc", "must be positive");
    out.boxes.push_back(std::move(g));
  });
  return out;
}

std::string format_hotspots(const std::vector<HotspotMap>& maps) {
  std::vector<Json> lines;
  for (const HotspotMap& m : maps) {
    Json j{{"uid", m.uid}, {"h", m.height}, {"w", m.width}, {"p", m.p}};
    if (m.frame_height > 0) {
      j["frame_h"] = m.frame_height;
      j["frame_w"] = m.frame_width;
    }
    lines.push_back(std::move(j));
  }
  return lines_of(lines);
}

std::map<std::string, HotspotMap> parse_hotspots(std::string_view text, const std::string& source) {
  std::map<std::string, HotspotMap> out;
  for_each_record(text, source, [&](const Json& j, const Where& w) {
    HotspotMap m;
    m.uid = as_string(require(j, "uid", w, ""), w, "uid");
    m.height = as_size(require(j, "h", w, ""), w, "h");
    m.width = as_size(require(j, "w", w, ""), w, "w");
    m.p = as_doubles(require(j, "p", w, ""), w, "p");
    const Json* fh = optional_field(j, "frame_h");
    const Json* fw = optional_field(j, "frame_w");
    if ((fh == nullptr) != (fw == nullptr)) fail(w, fh ? "frame_w" : "frame_h", "missing");
    if (fh) {
      m.frame_height = as_size(*fh, w, "frame_h");
      m.frame_width = as_size(*fw, w, "frame_w");
    }
    checked(w, "p", [&] { m.validate(); });
    if (out.contains(m.uid)) fail(w, "uid", "duplicate map for '" + m.uid + "'");
    out.emplace(m.uid, std::move(m));
  });
  return out;
}

Json eval_report_to_json(const EvalReport& r) {
  Json metrics = Json::object();
  Json class_ap = Json::object();
  for (const MetricResult& m : r.metrics) {
    metrics[m.name] = m.map;
    Json per = Json::object();
    for (const auto& [label, ap] : m.class_ap) per[std::to_string(label)] = ap;
    class_ap[m.name] = per;
  }
  return Json{{"metrics", metrics},
              {"class_ap", class_ap},
              {"counts", Json{{"images", r.counts.images},
                              {"ground_truth", r.counts.ground_truth},
                              {"predictions", r.counts.predictions},
                              {"kept", r.counts.kept}}},
              {"params", Json{{"iou", r.params.iou_threshold},
                              {"ttc_tol", r.params.ttc_tolerance},
                              {"topk", r.params.top_k}}}};
}

EvalReport eval_report_from_json(const Json& j, const Where& w) {
  EvalReport r;
  const Json& metrics = require(j, "metrics", w, "");
  const Json& class_ap = require(j, "class_ap", w, "");
  if (!metrics.is_object()) fail(w, "metrics", "expected an object");
  for (const auto& [name, value] : metrics.items()) {
    MetricResult m;
    m.name = name;
    m.map = as_double(value, w, "metrics." + name);
    if (const Json* per = optional_field(class_ap, name)) {
      if (!per->is_object()) fail(w, "class_ap." + name, "expected an object");
      for (const auto& [key, ap] : per->items()) {
        Label label = 0;
        auto [end, ec] = std::from_chars(key.data(), key.data() + key.size(), label);
        if (ec != std::errc() || end != key.data() + key.size()) {
          fail(w, "class_ap." + name + "." + key, "key is not an integer label");
        }
        m.class_ap[label] = as_double(ap, w, "class_ap." + name + "." + key);
      }
    }
    r.metrics.push_back(std::move(m));
  }
  const Json& counts = require(j, "counts", w, "");
  r.counts.images = as_size(require(counts, "images", w, "counts"), w, "counts.images");
  r.counts.ground_truth =
      as_size(require(counts, "ground_truth", w, "counts"), w, "counts.ground_truth");
  r.counts.predictions =
      as_size(require(counts, "predictions", w, "counts"), w, "counts.predictions");
  r.counts.kept = as_size(require(counts, "kept", w, "counts"), w, "counts.kept");
  const Json& params = require(j, "params", w, "");
  r.params.iou_threshold = as_double(require(params, "iou", w, "params"), w, "params.iou");
  r.params.ttc_tolerance = as_double(require(params, "ttc_tol", w, "params"), w, "params.ttc_tol");
  r.params.top_k = as_size(require(params, "topk", w, "params"), w, "params.topk");
  return r;
}

std::string format_eval_report(const EvalReport& r) { return dump_document(eval_report_to_json(r)); }

EvalReport parse_eval_report(std::string_view text, const std::string& source) {
  return eval_report_from_json(parse_json(text, source), {source, 0});
}

Json deltas_to_json(const std::vector<MetricDelta>& deltas) {
  Json out = Json::array();
  for (const MetricDelta& d : deltas) {
    out.push_back(Json{{"metric", d.name},
                       {"candidate", d.candidate},
                       {"baseline", d.baseline},
                       {"delta", d.delta},
                       {"relative_gain_pct",
                        d.relative_gain_pct ? Json(*d.relative_gain_pct) : Json(nullptr)}});
  }
  return out;
}

std::string format_grad_check(const GradCheckReport& r) {
  Json per = Json::object();
  for (const auto& [name, err] : r.per_tensor) per[name] = err;
  return dump_document(Json{{"op", attention_op_name(r.op)},
                            {"epsilon", r.epsilon},
                            {"max_rel_error", r.max_rel_error},
                            {"params_checked", r.params_checked},
                            {"worst_tensor", r.worst_tensor},
                            {"per_tensor", per}});
}

GradCheckReport parse_grad_check(std::string_view text, const std::string& source) {
  const Json j = parse_json(text, source);
  const Where w{source, 0};
  GradCheckReport r;
  const std::string op = as_string(require(j, "op", w, ""), w, "op");
  checked(w, "op", [&] { r.op = parse_attention_op(op); });
  r.epsilon = as_double(require(j, "epsilon", w, ""), w, "epsilon");
  r.max_rel_error = as_double(require(j, "max_rel_error", w, ""), w, "max_rel_error");
  r.params_checked = as_size(require(j, "params_checked", w, ""), w, "params_checked");
  r.worst_tensor = as_string(require(j, "worst_tensor", w, ""), w, "worst_tensor");
  const Json& per = require(j, "per_tensor", w, "");
  if (!per.is_object()) fail(w, "per_tensor", "expected an object");
  for (const auto& [name, err] : per.items()) r.per_tensor[name] = as_double(err, w, "per_tensor." + name);
  return r;
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (true) {
    std::size_t end = line.find(',', pos);
    std::string_view cell = line.substr(pos, end == std::string_view::npos ? end : end - pos);
    const std::size_t first = cell.find_first_not_of(" \t");
    const std::size_t last = cell.find_last_not_of(" \t");
    cells.push_back(first == std::string_view::npos ? std::string_view{}
                                                    : cell.substr(first, last - first + 1));
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return cells;
}

template <typename T>
bool parse_number(std::string_view cell, T& out) {
  if (cell.empty()) return false;
  auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc() && end == cell.data() + cell.size();
}

template <typename T>
T csv_number(std::string_view cell, const Where& w, const char* column) {
  T value{};
  if (!parse_number(cell, value)) {
    fail(w, column, "'" + std::string(cell) + "' is not " +
                        (std::is_integral_v<T> ? "an integer" : "a number"));
  }
  return value;
}

// Calls `row` with the cells of every data line; a first line whose second
// column is not numeric is taken as a header.
template <typename F>
void for_each_csv_row(std::string_view text, const std::string& source,
                      const std::vector<const char*>& columns, F&& row) {
  bool first = true;
  for_each_line(text, [&](std::string_view line, std::size_t n) {
    std::vector<std::string_view> cells = split_csv(line);
    const Where w{source, n};
    if (first) {
      first = false;
      double probe = 0.0;
      if (cells.size() >= 2 && !parse_number(cells[1], probe)) return;
    }
    if (cells.size() != columns.size()) {
      const std::string field =
          cells.size() < columns.size() ? columns[cells.size()] : std::string(columns.back());
      fail(w, field, "expected " + std::to_string(columns.size()) + " columns, found " +
                      std::to_string(cells.size()));
    }
    row(cells, w);
  });
}

}  // namespace

std::vector<BoxAnnotation> parse_box_csv(std::string_view text, const std::string& source) {
  static const std::vector<const char*> kColumns = {"video_id", "frame", "noun", "x1", "y1", "x2", "y2"};
  std::vector<BoxAnnotation> out;
  for_each_csv_row(text, source, kColumns, [&](const auto& c, const Where& w) {
    BoxAnnotation b;
    b.video_id = std::string(c[0]);
    if (b.video_id.empty()) fail(w, "video_id", "empty");
    b.frame = csv_number<long>(c[1], w, "frame");
    b.noun = csv_number<Label>(c[2], w, "noun");
    b.box = {csv_number<double>(c[3], w, "x1"), csv_number<double>(c[4], w, "y1"),
             csv_number<double>(c[5], w, "x2"), csv_number<double>(c[6], w, "y2")};
    if (!b.box.ordered()) fail(w, "x2", "box needs x1 < x2 and y1 < y2");
    out.push_back(std::move(b));
  });
  return out;
}

std::vector<ActionSegment> parse_segment_csv(std::string_view text, const std::string& source) {
  static const std::vector<const char*> kColumns = {"video_id", "start", "stop", "verb", "noun"};
  std::vector<ActionSegment> out;
  for_each_csv_row(text, source, kColumns, [&](const auto& c, const Where& w) {
    ActionSegment s;
    s.video_id = std::string(c[0]);
    if (s.video_id.empty()) fail(w, "video_id", "empty");
    s.start = csv_number<long>(c[1], w, "start");
    s.stop = csv_number<long>(c[2], w, "stop");
    if (s.stop < s.start) fail(w, "stop", "segment stops before it starts");
    s.verb = csv_number<Label>(c[3], w, "verb");
    s.noun = csv_number<Label>(c[4], w, "noun");
    out.push_back(std::move(s));
  });
  return out;
}

std::string format_sta_records(const std::vector<StaRecord>& records) {
  std::vector<Json> lines;
  for (const StaRecord& r : records) {
    lines.push_back(Json{{"uid", r.uid()},
                         {"video_id", r.video_id},
                         {"frame", r.frame},
                         {"box", box_to_json(r.box)},
                         {"noun", r.noun},
                         {"verb", r.verb},
                         {"ttc", r.ttc},
                         {"split", r.split}});
  }
  return lines_of(lines);
}

std::vector<StaRecord> parse_sta_records(std::string_view text, const std::string& source) {
  std::vector<StaRecord> out;
  for_each_record(text, source, [&](const Json& j, const Where& w) {
    StaRecord r;
    r.video_id = as_string(require(j, "video_id", w, ""), w, "video_id");
    r.frame = as_long(require(j, "frame", w, ""), w, "frame");
    r.box = as_box(require(j, "box", w, ""), w, "box");
    r.noun = static_cast<Label>(as_long(require(j, "noun", w, ""), w, "noun"));
    r.verb = static_cast<Label>(as_long(require(j, "verb", w, ""), w, "verb"));
    r.ttc = as_double(require(j, "ttc", w, ""), w, "ttc");
    r.split = as_string(require(j, "split", w, ""), w, "split");
    if (const Json* uid = optional_field(j, "uid")) {
      if (as_string(*uid, w, "uid") != r.uid()) fail(w, "uid", "does not match video_id and frame");
    }
    out.push_back(std::move(r));
  });
  return out;
}

}  // namespace stakit::io
