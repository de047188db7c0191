// stakit command-line front end. Talks to the library only through stakit.h.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "stakit/stakit.h"

namespace {

using nlohmann::ordered_json;

enum class LogLevel { quiet = 0, error, info, debug };

LogLevel log_level() {
  const char* env = std::getenv("STAKIT_LOG");
  if (env == nullptr) return LogLevel::error;
  const std::string v = env;
  if (v == "quiet" || v == "0") return LogLevel::quiet;
  if (v == "info" || v == "2") return LogLevel::info;
  if (v == "debug" || v == "3") return LogLevel::debug;
  return LogLevel::error;
}

void log_at(LogLevel level, const std::string& message) {
  if (level > log_level()) return;
  static const char* const names[] = {"", "error", "info", "debug"};
  std::cerr << "stakit[" << names[static_cast<int>(level)] << "] " << message << "\n";
}

// Failure already described by the library's last-error record.
struct LibraryFailure {
  stakit_status status;
};

struct UsageFailure {
  std::string message;
};

void check(stakit_status status) {
  if (status != STAKIT_OK) throw LibraryFailure{status};
}

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { stakit_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

struct ZoneDb {
  stakit_zone_db* p = nullptr;
  ~ZoneDb() { stakit_zone_db_free(p); }
};

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw UsageFailure{"cannot write '" + path + "'"};
  log_at(LogLevel::info, "wrote " + path);
}

// --config files: a JSON object whose keys are option names; nested objects
// address subcommands, e.g. {"eval": {"sta": {"iou": 0.5}}}.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    ordered_json doc;
    try {
      doc = ordered_json::parse(input);
    } catch (const nlohmann::json::parse_error& e) {
      throw CLI::ConversionError("config", std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) throw CLI::ConversionError("config", "expected a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(doc, {}, items);
    return items;
  }

 private:
  static std::string scalar(const ordered_json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  }

  static void flatten(const ordered_json& obj, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_object()) {
        std::vector<std::string> nested = parents;
        nested.push_back(key);
        flatten(value, nested, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      out.push_back(std::move(item));
    }
  }
};

void emit_error_record(const std::string& json) { std::cerr << json << "\n"; }

std::string usage_record(const std::string& message) {
  return ordered_json{{"error", "invalid_argument"}, {"message", message}}.dump();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stakit: short-term object-interaction anticipation toolkit"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with option values; command-line flags take precedence");
  app.set_version_flag("--version", std::string(stakit_version()));

  std::string out_path;
  unsigned jobs = 1;
  auto add_out = [&](CLI::App* sub, const char* name = "--out") {
    sub->add_option(name, out_path, "Output file (stdout when omitted)");
  };
  auto add_jobs = [&](CLI::App* sub) {
    sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::Range(1u, 256u));
  };

  // zones build
  auto* zones = app.add_subcommand("zones", "Environment-affordance zone database")->require_subcommand(1);
  auto* zones_build = zones->add_subcommand("build", "Group training clips into zones");
  std::string clips_path;
  double theta = 0.5;
  std::size_t history = 5;
  zones_build->add_option("--clips", clips_path, "Clips JSON-lines")->required();
  zones_build->add_option("--theta", theta, "Same-zone threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  zones_build->add_option("--M,--history", history, "Recent members compared against")->check(CLI::PositiveNumber)->capture_default_str();
  add_out(zones_build);

  // afford query / fuse
  auto* afford = app.add_subcommand("afford", "Affordance retrieval and fusion")->require_subcommand(1);
  auto* afford_query = afford->add_subcommand("query", "Affordance distribution for one descriptor");
  std::string zones_path, desc_path;
  stakit_afford_options afford_opts = stakit_afford_default_options();
  std::size_t k = afford_opts.k;
  bool weighted = afford_opts.weighted != 0;
  bool rescale = false;
  afford_query->add_option("--zones", zones_path, "Zone database JSON")->required();
  afford_query->add_option("--desc", desc_path, "Descriptor JSON")->required();
  afford_query->add_option("--k", k, "Neighbours per channel")->check(CLI::PositiveNumber)->capture_default_str();
  afford_query->add_option("--weighted", weighted, "Weight votes by similarity")->capture_default_str();
  afford_query->add_option("--rescale", rescale, "Map similarities to [0, 1] first")->capture_default_str();
  add_out(afford_query);

  auto* afford_fuse = afford->add_subcommand("fuse", "Fuse affordance and detector distributions");
  std::string aff_path, sta_path, dets_for_fuse;
  afford_fuse->add_option("--aff", aff_path, "Affordance distributions JSON")->required();
  auto* sta_opt = afford_fuse->add_option("--sta", sta_path, "Detector distributions JSON");
  auto* fdets_opt = afford_fuse->add_option("--dets", dets_for_fuse, "Detections JSON-lines to update in place of --sta");
  sta_opt->excludes(fdets_opt);
  add_out(afford_fuse);

  // hotspot reweight
  auto* hotspot = app.add_subcommand("hotspot", "Interaction hotspots")->require_subcommand(1);
  auto* hotspot_reweight = hotspot->add_subcommand("reweight", "Scale scores by hotspot probability");
  std::string dets_path, maps_path, sampling = "nearest";
  hotspot_reweight->add_option("--dets", dets_path, "Detections JSON-lines")->required();
  hotspot_reweight->add_option("--maps", maps_path, "Hotspot maps JSON-lines")->required();
  hotspot_reweight->add_option("--sampling", sampling, "nearest or bilinear")
      ->check(CLI::IsMember({"nearest", "bilinear"}))
      ->capture_default_str();
  add_out(hotspot_reweight);

  // eval sta / diff
  auto* eval = app.add_subcommand("eval", "Top-k mAP evaluation")->require_subcommand(1);
  auto* eval_sta = eval->add_subcommand("sta", "Evaluate detections against ground truth");
  std::string gt_path;
  stakit_eval_params eval_params = stakit_eval_default_params();
  eval_sta->add_option("--dets", dets_path, "Detections JSON-lines")->required();
  eval_sta->add_option("--gt", gt_path, "Ground truth JSON-lines")->required();
  eval_sta->add_option("--iou", eval_params.iou_threshold, "IoU threshold")->capture_default_str();
  eval_sta->add_option("--ttc-tol", eval_params.ttc_tolerance, "Time-to-contact tolerance (s)")->capture_default_str();
  eval_sta->add_option("--topk", eval_params.top_k, "Detections kept per image")->capture_default_str();
  add_jobs(eval_sta);
  add_out(eval_sta, "--report,--out");

  auto* eval_diff = eval->add_subcommand("diff", "Compare two evaluation reports");
  std::string candidate_path, baseline_path;
  eval_diff->add_option("--candidate", candidate_path, "Report of the new method")->required();
  eval_diff->add_option("--baseline", baseline_path, "Report of the reference method")->required();
  add_out(eval_diff);

  // curate ek
  auto* curate = app.add_subcommand("curate", "Annotation curation")->require_subcommand(1);
  auto* curate_ek = curate->add_subcommand("ek", "Boxes and action segments to STA records");
  std::string boxes_path, segments_path, split = "train";
  double fps = 30.0;
  long gap = 30;
  curate_ek->add_option("--boxes", boxes_path, "Boxes CSV")->required();
  curate_ek->add_option("--segments", segments_path, "Action segments CSV")->required();
  curate_ek->add_option("--fps", fps, "Frames per second")->capture_default_str();
  curate_ek->add_option("--gap", gap, "Largest frame gap inside a track")->capture_default_str();
  curate_ek->add_option("--split", split, "Split name written to every record")->capture_default_str();
  add_out(curate_ek);

  // attn check-grad
  auto* attn = app.add_subcommand("attn", "Attention operators")->require_subcommand(1);
  auto* check_grad = attn->add_subcommand("check-grad", "Finite-difference gradient check");
  std::string op;
  std::string weights_path;
  stakit_grad_check_options gc = stakit_grad_check_default_options();
  bool pre_norm = false;
  check_grad->add_option("--op", op, "mha, frame_guided_pooling or dual_attention")
      ->required()
      ->check(CLI::IsMember({"mha", "frame_guided_pooling", "dual_attention"}));
  check_grad->add_option("--seed", gc.seed, "Random seed")->capture_default_str();
  check_grad->add_option("--eps", gc.epsilon, "Finite-difference step")->capture_default_str();
  check_grad->add_option("--d-model", gc.d_model, "Model width")->check(CLI::PositiveNumber)->capture_default_str();
  check_grad->add_option("--heads", gc.heads, "Attention heads")->check(CLI::PositiveNumber)->capture_default_str();
  check_grad->add_option("--tokens", gc.tokens, "Query tokens")->check(CLI::PositiveNumber)->capture_default_str();
  check_grad->add_option("--kv-tokens", gc.kv_tokens, "Key/value tokens (mha)")->check(CLI::PositiveNumber)->capture_default_str();
  check_grad->add_option("--frames", gc.frames, "Frames (pooling)")->check(CLI::PositiveNumber)->capture_default_str();
  check_grad->add_flag("--pre-norm", pre_norm, "LayerNorm before pooling attention");
  check_grad->add_option("--save-weights", weights_path, "Write the random problem as a weight file");
  add_out(check_grad);

  // demo synth
  auto* demo = app.add_subcommand("demo", "Synthetic end-to-end run")->require_subcommand(1);
  auto* demo_synth = demo->add_subcommand("synth", "Generate data, fuse, re-weight and evaluate");
  stakit_demo_options demo_opts = stakit_demo_default_options();
  std::string order = "afford-first";
  demo_synth->add_option("--seed", demo_opts.seed, "Random seed")->capture_default_str();
  demo_synth->add_option("--k", k, "Neighbours per channel")->check(CLI::PositiveNumber)->capture_default_str();
  demo_synth->add_option("--weighted", weighted, "Weight votes by similarity")->capture_default_str();
  demo_synth->add_option("--order", order, "afford-first or hotspot-first")
      ->check(CLI::IsMember({"afford-first", "hotspot-first"}))
      ->capture_default_str();
  add_jobs(demo_synth);
  add_out(demo_synth);

  for (CLI::App* sub : {zones, afford, hotspot, eval, curate, attn, demo}) {
    sub->configurable();
    for (CLI::App* leaf : sub->get_subcommands({})) leaf->configurable();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error_record(usage_record(e.what()));
    return 2;
  }

  try {
    if (zones_build->parsed()) {
      ZoneDb db;
      check(stakit_zone_db_build(clips_path.c_str(), theta, history, &db.p));
      std::size_t count = 0;
      check(stakit_zone_db_zone_count(db.p, &count));
      log_at(LogLevel::info, "built " + std::to_string(count) + " zones");
      OwnedString text;
      check(stakit_zone_db_to_json(db.p, &text.p));
      write_output(out_path, text.str());
    } else if (afford_query->parsed()) {
      ZoneDb db;
      check(stakit_zone_db_load(zones_path.c_str(), &db.p));
      afford_opts.k = k;
      afford_opts.weighted = weighted ? 1 : 0;
      afford_opts.rescale_to_unit = rescale ? 1 : 0;
      OwnedString text;
      check(stakit_afford_query_file(db.p, desc_path.c_str(), &afford_opts, &text.p));
      write_output(out_path, text.str());
    } else if (afford_fuse->parsed()) {
      OwnedString text;
      if (!dets_for_fuse.empty()) {
        check(stakit_afford_apply(dets_for_fuse.c_str(), aff_path.c_str(), &text.p));
      } else if (!sta_path.empty()) {
        check(stakit_afford_fuse(aff_path.c_str(), sta_path.c_str(), &text.p));
      } else {
        throw UsageFailure{"afford fuse needs --sta or --dets"};
      }
      write_output(out_path, text.str());
    } else if (hotspot_reweight->parsed()) {
      OwnedString text;
      check(stakit_hotspot_reweight(dets_path.c_str(), maps_path.c_str(), sampling == "bilinear",
                                    &text.p));
      write_output(out_path, text.str());
    } else if (eval_sta->parsed()) {
      eval_params.jobs = jobs;
      OwnedString text;
      check(stakit_eval_sta(dets_path.c_str(), gt_path.c_str(), &eval_params, &text.p));
      write_output(out_path, text.str());
    } else if (eval_diff->parsed()) {
      OwnedString text;
      check(stakit_eval_diff(candidate_path.c_str(), baseline_path.c_str(), &text.p));
      write_output(out_path, text.str());
    } else if (curate_ek->parsed()) {
      OwnedString text;
      check(stakit_curate_ek(boxes_path.c_str(), segments_path.c_str(), fps, gap, split.c_str(), &text.p));
      write_output(out_path, text.str());
    } else if (check_grad->parsed()) {
      gc.pooling_pre_norm = pre_norm ? 1 : 0;
      OwnedString report, weights;
      check(stakit_grad_check(op.c_str(), &gc, &report.p, weights_path.empty() ? nullptr : &weights.p));
      if (!weights_path.empty()) {
        std::ofstream w(weights_path, std::ios::binary | std::ios::trunc);
        w << weights.str();
        if (!w) throw UsageFailure{"cannot write '" + weights_path + "'"};
      }
      write_output(out_path, report.str());
    } else if (demo_synth->parsed()) {
      demo_opts.k = k;
      demo_opts.weighted = weighted ? 1 : 0;
      demo_opts.hotspot_first = order == "hotspot-first" ? 1 : 0;
      demo_opts.jobs = jobs;
      OwnedString text;
      check(stakit_demo_synth(&demo_opts, &text.p));
      write_output(out_path, text.str());
    }
  } catch (const LibraryFailure& f) {
    log_at(LogLevel::debug, std::string("status ") + stakit_status_name(f.status));
    emit_error_record(stakit_last_error_json());
    return static_cast<int>(f.status);
  } catch (const UsageFailure& f) {
    emit_error_record(usage_record(f.message));
    return 2;
  }
  return 0;
}
