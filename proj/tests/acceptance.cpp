// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "oracles.hpp"
#include "stakit/affordance.hpp"
#include "stakit/demo.hpp"
#include "stakit/ek_curation.hpp"
#include "stakit/grad_check.hpp"
#include "stakit/hotspot.hpp"
#include "stakit/io.hpp"
#include "stakit/sta_eval.hpp"

using namespace stakit;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (double& x : m.data()) x = n(rng);
  return m;
}

AttentionWeights random_weights(std::size_t d, std::size_t heads, std::mt19937_64& rng) {
  AttentionWeights w = AttentionWeights::zeros(d, heads, d / heads);
  for (std::size_t h = 0; h < heads; ++h) {
    w.w_q[h] = random_matrix(d, d / heads, rng);
    w.w_k[h] = random_matrix(d, d / heads, rng);
  }
  w.w_o = random_matrix(d, d, rng);
  return w;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

Outcome gradient_fidelity() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (AttentionOp op : {AttentionOp::mha, AttentionOp::frame_guided_pooling, AttentionOp::dual_attention}) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const GradCheckReport r = grad_check(random_problem(op, seed), 1e-5);
      worst = std::max(worst, r.max_rel_error);
      o.require(r.max_rel_error <= 1e-5, std::string(attention_op_name(op)) + " seed " + std::to_string(seed) +
                                             " error " + std::to_string(r.max_rel_error));
    }
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.require(seconds < 10.0, "took " + std::to_string(seconds) + " s");
  if (o.ok) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "worst %.2e in %.2f s", worst, seconds);
    o.detail = buf;
  }
  return o;
}

Outcome residual_identities() {
  Outcome o;
  std::mt19937_64 rng(2);
  const std::size_t d = 8;
  for (int trial = 0; trial < 20; ++trial) {
    const AttentionWeights w = random_weights(d, 2, rng);
    const TokenBundle q{random_matrix(3, d, rng), std::nullopt, std::nullopt};
    const TokenBundle kv{random_matrix(5, d, rng), std::nullopt, std::nullopt};
    o.require(max_abs_diff(mha(q, kv, w).tokens, q.tokens) <= 1e-12, "mha residual");

    const TokenBundle video{random_matrix(12, d, rng), std::nullopt, std::nullopt};
    const TokenBundle last = last_frame_of(video, 4);
    o.require(max_abs_diff(frame_guided_pooling(last, video, w).tokens, last.tokens) <= 1e-12, "pooling residual");

    const DualAttentionWeights dw{random_weights(d, 2, rng), random_weights(d, 2, rng),
                                  MlpWeights::zeros(d, 4 * d), MlpWeights::zeros(d, 4 * d),
                                  LayerNormParams::unit(d), LayerNormParams::unit(d)};
    std::normal_distribution<double> n;
    Vector ci(d), cv(d);
    for (double& x : ci) x = n(rng);
    for (double& x : cv) x = n(rng);
    const TokenBundle image{random_matrix(4, d, rng), ci, random_matrix(5, d, rng)};
    const TokenBundle vid{random_matrix(4, d, rng), cv, std::nullopt};
    const auto [oi, ov] = dual_attention(image, vid, dw);
    o.require(oi.tokens.rows() == 4 && ov.tokens.rows() == 4 && oi.class_token && ov.class_token, "dual shapes");
    o.require(max_abs_diff(vstack(oi.tokens, Matrix(1, d, *oi.class_token)), sequence_of(image)) <= 1e-12,
              "dual image residual");
    o.require(max_abs_diff(vstack(ov.tokens, Matrix(1, d, *ov.class_token)), sequence_of(vid)) <= 1e-12,
              "dual video residual");

    for (const Matrix& a : attention_probabilities(q.tokens, kv.tokens, w))
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double total = 0.0;
        for (double v : a.row(i)) total += v;
        o.require(std::abs(total - 1.0) <= 1e-12, "attention row sum");
      }
  }
  return o;
}

Outcome affordance_oracle() {
  Outcome o;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n_zones = 1 + rng() % 6;
    const std::size_t n_labels = 1 + rng() % 5;
    std::vector<Zone> zones;
    for (std::size_t z = 0; z < n_zones; ++z) {
      Zone zone;
      zone.id = z + 10;
      for (Label l = 0; l < static_cast<Label>(n_labels); ++l)
        if (rng() % 2) zone.nouns.push_back(l);
      zones.push_back(zone);
    }
    KnnResult knn;
    std::vector<std::pair<double, std::vector<int>>> hits;
    const std::size_t n_hits = 2 * (1 + rng() % n_zones);
    for (std::size_t h = 0; h < n_hits; ++h) {
      const std::size_t z = rng() % n_zones;
      const double s = u(rng);
      knn.entries.push_back({zones[z].id, s, h % 2 ? Channel::text : Channel::visual});
      hits.push_back({s, zones[z].nouns});
    }
    std::vector<Label> vocab(n_labels);
    std::iota(vocab.begin(), vocab.end(), 0);
    const auto got = affordance_distribution(knn, zones, vocab, LabelKind::noun, true);
    const auto want = oracle::affordance(hits, vocab);
    for (std::size_t i = 0; i < n_labels; ++i)
      o.require(std::abs(got.p[i] - want[i]) <= 1e-12, "random database " + std::to_string(trial));
  }

  Zone z1, z2;
  z1.id = 1;
  z1.z_visual = {0.8, 0.6};
  z1.z_text = {-1.0, 0.0};
  z1.nouns = {0, 1};
  z2.id = 2;
  z2.z_visual = {0.0, 1.0};
  z2.z_text = {0.5, std::sqrt(0.75)};
  z2.nouns = {1};
  const std::vector<Zone> kp{z1, z2};
  const auto p = affordance_distribution(knn_query(Vector{1.0, 0.0}, kp, {1, false}), kp, {0, 1, 2},
                                         LabelKind::noun, true);
  const Vector expected{0.3228, 0.5322, 0.1450};
  for (std::size_t i = 0; i < 3; ++i) o.require(std::abs(p.p[i] - expected[i]) <= 1e-4, "knife/plate example");
  return o;
}

Outcome fusion_properties() {
  Outcome o;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 6;
    Vector a(n), b(n);
    for (double& x : a) x = u(rng);
    for (double& x : b) x = u(rng);
    const double sb = std::accumulate(b.begin(), b.end(), 0.0);
    for (double& x : b) x /= sb;
    const Vector same = fuse_scores(Vector(n, 1.0 / static_cast<double>(n)), b);
    for (std::size_t i = 0; i < n; ++i) o.require(std::abs(same[i] - b[i]) <= 1e-12, "uniform prior identity");
    const Vector base = fuse_scores(a, b);
    Vector a2 = a, b2 = b;
    const double ca = 0.1 + 10.0 * u(rng), cb = 0.1 + 10.0 * u(rng);
    for (double& x : a2) x *= ca;
    for (double& x : b2) x *= cb;
    const Vector scaled = fuse_scores(a2, b2);
    for (std::size_t i = 0; i < n; ++i) o.require(std::abs(scaled[i] - base[i]) <= 1e-12, "rescaling invariance");
  }
  const Vector worked = fuse_scores(Vector{0.5, 0.3, 0.2}, Vector{0.2, 0.5, 0.3});
  const Vector expected{0.3226, 0.4839, 0.1935};
  for (std::size_t i = 0; i < 3; ++i) o.require(std::abs(worked[i] - expected[i]) <= 1e-4, "worked example");
  return o;
}

Detection det(const std::string& uid, Box box, Label noun, Label verb, double ttc, double score) {
  Detection d;
  d.uid = uid;
  d.box = box;
  d.noun = noun;
  d.verb = verb;
  d.ttc = ttc;
  d.score = score;
  return d;
}

std::set<std::string> images_of(const std::vector<Detection>& dets) {
  std::set<std::string> out;
  for (const auto& d : dets) out.insert(d.uid);
  return out;
}

Outcome map_engine() {
  Outcome o;
  const std::vector<GroundTruth> gts{{"a", {0, 0, 10, 10}, 1, 2, 1.0}, {"a", {20, 20, 30, 30}, 3, 0, 0.5},
                                     {"b", {5, 5, 15, 15}, 1, 1, 2.0}};
  std::vector<Detection> perfect, wrong;
  for (const auto& g : gts) {
    perfect.push_back(det(g.uid, g.box, g.noun, g.verb, g.ttc, 0.9));
    wrong.push_back(det(g.uid, g.box, g.noun, g.verb + 7, g.ttc, 0.9));
  }
  const EvalReport rp = evaluate(perfect, gts);
  for (const auto& m : kMetricNames) o.require(rp.metric(m) == 1.0, "perfect fixture " + m);
  const EvalReport rw = evaluate(wrong, gts);
  o.require(rw.metric("N") == 1.0 && rw.metric("N+delta") == 1.0, "wrong-verb fixture N / N+delta");
  o.require(rw.metric("N+V") == 0.0 && rw.metric("All") == 0.0, "wrong-verb fixture N+V / All");

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(0.0, 10.0), size(2.0, 6.0), jit(-1.0, 1.0), ttc(0.1, 2.0), u(0.0, 1.0);
  auto random_box = [&] {
    const double x = pos(rng), y = pos(rng);
    return Box{x, y, x + size(rng), y + size(rng)};
  };
  auto random_instance = [&](std::vector<Detection>& dets, std::vector<GroundTruth>& truth) {
    const int images = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < images; ++i) {
      const std::string uid = "img" + std::to_string(i);
      const std::size_t first = truth.size();
      const int n_gt = static_cast<int>(rng() % 4);
      for (int g = 0; g < n_gt; ++g)
        truth.push_back({uid, random_box(), static_cast<Label>(rng() % 2), static_cast<Label>(rng() % 2), ttc(rng)});
      const int n_det = static_cast<int>(rng() % 6);
      for (int d = 0; d < n_det; ++d) {
        Detection x;
        if (truth.size() > first && u(rng) < 0.75) {
          const GroundTruth& g = truth[first + rng() % (truth.size() - first)];
          Box b{g.box.x1 + jit(rng), g.box.y1 + jit(rng), g.box.x2 + jit(rng), g.box.y2 + jit(rng)};
          x = det(uid, b, g.noun, u(rng) < 0.7 ? g.verb : 1 - g.verb, u(rng) < 0.7 ? g.ttc : ttc(rng), 0.0);
        } else {
          x = det(uid, random_box(), static_cast<Label>(rng() % 2), static_cast<Label>(rng() % 2), ttc(rng), 0.0);
        }
        x.score = static_cast<double>(rng() % 6) / 5.0;
        dets.push_back(x);
      }
    }
    if (truth.empty()) truth.push_back({"img0", random_box(), 0, 0, 1.0});
  };

  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Detection> dets;
    std::vector<GroundTruth> truth;
    random_instance(dets, truth);
    const EvalReport r = evaluate(dets, truth, images_of(dets));
    const auto want = oracle::evaluate(dets, truth, EvalParams{});
    for (const auto& m : kMetricNames)
      o.require(r.metric(m) == want.at(m), "brute-force mismatch in instance " + std::to_string(trial) + " " + m);
  }
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Detection> dets;
    std::vector<GroundTruth> truth;
    random_instance(dets, truth);
    const EvalReport r = evaluate(dets, truth, images_of(dets));
    o.require(r.metric("All") <= r.metric("N+V") && r.metric("N+V") <= r.metric("N"),
              "nesting violated in instance " + std::to_string(trial));
  }
  return o;
}

Outcome relative_gain_formula() {
  Outcome o;
  EvalReport candidate, baseline;
  for (const auto& m : kMetricNames) {
    candidate.metrics.push_back({m, 3.77, {}});
    baseline.metrics.push_back({m, 2.60, {}});
  }
  for (const MetricDelta& d : diff_reports(candidate, baseline)) {
    o.require(d.relative_gain_pct.has_value(), "gain missing");
    if (d.relative_gain_pct) o.require(std::abs(*d.relative_gain_pct - 45.0) <= 0.05, "gain is not +45.0");
  }
  o.require(!relative_gain(1.0, 0.0).has_value(), "zero baseline must be undefined");
  return o;
}

Outcome hotspot_reweighting() {
  Outcome o;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = 1 + rng() % 8, w = 1 + rng() % 8;
    const std::map<std::string, HotspotMap> maps{{"x", HotspotMap::uniform("x", h, w)}};
    std::vector<Detection> dets;
    const std::size_t n = 1 + rng() % 10;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = u(rng) * static_cast<double>(w), y = u(rng) * static_cast<double>(h);
      dets.push_back(det("x", {x, y, x + 1.0, y + 1.0}, 0, 0, 1.0, u(rng)));
    }
    const auto out = reweight(dets, maps, trial % 2 ? Sampling::bilinear : Sampling::nearest);
    auto argsort = [](const std::vector<Detection>& v) {
      std::vector<std::size_t> idx(v.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a].score > v[b].score; });
      return idx;
    };
    o.require(argsort(out) == argsort(dets), "uniform map changed the ranking");
  }
  HotspotMap m;
  m.uid = "e";
  m.height = 1;
  m.width = 2;
  m.p = {0.98, 0.02};
  const auto out = reweight({det("e", {1.25, 0.25, 1.75, 0.75}, 0, 0, 1.0, 0.8)}, {{"e", m}});
  o.require(out[0].score == 0.8 * 0.02, "0.8 x 0.02 is not reproduced exactly");
  return o;
}

Outcome zone_construction() {
  Outcome o;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ClipRecord> clips;
    const int count = 1 + static_cast<int>(rng() % 40);
    for (int i = 0; i < count; ++i) {
      ClipRecord c;
      c.clip_id = "c" + std::to_string(i);
      c.video_id = "v" + std::to_string(rng() % 3);
      c.frame = static_cast<long>(rng() % 1000);
      c.visual = {n(rng), n(rng), n(rng)};
      c.nouns = {static_cast<Label>(rng() % 5)};
      clips.push_back(c);
    }
    const ZoneParams params{0.2 + 0.6 * (static_cast<double>(rng() % 100) / 100.0), 1 + rng() % 5};
    const auto zones = build_zones(clips, visual_same_zone, params);
    std::multiset<std::string> seen;
    for (const Zone& z : zones) seen.insert(z.members.begin(), z.members.end());
    bool partition = seen.size() == clips.size();
    for (const auto& c : clips) partition = partition && seen.count(c.clip_id) == 1;
    o.require(partition, "clips are not partitioned in input " + std::to_string(trial));
    const auto again = build_zones(clips, visual_same_zone, params);
    bool same = again.size() == zones.size();
    for (std::size_t i = 0; same && i < zones.size(); ++i)
      same = again[i].members == zones[i].members && again[i].z_visual == zones[i].z_visual;
    o.require(same, "zone building is not deterministic");
  }
  std::vector<ClipRecord> three(3);
  for (int i = 0; i < 3; ++i) {
    three[i].clip_id = std::to_string(i + 1);
    three[i].video_id = "v";
    three[i].frame = i;
    three[i].visual = {1.0};
  }
  const auto table = [](const ClipRecord& a, const ClipRecord& b) {
    const std::set<std::string> pair{a.clip_id, b.clip_id};
    return pair == std::set<std::string>{"1", "2"} ? 0.9 : 0.1;
  };
  const auto zones = build_zones(three, table, {0.5, 5});
  o.require(zones.size() == 2 && zones[0].members == std::vector<std::string>{"1", "2"} &&
                zones[1].members == std::vector<std::string>{"3"},
            "three-clip example");
  return o;
}

Outcome ek_curation() {
  Outcome o;
  const std::string dir = STAKIT_TEST_DATA;
  const auto boxes = io::parse_box_csv(io::read_text(dir + "/ek_boxes.csv"), "ek_boxes.csv");
  const auto segments = io::parse_segment_csv(io::read_text(dir + "/ek_segments.csv"), "ek_segments.csv");
  o.require(io::format_sta_records(curate(boxes, segments)) == io::read_text(dir + "/ek_expected.jsonl"),
            "golden fixture differs");
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<BoxAnnotation> b;
    std::vector<ActionSegment> s;
    for (int i = 0, n = 1 + static_cast<int>(rng() % 30); i < n; ++i) {
      const double x = static_cast<double>(rng() % 100);
      b.push_back({"v" + std::to_string(rng() % 2), static_cast<long>(rng() % 200), static_cast<Label>(rng() % 3),
                   {x, x, x + 5.0, x + 5.0}});
    }
    for (int i = 0, n = static_cast<int>(rng() % 6); i < n; ++i) {
      const long start = static_cast<long>(rng() % 220);
      s.push_back({"v" + std::to_string(rng() % 2), start, start + 10, static_cast<Label>(rng() % 4),
                   static_cast<Label>(rng() % 3)});
    }
    for (const StaRecord& r : curate(b, s)) o.require(r.ttc > 0.0, "non-positive time to contact");
  }
  return o;
}

Outcome config_defaults() {
  Outcome o;
  o.require(kDefaultNeighbours == 4, "K default");
  o.require(kDefaultSimilarityWeighting, "weighted default");
  const KnnOptions knn;
  o.require(knn.k == 4, "KnnOptions K");
  const DemoOptions demo;
  o.require(demo.k == 4 && demo.weighted, "demo defaults");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"residual identities", residual_identities},
      {"affordance vote oracle", affordance_oracle},
      {"fusion properties", fusion_properties},
      {"top-5 mAP engine", map_engine},
      {"relative gain formula", relative_gain_formula},
      {"hotspot re-weighting", hotspot_reweighting},
      {"zone construction", zone_construction},
      {"EK curation golden fixture", ek_curation},
      {"config defaults", config_defaults},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s %zu %s%s%s\n", o.ok ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.empty() ? "" : ": ", o.detail.c_str());
    failures += o.ok ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
