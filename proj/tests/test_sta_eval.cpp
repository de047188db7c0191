#include <doctest.h>

#include <random>
#include <set>

#include "oracles.hpp"
#include "stakit/error.hpp"
#include "stakit/sta_eval.hpp"

using namespace stakit;

namespace {

Detection det(std::string uid, Box box, Label noun, Label verb, double ttc, double score) {
  Detection d;
  d.uid = std::move(uid);
  d.box = box;
  d.noun = noun;
  d.verb = verb;
  d.ttc = ttc;
  d.score = score;
  return d;
}

GroundTruth gt(std::string uid, Box box, Label noun, Label verb, double ttc) {
  return GroundTruth{std::move(uid), box, noun, verb, ttc};
}

struct RandomCase {
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;

  std::set<std::string> images() const {
    std::set<std::string> out;
    for (const auto& d : dets) out.insert(d.uid);
    return out;
  }
};

Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0.0, 10.0), size(2.0, 6.0);
  const double x = pos(rng), y = pos(rng);
  return {x, y, x + size(rng), y + size(rng)};
}

Box jitter(const Box& b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> j(-1.0, 1.0);
  Box out{b.x1 + j(rng), b.y1 + j(rng), b.x2 + j(rng), b.y2 + j(rng)};
  if (out.x2 <= out.x1) out.x2 = out.x1 + 0.5;
  if (out.y2 <= out.y1) out.y2 = out.y1 + 0.5;
  return out;
}

RandomCase random_case(std::mt19937_64& rng) {
  RandomCase c;
  std::uniform_real_distribution<double> u(0.0, 1.0), ttc(0.1, 2.0);
  const int images = 1 + static_cast<int>(rng() % 4);
  for (int i = 0; i < images; ++i) {
    const std::string uid = "img" + std::to_string(i);
    const int n_gt = static_cast<int>(rng() % 4);
    for (int g = 0; g < n_gt; ++g)
      c.gts.push_back(gt(uid, random_box(rng), static_cast<Label>(rng() % 3), static_cast<Label>(rng() % 2), ttc(rng)));
    const int n_det = static_cast<int>(rng() % 7);
    for (int d = 0; d < n_det; ++d) {
      Detection x;
      if (!c.gts.empty() && u(rng) < 0.7) {
        const GroundTruth& src = c.gts[rng() % c.gts.size()];
        x = det(uid, jitter(src.box, rng), src.noun, src.verb, src.ttc, 0.0);
        if (u(rng) < 0.3) x.verb = 1 - x.verb;
        if (u(rng) < 0.3) x.ttc = ttc(rng);
        if (u(rng) < 0.1) x.noun = static_cast<Label>(rng() % 3);
      } else {
        x = det(uid, random_box(rng), static_cast<Label>(rng() % 3), static_cast<Label>(rng() % 2), ttc(rng), 0.0);
      }
      // Coarse scores so that ties are exercised.
      x.score = static_cast<double>(rng() % 5) / 4.0;
      c.dets.push_back(x);
    }
  }
  if (c.gts.empty()) c.gts.push_back(gt("img0", random_box(rng), 0, 0, 1.0));
  return c;
}

}  // namespace

TEST_CASE("iou examples") {
  CHECK(iou({0, 0, 2, 2}, {0, 0, 2, 2}) == 1.0);
  CHECK(iou({0, 0, 2, 2}, {1, 0, 3, 2}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(iou({0, 0, 1, 1}, {2, 2, 3, 3}) == 0.0);
  CHECK(iou({0, 0, 1, 1}, {1, 0, 2, 1}) == 0.0);
  CHECK(iou({0, 0, 4, 4}, {1, 1, 3, 3}) == doctest::Approx(0.25));
}

TEST_CASE("average precision examples") {
  CHECK(average_precision({true, true}, 2) == 1.0);
  CHECK(average_precision({false, true}, 1) == 0.5);
  CHECK(average_precision({true, false, true}, 4) == doctest::Approx(0.25 + 0.25 * 2.0 / 3.0));
  CHECK(average_precision({}, 3) == 0.0);
  for (int mask = 0; mask < 64; ++mask) {
    std::vector<bool> tp;
    for (int b = 0; b < 6; ++b) tp.push_back((mask >> b) & 1);
    CHECK(average_precision(tp, 7) == doctest::Approx(oracle::average_precision(tp, 7)).epsilon(1e-15));
  }
}

TEST_CASE("perfect detections score 1 on every metric") {
  const std::vector<GroundTruth> gts{gt("a", {0, 0, 10, 10}, 1, 2, 1.0), gt("a", {20, 20, 30, 30}, 3, 0, 0.5),
                                     gt("b", {5, 5, 15, 15}, 1, 1, 2.0)};
  std::vector<Detection> dets;
  for (const auto& g : gts) dets.push_back(det(g.uid, g.box, g.noun, g.verb, g.ttc, 0.9));
  const EvalReport r = evaluate(dets, gts);
  for (const auto& name : kMetricNames) CHECK(r.metric(name) == 1.0);
  CHECK(r.counts.images == 2);
  CHECK(r.counts.ground_truth == 3);
  CHECK(r.counts.kept == 3);
}

TEST_CASE("wrong verbs only hurt verb metrics") {
  const std::vector<GroundTruth> gts{gt("a", {0, 0, 10, 10}, 1, 2, 1.0), gt("b", {0, 0, 10, 10}, 2, 3, 1.0)};
  const std::vector<Detection> dets{det("a", {0, 0, 10, 10}, 1, 0, 1.1, 0.8),
                                    det("b", {0, 0, 10, 10}, 2, 3, 1.0, 0.7)};
  const EvalReport r = evaluate(dets, gts);
  CHECK(r.metric("N") == 1.0);
  CHECK(r.metric("N+delta") == 1.0);
  CHECK(r.metric("N+V") == 0.5);
  CHECK(r.metric("All") == 0.5);
  CHECK(r.metrics[1].class_ap.at(1) == 0.0);
  CHECK(r.metrics[1].class_ap.at(2) == 1.0);
}

TEST_CASE("ttc tolerance is inclusive and top-k drops low-ranked detections") {
  const std::vector<GroundTruth> gts{gt("a", {0, 0, 10, 10}, 1, 2, 1.0)};
  const std::vector<Detection> near{det("a", {0, 0, 10, 10}, 1, 2, 1.25, 0.8)};
  CHECK(evaluate(near, gts).metric("N+delta") == 1.0);
  const std::vector<Detection> far{det("a", {0, 0, 10, 10}, 1, 2, 1.5, 0.8)};
  CHECK(evaluate(far, gts).metric("N+delta") == 0.0);

  std::vector<Detection> crowd;
  for (int i = 0; i < 5; ++i) crowd.push_back(det("a", {50, 50, 60, 60}, 1, 2, 1.0, 0.9));
  crowd.push_back(det("a", {0, 0, 10, 10}, 1, 2, 1.0, 0.1));
  const EvalReport r = evaluate(crowd, gts);
  CHECK(r.metric("N") == 0.0);
  CHECK(r.counts.kept == 5);
  EvalParams wide;
  wide.top_k = 6;
  CHECK(evaluate(crowd, gts, {}, wide).metric("N") == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("greedy matching takes the highest IoU box and breaks ties by order") {
  const std::vector<GroundTruth> gts{gt("a", {0, 0, 10, 10}, 1, 0, 1.0), gt("a", {0, 0, 10, 10}, 1, 1, 1.0)};
  const std::vector<Detection> dets{det("a", {0, 0, 10, 10}, 1, 1, 1.0, 0.9)};
  // The first ground truth wins the tie, so the verb check fails.
  CHECK(evaluate(dets, gts).metric("N+V") == 0.0);
  CHECK(evaluate(dets, gts).metric("N") == 0.5);
}

TEST_CASE("evaluation agrees with the exhaustive oracle") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 200; ++trial) {
    const RandomCase c = random_case(rng);
    EvalParams params;
    params.top_k = 1 + rng() % 5;
    params.iou_threshold = trial % 2 ? 0.5 : 0.3;
    const EvalReport r = evaluate(c.dets, c.gts, c.images(), params);
    const auto want = oracle::evaluate(c.dets, c.gts, params);
    for (const auto& name : kMetricNames) {
      INFO("trial ", trial, " metric ", name);
      CHECK(std::abs(r.metric(name) - want.at(name)) <= 1e-12);
    }
  }
}

TEST_CASE("metrics are nested and invariant to monotone score maps") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    RandomCase c = random_case(rng);
    const EvalReport r = evaluate(c.dets, c.gts, c.images());
    CHECK(r.metric("All") <= r.metric("N+V") + 1e-15);
    CHECK(r.metric("All") <= r.metric("N+delta") + 1e-15);
    CHECK(r.metric("N+V") <= r.metric("N") + 1e-15);
    CHECK(r.metric("N+delta") <= r.metric("N") + 1e-15);
    for (Detection& d : c.dets) d.score = 0.1 + 0.5 * d.score * d.score;
    const EvalReport s = evaluate(c.dets, c.gts, c.images());
    for (const auto& name : kMetricNames) CHECK(s.metric(name) == r.metric(name));
  }
}

TEST_CASE("parallel evaluation is deterministic") {
  std::mt19937_64 rng(5);
  RandomCase big;
  for (int i = 0; i < 30; ++i) {
    RandomCase c = random_case(rng);
    for (auto& d : c.dets) d.uid += "_" + std::to_string(i);
    for (auto& g : c.gts) g.uid += "_" + std::to_string(i);
    big.dets.insert(big.dets.end(), c.dets.begin(), c.dets.end());
    big.gts.insert(big.gts.end(), c.gts.begin(), c.gts.end());
  }
  const EvalReport one = evaluate(big.dets, big.gts, big.images());
  for (unsigned jobs : {2u, 4u, 7u}) {
    EvalParams p;
    p.jobs = jobs;
    const EvalReport many = evaluate(big.dets, big.gts, big.images(), p);
    for (std::size_t m = 0; m < 4; ++m) {
      CHECK(many.metrics[m].map == one.metrics[m].map);
      CHECK(many.metrics[m].class_ap == one.metrics[m].class_ap);
    }
  }
}

TEST_CASE("relative gain and report diffs") {
  CHECK(*relative_gain(14.5, 10.0) == doctest::Approx(45.0));
  CHECK_FALSE(relative_gain(1.0, 0.0).has_value());
  const std::vector<GroundTruth> gts{gt("a", {0, 0, 10, 10}, 1, 2, 1.0)};
  const EvalReport r = evaluate({det("a", {0, 0, 10, 10}, 1, 0, 1.0, 0.5)}, gts);
  for (const MetricDelta& d : diff_reports(r, r)) {
    CHECK(d.delta == 0.0);
    if (d.baseline > 0.0) CHECK(*d.relative_gain_pct == 0.0);
    else CHECK_FALSE(d.relative_gain_pct.has_value());
  }
}

TEST_CASE("evaluation errors") {
  const std::vector<GroundTruth> gts{gt("a", {0, 0, 10, 10}, 1, 2, 1.0)};
  CHECK_THROWS_AS(evaluate({}, {}), Error);
  CHECK_THROWS_AS(evaluate({det("zzz", {0, 0, 1, 1}, 1, 1, 1.0, 0.5)}, gts), Error);
  EvalParams bad;
  bad.iou_threshold = 1.5;
  CHECK_THROWS_AS(evaluate({}, gts, {}, bad), Error);
  bad = {};
  bad.top_k = 0;
  CHECK_THROWS_AS(evaluate({}, gts, {}, bad), Error);
  const EvalReport r = evaluate({}, gts, {"a", "b"});
  CHECK(r.metric("N") == 0.0);
  CHECK(r.counts.images == 2);
  CHECK_THROWS_AS(r.metric("bogus"), Error);
}
