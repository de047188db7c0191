#include "stakit/demo.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "stakit/error.hpp"

namespace stakit {

namespace {

constexpr std::size_t kDescriptorSize = 16;
constexpr std::size_t kNouns = 8;
constexpr std::size_t kVerbs = 5;
constexpr std::size_t kClipsPerZone = 4;
constexpr std::size_t kFrameHeight = 48;
constexpr std::size_t kFrameWidth = 64;
constexpr std::size_t kMapHeight = 12;
constexpr std::size_t kMapWidth = 16;

struct SceneZone {
  Vector prototype;
  std::vector<Label> nouns;
  std::vector<Label> verbs;
};

Vector random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(kDescriptorSize);
  double norm = 0.0;
  for (double& x : v) {
    x = normal(rng);
    norm += x * x;
  }
  for (double& x : v) x /= std::sqrt(norm);
  return v;
}

Vector jitter(const Vector& v, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sigma);
  Vector out = v;
  for (double& x : out) x += normal(rng);
  return out;
}

std::vector<Label> pick_labels(std::size_t count, std::size_t vocab, std::mt19937_64& rng) {
  std::vector<Label> all(vocab);
  for (std::size_t i = 0; i < vocab; ++i) all[i] = static_cast<Label>(i);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

// Noisy detector posterior: random mass plus a bump on the true label.
Vector noisy_posterior(std::size_t size, Label truth, double confidence, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(1.0, 1.0);
  Vector p(size);
  double total = 0.0;
  for (double& x : p) {
    x = gamma(rng);
    total += x;
  }
  for (double& x : p) x = (1.0 - confidence) * x / total;
  p[static_cast<std::size_t>(truth)] += confidence;
  return p;
}

Label argmax(const Vector& p) {
  return static_cast<Label>(std::max_element(p.begin(), p.end()) - p.begin());
}

Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> w(6.0, 20.0);
  const double bw = w(rng);
  const double bh = w(rng);
  std::uniform_real_distribution<double> x(0.0, static_cast<double>(kFrameWidth) - bw);
  std::uniform_real_distribution<double> y(0.0, static_cast<double>(kFrameHeight) - bh);
  const double x1 = x(rng);
  const double y1 = y(rng);
  return {x1, y1, x1 + bw, y1 + bh};
}

Box shifted(const Box& b, double dx, double dy) { return {b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy}; }

}  // namespace

DemoData synth_demo_data(const DemoOptions& o) {
  if (o.videos == 0 || o.zones_per_video == 0 || o.test_images == 0 || o.detections_per_image == 0) {
    throw Error(ErrorCode::invalid_argument, "demo sizes must be positive");
  }
  std::mt19937_64 rng(o.seed);
  DemoData data;
  data.num_nouns = kNouns;
  data.num_verbs = kVerbs;

  std::vector<std::vector<SceneZone>> scenes(o.videos);
  for (std::size_t v = 0; v < o.videos; ++v) {
    for (std::size_t z = 0; z < o.zones_per_video; ++z) {
      scenes[v].push_back({random_unit(rng), pick_labels(2, kNouns, rng), pick_labels(2, kVerbs, rng)});
    }
  }

  for (std::size_t v = 0; v < o.videos; ++v) {
    const std::string video = "P" + std::to_string(v + 1);
    long frame = 0;
    for (std::size_t z = 0; z < o.zones_per_video; ++z) {
      const SceneZone& zone = scenes[v][z];
      for (std::size_t c = 0; c < kClipsPerZone; ++c) {
        ClipRecord clip;
        clip.video_id = video;
        clip.frame = frame;
        clip.clip_id = video + "_clip" + std::to_string(frame);
        frame += 30;
        clip.visual = jitter(zone.prototype, 0.05, rng);
        clip.text = jitter(zone.prototype, 0.2, rng);
        clip.nouns = {zone.nouns[c % zone.nouns.size()]};
        clip.verbs = {zone.verbs[c % zone.verbs.size()]};
        data.clips.push_back(std::move(clip));
      }
    }
  }

  std::uniform_int_distribution<std::size_t> pick_video(0, o.videos - 1);
  std::uniform_int_distribution<std::size_t> pick_zone(0, o.zones_per_video - 1);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_real_distribution<double> ttc(0.5, 2.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> small(0.0, 0.1);
  std::normal_distribution<double> pixel(0.0, 1.0);

  for (std::size_t i = 0; i < o.test_images; ++i) {
    const std::string uid = "test_" + std::to_string(i);
    const SceneZone& zone = scenes[pick_video(rng)][pick_zone(rng)];
    data.descriptors[uid] = jitter(zone.prototype, 0.05, rng);

    GroundTruth gt;
    gt.uid = uid;
    gt.box = random_box(rng);
    gt.noun = zone.nouns[static_cast<std::size_t>(coin(rng))];
    gt.verb = zone.verbs[static_cast<std::size_t>(coin(rng))];
    gt.ttc = ttc(rng);
    data.ground_truth.push_back(gt);

    data.hotspots[uid] = synth_gaussian_map(
        uid, kMapHeight, kMapWidth,
        {{gt.box.center_x() * kMapWidth / kFrameWidth, gt.box.center_y() * kMapHeight / kFrameHeight, 1.5}});
    data.hotspots[uid].frame_height = kFrameHeight;
    data.hotspots[uid].frame_width = kFrameWidth;

    for (std::size_t k = 0; k < o.detections_per_image; ++k) {
      Detection d;
      d.uid = uid;
      const bool on_target = k == 0;
      d.box = on_target ? shifted(gt.box, pixel(rng), pixel(rng)) : random_box(rng);
      const Label noun_hint = on_target ? gt.noun : static_cast<Label>(rng() % kNouns);
      const Label verb_hint = on_target ? gt.verb : static_cast<Label>(rng() % kVerbs);
      d.noun_probs = noisy_posterior(kNouns, noun_hint, 0.15, rng);
      d.verb_probs = noisy_posterior(kVerbs, verb_hint, 0.15, rng);
      d.noun = argmax(*d.noun_probs);
      d.verb = argmax(*d.verb_probs);
      d.ttc = std::max(0.05, gt.ttc + (on_target ? small(rng) : 4.0 * small(rng)));
      d.score = unit(rng);
      data.detections.push_back(std::move(d));
    }
  }
  return data;
}

DemoResult run_demo(const DemoOptions& o) {
  const DemoData data = synth_demo_data(o);
  DemoResult result;
  result.database = build_database(data.clips, visual_same_zone);

  std::vector<Label> noun_vocab(data.num_nouns);
  std::vector<Label> verb_vocab(data.num_verbs);
  for (std::size_t i = 0; i < noun_vocab.size(); ++i) noun_vocab[i] = static_cast<Label>(i);
  for (std::size_t i = 0; i < verb_vocab.size(); ++i) verb_vocab[i] = static_cast<Label>(i);

  auto apply_affordance = [&](const std::vector<Detection>& dets) {
    std::vector<Detection> out;
    for (const auto& [uid, desc] : data.descriptors) {
      std::vector<Detection> mine;
      for (const Detection& d : dets)
        if (d.uid == uid) mine.push_back(d);
      const KnnResult knn = knn_query(desc, result.database.zones, {o.k, false});
      const auto nouns = affordance_distribution(knn, result.database.zones, noun_vocab,
                                                 LabelKind::noun, o.weighted);
      const auto verbs = affordance_distribution(knn, result.database.zones, verb_vocab,
                                                 LabelKind::verb, o.weighted);
      for (Detection& d : apply_affordance_to_detections(mine, nouns, verbs)) out.push_back(std::move(d));
    }
    return out;
  };

  EvalParams params;
  params.jobs = o.jobs;
  result.baseline = evaluate(data.detections, data.ground_truth, {}, params);

  std::vector<Detection> dets = data.detections;
  if (o.hotspot_first) {
    dets = apply_affordance(reweight(dets, data.hotspots));
  } else {
    dets = reweight(apply_affordance(dets), data.hotspots);
  }
  result.final = evaluate(dets, data.ground_truth, {}, params);
  result.diff = diff_reports(result.final, result.baseline);
  return result;
}

}  // namespace stakit
