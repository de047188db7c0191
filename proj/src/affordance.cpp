#include "stakit/affordance.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "stakit/error.hpp"

namespace stakit {

const Zone& ZoneDatabase::zone(std::size_t id) const {
  for (const Zone& z : zones)
    if (z.id == id) return z;
  throw Error(ErrorCode::not_found, "zone " + std::to_string(id) + " is not in the database");
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "cosine similarity of vectors with lengths " + std::to_string(a.size()) +
                    " and " + std::to_string(b.size()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double visual_same_zone(const ClipRecord& a, const ClipRecord& b) {
  return std::max(0.0, cosine_similarity(a.visual, b.visual));
}

namespace {

std::vector<Label> sorted_union(std::vector<Label> acc, const std::vector<Label>& more) {
  acc.insert(acc.end(), more.begin(), more.end());
  std::sort(acc.begin(), acc.end());
  acc.erase(std::unique(acc.begin(), acc.end()), acc.end());
  return acc;
}

void check_descriptor_lengths(std::span<const ClipRecord> clips) {
  if (clips.empty()) return;
  const std::size_t visual = clips.front().visual.size();
  std::optional<std::size_t> text;
  for (const ClipRecord& c : clips) {
    if (c.visual.size() != visual) {
      throw Error(ErrorCode::dimension_mismatch,
                  "clip '" + c.clip_id + "' has a visual descriptor of length " +
                      std::to_string(c.visual.size()) + ", expected " + std::to_string(visual));
    }
    if (c.text) {
      if (!text) text = c.text->size();
      if (c.text->size() != *text) {
        throw Error(ErrorCode::dimension_mismatch,
                    "clip '" + c.clip_id + "' has a text descriptor of length " +
                        std::to_string(c.text->size()) + ", expected " + std::to_string(*text));
      }
    }
  }
}

struct OpenZone {
  std::vector<const ClipRecord*> members;
};

}  // namespace

ZoneDescriptors zone_descriptors(std::span<const ClipRecord* const> members) {
  if (members.empty()) throw Error(ErrorCode::invalid_argument, "zone has no members");
  const bool has_text = members.front()->text.has_value();
  ZoneDescriptors out;
  out.visual.assign(members.front()->visual.size(), 0.0);
  if (has_text) out.text.assign(members.front()->text->size(), 0.0);
  for (const ClipRecord* m : members) {
    if (m->visual.empty() || m->visual.size() != out.visual.size()) {
      throw Error(ErrorCode::invalid_argument,
                  "clip '" + m->clip_id + "' is missing its visual descriptor");
    }
    if (m->text.has_value() != has_text || (has_text && m->text->size() != out.text.size())) {
      throw Error(ErrorCode::invalid_argument,
                  "clip '" + m->clip_id + "' has a missing or mismatched text descriptor");
    }
    for (std::size_t i = 0; i < out.visual.size(); ++i) out.visual[i] += m->visual[i];
    if (has_text)
      for (std::size_t i = 0; i < out.text.size(); ++i) out.text[i] += (*m->text)[i];
  }
  const double n = static_cast<double>(members.size());
  for (double& v : out.visual) v /= n;
  for (double& v : out.text) v /= n;
  return out;
}

std::vector<Zone> build_zones(std::span<const ClipRecord> clips, const SameZoneOracle& same_zone,
                              const ZoneParams& params) {
  if (!(params.theta >= 0.0 && params.theta <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "zone threshold theta must lie in [0, 1]");
  }
  if (params.history == 0) {
    throw Error(ErrorCode::invalid_argument, "zone history M must be at least 1");
  }
  check_descriptor_lengths(clips);

  std::vector<std::string> video_order;
  std::map<std::string, std::vector<const ClipRecord*>> by_video;
  for (const ClipRecord& c : clips) {
    auto [it, inserted] = by_video.try_emplace(c.video_id);
    if (inserted) video_order.push_back(c.video_id);
    it->second.push_back(&c);
  }

  std::vector<Zone> zones;
  for (const std::string& video : video_order) {
    std::vector<const ClipRecord*>& seq = by_video[video];
    std::stable_sort(seq.begin(), seq.end(),
                     [](const ClipRecord* a, const ClipRecord* b) { return a->frame < b->frame; });

    std::vector<OpenZone> open;
    for (const ClipRecord* clip : seq) {
      std::optional<std::size_t> best;
      double best_mean = -1.0;
      for (std::size_t z = 0; z < open.size(); ++z) {
        const auto& members = open[z].members;
        const std::size_t first = members.size() > params.history ? members.size() - params.history : 0;
        double total = 0.0;
        for (std::size_t m = first; m < members.size(); ++m) {
          const double s = same_zone(*clip, *members[m]);
          if (!(s >= 0.0 && s <= 1.0)) {
            throw Error(ErrorCode::domain, "same-zone oracle returned " + std::to_string(s) +
                                               " for clips '" + clip->clip_id + "' and '" +
                                               members[m]->clip_id + "'; expected [0, 1]");
          }
          total += s;
        }
        const double mean = total / static_cast<double>(members.size() - first);
        if (mean > best_mean) {
          best_mean = mean;
          best = z;
        }
      }
      if (best && best_mean >= params.theta) {
        open[*best].members.push_back(clip);
      } else {
        open.push_back({{clip}});
      }
    }

    for (const OpenZone& oz : open) {
      Zone z;
      z.id = zones.size();
      z.video_id = video;
      for (const ClipRecord* m : oz.members) {
        z.members.push_back(m->clip_id);
        z.nouns = sorted_union(std::move(z.nouns), m->nouns);
        z.verbs = sorted_union(std::move(z.verbs), m->verbs);
      }
      ZoneDescriptors d = zone_descriptors(oz.members);
      z.z_visual = std::move(d.visual);
      z.z_text = std::move(d.text);
      zones.push_back(std::move(z));
    }
  }
  return zones;
}

ZoneDatabase build_database(std::span<const ClipRecord> clips, const SameZoneOracle& same_zone,
                            const ZoneParams& params) {
  ZoneDatabase db;
  db.params = params;
  db.zones = build_zones(clips, same_zone, params);
  for (const Zone& z : db.zones) {
    db.noun_vocab = sorted_union(std::move(db.noun_vocab), z.nouns);
    db.verb_vocab = sorted_union(std::move(db.verb_vocab), z.verbs);
  }
  return db;
}

KnnResult knn_query(std::span<const double> query, const std::vector<Zone>& zones,
                    const KnnOptions& options) {
  if (zones.empty()) throw Error(ErrorCode::invalid_argument, "knn query on an empty database");
  if (options.k < 1 || options.k > zones.size()) {
    throw Error(ErrorCode::invalid_argument,
                "K = " + std::to_string(options.k) + " must lie in [1, " +
                    std::to_string(zones.size()) + "] (the zone count)");
  }
  KnnResult out;
  out.k = options.k;
  for (Channel channel : {Channel::visual, Channel::text}) {
    std::vector<KnnEntry> scored;
    scored.reserve(zones.size());
    for (const Zone& z : zones) {
      const Vector& target = channel == Channel::visual ? z.z_visual : z.z_text;
      double s = 0.0;
      if (!target.empty()) s = cosine_similarity(query, target);
      if (options.rescale_to_unit) s = 0.5 * (s + 1.0);
      scored.push_back({z.id, s, channel});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const KnnEntry& a, const KnnEntry& b) {
      return a.similarity > b.similarity;
    });
    out.entries.insert(out.entries.end(), scored.begin(),
                       scored.begin() + static_cast<std::ptrdiff_t>(options.k));
  }
  return out;
}

void CategoricalDistribution::validate() const {
  if (p.empty()) throw Error(ErrorCode::invalid_argument, "distribution is empty");
  if (!vocab.empty() && vocab.size() != p.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "distribution has " + std::to_string(p.size()) + " probabilities for " +
                    std::to_string(vocab.size()) + " labels");
  }
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::invalid_argument, "distribution has a negative or non-finite entry");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::invalid_argument,
                "distribution sums to " + std::to_string(total) + ", not 1");
  }
}

CategoricalDistribution CategoricalDistribution::uniform(std::vector<Label> vocab) {
  if (vocab.empty()) throw Error(ErrorCode::invalid_argument, "vocabulary is empty");
  const double p = 1.0 / static_cast<double>(vocab.size());
  CategoricalDistribution d;
  d.p.assign(vocab.size(), p);
  d.vocab = std::move(vocab);
  return d;
}

CategoricalDistribution affordance_distribution(const KnnResult& knn,
                                                const std::vector<Zone>& zones,
                                                const std::vector<Label>& vocab, LabelKind kind,
                                                bool weighted) {
  if (vocab.empty()) throw Error(ErrorCode::invalid_argument, "vocabulary is empty");
  std::map<std::size_t, const Zone*> by_id;
  for (const Zone& z : zones) by_id[z.id] = &z;

  std::map<Label, std::size_t> slot;
  for (std::size_t i = 0; i < vocab.size(); ++i) slot.emplace(vocab[i], i);

  Vector exponent(vocab.size(), 0.0);
  for (const KnnEntry& e : knn.entries) {
    auto it = by_id.find(e.zone_id);
    if (it == by_id.end()) {
      throw Error(ErrorCode::not_found,
                  "knn result refers to unknown zone " + std::to_string(e.zone_id));
    }
    const double weight = weighted ? e.similarity : 1.0;
    const auto& labels = kind == LabelKind::noun ? it->second->nouns : it->second->verbs;
    for (Label l : labels) {
      auto s = slot.find(l);
      if (s != slot.end()) exponent[s->second] += weight;
    }
  }
  return {vocab, softmax_rows(Matrix(1, exponent.size(), exponent)).values()};
}

Vector fuse_scores(std::span<const double> prior, std::span<const double> likelihood) {
  if (prior.size() != likelihood.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "cannot fuse distributions over " + std::to_string(prior.size()) + " and " +
                    std::to_string(likelihood.size()) + " labels");
  }
  Vector out(prior.size());
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(prior[i] >= 0.0) || !(likelihood[i] >= 0.0)) {
      throw Error(ErrorCode::invalid_argument, "fusion inputs must be non-negative");
    }
    out[i] = prior[i] * likelihood[i];
    total += out[i];
  }
  if (!(total > 0.0)) {
    throw Error(ErrorCode::domain, "affordance and detector distributions have disjoint supports");
  }
  for (double& v : out) v /= total;
  return out;
}

CategoricalDistribution fuse_distributions(const CategoricalDistribution& p_aff,
                                           const CategoricalDistribution& p_sta) {
  p_aff.validate();
  p_sta.validate();
  if (!p_aff.vocab.empty() && !p_sta.vocab.empty() && p_aff.vocab != p_sta.vocab) {
    throw Error(ErrorCode::dimension_mismatch, "distributions use different vocabularies");
  }
  return {p_sta.vocab.empty() ? p_aff.vocab : p_sta.vocab, fuse_scores(p_aff.p, p_sta.p)};
}

namespace {

Label argmax_keeping(const Vector& p, Label current) {
  const double peak = *std::max_element(p.begin(), p.end());
  if (current >= 0 && static_cast<std::size_t>(current) < p.size() &&
      p[static_cast<std::size_t>(current)] == peak) {
    return current;
  }
  return static_cast<Label>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace

std::vector<Detection> apply_affordance_to_detections(const std::vector<Detection>& dets,
                                                      const CategoricalDistribution& nouns,
                                                      const CategoricalDistribution& verbs) {
  nouns.validate();
  verbs.validate();
  std::vector<Detection> out;
  out.reserve(dets.size());
  for (const Detection& d : dets) {
    if (!d.noun_probs || !d.verb_probs) {
      throw Error(ErrorCode::invalid_argument,
                  "detection in '" + d.uid + "' lacks noun/verb probability vectors");
    }
    Detection r = d;
    r.noun_probs = fuse_scores(nouns.p, *d.noun_probs);
    r.verb_probs = fuse_scores(verbs.p, *d.verb_probs);
    r.noun = argmax_keeping(*r.noun_probs, d.noun);
    r.verb = argmax_keeping(*r.verb_probs, d.verb);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace stakit
