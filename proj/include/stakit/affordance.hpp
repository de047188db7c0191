#pragma once

// Environment-affordance database.
//
// Training clips are grouped into activity-centric zones; each zone keeps the
// union of nouns/verbs observed in it and the mean visual and text
// descriptors of its clips. A new clip is matched to the K most similar zones
// through its visual descriptor, once against zone visual descriptors and
// once against zone text descriptors, and the 2K hits vote for labels:
//
//   p_aff(l) ∝ exp( sum_i S_i * [l in labels(Z_i)] )
//
// The result is fused with the detector's class distribution by an
// independence (product-of-experts) rule.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stakit/detection.hpp"

namespace stakit {

inline constexpr std::size_t kDefaultNeighbours = 4;
inline constexpr bool kDefaultSimilarityWeighting = true;
inline constexpr double kDefaultZoneThreshold = 0.5;
inline constexpr std::size_t kDefaultZoneHistory = 5;

struct ClipRecord {
  std::string clip_id;
  std::string video_id;
  long frame = 0;
  Vector visual;
  std::optional<Vector> text;
  std::vector<Label> nouns;
  std::vector<Label> verbs;
};

struct Zone {
  std::size_t id = 0;
  std::string video_id;
  std::vector<std::string> members;  // clip ids in assignment order
  std::vector<Label> nouns;  // sorted, unique
  std::vector<Label> verbs;
  Vector z_visual;
  Vector z_text;  // empty when the clips carry no text descriptors
};

struct ZoneParams {
  double theta = kDefaultZoneThreshold;
  std::size_t history = kDefaultZoneHistory;  // most recent members compared against
};

struct ZoneDatabase {
  std::vector<Zone> zones;
  std::vector<Label> noun_vocab;
  std::vector<Label> verb_vocab;
  ZoneParams params;

  // Throws not_found for an unknown id.
  const Zone& zone(std::size_t id) const;
};

// Probability in [0, 1] that two clips were taken in the same zone.
using SameZoneOracle = std::function<double(const ClipRecord&, const ClipRecord&)>;

// Default oracle: cosine similarity of the visual descriptors, floored at 0.
double visual_same_zone(const ClipRecord& a, const ClipRecord& b);

// Sequential per-video assignment. Clips are grouped by video (first
// appearance order) and visited in frame order; a clip joins the zone of its
// video with the highest mean oracle value against that zone's last
// `history` members when the mean reaches theta, otherwise it starts a zone.
std::vector<Zone> build_zones(std::span<const ClipRecord> clips, const SameZoneOracle& same_zone,
                              const ZoneParams& params = {});

ZoneDatabase build_database(std::span<const ClipRecord> clips, const SameZoneOracle& same_zone,
                            const ZoneParams& params = {});

struct ZoneDescriptors {
  Vector visual;
  Vector text;
};

// Plain arithmetic means, no renormalization. Text is averaged only when every
// member has one; a mix of present and missing text descriptors is an error.
ZoneDescriptors zone_descriptors(std::span<const ClipRecord* const> members);

// 0 when either vector has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

enum class Channel { visual, text };

struct KnnEntry {
  std::size_t zone_id = 0;
  double similarity = 0.0;
  Channel channel = Channel::visual;
};

struct KnnResult {
  std::vector<KnnEntry> entries;  // K visual hits then K text hits, each descending
  std::size_t k = 0;
};

struct KnnOptions {
  std::size_t k = kDefaultNeighbours;
  // Map cosine similarities from [-1, 1] to [0, 1] before ranking and voting.
  bool rescale_to_unit = false;
};

KnnResult knn_query(std::span<const double> query, const std::vector<Zone>& zones,
                    const KnnOptions& options = {});

struct CategoricalDistribution {
  std::vector<Label> vocab;
  Vector p;

  // Entries >= 0, sum within 1e-9 of 1, vocab and p of equal length.
  void validate() const;
  static CategoricalDistribution uniform(std::vector<Label> vocab);
};

enum class LabelKind { noun, verb };

CategoricalDistribution affordance_distribution(const KnnResult& knn,
                                                const std::vector<Zone>& zones,
                                                const std::vector<Label>& vocab, LabelKind kind,
                                                bool weighted = kDefaultSimilarityWeighting);

// Elementwise product renormalized to one. Inputs need only be non-negative,
// so unnormalized scores are accepted. Throws domain when the product is 0.
Vector fuse_scores(std::span<const double> prior, std::span<const double> likelihood);

CategoricalDistribution fuse_distributions(const CategoricalDistribution& p_aff,
                                           const CategoricalDistribution& p_sta);

// Replaces each detection's class vectors with the fused ones and re-derives
// noun/verb as the argmax (keeping the current label on ties). Scores are left
// untouched. Vector index i corresponds to label i.
std::vector<Detection> apply_affordance_to_detections(const std::vector<Detection>& dets,
                                                      const CategoricalDistribution& nouns,
                                                      const CategoricalDistribution& verbs);

}  // namespace stakit
