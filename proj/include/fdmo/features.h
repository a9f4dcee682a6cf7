#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fdmo/geometry.h"
#include "fdmo/image.h"

namespace fdmo {

/// 256-bit binary descriptor.
using Descriptor = std::array<uint64_t, 4>;

int hamming_distance(const Descriptor& a, const Descriptor& b);

struct Feature {
  Vec2 px;                  // level-0 pixel coordinates
  int octave = 0;           // detection scale (factor 1.2 per octave)
  double score = 0.0;       // corner response
  double orientation = 0.0;  // radians
  Descriptor descriptor{};
  bool has_descriptor = false;
};

struct DetectorParams {
  int threshold = 20;       // gray levels
  int arc_length = 9;       // contiguous circle pixels
  int octaves = 4;
  double scale_factor = 1.2;
  int cell_px = 16;         // bucketing grid at level 0
};

/// Segment-test corners, non-max suppressed and grid-bucketed, over a small
/// scale pyramid. At most `target` features, by descending score.
std::vector<Feature> detect_features(const Image& img, int target,
                                     const DetectorParams& params = {});

/// Oriented binary descriptors (intensity-centroid orientation, 256 rotated
/// point-pair comparisons). Features closer than 20 px to their octave border
/// are dropped; `*dropped` reports how many.
std::vector<Feature> compute_descriptors(const Image& img, const std::vector<Feature>& feats,
                                         int* dropped = nullptr,
                                         const DetectorParams& params = {});

/// Convenience: detect + describe in one pass (shares the octave images).
std::vector<Feature> detect_and_describe(const Image& img, int target,
                                         const DetectorParams& params = {});

struct Match {
  int a = -1;
  int b = -1;
  int distance = 0;
};

/// Nearest-neighbor Hamming matching with distance gate, Lowe ratio test and
/// mutual-best cross-check. Injective in both directions.
std::vector<Match> match_descriptors(const std::vector<Descriptor>& a,
                                     const std::vector<Descriptor>& b, int max_dist = 50,
                                     double ratio = 0.8);

std::vector<Descriptor> descriptors_of(const std::vector<Feature>& feats);

/// Hierarchical binary k-medians tree (branching k, depth L).
class Vocabulary {
 public:
  struct Node {
    Descriptor centroid{};
    uint32_t parent = 0;
    int depth = 0;
    std::vector<uint32_t> children;
  };

  bool empty() const { return nodes_.empty(); }
  int branching() const { return k_; }
  int depth() const { return l_; }
  const std::vector<Node>& nodes() const { return nodes_; }

  /// Leaf node id the descriptor quantizes to.
  uint32_t leaf_of(const Descriptor& d) const;
  uint32_t parent_of(uint32_t node) const { return nodes_[node].parent; }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  friend Vocabulary train_vocabulary(const std::vector<Descriptor>& corpus, int k, int l,
                                     uint64_t seed);

 private:
  int k_ = 0;
  int l_ = 0;
  std::vector<Node> nodes_;
};

/// Deterministic hierarchical k-medians training (majority-vote centroids).
/// Throws CorpusTooSmall when the corpus has fewer than k descriptors.
Vocabulary train_vocabulary(const std::vector<Descriptor>& corpus, int k, int l, uint64_t seed);

/// match_descriptors restricted to pairs sharing a vocabulary leaf (widened
/// to the parent node where the ref leaf bucket is a singleton). The output
/// is always a subset of the unrestricted matches; with an empty vocabulary
/// it falls back to brute force (logged).
std::vector<Match> vocab_blind_match(const std::vector<Descriptor>& query,
                                     const std::vector<Descriptor>& ref, const Vocabulary& vocab,
                                     int max_dist = 50, double ratio = 0.8);

/// Per-reference-set variant keyed the way recovery consumes it.
std::map<int, std::vector<Match>> vocab_blind_match(
    const std::vector<Descriptor>& query, const std::map<int, std::vector<Descriptor>>& refs,
    const Vocabulary& vocab, int max_dist = 50, double ratio = 0.8);

}  // namespace fdmo
