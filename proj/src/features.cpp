#include "fdmo/features.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "fdmo/errors.h"
#include "fdmo/log.h"
#include "fdmo/rng.h"

namespace fdmo {

int hamming_distance(const Descriptor& a, const Descriptor& b) {
  int d = 0;
  for (int i = 0; i < 4; ++i) d += __builtin_popcountll(a[size_t(i)] ^ b[size_t(i)]);
  return d;
}

namespace {

// Bresenham circle of radius 3, clockwise from 12 o'clock.
constexpr int kCircle[16][2] = {{0, -3}, {1, -3}, {2, -2},  {3, -1},  {3, 0},   {3, 1},
                                {2, 2},  {1, 3},  {0, 3},   {-1, 3},  {-2, 2},  {-3, 1},
                                {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}};

Image resize_bilinear(const Image& src, int dst_w, int dst_h) {
  Image dst(dst_w, dst_h);
  const double sx = double(src.width) / dst_w;
  const double sy = double(src.height) / dst_h;
  for (int y = 0; y < dst_h; ++y) {
    for (int x = 0; x < dst_w; ++x) {
      const double u = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.001);
      const double v = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.001);
      const int x0 = int(u), y0 = int(v);
      const double a = u - x0, b = v - y0;
      dst.at(x, y) = float((1 - a) * (1 - b) * src.at(x0, y0) + a * (1 - b) * src.at(x0 + 1, y0) +
                           (1 - a) * b * src.at(x0, y0 + 1) + a * b * src.at(x0 + 1, y0 + 1));
    }
  }
  return dst;
}

Image box_blur(const Image& src) {
  Image dst(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      float acc = 0.f;
      int cnt = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= src.width || yy >= src.height) continue;
          acc += src.at(xx, yy);
          ++cnt;
        }
      dst.at(x, y) = acc / float(cnt);
    }
  }
  return dst;
}

struct OctaveSet {
  std::vector<Image> images;
  std::vector<double> scales;  // level-0 px per octave px
};

OctaveSet build_octaves(const Image& img, const DetectorParams& p) {
  OctaveSet set;
  set.images.push_back(img);
  set.scales.push_back(1.0);
  for (int o = 1; o < p.octaves; ++o) {
    const double s = std::pow(p.scale_factor, o);
    const int w = int(std::lround(img.width / s));
    const int h = int(std::lround(img.height / s));
    if (w < 16 || h < 16) break;
    set.images.push_back(resize_bilinear(img, w, h));
    set.scales.push_back(double(img.width) / w);
  }
  return set;
}

// Segment test + SAD-style score; 0 means not a corner.
double fast_score(const Image& img, int x, int y, int threshold, int arc_length) {
  const float center = img.at(x, y);
  const float hi = center + float(threshold);
  const float lo = center - float(threshold);
  int state[16];
  for (int i = 0; i < 16; ++i) {
    const float v = img.at(x + kCircle[i][0], y + kCircle[i][1]);
    state[i] = v > hi ? 1 : (v < lo ? -1 : 0);
  }
  double best = 0.0;
  for (int polarity = -1; polarity <= 1; polarity += 2) {
    int run = 0, max_run = 0;
    for (int i = 0; i < 32; ++i) {
      if (state[i & 15] == polarity) {
        ++run;
        max_run = std::max(max_run, run);
        if (run >= 32) break;
      } else {
        run = 0;
      }
    }
    max_run = std::min(max_run, 16);
    if (max_run >= arc_length) {
      double sum = 0.0;
      for (int i = 0; i < 16; ++i) {
        if (state[i] != polarity) continue;
        const float v = img.at(x + kCircle[i][0], y + kCircle[i][1]);
        sum += std::abs(double(v) - double(center)) - threshold;
      }
      best = std::max(best, sum);
    }
  }
  return best;
}

struct RawCorner {
  double score;
  int x, y, octave;
};

bool corner_before(const RawCorner& a, const RawCorner& c) {
  if (a.score != c.score) return a.score > c.score;
  if (a.octave != c.octave) return a.octave < c.octave;
  if (a.y != c.y) return a.y < c.y;
  return a.x < c.x;
}

}  // namespace

std::vector<Feature> detect_features(const Image& img, int target, const DetectorParams& p) {
  std::vector<Feature> out;
  if (target <= 0 || img.width < 16 || img.height < 16) return out;

  const OctaveSet set = build_octaves(img, p);
  std::vector<RawCorner> corners;

  for (int o = 0; o < int(set.images.size()); ++o) {
    const Image& oi = set.images[size_t(o)];
    Image score_map(oi.width, oi.height, 0.f);
    for (int y = 3; y < oi.height - 3; ++y) {
      for (int x = 3; x < oi.width - 3; ++x) {
        score_map.at(x, y) = float(fast_score(oi, x, y, p.threshold, p.arc_length));
      }
    }
    for (int y = 4; y < oi.height - 4; ++y) {
      for (int x = 4; x < oi.width - 4; ++x) {
        const float s = score_map.at(x, y);
        if (s <= 0.f) continue;
        bool is_max = true;
        for (int dy = -1; dy <= 1 && is_max; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const float n = score_map.at(x + dx, y + dy);
            // strict on earlier neighbors so plateau duplicates collapse
            if (n > s || (n == s && (dy < 0 || (dy == 0 && dx < 0)))) {
              is_max = false;
              break;
            }
          }
        if (is_max) corners.push_back(RawCorner{double(s), x, y, o});
      }
    }
  }

  // cross-octave suppression: duplicate detections of one corner at several
  // scales would later defeat ratio tests with near-tie self-matches
  {
    // prefer the finest octave so the surviving copy (and with it the
    // descriptor's sampling scale) is stable across nearby views
    std::sort(corners.begin(), corners.end(), [](const RawCorner& a, const RawCorner& b) {
      if (a.octave != b.octave) return a.octave < b.octave;
      return corner_before(a, b);
    });
    std::vector<RawCorner> kept;
    std::vector<Vec2> kept_px;
    for (const RawCorner& c : corners) {
      const double s = set.scales[size_t(c.octave)];
      const Vec2 px(c.x * s, c.y * s);
      bool clear = true;
      for (const Vec2& q : kept_px) {
        if ((px - q).squaredNorm() < 9.0) {
          clear = false;
          break;
        }
      }
      if (clear) {
        kept.push_back(c);
        kept_px.push_back(px);
      }
    }
    corners = std::move(kept);
  }

  // grid bucketing for spatial spread, round-robin by score
  const int cell = std::max(8, p.cell_px);
  const int ncx = (img.width + cell - 1) / cell;
  const int ncy = (img.height + cell - 1) / cell;
  std::vector<std::vector<RawCorner>> buckets(size_t(ncx) * ncy);
  for (const RawCorner& c : corners) {
    const double s = set.scales[size_t(c.octave)];
    const int bx = std::min(ncx - 1, int(c.x * s) / cell);
    const int by = std::min(ncy - 1, int(c.y * s) / cell);
    buckets[size_t(by) * ncx + bx].push_back(c);
  }
  for (auto& b : buckets) std::sort(b.begin(), b.end(), corner_before);

  std::vector<RawCorner> picked;
  const int quota =
      int(buckets.empty() ? 0 : (size_t(target) + buckets.size() - 1) / buckets.size());
  for (int round = 0; round < std::max(1, quota) && int(picked.size()) < target; ++round) {
    for (auto& b : buckets) {
      if (round < int(b.size())) {
        picked.push_back(b[size_t(round)]);
        if (int(picked.size()) >= target) break;
      }
    }
  }
  std::sort(picked.begin(), picked.end(), corner_before);
  if (int(picked.size()) > target) picked.resize(size_t(target));

  out.reserve(picked.size());
  for (const RawCorner& c : picked) {
    Feature f;
    const double s = set.scales[size_t(c.octave)];
    f.px = Vec2(c.x * s, c.y * s);
    f.octave = c.octave;
    f.score = c.score;
    out.push_back(f);
  }
  return out;
}

namespace {

constexpr int kPatternRadius = 13;
constexpr int kBorderMargin = 20;

const std::array<Vec2, 512>& brief_pattern() {
  static const std::array<Vec2, 512> pattern = [] {
    std::array<Vec2, 512> p;
    Rng rng(0xfdb51ef0u);
    for (auto& pt : p) {
      for (;;) {
        const Vec2 v(rng.normal(0.0, kPatternRadius / 2.5),
                     rng.normal(0.0, kPatternRadius / 2.5));
        if (v.norm() <= kPatternRadius) {
          pt = v;
          break;
        }
      }
    }
    return p;
  }();
  return pattern;
}

// Intensity-centroid orientation over the 15-px moment patch. Isotropic
// patches have no usable direction, and a jittery orientation costs far more
// matches than none; weak centroids snap to zero.
double patch_orientation(const Image& img, int cx, int cy) {
  double m10 = 0.0, m01 = 0.0, dev = 0.0, mean = 0.0;
  constexpr int r = 15;
  int n = 0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy > r * r) continue;
      mean += img.at(cx + dx, cy + dy);
      ++n;
    }
  }
  mean /= n;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy > r * r) continue;
      const double v = img.at(cx + dx, cy + dy) - mean;
      m10 += dx * v;
      m01 += dy * v;
      dev += std::abs(v);
    }
  }
  const double strength = std::hypot(m10, m01) / std::max(dev * r, 1e-9);
  if (strength < 0.5) return 0.0;
  return std::atan2(m01, m10);
}

float sample_plain(const Image& img, double u, double v) {
  const int x0 = int(u), y0 = int(v);
  const double a = u - x0, b = v - y0;
  return float((1 - a) * (1 - b) * img.at(x0, y0) + a * (1 - b) * img.at(x0 + 1, y0) +
               (1 - a) * b * img.at(x0, y0 + 1) + a * b * img.at(x0 + 1, y0 + 1));
}

Descriptor describe_at(const Image& blurred, double cx, double cy, double angle) {
  const double ca = std::cos(angle), sa = std::sin(angle);
  const auto& pat = brief_pattern();
  Descriptor d{};
  for (int i = 0; i < 256; ++i) {
    const Vec2& p1 = pat[size_t(2 * i)];
    const Vec2& p2 = pat[size_t(2 * i + 1)];
    const double u1 = cx + ca * p1.x() - sa * p1.y();
    const double v1 = cy + sa * p1.x() + ca * p1.y();
    const double u2 = cx + ca * p2.x() - sa * p2.y();
    const double v2 = cy + sa * p2.x() + ca * p2.y();
    if (sample_plain(blurred, u1, v1) < sample_plain(blurred, u2, v2)) {
      d[size_t(i >> 6)] |= uint64_t(1) << (i & 63);
    }
  }
  return d;
}

}  // namespace

std::vector<Feature> compute_descriptors(const Image& img, const std::vector<Feature>& feats,
                                         int* dropped, const DetectorParams& p) {
  const OctaveSet set = build_octaves(img, p);
  std::vector<Image> blurred(set.images.size());
  std::vector<bool> have_blur(set.images.size(), false);

  std::vector<Feature> out;
  out.reserve(feats.size());
  int n_dropped = 0;
  for (const Feature& f : feats) {
    const int o = std::clamp(f.octave, 0, int(set.images.size()) - 1);
    const Image& oi = set.images[size_t(o)];
    const double inv_s = 1.0 / set.scales[size_t(o)];
    const double ox = f.px.x() * inv_s;
    const double oy = f.px.y() * inv_s;
    if (ox < kBorderMargin || oy < kBorderMargin || ox >= oi.width - kBorderMargin ||
        oy >= oi.height - kBorderMargin) {
      ++n_dropped;
      continue;
    }
    if (!have_blur[size_t(o)]) {
      blurred[size_t(o)] = box_blur(box_blur(oi));
      have_blur[size_t(o)] = true;
    }
    Feature g = f;
    g.orientation =
        patch_orientation(blurred[size_t(o)], int(std::lround(ox)), int(std::lround(oy)));
    g.descriptor = describe_at(blurred[size_t(o)], ox, oy, g.orientation);
    g.has_descriptor = true;
    out.push_back(g);
  }
  if (dropped) *dropped = n_dropped;
  return out;
}

std::vector<Feature> detect_and_describe(const Image& img, int target, const DetectorParams& p) {
  return compute_descriptors(img, detect_features(img, target, p), nullptr, p);
}

std::vector<Descriptor> descriptors_of(const std::vector<Feature>& feats) {
  std::vector<Descriptor> out;
  out.reserve(feats.size());
  for (const Feature& f : feats) out.push_back(f.descriptor);
  return out;
}

namespace {

struct NearestPair {
  int best_idx = -1;
  int best = 1 << 20;
  int second = 1 << 20;
};

NearestPair nearest_in(const Descriptor& d, const std::vector<Descriptor>& set) {
  NearestPair np;
  for (int j = 0; j < int(set.size()); ++j) {
    const int dist = hamming_distance(d, set[size_t(j)]);
    if (dist < np.best) {
      np.second = np.best;
      np.best = dist;
      np.best_idx = j;
    } else if (dist < np.second) {
      np.second = dist;
    }
  }
  return np;
}

bool passes_ratio(const NearestPair& np, int max_dist, double ratio) {
  if (np.best_idx < 0 || np.best > max_dist) return false;
  if (np.second < (1 << 20) && !(double(np.best) < ratio * double(np.second))) return false;
  return true;
}

}  // namespace

std::vector<Match> match_descriptors(const std::vector<Descriptor>& a,
                                     const std::vector<Descriptor>& b, int max_dist,
                                     double ratio) {
  std::vector<Match> out;
  if (a.empty() || b.empty()) return out;

  std::vector<int> b_best_idx(b.size(), -1);
  std::vector<int> b_best_dist(b.size(), 1 << 20);
  std::vector<NearestPair> a_nearest(a.size());
  for (int i = 0; i < int(a.size()); ++i) {
    NearestPair np;
    for (int j = 0; j < int(b.size()); ++j) {
      const int dist = hamming_distance(a[size_t(i)], b[size_t(j)]);
      if (dist < np.best) {
        np.second = np.best;
        np.best = dist;
        np.best_idx = j;
      } else if (dist < np.second) {
        np.second = dist;
      }
      if (dist < b_best_dist[size_t(j)]) {
        b_best_dist[size_t(j)] = dist;
        b_best_idx[size_t(j)] = i;
      }
    }
    a_nearest[size_t(i)] = np;
  }

  for (int i = 0; i < int(a.size()); ++i) {
    const NearestPair& np = a_nearest[size_t(i)];
    if (!passes_ratio(np, max_dist, ratio)) continue;
    if (b_best_idx[size_t(np.best_idx)] != i) continue;
    out.push_back(Match{i, np.best_idx, np.best});
  }
  return out;
}

// ---------------------------------------------------------------------------
// vocabulary

uint32_t Vocabulary::leaf_of(const Descriptor& d) const {
  uint32_t node = 0;
  while (!nodes_[node].children.empty()) {
    int best = 1 << 20;
    uint32_t pick = nodes_[node].children.front();
    for (uint32_t c : nodes_[node].children) {
      const int dist = hamming_distance(d, nodes_[c].centroid);
      if (dist < best) {
        best = dist;
        pick = c;
      }
    }
    node = pick;
  }
  return node;
}

namespace {

Descriptor majority_centroid(const std::vector<Descriptor>& descs,
                             const std::vector<int>& members) {
  Descriptor c{};
  if (members.empty()) return c;
  for (int bit = 0; bit < 256; ++bit) {
    int ones = 0;
    for (int idx : members) {
      if (descs[size_t(idx)][size_t(bit >> 6)] >> (bit & 63) & 1) ++ones;
    }
    if (2 * ones > int(members.size())) c[size_t(bit >> 6)] |= uint64_t(1) << (bit & 63);
  }
  return c;
}

std::vector<std::vector<int>> kmedians(const std::vector<Descriptor>& descs,
                                       const std::vector<int>& members, int k, Rng& rng) {
  // distinct values in first-occurrence order keep initialization stable
  std::vector<int> distinct;
  for (int idx : members) {
    bool seen = false;
    for (int d : distinct) {
      if (descs[size_t(d)] == descs[size_t(idx)]) {
        seen = true;
        break;
      }
    }
    if (!seen) distinct.push_back(idx);
  }
  const int k_eff = std::min<int>(k, int(distinct.size()));
  if (k_eff <= 1) return {members};

  std::vector<int> pool = distinct;
  for (int i = 0; i < k_eff; ++i) {
    const int j = i + int(rng.uniform_int(uint64_t(pool.size() - size_t(i))));
    std::swap(pool[size_t(i)], pool[size_t(j)]);
  }
  std::vector<Descriptor> centers(static_cast<size_t>(k_eff));
  for (int i = 0; i < k_eff; ++i) centers[size_t(i)] = descs[size_t(pool[size_t(i)])];

  std::vector<int> assign(members.size(), -1);
  for (int iter = 0; iter < 8; ++iter) {
    bool changed = false;
    for (size_t m = 0; m < members.size(); ++m) {
      int best = 1 << 20, pick = 0;
      for (int c = 0; c < k_eff; ++c) {
        const int dist = hamming_distance(descs[size_t(members[m])], centers[size_t(c)]);
        if (dist < best) {
          best = dist;
          pick = c;
        }
      }
      if (assign[m] != pick) {
        assign[m] = pick;
        changed = true;
      }
    }
    if (!changed) break;
    for (int c = 0; c < k_eff; ++c) {
      std::vector<int> cluster;
      for (size_t m = 0; m < members.size(); ++m) {
        if (assign[m] == c) cluster.push_back(members[m]);
      }
      if (!cluster.empty()) centers[size_t(c)] = majority_centroid(descs, cluster);
    }
  }

  std::vector<std::vector<int>> groups(static_cast<size_t>(k_eff));
  for (size_t m = 0; m < members.size(); ++m) groups[size_t(assign[m])].push_back(members[m]);
  groups.erase(
      std::remove_if(groups.begin(), groups.end(), [](const auto& g) { return g.empty(); }),
      groups.end());
  return groups;
}

}  // namespace

Vocabulary train_vocabulary(const std::vector<Descriptor>& corpus, int k, int l, uint64_t seed) {
  if (int(corpus.size()) < k) {
    throw CorpusTooSmall("train_vocabulary: corpus smaller than branching factor");
  }
  Vocabulary voc;
  voc.k_ = k;
  voc.l_ = l;
  Rng rng(seed);

  std::vector<int> all(corpus.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = int(i);

  struct Job {
    uint32_t node;
    std::vector<int> members;
    int depth;
  };

  voc.nodes_.push_back(Vocabulary::Node{majority_centroid(corpus, all), 0, 0, {}});
  std::vector<Job> queue{{0, std::move(all), 0}};
  size_t head = 0;
  while (head < queue.size()) {
    Job job = std::move(queue[head++]);
    if (job.depth >= l || int(job.members.size()) <= 1) continue;
    auto groups = kmedians(corpus, job.members, k, rng);
    if (groups.size() <= 1) continue;
    for (auto& g : groups) {
      Vocabulary::Node child;
      child.centroid = majority_centroid(corpus, g);
      child.parent = job.node;
      child.depth = job.depth + 1;
      const auto id = uint32_t(voc.nodes_.size());
      voc.nodes_.push_back(child);
      voc.nodes_[job.node].children.push_back(id);
      queue.push_back(Job{id, std::move(g), job.depth + 1});
    }
  }
  return voc;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FdmoError("cannot write vocabulary: " + path);
  out.write("FDMOVOC1", 8);
  const auto w32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  w32(uint32_t(k_));
  w32(uint32_t(l_));
  w32(uint32_t(nodes_.size()));
  for (const Node& n : nodes_) {
    out.write(reinterpret_cast<const char*>(n.centroid.data()), 32);
    w32(uint32_t(n.children.size()));
    for (uint32_t c : n.children) w32(c);
  }
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FdmoError("cannot read vocabulary: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "FDMOVOC1", 8) != 0) {
    throw FdmoError("bad vocabulary magic in: " + path);
  }
  const auto r32 = [&]() {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  Vocabulary voc;
  voc.k_ = int(r32());
  voc.l_ = int(r32());
  const uint32_t count = r32();
  voc.nodes_.resize(count);
  for (uint32_t i = 0; i < count; ++i) {
    Node& n = voc.nodes_[i];
    in.read(reinterpret_cast<char*>(n.centroid.data()), 32);
    const uint32_t nc = r32();
    n.children.resize(nc);
    for (uint32_t c = 0; c < nc; ++c) n.children[c] = r32();
  }
  if (!in) throw FdmoError("truncated vocabulary file: " + path);
  for (uint32_t i = 0; i < count; ++i) {
    for (uint32_t c : voc.nodes_[i].children) {
      voc.nodes_[c].parent = i;
      voc.nodes_[c].depth = voc.nodes_[i].depth + 1;
    }
  }
  return voc;
}

std::vector<Match> vocab_blind_match(const std::vector<Descriptor>& query,
                                     const std::vector<Descriptor>& ref, const Vocabulary& vocab,
                                     int max_dist, double ratio) {
  if (vocab.empty()) {
    log_warn("vocab_blind_match: empty vocabulary, falling back to brute-force matching");
    return match_descriptors(query, ref, max_dist, ratio);
  }
  if (query.empty() || ref.empty()) return {};

  std::unordered_map<uint32_t, std::vector<int>> leaf_bucket;
  std::unordered_map<uint32_t, std::vector<int>> parent_bucket;
  for (int j = 0; j < int(ref.size()); ++j) {
    const uint32_t leaf = vocab.leaf_of(ref[size_t(j)]);
    leaf_bucket[leaf].push_back(j);
    parent_bucket[vocab.parent_of(leaf)].push_back(j);
  }

  // candidate generation through the tree, then a confirmation pass that
  // replays the unrestricted acceptance rule; the result is therefore a
  // subset of match_descriptors on the same inputs
  std::vector<Match> out;
  for (int i = 0; i < int(query.size()); ++i) {
    const uint32_t leaf = vocab.leaf_of(query[size_t(i)]);
    const std::vector<int>* cands = nullptr;
    auto it = leaf_bucket.find(leaf);
    if (it != leaf_bucket.end() && it->second.size() > 1) {
      cands = &it->second;
    } else {
      auto pit = parent_bucket.find(vocab.parent_of(leaf));
      if (pit != parent_bucket.end()) cands = &pit->second;
    }
    if (!cands || cands->empty()) continue;

    int best = 1 << 20, pick = -1;
    for (int j : *cands) {
      const int dist = hamming_distance(query[size_t(i)], ref[size_t(j)]);
      if (dist < best) {
        best = dist;
        pick = j;
      }
    }
    if (pick < 0 || best > max_dist) continue;

    const NearestPair np = nearest_in(query[size_t(i)], ref);
    if (np.best_idx != pick || !passes_ratio(np, max_dist, ratio)) continue;
    const NearestPair back = nearest_in(ref[size_t(pick)], query);
    if (back.best_idx != i) continue;
    out.push_back(Match{i, pick, best});
  }
  return out;
}

std::map<int, std::vector<Match>> vocab_blind_match(
    const std::vector<Descriptor>& query, const std::map<int, std::vector<Descriptor>>& refs,
    const Vocabulary& vocab, int max_dist, double ratio) {
  std::map<int, std::vector<Match>> out;
  for (const auto& [key, ref] : refs) {
    out[key] = vocab_blind_match(query, ref, vocab, max_dist, ratio);
  }
  return out;
}

}  // namespace fdmo
