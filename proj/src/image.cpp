#include "fdmo/image.h"

#include <algorithm>
#include <cmath>

namespace fdmo {

namespace {

inline Vec2 node_gradient(const Image& img, int x, int y) {
  return Vec2(0.5 * (img.at(x + 1, y) - img.at(x - 1, y)),
              0.5 * (img.at(x, y + 1) - img.at(x, y - 1)));
}

}  // namespace

IntensityGradient sample_bilinear(const Image& img, double u, double v) {
  IntensityGradient out;
  if (!sample_bilinear_checked(img, u, v, out)) {
    throw OutOfBounds("sample_bilinear: coordinates outside valid domain");
  }
  return out;
}

bool sample_bilinear_checked(const Image& img, double u, double v, IntensityGradient& out) {
  if (!(u >= 1.0 && v >= 1.0 && u < img.width - 2.0 && v < img.height - 2.0)) return false;
  const int x0 = int(u);
  const int y0 = int(v);
  const double a = u - x0;
  const double b = v - y0;
  const double w00 = (1 - a) * (1 - b), w10 = a * (1 - b), w01 = (1 - a) * b, w11 = a * b;

  out.intensity = w00 * img.at(x0, y0) + w10 * img.at(x0 + 1, y0) +
                  w01 * img.at(x0, y0 + 1) + w11 * img.at(x0 + 1, y0 + 1);
  out.gradient = w00 * node_gradient(img, x0, y0) + w10 * node_gradient(img, x0 + 1, y0) +
                 w01 * node_gradient(img, x0, y0 + 1) + w11 * node_gradient(img, x0 + 1, y0 + 1);
  return true;
}

bool sample_surface_checked(const Image& img, double u, double v, IntensityGradient& out) {
  if (!(u >= 1.0 && v >= 1.0 && u < img.width - 2.0 && v < img.height - 2.0)) return false;
  const int x0 = int(u);
  const int y0 = int(v);
  const double a = u - x0;
  const double b = v - y0;
  const double i00 = img.at(x0, y0), i10 = img.at(x0 + 1, y0);
  const double i01 = img.at(x0, y0 + 1), i11 = img.at(x0 + 1, y0 + 1);
  out.intensity = (1 - a) * (1 - b) * i00 + a * (1 - b) * i10 + (1 - a) * b * i01 + a * b * i11;
  out.gradient = Vec2((1 - b) * (i10 - i00) + b * (i11 - i01),
                      (1 - a) * (i01 - i00) + a * (i11 - i10));
  return true;
}

Pyramid build_pyramid(const Image& img, const PinholeCamera& cam, int levels) {
  if (levels < 1) throw TooSmall("build_pyramid: levels must be >= 1");
  const int min_dim = 1 << (levels - 1);
  if (img.width < min_dim || img.height < min_dim) {
    throw TooSmall("build_pyramid: image too small for " + std::to_string(levels) + " levels");
  }

  Pyramid pyr;
  pyr.levels.reserve(size_t(levels));
  pyr.cameras.reserve(size_t(levels));
  pyr.levels.push_back(img);
  pyr.cameras.push_back(cam);
  for (int l = 1; l < levels; ++l) {
    const Image& prev = pyr.levels.back();
    Image next(prev.width / 2, prev.height / 2);
    for (int y = 0; y < next.height; ++y) {
      for (int x = 0; x < next.width; ++x) {
        next.at(x, y) = 0.25f * (prev.at(2 * x, 2 * y) + prev.at(2 * x + 1, 2 * y) +
                                 prev.at(2 * x, 2 * y + 1) + prev.at(2 * x + 1, 2 * y + 1));
      }
    }
    pyr.levels.push_back(std::move(next));
    pyr.cameras.push_back(cam.level(l));
  }
  return pyr;
}

Image photometric_correct(const Image& raw, const PhotometricCalibration& calib) {
  if (!calib.vignette.empty() &&
      (calib.vignette.width != raw.width || calib.vignette.height != raw.height)) {
    throw CalibrationMismatch("photometric_correct: vignette dimensions disagree with image");
  }
  if (!(calib.exposure > 0.0)) {
    throw CalibrationMismatch("photometric_correct: exposure must be positive");
  }

  Image out(raw.width, raw.height);
  const double inv_exposure = 1.0 / calib.exposure;
  float max_val = 0.f;
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      const float r = std::clamp(raw.at(x, y), 0.f, 255.f);
      // linear interpolation of the lookup; exact on integer-valued input
      const int i0 = std::min(254, int(r));
      const float frac = r - float(i0);
      float v = calib.inverse_response[size_t(i0)] * (1.f - frac) +
                calib.inverse_response[size_t(i0) + 1] * frac;
      if (!calib.vignette.empty()) v /= std::max(1e-6f, calib.vignette.at(x, y));
      v = float(v * inv_exposure);
      out.at(x, y) = v;
      max_val = std::max(max_val, v);
    }
  }
  if (max_val > 255.f) {
    const float s = 255.f / max_val;
    for (float& v : out.data) v *= s;
  }
  return out;
}

namespace {

struct ScoredCandidate {
  double score;
  Vec2 px;  // level-0 coordinates
  int level;
};

// Gradient-maxima pass over one level. Appends per-block sorted candidate
// lists; blocks are defined on the level-0 grid.
void collect_level(const Image& img, int level, int block_px, double offset, int blocks_x,
                   std::vector<std::vector<ScoredCandidate>>& per_block) {
  const int scale = 1 << level;
  const int level_block = std::max(4, block_px / scale);
  const int margin = 4;  // residual pattern + gradient support
  if (img.width < 2 * margin + 2 || img.height < 2 * margin + 2) return;

  const int nbx = (img.width + level_block - 1) / level_block;
  const int nby = (img.height + level_block - 1) / level_block;

  std::vector<double> mags(size_t(img.width) * img.height, 0.0);
  for (int y = 1; y < img.height - 1; ++y) {
    for (int x = 1; x < img.width - 1; ++x) {
      mags[size_t(y) * img.width + x] = node_gradient(img, x, y).norm();
    }
  }

  std::vector<double> block_vals;
  for (int by = 0; by < nby; ++by) {
    for (int bx = 0; bx < nbx; ++bx) {
      block_vals.clear();
      const int x0 = bx * level_block, x1 = std::min(img.width, x0 + level_block);
      const int y0 = by * level_block, y1 = std::min(img.height, y0 + level_block);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) block_vals.push_back(mags[size_t(y) * img.width + x]);
      if (block_vals.empty()) continue;
      auto mid = block_vals.begin() + long(block_vals.size() / 2);
      std::nth_element(block_vals.begin(), mid, block_vals.end());
      const double threshold = *mid + offset;

      for (int y = std::max(y0, margin); y < std::min(y1, img.height - margin); ++y) {
        for (int x = std::max(x0, margin); x < std::min(x1, img.width - margin); ++x) {
          const double g = mags[size_t(y) * img.width + x];
          if (g <= threshold) continue;
          bool is_max = true;
          for (int dy = -1; dy <= 1 && is_max; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              if (dx == 0 && dy == 0) continue;
              if (mags[size_t(y + dy) * img.width + (x + dx)] > g) {
                is_max = false;
                break;
              }
            }
          if (!is_max) continue;
          // map to the level-0 block grid
          const Vec2 px0(double(x) * scale, double(y) * scale);
          const int b0 = std::min(blocks_x - 1, int(px0.x()) / block_px);
          const int row = int(px0.y()) / block_px;
          const size_t bidx = size_t(row) * blocks_x + b0;
          if (bidx < per_block.size()) {
            per_block[bidx].push_back(ScoredCandidate{g, px0, level});
          }
        }
      }
    }
  }
}

}  // namespace

std::vector<CandidatePoint> select_candidate_points(const Pyramid& pyr, int target, int block_px,
                                                    double gradient_offset) {
  std::vector<CandidatePoint> out;
  if (target <= 0 || pyr.levels.empty()) return out;
  const Image& base = pyr.levels[0];
  const int blocks_x = (base.width + block_px - 1) / block_px;
  const int blocks_y = (base.height + block_px - 1) / block_px;
  std::vector<std::vector<ScoredCandidate>> per_block(size_t(blocks_x) * blocks_y);

  collect_level(base, 0, block_px, gradient_offset, blocks_x, per_block);

  // blocks with no level-0 response get a chance at the next level, where the
  // box filter has pooled weaker texture
  if (pyr.num_levels() > 1) {
    bool any_empty = false;
    for (const auto& b : per_block) any_empty |= b.empty();
    if (any_empty) {
      std::vector<std::vector<ScoredCandidate>> coarse(per_block.size());
      collect_level(pyr.levels[1], 1, block_px, std::max(1.0, gradient_offset * 0.5), blocks_x,
                    coarse);
      for (size_t i = 0; i < per_block.size(); ++i) {
        if (per_block[i].empty()) per_block[i] = std::move(coarse[i]);
      }
    }
  }

  for (auto& b : per_block) {
    std::sort(b.begin(), b.end(), [](const ScoredCandidate& a, const ScoredCandidate& c) {
      if (a.score != c.score) return a.score > c.score;
      if (a.px.y() != c.px.y()) return a.px.y() < c.px.y();
      return a.px.x() < c.px.x();
    });
  }

  const int quota = (target + int(per_block.size()) - 1) / int(per_block.size());
  // round-robin over blocks keeps the spatial spread even when some blocks
  // are far richer than others
  for (int round = 0; round < quota && int(out.size()) < target; ++round) {
    for (auto& b : per_block) {
      if (round < int(b.size())) {
        out.push_back(CandidatePoint{b[size_t(round)].px, b[size_t(round)].level});
        if (int(out.size()) >= target) break;
      }
    }
  }
  return out;
}

}  // namespace fdmo
