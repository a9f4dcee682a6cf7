#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fdmo/errors.h"
#include "fdmo/geometry.h"

namespace fdmo {

/// Grayscale image, row-major float intensities nominally in [0, 255].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, float fill = 0.f) : width(w), height(h), data(size_t(w) * h, fill) {}

  float& at(int x, int y) { return data[size_t(y) * width + x]; }
  float at(int x, int y) const { return data[size_t(y) * width + x]; }
  bool empty() const { return data.empty(); }
};

struct IntensityGradient {
  double intensity;
  Vec2 gradient;
};

/// Bilinear intensity and gradient at sub-pixel coordinates. The gradient is
/// the bilinear interpolation of central-difference gradients at the four
/// surrounding integer nodes. Valid domain: 1 <= u < width-2, 1 <= v < height-2.
IntensityGradient sample_bilinear(const Image& img, double u, double v);

/// Kernel variant; returns false outside the valid domain.
bool sample_bilinear_checked(const Image& img, double u, double v, IntensityGradient& out);

/// Same intensity, but the gradient is the exact in-cell derivative of the
/// bilinear surface rather than the smoothed central-difference estimate.
/// The photometric optimizers use this so their analytic Jacobians are the
/// true derivatives of what they sample.
bool sample_surface_checked(const Image& img, double u, double v, IntensityGradient& out);

struct Pyramid {
  std::vector<Image> levels;           // level 0 = full resolution
  std::vector<PinholeCamera> cameras;  // intrinsics halved per level

  int num_levels() const { return int(levels.size()); }
  const Image& operator[](int l) const { return levels[size_t(l)]; }
};

/// Each level is the 2x2 box-filtered, 2-subsampled previous level.
/// Throws TooSmall if the image cannot support the requested level count.
Pyramid build_pyramid(const Image& img, const PinholeCamera& cam, int levels);

struct PhotometricCalibration {
  std::array<float, 256> inverse_response;  // raw value -> irradiance
  Image vignette;                           // attenuation in (0, 1]
  double exposure = 1.0;                    // seconds

  PhotometricCalibration() {
    for (int i = 0; i < 256; ++i) inverse_response[size_t(i)] = float(i);
  }
};

/// out(p) = inverse_response[raw(p)] / vignette(p) / exposure, rescaled to
/// [0, 255]. Throws CalibrationMismatch on dimension disagreement.
Image photometric_correct(const Image& raw, const PhotometricCalibration& calib);

struct CandidatePoint {
  Vec2 px;    // level-0 pixel coordinates
  int level;  // pyramid level the gradient maximum was found at
};

/// Gradient-maxima candidate selection with region-adaptive thresholds
/// (block median absolute gradient + fixed offset) and fixed-grid bucketing.
/// Deterministic; may return fewer than `target` points.
std::vector<CandidatePoint> select_candidate_points(const Pyramid& pyr, int target,
                                                    int block_px = 32,
                                                    double gradient_offset = 7.0);

}  // namespace fdmo
