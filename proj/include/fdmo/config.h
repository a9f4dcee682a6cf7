#pragma once

#include <cstdint>
#include <string>

namespace fdmo {

/// Runtime parameters. Loaded from plain-text "key = value" files; unknown
/// keys are rejected so typos do not silently fall back to defaults.
struct Config {
  // divergence detection
  double epsilon = 0.1;

  // pyramid / point selection
  int pyramid_levels = 5;
  int candidate_block_px = 32;
  double gradient_offset = 7.0;

  // direct tracking / photometric BA
  double huber_photo = 9.0;
  int max_active_points = 2000;
  int max_direct_keyframes = 7;
  int tracker_iterations_per_level = 12;
  int ba_iterations = 8;
  double ba_min_rel_decrease = 1e-5;
  int min_tracking_points = 50;

  // depth filters
  double depth_ssd_accept = 15.0;   // mean per-pixel residual gate (gray levels)
  int depth_max_misses = 5;
  int depth_search_steps_max = 80;

  // keyframe need criteria
  double kf_flow_px = 12.0;
  double kf_min_inlier_fraction = 0.6;
  double kf_brightness_change = 0.2;

  // features
  int fast_threshold = 20;
  int fast_arc_length = 9;
  int feature_octaves = 4;
  double feature_scale_factor = 1.2;
  int n_features = 1000;
  int match_max_distance = 50;
  double match_ratio = 0.8;

  // vocabulary
  int vocab_branching = 10;
  int vocab_depth = 3;
  uint64_t vocab_seed = 7;
  std::string vocabulary_path;  // empty -> brute-force fallback

  // feature map
  double epipolar_band_px = 2.0;
  double parallax_gate = 0.02;
  double huber_reproj = 2.0;
  int soba_iterations = 10;
  double soba_outlier_px = 5.0;
  int covisible_neighbors = 10;
  int survival_required = 4;
  int survival_window = 7;
  double kf_cull_shared_fraction = 0.9;

  // recovery
  int ransac_iterations = 100;
  double ransac_inlier_px = 4.0;
  double ransac_early_exit_fraction = 0.7;
  double guided_window_px = 8.0;
  int min_blind_matches = 10;
  int min_recovery_inliers = 15;
  uint64_t ransac_seed = 42;

  // pipeline
  int init_min_matches = 50;
  double init_min_displacement_px = 8.0;
  int lost_after_failures = 10;
  bool enable_recovery = true;
  bool parallel_mapping = false;
  bool deterministic = false;

  // synthetic data
  double synth_noise_sigma = 0.0;
  uint64_t synth_seed = 1;
};

Config load_config(const std::string& path);
void save_config(const Config& cfg, const std::string& path);

}  // namespace fdmo
