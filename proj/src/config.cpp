#include "fdmo/config.h"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fdmo/errors.h"

namespace fdmo {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct Binder {
  std::map<std::string, std::function<void(const std::string&)>> set;
  std::map<std::string, std::function<std::string()>> get;

  void bind(const std::string& key, double* v) {
    set[key] = [v](const std::string& s) { *v = std::stod(s); };
    get[key] = [v] { std::ostringstream o; o.precision(12); o << *v; return o.str(); };
  }
  void bind(const std::string& key, int* v) {
    set[key] = [v](const std::string& s) { *v = std::stoi(s); };
    get[key] = [v] { return std::to_string(*v); };
  }
  void bind(const std::string& key, uint64_t* v) {
    set[key] = [v](const std::string& s) { *v = std::stoull(s); };
    get[key] = [v] { return std::to_string(*v); };
  }
  void bind(const std::string& key, bool* v) {
    set[key] = [v](const std::string& s) { *v = (s == "1" || s == "true" || s == "yes"); };
    get[key] = [v] { return *v ? std::string("true") : std::string("false"); };
  }
  void bind(const std::string& key, std::string* v) {
    set[key] = [v](const std::string& s) { *v = s; };
    get[key] = [v] { return *v; };
  }
};

Binder make_binder(Config& c) {
  Binder b;
  b.bind("epsilon", &c.epsilon);
  b.bind("pyramid_levels", &c.pyramid_levels);
  b.bind("candidate_block_px", &c.candidate_block_px);
  b.bind("gradient_offset", &c.gradient_offset);
  b.bind("huber_photo", &c.huber_photo);
  b.bind("max_active_points", &c.max_active_points);
  b.bind("max_direct_keyframes", &c.max_direct_keyframes);
  b.bind("tracker_iterations_per_level", &c.tracker_iterations_per_level);
  b.bind("ba_iterations", &c.ba_iterations);
  b.bind("ba_min_rel_decrease", &c.ba_min_rel_decrease);
  b.bind("min_tracking_points", &c.min_tracking_points);
  b.bind("depth_ssd_accept", &c.depth_ssd_accept);
  b.bind("depth_max_misses", &c.depth_max_misses);
  b.bind("depth_search_steps_max", &c.depth_search_steps_max);
  b.bind("kf_flow_px", &c.kf_flow_px);
  b.bind("kf_min_inlier_fraction", &c.kf_min_inlier_fraction);
  b.bind("kf_brightness_change", &c.kf_brightness_change);
  b.bind("fast_threshold", &c.fast_threshold);
  b.bind("fast_arc_length", &c.fast_arc_length);
  b.bind("feature_octaves", &c.feature_octaves);
  b.bind("feature_scale_factor", &c.feature_scale_factor);
  b.bind("n_features", &c.n_features);
  b.bind("match_max_distance", &c.match_max_distance);
  b.bind("match_ratio", &c.match_ratio);
  b.bind("vocab_branching", &c.vocab_branching);
  b.bind("vocab_depth", &c.vocab_depth);
  b.bind("vocab_seed", &c.vocab_seed);
  b.bind("vocabulary_path", &c.vocabulary_path);
  b.bind("epipolar_band_px", &c.epipolar_band_px);
  b.bind("parallax_gate", &c.parallax_gate);
  b.bind("huber_reproj", &c.huber_reproj);
  b.bind("soba_iterations", &c.soba_iterations);
  b.bind("soba_outlier_px", &c.soba_outlier_px);
  b.bind("covisible_neighbors", &c.covisible_neighbors);
  b.bind("survival_required", &c.survival_required);
  b.bind("survival_window", &c.survival_window);
  b.bind("kf_cull_shared_fraction", &c.kf_cull_shared_fraction);
  b.bind("ransac_iterations", &c.ransac_iterations);
  b.bind("ransac_inlier_px", &c.ransac_inlier_px);
  b.bind("ransac_early_exit_fraction", &c.ransac_early_exit_fraction);
  b.bind("guided_window_px", &c.guided_window_px);
  b.bind("min_blind_matches", &c.min_blind_matches);
  b.bind("min_recovery_inliers", &c.min_recovery_inliers);
  b.bind("ransac_seed", &c.ransac_seed);
  b.bind("init_min_matches", &c.init_min_matches);
  b.bind("init_min_displacement_px", &c.init_min_displacement_px);
  b.bind("lost_after_failures", &c.lost_after_failures);
  b.bind("enable_recovery", &c.enable_recovery);
  b.bind("parallel_mapping", &c.parallel_mapping);
  b.bind("deterministic", &c.deterministic);
  b.bind("synth_noise_sigma", &c.synth_noise_sigma);
  b.bind("synth_seed", &c.synth_seed);
  return b;
}

}  // namespace

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FdmoError("cannot open config file: " + path);
  Config cfg;
  Binder binder = make_binder(cfg);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FdmoError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = binder.set.find(key);
    if (it == binder.set.end()) {
      throw FdmoError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    it->second(value);
  }
  return cfg;
}

void save_config(const Config& cfg, const std::string& path) {
  Config copy = cfg;
  Binder binder = make_binder(copy);
  std::ofstream out(path);
  for (const auto& [key, getter] : binder.get) out << key << " = " << getter() << "\n";
}

}  // namespace fdmo
