#pragma once

// Experiment configuration: one JSON document, validated up front with
// path-qualified messages.

#include "qlight/ring_model.hpp"
#include "qlight/source_sim.hpp"
#include "qlight/timetag.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace qlight {

struct AcquisitionConfig {
  double duration_s = 10.0;
  std::uint64_t seed = 0;
  Picoseconds coincidence_window_ps = 2000;
  Picoseconds histogram_bin_ps = 100;
  Picoseconds histogram_half_range_ps = 5000;
  /// Coarse correlogram used to locate the coincidence peak.
  Picoseconds calibration_half_range_ps = 20000;
  Picoseconds calibration_bin_ps = 100;
};

struct DispersionConfig {
  int mu_min = -25;
  int mu_max = 25;
  int points_per_resonance = 201;
  double span_linewidths = 12.0;  // trace width around each line
  double trace_noise = 0.01;      // additive Gaussian, transmission units
};

struct PairsConfig {
  int channel = 6;
  std::vector<double> powers_mw{0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0};
  double duration_s = 10.0;
};

struct SpectrumConfig {
  double min_nm = 1480.0;
  double max_nm = 1620.0;
  double step_nm = 0.05;
  double power_mw = 1.0;
};

struct MultichannelConfig {
  std::vector<int> channels{2, 3, 4, 5, 6, 7, 8};
  double power_mw = 1.1;
  double duration_s = 10.0;
  ArmLoss extra_loss;
};

struct LaserFringeConfig {
  double counts_per_point = 2e4;
  double visibility = 0.98;
  double phase_rad = 0.4;
};

struct FransonConfig {
  int channel = 6;
  double power_mw = 1.0;
  double dwell_s = 15.0;
  int phase_points = 32;
  double phase_span_rad = 2.0 * 3.14159265358979323846;
  ArmLoss extra_loss;
  int mc_iterations = 1000;
  Picoseconds histogram_half_range_ps = 15000;
  LaserFringeConfig laser;
};

struct HbtConfig {
  int channel = 6;
  double power_mw = 1.45;
  double heralded_duration_s = 60.0;
  std::vector<double> sweep_powers_mw{0.5, 0.75, 1.0, 1.25, 1.45, 1.75};
  double sweep_duration_s = 20.0;
  double unheralded_power_mw = 5.0;
  double unheralded_duration_s = 20.0;
  Picoseconds g2_bin_ps = 50;
  Picoseconds g2_half_range_ps = 10000;
  Picoseconds baseline_inner_ps = 5000;
  ArmLoss extra_loss;
};

struct Table1Config {
  std::vector<int> channels{2, 3, 4, 5, 6, 7, 8};
  int mc_iterations = 300;
  double franson_dwell_s = 15.0;
  double heralded_duration_s = 60.0;
  double unheralded_duration_s = 20.0;
};

struct ExperimentConfig {
  nlohmann::json document;  // as loaded, before command-line overrides
  ResonatorSpec resonator;
  SourceConfig source;
  std::map<std::string, DetectorSpec> detectors;
  UmiSpec umi;
  AcquisitionConfig acquisition;
  DispersionConfig dispersion;
  PairsConfig pairs;
  SpectrumConfig spectrum;
  MultichannelConfig multichannel;
  FransonConfig franson;
  HbtConfig hbt;
  Table1Config table1;

  /// Throws ConfigError("detectors.<name>") when absent.
  const DetectorSpec& detector(const std::string& name) const;
};

/// Detector roles the commands look up.
inline constexpr const char* kDetectorRoles[] = {"signal", "idler", "hbt1", "hbt2"};

/// Throws ConfigError with a dotted path on any invalid or unknown field.
ExperimentConfig parse_config(const nlohmann::json& document);
ExperimentConfig load_config(const std::filesystem::path& path);

/// 16 hex digits of FNV-1a over the canonical (key-sorted, compact) dump;
/// stable under key reordering.
std::string config_hash(const nlohmann::json& document);

}  // namespace qlight
