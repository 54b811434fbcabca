#pragma once

// Stochastic time-tag generation for the microring pair source: pair and
// noise emission, loss budget, detector models, the unbalanced-interferometer
// (Franson) transform and the 50:50 splitter.

#include "qlight/ring_model.hpp"
#include "qlight/timetag.hpp"

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace qlight {

struct RamanPeak {
  double center_nm = 0.0;
  double fwhm_nm = 3.0;
  double amplitude_hz_per_mw = 0.0;  // detected rate at the reference chain
};

struct DetectorSpec {
  double efficiency = 0.75;
  double dark_rate_hz = 80.0;
  double jitter_sigma_s = 50e-12;
  double dead_time_s = 30e-9;  // non-paralyzable
  double tdc_resolution_s = 1e-12;

  void validate() const;
};

/// Source model. Rates quoted "at the reference chain" are detected rates
/// behind the nominal loss budget and a detector of reference efficiency;
/// this is how the singles coefficients a and b are measured.
struct SourceConfig {
  double brightness_hz_per_mw2 = 2.09e6;  // on-chip pairs / s / mW^2
  double pump_power_mw = 1.0;             // on chip
  double noise_linear_hz_per_mw = 5.1e4;  // default a, also the Raman floor
  std::map<int, double> channel_noise_linear;  // per channel-pair overrides of a
  double noise_quadratic_share = 1.0;          // fraction of b due to true pairs
  std::vector<RamanPeak> raman_peaks;
  double pair_correlation_time_s = 0.354e-9;
  double coupling_loss_total_db = 8.0;  // input-to-output, split evenly per facet
  double filter_insertion_db = 1.5;
  double extra_loss_db = 0.0;  // further passive loss per arm
  double reference_detector_efficiency = 0.75;
  double signal_delay_ps = 0.0;
  double idler_delay_ps = 0.0;
  /// Single-mode thermal emission statistics (bunching over the photon
  /// lifetime). When false, emission events form a plain Poisson process.
  bool thermal_emission = true;
  double max_tags = 2e8;
  ChannelPlan channel_plan;

  /// Output facet x filter x extra loss, excluding the detector.
  double chain_transmittance() const;
  double noise_linear(int channel) const;
  void validate() const;
};

enum class Arm { signal, idler };

/// Experiment-specific loss added on top of the reference chain.
struct ArmLoss {
  double signal_db = 0.0;
  double idler_db = 0.0;
};

struct UmiSpec {
  double delay_s = 10e-9;
  double phase_rad = 0.0;  // single-pass pump phase of the long arm
  double two_photon_visibility = 1.0;

  void validate(double pair_correlation_time_s) const;
};

/// N = a P + b P^2 + c split into its parts.
struct SinglesRate {
  double linear = 0.0;
  double quadratic = 0.0;
  double constant = 0.0;
  double total() const { return linear + quadratic + constant; }
};

SinglesRate singles_rate(const SourceConfig& config, const DetectorSpec& detector, Arm arm, int channel,
                         double power_mw);

/// On-chip pair generation rate B P^2.
double pair_rate(const SourceConfig& config, double power_mw);

/// Noise spectrum (a floor plus Raman peaks) x P over [1480, 1620] nm.
double raman_noise_rate(const SourceConfig& config, double wavelength_nm, double power_mw);

/// Arm transmittance from chip to click, detector efficiency included.
double arm_transmittance(const SourceConfig& config, const DetectorSpec& detector, double extra_db = 0.0);

struct StreamPair {
  TimeTagStream signal;
  TimeTagStream idler;
};

struct HeraldedStreams {
  TimeTagStream herald;  // signal arm
  TimeTagStream arm1;    // idler after the 50:50 splitter
  TimeTagStream arm2;
};

StreamPair generate_pair_streams(const SourceConfig& config, const DetectorSpec& signal_detector,
                                 const DetectorSpec& idler_detector, int channel, double duration_s,
                                 std::uint64_t seed, const ArmLoss& loss = {});

/// Both photons pass one common unbalanced interferometer before detection.
StreamPair franson_transform(const SourceConfig& config, const DetectorSpec& signal_detector,
                             const DetectorSpec& idler_detector, int channel, double duration_s, const UmiSpec& umi,
                             std::uint64_t seed, const ArmLoss& loss = {});

/// Signal photons herald; idler photons are split 50:50 onto two detectors.
/// The split happens before detection, so each output has its own dead time.
HeraldedStreams generate_heralded_streams(const SourceConfig& config, const DetectorSpec& herald_detector,
                                          const DetectorSpec& arm1_detector, const DetectorSpec& arm2_detector,
                                          int channel, double duration_s, std::uint64_t seed,
                                          const ArmLoss& loss = {});

/// Routes each tag to one of two outputs with probability 1/2.
std::pair<TimeTagStream, TimeTagStream> hbt_split(const TimeTagStream& stream, std::uint64_t seed);

/// Homogeneous Poisson stream at 1 ps resolution.
TimeTagStream poisson_stream(std::string label, double rate_hz, double duration_s, std::uint64_t seed);

}  // namespace qlight
