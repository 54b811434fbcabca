#pragma once

// Microring resonance comb, all-pass transmission and dispersion fitting.

#include "qlight/fit.hpp"
#include "qlight/units.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <utility>
#include <vector>

namespace qlight {

struct ResonatorSpec {
  double center_frequency_hz = kSpeedOfLight / 1550.1e-9;  // pump resonance
  double fsr_hz = 330e9;                                   // D1 / 2pi
  double d2 = 0.0;                                         // rad/s per mode^2
  double d3 = 0.0;                                         // rad/s per mode^3
  double q_loaded = 4.3e5;
  double extinction = 0.9;  // on-resonance dip depth
  double radius_m = 60e-6;  // metadata; sets the group index

  double d1() const { return kTwoPi * fsr_hz; }
  double group_index() const { return kSpeedOfLight / (fsr_hz * kTwoPi * radius_m); }
  double linewidth_hz(double frequency_hz) const { return frequency_hz / q_loaded; }
  /// Photon lifetime of the loaded pump resonance, Q / (2 pi nu0).
  double photon_lifetime_s() const { return q_loaded / (kTwoPi * center_frequency_hz); }

  /// Throws Error(invalid_argument) when an invariant is violated.
  void validate() const;
};

/// beta2 = -(n_g / c) * D2 / D1^2.
double beta2_from_d2(double d2, double d1, double group_index);
double d2_from_beta2(double beta2, double d1, double group_index);

struct CombResonance {
  int mode_index = 0;
  double frequency_hz = 0.0;
  double linewidth_fwhm_hz = 0.0;
  /// frequency - center frequency, computed without cancellation.
  double offset_hz = 0.0;
};

/// nu_mu = nu0 + FSR mu + (D2 mu^2 / 2 + D3 mu^3 / 6) / 2pi.
std::vector<CombResonance> resonance_grid(const ResonatorSpec& spec, int mu_min, int mu_max);

/// D_int(mu) = 2pi (nu_mu - nu0) - D1 mu, in rad/s.
double integrated_dispersion(const ResonatorSpec& spec, int mu);

/// All-pass Lorentzian dip around the nearest comb line, in [0, 1].
double transmission(const ResonatorSpec& spec, double frequency_hz);

struct TransmissionPoint {
  double frequency_hz = 0.0;
  double transmission = 0.0;
};

/// Lorentzian fit of a single dip. Parameters: center_frequency_hz,
/// q_loaded, extinction, linewidth_hz.
FitResult fit_resonance(std::span<const TransmissionPoint> trace);

struct ModeFrequency {
  int mu = 0;
  double frequency_hz = 0.0;
};

/// Cubic fit of omega_mu over mu. Parameters: center_frequency_hz, d1, d2,
/// d3 (rad/s) and beta2 (s^2/m, via the supplied group index).
FitResult fit_dispersion(std::span<const ModeFrequency> resonances, double group_index);

/// CSV readers: `frequency_hz,transmission` and `mu,frequency_hz`.
std::vector<TransmissionPoint> read_trace_csv(std::istream& in);
std::vector<TransmissionPoint> read_trace_csv(const std::filesystem::path& path);
std::vector<ModeFrequency> read_resonances_csv(std::istream& in);
std::vector<ModeFrequency> read_resonances_csv(const std::filesystem::path& path);

struct Channel {
  double center_hz = 0.0;
  double width_hz = 0.0;
  double nominal_wavelength_nm = 0.0;

  double wavelength_nm() const { return nominal_wavelength_nm > 0 ? nominal_wavelength_nm : hz_to_wavelength_nm(center_hz); }
};

struct ChannelPair {
  int index = 0;
  Channel signal;  // blue side, mode +index
  Channel idler;   // red side, mode -index
};

/// Pump channel plus the wavelength-paired signal/idler channels.
struct ChannelPlan {
  static constexpr int kMinIndex = 2;
  static constexpr int kMaxIndex = 8;

  Channel pump;
  std::vector<ChannelPair> pairs;
  /// Allowed |nu_s + nu_i - 2 nu_p|; one pump linewidth.
  double tolerance_hz = 0.0;

  void validate() const;
  bool contains(int index) const;
};

/// Builds signal/idler channels on comb modes +i/-i. `labels` optionally
/// supplies the nominal (signal, idler) wavelengths used for reporting.
ChannelPlan build_channel_plan(const ResonatorSpec& spec, std::span<const int> indices, double width_hz,
                               const std::map<int, std::pair<double, double>>& labels = {});

/// Nominal wavelengths of the seven measured pairs, indices 2..8.
const std::map<int, std::pair<double, double>>& measured_pair_wavelengths();

/// Returns (signal, idler). Throws Error(out_of_range) outside [2, 8] or for
/// indices absent from the plan; re-validates energy conservation.
std::pair<Channel, Channel> channel_pair(const ChannelPlan& plan, int index);

}  // namespace qlight
