#pragma once

#include <cmath>
#include <numbers>

namespace qlight {

inline constexpr double kSpeedOfLight = 299'792'458.0;  // m/s
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline constexpr double kPicosecond = 1e-12;

inline double db_to_transmittance(double loss_db) { return std::pow(10.0, -loss_db / 10.0); }

inline double wavelength_nm_to_hz(double nm) { return kSpeedOfLight / (nm * 1e-9); }
inline double hz_to_wavelength_nm(double hz) { return kSpeedOfLight / hz * 1e9; }

inline double seconds_to_ps(double s) { return s / kPicosecond; }

}  // namespace qlight
