#ifndef RYDFIBER_UNITS_HPP
#define RYDFIBER_UNITS_HPP

#include <cmath>
#include <numbers>

namespace rydfiber
{
// Internally every rate and detuning is an angular frequency in rad/s.
// File formats and the command line speak "MHz", meaning omega / 2pi in 1e6 Hz.

inline constexpr double two_pi = 2.0 * std::numbers::pi;

constexpr double from_mhz(double mhz) noexcept { return mhz * (two_pi * 1e6); }
constexpr double to_mhz(double omega) noexcept { return omega / (two_pi * 1e6); }

namespace constants
{
inline constexpr double planck = 6.62607015e-34;      // J s
inline constexpr double speed_of_light = 299792458.0; // m/s
inline constexpr double probe_wavelength = 780e-9;    // Rb D2, m
inline constexpr double lattice_wavelength = 805e-9;  // dipole trap, m
} // namespace constants

inline bool all_finite(auto... xs) { return (std::isfinite(static_cast< double >(xs)) && ...); }

} // namespace rydfiber
#endif // RYDFIBER_UNITS_HPP
