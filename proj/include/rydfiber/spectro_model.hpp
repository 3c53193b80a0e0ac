#ifndef RYDFIBER_SPECTRO_MODEL_HPP
#define RYDFIBER_SPECTRO_MODEL_HPP

#include "rydfiber/units.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace rydfiber
{
/// Ladder-EIT lineshape parameters. Rates and detunings in rad/s.
struct EitParams
{
    double od = 0.0;
    double gamma = from_mhz(6.07);
    double omega_c = 0.0;
    double delta_c = 0.0;
    double gamma_ryd = from_mhz(1.0);
    double offset = 0.0; // line-center position on the probe detuning axis

    /// Names of the fields violating the invariants; empty when valid.
    std::vector< std::string > violations() const
    {
        std::vector< std::string > bad;
        if (!std::isfinite(od) || od < 0.0)
            bad.emplace_back("od");
        if (!std::isfinite(gamma) || gamma <= 0.0)
            bad.emplace_back("gamma");
        if (!std::isfinite(omega_c) || omega_c < 0.0)
            bad.emplace_back("omega_c");
        if (!std::isfinite(delta_c))
            bad.emplace_back("delta_c");
        if (!std::isfinite(gamma_ryd) || gamma_ryd <= 0.0)
            bad.emplace_back("gamma_ryd");
        if (!std::isfinite(offset))
            bad.emplace_back("offset");
        return bad;
    }

    void validate() const
    {
        const auto bad = violations();
        if (bad.empty())
            return;
        std::string msg = "invalid EitParams:";
        for (const auto& f : bad)
            msg += " " + f;
        throw std::domain_error(msg);
    }

    bool operator==(const EitParams&) const = default;
};

struct RydbergConstants
{
    double gamma_29s = two_pi / 21.7e-6; // natural linewidth of 29S1/2
    double gamma_d2 = from_mhz(6.07);    // default probe-transition linewidth
};

/// Two-level absorption: exp(-od / (1 + 4 (delta/gamma)^2)).
inline double transmission_od(double delta, double od, double gamma)
{
    if (!all_finite(delta, od, gamma))
        throw std::domain_error("transmission_od: non-finite input");
    if (gamma <= 0.0 || od < 0.0)
        throw std::domain_error("transmission_od: requires gamma > 0 and od >= 0");
    const double x = delta / gamma;
    return std::exp(-od / (1.0 + 4.0 * x * x));
}

/// Probe susceptibility of the ladder system, normalised so Im(chi) = 1 on the bare resonance.
/// `delta` is the absolute probe detuning; the line center sits at p.offset.
inline std::complex< double > susceptibility(double delta, const EitParams& p)
{
    if (!std::isfinite(delta))
        throw std::domain_error("susceptibility: non-finite detuning");
    p.validate();
    using namespace std::complex_literals;
    const double d = delta - p.offset;
    const std::complex< double > control =
        p.omega_c * p.omega_c / (p.gamma_ryd - 2.0i * (p.delta_c + d));
    return 1.0i * p.gamma / (p.gamma - 2.0i * d + control);
}

inline double transmission_eit(double delta, const EitParams& p)
{
    return std::exp(-p.od * susceptibility(delta, p).imag());
}

/// Rydberg dephasing in excess of the natural linewidth. Negative when gamma_ryd is below it.
inline double dephasing_excess(double gamma_ryd, const RydbergConstants& c = {})
{
    return gamma_ryd - c.gamma_29s;
}

/// Position of the two-photon (EIT) resonance on the absolute probe axis.
inline double eit_peak_position(const EitParams& p) { return p.offset - p.delta_c; }

} // namespace rydfiber
#endif // RYDFIBER_SPECTRO_MODEL_HPP
