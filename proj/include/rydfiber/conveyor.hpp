#ifndef RYDFIBER_CONVEYOR_HPP
#define RYDFIBER_CONVEYOR_HPP

#include "rydfiber/units.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace rydfiber
{
/// Moving-lattice transport driven by the frequency difference of the two dipole beams.
/// The ramp is piecewise linear through `knots`; the first knot sits at t = 0 and the
/// last one at the ramp duration.
class ConveyorRamp
{
public:
    struct Knot
    {
        double t;     // s
        double detuning; // Hz, beam frequency difference
    };

    ConveyorRamp(double wavelength, std::vector< Knot > knots, double final_power_fraction = 1.0)
        : wavelength_{wavelength}, knots_{std::move(knots)}, final_power_fraction_{final_power_fraction}
    {
        if (!(wavelength_ > 0.0) || !std::isfinite(wavelength_))
            throw std::invalid_argument("ConveyorRamp: wavelength must be positive");
        if (knots_.size() < 2)
            throw std::invalid_argument("ConveyorRamp: need at least two knots");
        if (knots_.front().t != 0.0)
            throw std::invalid_argument("ConveyorRamp: first knot must be at t = 0");
        for (std::size_t i = 0; i < knots_.size(); ++i)
        {
            if (!all_finite(knots_[i].t, knots_[i].detuning))
                throw std::invalid_argument("ConveyorRamp: non-finite knot");
            if (i > 0 && !(knots_[i].t > knots_[i - 1].t))
                throw std::invalid_argument("ConveyorRamp: knot times must increase");
        }
    }

    /// Linear sweep 0 -> peak over `duration`, the transport protocol into the fiber.
    static ConveyorRamp linear(double peak_detuning, double duration,
                               double wavelength = constants::lattice_wavelength,
                               double final_power_fraction = 0.5)
    {
        return ConveyorRamp{wavelength, {{0.0, 0.0}, {duration, peak_detuning}}, final_power_fraction};
    }

    double wavelength() const noexcept { return wavelength_; }
    double duration() const noexcept { return knots_.back().t; }
    const std::vector< Knot >& knots() const noexcept { return knots_; }
    // Trap-depth compensation only; the kinematics do not depend on it.
    double final_power_fraction() const noexcept { return final_power_fraction_; }

    double detuning_at(double t) const
    {
        check_time(t);
        const auto seg = segment_of(t);
        const auto& a = knots_[seg];
        const auto& b = knots_[seg + 1];
        const double u = (t - a.t) / (b.t - a.t);
        return a.detuning + u * (b.detuning - a.detuning);
    }

    /// v = lambda * df / 2
    double velocity_at(double t) const { return 0.5 * wavelength_ * detuning_at(t); }

    /// Distance travelled up to time t, exact for the piecewise-linear ramp.
    double position_at(double t) const
    {
        check_time(t);
        double area = 0.0;
        for (std::size_t i = 0; i + 1 < knots_.size(); ++i)
        {
            const auto& a = knots_[i];
            const auto& b = knots_[i + 1];
            if (t <= a.t)
                break;
            const double end = std::min(t, b.t);
            const double f_end = a.detuning + (end - a.t) / (b.t - a.t) * (b.detuning - a.detuning);
            area += 0.5 * (a.detuning + f_end) * (end - a.t);
        }
        return 0.5 * wavelength_ * area;
    }

    double displacement() const { return position_at(duration()); }

private:
    void check_time(double t) const
    {
        if (!std::isfinite(t) || t < 0.0 || t > duration())
            throw std::domain_error("ConveyorRamp: time outside the ramp");
    }

    std::size_t segment_of(double t) const
    {
        const auto it = std::upper_bound(knots_.begin(), knots_.end(), t,
                                         [](double v, const Knot& k) { return v < k.t; });
        const auto idx = static_cast< std::size_t >(std::distance(knots_.begin(), it));
        return std::clamp< std::size_t >(idx == 0 ? 0 : idx - 1, 0, knots_.size() - 2);
    }

    double wavelength_;
    std::vector< Knot > knots_;
    double final_power_fraction_;
};

} // namespace rydfiber
#endif // RYDFIBER_CONVEYOR_HPP
