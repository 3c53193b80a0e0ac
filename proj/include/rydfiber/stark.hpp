#ifndef RYDFIBER_STARK_HPP
#define RYDFIBER_STARK_HPP

#include <cmath>
#include <stdexcept>

namespace rydfiber::stark
{
// Quadratic Stark shift with the 1/2 kept outside the polarizability:
//   shift = alpha E^2 / 2
// Units follow the usual Rydberg tables: MHz, V/cm, MHz cm^2/V^2.

inline constexpr double alpha_29s = 1.14; // MHz cm^2 / V^2

inline double shift_from_field(double field, double alpha = alpha_29s)
{
    if (!std::isfinite(field) || !std::isfinite(alpha))
        throw std::domain_error("shift_from_field: non-finite input");
    if (alpha <= 0.0)
        throw std::domain_error("shift_from_field: alpha must be positive");
    if (field < 0.0)
        throw std::domain_error("shift_from_field: field must be non-negative");
    return 0.5 * alpha * field * field;
}

inline double field_from_shift(double shift, double alpha = alpha_29s)
{
    if (!std::isfinite(shift) || !std::isfinite(alpha))
        throw std::domain_error("field_from_shift: non-finite input");
    if (alpha <= 0.0)
        throw std::domain_error("field_from_shift: alpha must be positive");
    if (shift < 0.0)
        throw std::domain_error("field_from_shift: shift must be non-negative");
    return std::sqrt(2.0 * shift / alpha);
}

} // namespace rydfiber::stark
#endif // RYDFIBER_STARK_HPP
