#include "rydfiber/spectro_model.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <complex>
#include <random>

using namespace rydfiber;

namespace
{
// Weak-probe steady state written as a linear system for the probe and two-photon
// coherences; solved numerically instead of through the closed form.
std::complex< double > chi_from_linear_system(double delta, const EitParams& p)
{
    using namespace std::complex_literals;
    const double d = delta - p.offset;
    Eigen::Matrix2cd a;
    a << p.gamma - 2.0i * d, 1.0i * p.omega_c, 1.0i * p.omega_c, p.gamma_ryd - 2.0i * (d + p.delta_c);
    Eigen::Vector2cd rhs(1.0i * p.gamma, 0.0);
    return a.partialPivLu().solve(rhs)[0];
}

EitParams random_params(std::mt19937_64& rng)
{
    std::uniform_real_distribution< double > u(0.0, 1.0);
    EitParams p;
    p.od = 30.0 * u(rng);
    p.gamma = from_mhz(1.0 + 10.0 * u(rng));
    p.omega_c = from_mhz(20.0 * u(rng));
    p.delta_c = from_mhz(-10.0 + 20.0 * u(rng));
    p.gamma_ryd = from_mhz(0.01 + 5.0 * u(rng));
    p.offset = from_mhz(-5.0 + 10.0 * u(rng));
    return p;
}
} // namespace

TEST(TransmissionOd, ResonanceAndHalfWidth)
{
    const double g = from_mhz(6.07);
    EXPECT_DOUBLE_EQ(transmission_od(0.0, 2.0, g), std::exp(-2.0));
    // FWHM of the absorbance is gamma.
    EXPECT_NEAR(transmission_od(g / 2.0, 2.0, g), std::exp(-1.0), 1e-15);
    EXPECT_NEAR(transmission_od(-g / 2.0, 2.0, g), std::exp(-1.0), 1e-15);
    EXPECT_DOUBLE_EQ(transmission_od(from_mhz(3.0), 0.0, g), 1.0);
}

TEST(TransmissionOd, RejectsInvalidInput)
{
    EXPECT_THROW(transmission_od(0.0, -1.0, 1.0), std::domain_error);
    EXPECT_THROW(transmission_od(0.0, 1.0, 0.0), std::domain_error);
    EXPECT_THROW(transmission_od(NAN, 1.0, 1.0), std::domain_error);
}

TEST(TransmissionOd, FarWingsTransparent)
{
    EXPECT_NEAR(transmission_od(from_mhz(1e4), 30.0, from_mhz(6.07)), 1.0, 1e-5);
}

TEST(Susceptibility, MatchesLinearSystem)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution< double > det(-30.0, 30.0);
    for (int i = 0; i < 2000; ++i)
    {
        const EitParams p = random_params(rng);
        const double d = from_mhz(det(rng));
        const auto a = susceptibility(d, p);
        const auto b = chi_from_linear_system(d, p);
        ASSERT_NEAR(a.real(), b.real(), 1e-12);
        ASSERT_NEAR(a.imag(), b.imag(), 1e-12);
    }
}

TEST(Susceptibility, ImaginaryPartBounded)
{
    std::mt19937_64 rng(12);
    std::uniform_real_distribution< double > det(-50.0, 50.0);
    for (int i = 0; i < 10000; ++i)
    {
        const EitParams p = random_params(rng);
        const double im = susceptibility(from_mhz(det(rng)), p).imag();
        ASSERT_GE(im, 0.0);
        ASSERT_LE(im, 1.0 + 1e-15);
        const double t = transmission_eit(from_mhz(det(rng)), p);
        ASSERT_GE(t, 0.0);
        ASSERT_LE(t, 1.0);
    }
}

TEST(TransmissionEit, ZeroControlIsTwoLevelLine)
{
    std::mt19937_64 rng(13);
    std::uniform_real_distribution< double > det(-40.0, 40.0);
    for (int i = 0; i < 1000; ++i)
    {
        EitParams p = random_params(rng);
        p.omega_c = 0.0;
        const double d = from_mhz(det(rng));
        ASSERT_NEAR(transmission_eit(d, p), transmission_od(d - p.offset, p.od, p.gamma), 1e-12);
    }
}

TEST(TransmissionEit, ResonantValueClosedForm)
{
    EitParams p;
    p.od = 6.06;
    p.omega_c = from_mhz(9.5);
    p.gamma_ryd = from_mhz(2.65);
    // On two-photon resonance: Im chi = g / (g + W^2 / gr) in any common unit.
    const double expected = 6.07 / (6.07 + 9.5 * 9.5 / 2.65);
    EXPECT_NEAR(susceptibility(0.0, p).imag(), expected, 1e-14);
    EXPECT_NEAR(transmission_eit(0.0, p), std::exp(-6.06 * expected), 1e-14);
}

TEST(TransmissionEit, WindowOpensAtTwoPhotonResonance)
{
    EitParams p;
    p.od = 5.0;
    p.omega_c = from_mhz(8.0);
    p.gamma_ryd = from_mhz(0.5);
    p.delta_c = from_mhz(1.5);
    p.offset = from_mhz(0.7);
    const double peak = eit_peak_position(p);
    EXPECT_NEAR(to_mhz(peak), -0.8, 1e-12);
    EXPECT_GT(transmission_eit(peak, p), transmission_eit(peak + from_mhz(0.5), p));
    EXPECT_GT(transmission_eit(peak, p), transmission_eit(peak - from_mhz(0.5), p));
    EXPECT_GT(transmission_eit(peak, p), transmission_od(peak - p.offset, p.od, p.gamma));
}

TEST(EitParams, ValidationNamesFields)
{
    EitParams p;
    p.od = -1.0;
    p.gamma_ryd = 0.0;
    const auto bad = p.violations();
    EXPECT_EQ(bad, (std::vector< std::string >{"od", "gamma_ryd"}));
    EXPECT_THROW(p.validate(), std::domain_error);
    EXPECT_NO_THROW(EitParams{}.validate());
}

TEST(Dephasing, ExcessOverNaturalLinewidth)
{
    const RydbergConstants c;
    EXPECT_NEAR(to_mhz(c.gamma_29s), 1.0 / 21.7, 1e-12);
    EXPECT_NEAR(to_mhz(dephasing_excess(from_mhz(2.6) + c.gamma_29s)), 2.6, 1e-12);
}

TEST(Units, MhzRoundTrip)
{
    EXPECT_DOUBLE_EQ(from_mhz(1.0), two_pi * 1e6);
    EXPECT_NEAR(to_mhz(from_mhz(6.07)), 6.07, 1e-15);
}
