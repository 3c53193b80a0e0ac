#include "rydfiber/fit.hpp"
#include "rydfiber/trace_analysis.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace rydfiber;

namespace
{
EitParams truth()
{
    EitParams p;
    p.od = 6.06;
    p.omega_c = from_mhz(9.5);
    p.delta_c = 0.0;
    p.gamma_ryd = from_mhz(2.65);
    p.offset = from_mhz(1.3);
    return p;
}

Spectrum synth(const EitParams& p, double noise = 0.0, std::uint64_t seed = 1, double lo = -20.0, double hi = 20.0,
               std::size_t n = 41)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution< double > g(0.0, noise > 0.0 ? noise : 1.0);
    Spectrum s;
    for (std::size_t i = 0; i < n; ++i)
    {
        const double d = from_mhz(lo + (hi - lo) * static_cast< double >(i) / static_cast< double >(n - 1));
        double t = transmission_eit(d, p);
        std::optional< double > sigma;
        if (noise > 0.0)
        {
            t += g(rng);
            sigma = noise;
        }
        s.points.push_back({d, t, sigma});
    }
    return s;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }
} // namespace

TEST(LeastSquares, AnalyticGradientMatchesFiniteDifferences)
{
    using namespace detail;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution< double > u(0.0, 1.0);
    for (int k = 0; k < 200; ++k)
    {
        std::array< double, n_params > q{};
        q[p_od] = 0.5 + 20.0 * u(rng);
        q[p_omega_c] = 0.5 + 15.0 * u(rng);
        q[p_delta_c] = -5.0 + 10.0 * u(rng);
        q[p_gamma_ryd] = 0.1 + 5.0 * u(rng);
        q[p_offset] = -3.0 + 6.0 * u(rng);
        q[p_gamma] = 3.0 + 6.0 * u(rng);
        const double delta = -15.0 + 30.0 * u(rng);
        std::array< double, n_params > grad{};
        eit_value_and_gradient(delta, q, &grad);
        for (int j = 0; j < n_params; ++j)
        {
            const double h = 1e-6 * std::max(1.0, std::abs(q[j]));
            auto qp = q, qm = q;
            qp[j] += h;
            qm[j] -= h;
            const double fd =
                (eit_value_and_gradient(delta, qp, nullptr) - eit_value_and_gradient(delta, qm, nullptr)) / (2 * h);
            ASSERT_NEAR(grad[j], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "param " << j;
        }
    }
}

TEST(LeastSquares, RssNeverIncreases)
{
    const Spectrum s = synth(truth(), 0.01, 3);
    FitOptions opt;
    EitParams start = truth();
    start.omega_c = from_mhz(4.0);
    start.gamma_ryd = from_mhz(0.5);
    start.od = 3.0;
    opt.init = start;
    const auto data = detail::prepare(s);
    const auto raw = detail::run(data, detail::to_internal(start),
                                 {detail::p_od, detail::p_omega_c, detail::p_delta_c, detail::p_gamma_ryd,
                                  detail::p_offset},
                                 opt.solver);
    ASSERT_GE(raw.solver.rss_trace.size(), 2u);
    for (std::size_t i = 1; i < raw.solver.rss_trace.size(); ++i)
        EXPECT_LE(raw.solver.rss_trace[i], raw.solver.rss_trace[i - 1]);
}

TEST(LeastSquares, SolvesLinearProblemExactly)
{
    // y = 2 + 3x as a residual function; LM must land on the normal-equation solution.
    const std::vector< double > x{0, 1, 2, 3, 4}, y{2.1, 4.9, 8.2, 10.8, 14.1};
    const auto res = [&](const lsq::Vector& p) {
        lsq::Vector r(5);
        for (int i = 0; i < 5; ++i)
            r[i] = y[i] - (p[0] + p[1] * x[i]);
        return r;
    };
    const auto jac = [&](const lsq::Vector&) {
        lsq::Matrix j(5, 2);
        for (int i = 0; i < 5; ++i)
            j.row(i) << -1.0, -x[i];
        return j;
    };
    lsq::Vector lo(2), hi(2), x0(2);
    lo << -100, -100;
    hi << 100, 100;
    x0 << 0, 0;
    const auto r = lsq::levenberg_marquardt(res, jac, x0, lo, hi);
    // Closed-form least squares.
    const double xm = 2.0, ym = (2.1 + 4.9 + 8.2 + 10.8 + 14.1) / 5.0;
    double sxy = 0, sxx = 0;
    for (int i = 0; i < 5; ++i)
    {
        sxy += (x[i] - xm) * (y[i] - ym);
        sxx += (x[i] - xm) * (x[i] - xm);
    }
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.x[1], sxy / sxx, 1e-9);
    EXPECT_NEAR(r.x[0], ym - sxy / sxx * xm, 1e-9);
    const auto cov = lsq::covariance(r.jtj, r.rss, 5);
    ASSERT_TRUE(cov);
    EXPECT_NEAR((*cov)(1, 1), r.rss / 3.0 / sxx, 1e-12);
}

TEST(LeastSquares, SingularCovarianceOmitted)
{
    lsq::Matrix jtj(2, 2);
    jtj << 1.0, 1.0, 1.0, 1.0;
    EXPECT_FALSE(lsq::covariance(jtj, 1.0, 10));
    jtj << 1.0, 0.0, 0.0, 1.0;
    EXPECT_FALSE(lsq::covariance(jtj, 1.0, 2));
}

TEST(FitOd, RecoversLineNoiseless)
{
    EitParams p;
    p.od = 3.2;
    p.offset = from_mhz(-1.4);
    const FitResult f = fit_od(synth(p));
    EXPECT_TRUE(f.converged);
    EXPECT_LT(rel(f.params.od, 3.2), 1e-8);
    EXPECT_NEAR(to_mhz(f.params.offset), -1.4, 1e-8);
    EXPECT_EQ(f.free, (std::vector< std::string >{"od", "offset"}));
}

TEST(FitOd, FreeLinewidthRecovered)
{
    EitParams p;
    p.od = 2.0;
    p.gamma = from_mhz(5.0);
    FitOptions opt;
    opt.fit_gamma = true;
    const FitResult f = fit_od(synth(p), opt);
    EXPECT_NEAR(to_mhz(f.params.gamma), 5.0, 1e-7);
}

TEST(FitOd, NoAbsorptionIsDegenerate)
{
    EitParams p;
    p.od = 0.0;
    const FitResult f = fit_od(synth(p));
    EXPECT_TRUE(f.degenerate);
    EXPECT_NEAR(f.params.od, 0.0, 1e-6);
}

TEST(FitOd, TooFewPointsRejected)
{
    Spectrum s = synth(truth(), 0.0, 1, -5, 5, 2);
    EXPECT_THROW(fit_od(s), std::invalid_argument);
    EXPECT_THROW(fit_od(Spectrum{}), std::invalid_argument);
}

TEST(FitEit, RecoversParametersNoiseless)
{
    const EitParams p = truth();
    const FitResult f = fit_eit(synth(p));
    ASSERT_TRUE(f.converged);
    ASSERT_TRUE(f.eit_window);
    EXPECT_LT(rel(f.params.od, p.od), 1e-6);
    EXPECT_LT(rel(f.params.omega_c, p.omega_c), 1e-6);
    EXPECT_LT(rel(f.params.gamma_ryd, p.gamma_ryd), 1e-6);
    EXPECT_NEAR(to_mhz(f.params.delta_c), 0.0, 1e-6);
    EXPECT_LT(rel(f.params.offset, p.offset), 1e-6);
}

TEST(FitEit, DetunedControlRecovered)
{
    EitParams p = truth();
    p.delta_c = from_mhz(-1.7);
    const FitResult f = fit_eit(synth(p));
    EXPECT_NEAR(to_mhz(f.params.delta_c), -1.7, 1e-5);
    EXPECT_NEAR(to_mhz(eit_peak_position(f.params)), to_mhz(eit_peak_position(p)), 1e-5);
}

TEST(FitEit, StderrCoversTruthUnderNoise)
{
    const EitParams p = truth();
    int covered = 0;
    const int n = 40;
    for (int seed = 0; seed < n; ++seed)
    {
        const FitResult f = fit_eit(synth(p, 0.01, 100 + seed));
        ASSERT_TRUE(f.uncertainty.omega_c);
        if (std::abs(f.params.omega_c - p.omega_c) < 2.0 * *f.uncertainty.omega_c)
            ++covered;
    }
    EXPECT_GE(covered, 34); // about 95% expected
}

TEST(FitEit, StderrShrinksWithAveraging)
{
    // Shot-noise spectra averaged over 5, 20 and 80 repetitions: each fourfold increase
    // should halve the stderr, and the bias should stay inside the scatter.
    EitParams p = truth();
    p.offset = 0.0;
    SequenceConfig s;
    s.n_reps = 80;
    s.detection_efficiency = 0.1;
    s.detuning_grid = uniform_grid_mhz(-20.0, 20.0, 41);
    LossModel l;
    l.enabled = false;
    l.od0 = p.od;
    const int seeds = 30;
    std::vector< double > mean_se;
    for (std::size_t count : {5u, 20u, 80u})
    {
        double se = 0.0, est = 0.0;
        for (int seed = 1; seed <= seeds; ++seed)
        {
            s.rng_seed = static_cast< std::uint64_t >(seed);
            Spectrum spec = block_average(simulate(p, s, l), Slot::eit, 1, count);
            set_shot_noise_sigma(spec, photon_budget(s) * static_cast< double >(count));
            const FitResult f = fit_eit(spec);
            ASSERT_TRUE(f.converged && f.uncertainty.omega_c) << count << " " << seed;
            se += *f.uncertainty.omega_c / seeds;
            est += f.params.omega_c / seeds;
        }
        EXPECT_LT(std::abs(est - p.omega_c), 3.0 * se / std::sqrt(double(seeds)) + 0.005 * p.omega_c) << count;
        mean_se.push_back(se);
    }
    EXPECT_NEAR(mean_se[0] / mean_se[1], 2.0, 0.3);
    EXPECT_NEAR(mean_se[1] / mean_se[2], 2.0, 0.3);
}

TEST(FitEit, NoWindowFallsBackToLine)
{
    EitParams p;
    p.od = 4.0;
    const FitResult f = fit_eit(synth(p, 0.005, 9));
    EXPECT_FALSE(f.eit_window);
    EXPECT_EQ(f.params.omega_c, 0.0);
    ASSERT_FALSE(f.warnings.empty());
    EXPECT_NE(f.warnings.front().find("no EIT window"), std::string::npos);
    EXPECT_NEAR(f.params.od, 4.0, 0.1);
}

TEST(FitEit, ReportsDephasingExcess)
{
    const FitResult f = fit_eit(synth(truth()));
    EXPECT_NEAR(to_mhz(f.dephasing_excess), 2.65 - 1.0 / 21.7, 1e-5);
}

TEST(FitOdRobust, IgnoresTransparencyHole)
{
    EitParams p;
    p.od = 1.5;
    Spectrum s = synth(p);
    for (auto& pt : s.points)
        if (std::abs(to_mhz(pt.detuning) - 2.0) < 1.5)
            pt.transmission = std::min(1.0, pt.transmission + 0.3);
    const FitResult plain = fit_od(s);
    const FitResult robust = fit_od_robust(s);
    EXPECT_GT(std::abs(plain.params.od - 1.5), 0.05);
    EXPECT_NEAR(robust.params.od, 1.5, 1e-6);
}

// ---------------------------------------------------------------------------

namespace
{
std::vector< DecayPoint > two_rate(double t_break, double tau1, double tau2, std::size_t n, double dt,
                                   double noise = 0.0, std::uint64_t seed = 1)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution< double > g(0.0, 1.0);
    std::vector< DecayPoint > pts;
    for (std::size_t i = 0; i < n; ++i)
    {
        const double t = dt * (static_cast< double >(i) + 0.5);
        const double e = t < t_break ? t / tau1 : t_break / tau1 + (t - t_break) / tau2;
        double y = 3.0 * std::exp(-e);
        std::optional< double > sigma;
        if (noise > 0.0)
        {
            sigma = noise * y;
            y += *sigma * g(rng);
        }
        pts.push_back({t, y, sigma});
    }
    return pts;
}
} // namespace

TEST(DecayFit, FindsBreakNoiseless)
{
    const auto pts = two_rate(3e-3, 2e-3, 5e-3, 50, 2e-4);
    const DecayFit f = fit_two_segment_decay(pts);
    ASSERT_TRUE(f.informative);
    ASSERT_TRUE(f.breakpoint);
    EXPECT_NEAR(*f.breakpoint, 3.1e-3, 1e-12); // first point after the break
    EXPECT_NEAR(f.early->tau(), 2e-3, 1e-9);
    EXPECT_NEAR(f.late->tau(), 5e-3, 1e-9);
}

TEST(DecayFit, SingleExponentialIsNotInformative)
{
    const auto pts = two_rate(1.0, 2e-3, 2e-3, 50, 2e-4, 0.02, 4);
    const DecayFit f = fit_two_segment_decay(pts);
    EXPECT_FALSE(f.informative);
    EXPECT_GT(f.p_value, 0.01);
}

TEST(DecayFit, SingleExponentialNoiselessIsNotInformative)
{
    const auto pts = two_rate(1.0, 2e-3, 2e-3, 50, 2e-4);
    EXPECT_FALSE(fit_two_segment_decay(pts).informative);
}

TEST(DecayFit, FixedBreakMatchesSearchOnCleanData)
{
    const auto pts = two_rate(3e-3, 2e-3, 5e-3, 50, 2e-4, 0.002, 8);
    const DecayFit free = fit_two_segment_decay(pts);
    DecayOptions opt;
    opt.breakpoint = 3e-3;
    const DecayFit fixed = fit_two_segment_decay(pts, opt);
    ASSERT_TRUE(free.early && fixed.early && free.late && fixed.late);
    EXPECT_EQ(free.break_index, fixed.break_index);
    EXPECT_DOUBLE_EQ(free.early->rate, fixed.early->rate);
    EXPECT_DOUBLE_EQ(free.late->rate, fixed.late->rate);
}

TEST(DecayFit, WeightedSlopeMatchesClosedForm)
{
    const std::vector< double > t{0, 1, 2, 3, 4, 5}, z{0.1, -0.9, -2.2, -2.8, -4.1, -5.0},
        w{1, 2, 1, 3, 1, 2};
    const auto l = detail::line_fit(t, z, w);
    double sw = 0, st = 0, sz = 0, stt = 0, stz = 0;
    for (int i = 0; i < 6; ++i)
    {
        sw += w[i];
        st += w[i] * t[i];
        sz += w[i] * z[i];
        stt += w[i] * t[i] * t[i];
        stz += w[i] * t[i] * z[i];
    }
    const double slope = (sw * stz - st * sz) / (sw * stt - st * st);
    EXPECT_NEAR(l.slope, slope, 1e-12);
    EXPECT_NEAR(l.intercept, (sz - slope * st) / sw, 1e-12);
}

TEST(DecayFit, RejectsBadInput)
{
    std::vector< DecayPoint > pts{{0.0, 1.0, {}}, {1.0, -0.5, {}}, {2.0, 0.2, {}}};
    EXPECT_THROW(fit_two_segment_decay(pts), std::invalid_argument);
    EXPECT_THROW(fit_two_segment_decay(std::vector< DecayPoint >{}), std::invalid_argument);
}
