#ifndef RYDFIBER_FIT_HPP
#define RYDFIBER_FIT_HPP

#include "rydfiber/least_squares.hpp"
#include "rydfiber/spectro_model.hpp"
#include "rydfiber/units.hpp"

#include <boost/math/distributions/fisher_f.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rydfiber
{
struct SpectrumPoint
{
    double detuning;     // rad/s
    double transmission;
    std::optional< double > sigma;
};

struct Spectrum
{
    std::vector< SpectrumPoint > points;

    std::size_t size() const noexcept { return points.size(); }
    bool weighted() const
    {
        return !points.empty() && std::all_of(points.begin(), points.end(), [](const SpectrumPoint& p) {
                   return p.sigma && *p.sigma > 0.0 && std::isfinite(*p.sigma);
               });
    }

    void validate(std::size_t n_free) const
    {
        if (points.size() < n_free + 1)
            throw std::invalid_argument("spectrum has " + std::to_string(points.size()) + " points, need at least " +
                                        std::to_string(n_free + 1));
        std::vector< double > d;
        for (const auto& p : points)
        {
            if (!all_finite(p.detuning, p.transmission))
                throw std::invalid_argument("spectrum contains non-finite values");
            d.push_back(p.detuning);
        }
        std::sort(d.begin(), d.end());
        if (std::adjacent_find(d.begin(), d.end()) != d.end())
            throw std::invalid_argument("spectrum detunings must be distinct");
    }
};

/// One-sigma uncertainties, same units as EitParams. Empty when not estimable.
struct EitErrors
{
    std::optional< double > od, gamma, omega_c, delta_c, gamma_ryd, offset;
};

struct FitResult
{
    EitParams params;
    EitErrors uncertainty;
    std::vector< std::string > free;  // names of fitted parameters
    double rss = 0.0;
    std::size_t n_points = 0;
    bool converged = false;
    int n_iter = 0;
    bool degenerate = false;      // no absorption to speak of
    bool eit_window = false;      // fit_eit only: a transparency window was found
    double dephasing_excess = 0.0; // gamma_ryd - gamma_29S, fit_eit only
    std::optional< double > dephasing_excess_stderr;
    std::vector< std::string > warnings;
};

struct FitOptions
{
    std::optional< EitParams > init;
    bool fit_gamma = false;
    double gamma = RydbergConstants{}.gamma_d2; // used when gamma is frozen and no init is given
    RydbergConstants constants;
    double window_alpha = 1e-3; // significance needed to prefer the EIT model over a bare line
    lsq::Options solver;
};

namespace detail
{
// The lineshape only depends on ratios of frequencies, so the solver works in MHz
// (omega / 2pi / 1e6) to keep every parameter of order one.

enum Param : int
{
    p_od,
    p_omega_c,
    p_delta_c,
    p_gamma_ryd,
    p_offset,
    p_gamma,
    n_params
};

inline const std::array< const char*, n_params > param_names{"od", "omega_c", "delta_c", "gamma_ryd", "offset",
                                                             "gamma"};

struct SpectrumData
{
    std::vector< double > x; // MHz
    std::vector< double > y;
    std::vector< double > inv_sigma;
};

inline SpectrumData prepare(const Spectrum& s)
{
    SpectrumData d;
    const bool w = s.weighted();
    for (const auto& p : s.points)
    {
        d.x.push_back(to_mhz(p.detuning));
        d.y.push_back(p.transmission);
        d.inv_sigma.push_back(w ? 1.0 / *p.sigma : 1.0);
    }
    return d;
}

/// Model value and gradient of T w.r.t. all six parameters, frequencies in any common unit.
inline double eit_value_and_gradient(double delta, const std::array< double, n_params >& q,
                                     std::array< double, n_params >* grad)
{
    using namespace std::complex_literals;
    const double od = q[p_od];
    const double om = q[p_omega_c];
    const double gamma = q[p_gamma];
    const double d = delta - q[p_offset];
    const std::complex< double > e = q[p_gamma_ryd] - 2.0i * (q[p_delta_c] + d);
    const std::complex< double > den = gamma - 2.0i * d + om * om / e;
    const std::complex< double > chi = 1.0i * gamma / den;
    const double t = std::exp(-od * chi.imag());
    if (grad)
    {
        const std::complex< double > dchi_dden = -chi / den;
        const std::complex< double > dden_de = -om * om / (e * e);
        auto& g = *grad;
        g[p_od] = -chi.imag() * t;
        const auto via = [&](std::complex< double > dden) { return -od * t * (dchi_dden * dden).imag(); };
        g[p_omega_c] = via(2.0 * om / e);
        g[p_gamma_ryd] = via(dden_de);
        g[p_delta_c] = via(dden_de * (-2.0i));
        g[p_offset] = -via(-2.0i + dden_de * (-2.0i));
        g[p_gamma] = -od * t * ((1.0i - chi) / den).imag();
    }
    return t;
}

struct Problem
{
    const SpectrumData& data;
    std::array< double, n_params > fixed; // values of every parameter, free ones overwritten
    std::vector< int > free;

    std::array< double, n_params > unpack(const lsq::Vector& x) const
    {
        auto q = fixed;
        for (std::size_t k = 0; k < free.size(); ++k)
            q[free[k]] = x[static_cast< Eigen::Index >(k)];
        return q;
    }

    lsq::Vector residual(const lsq::Vector& x) const
    {
        const auto q = unpack(x);
        lsq::Vector r(static_cast< Eigen::Index >(data.x.size()));
        for (std::size_t i = 0; i < data.x.size(); ++i)
            r[static_cast< Eigen::Index >(i)] =
                (data.y[i] - eit_value_and_gradient(data.x[i], q, nullptr)) * data.inv_sigma[i];
        return r;
    }

    lsq::Matrix jacobian(const lsq::Vector& x) const
    {
        const auto q = unpack(x);
        lsq::Matrix j(static_cast< Eigen::Index >(data.x.size()), static_cast< Eigen::Index >(free.size()));
        std::array< double, n_params > g{};
        for (std::size_t i = 0; i < data.x.size(); ++i)
        {
            eit_value_and_gradient(data.x[i], q, &g);
            for (std::size_t k = 0; k < free.size(); ++k)
                j(static_cast< Eigen::Index >(i), static_cast< Eigen::Index >(k)) = -g[free[k]] * data.inv_sigma[i];
        }
        return j;
    }
};

inline std::array< double, n_params > to_internal(const EitParams& p)
{
    return {p.od, to_mhz(p.omega_c), to_mhz(p.delta_c), to_mhz(p.gamma_ryd), to_mhz(p.offset), to_mhz(p.gamma)};
}

inline EitParams from_internal(const std::array< double, n_params >& q)
{
    EitParams p;
    p.od = q[p_od];
    p.omega_c = from_mhz(std::abs(q[p_omega_c]));
    p.delta_c = from_mhz(q[p_delta_c]);
    p.gamma_ryd = from_mhz(q[p_gamma_ryd]);
    p.offset = from_mhz(q[p_offset]);
    p.gamma = from_mhz(q[p_gamma]);
    return p;
}

struct RawFit
{
    std::array< double, n_params > q;
    lsq::Result solver;
    std::optional< lsq::Matrix > cov;
};

inline RawFit run(const SpectrumData& data, const std::array< double, n_params >& start, std::vector< int > free,
                  const lsq::Options& opt)
{
    Problem prob{data, start, std::move(free)};
    const auto nf = static_cast< Eigen::Index >(prob.free.size());
    lsq::Vector x0(nf), lo(nf), hi(nf);
    for (Eigen::Index k = 0; k < nf; ++k)
    {
        const int id = prob.free[static_cast< std::size_t >(k)];
        x0[k] = start[id];
        lo[k] = -std::numeric_limits< double >::infinity();
        hi[k] = std::numeric_limits< double >::infinity();
        if (id == p_od)
        {
            lo[k] = 0.0;
            hi[k] = 500.0;
        }
        if (id == p_omega_c)
            lo[k] = 0.0;
        if (id == p_gamma_ryd || id == p_gamma)
            lo[k] = 1e-6;
    }
    RawFit out;
    out.solver = lsq::levenberg_marquardt([&](const lsq::Vector& x) { return prob.residual(x); },
                                          [&](const lsq::Vector& x) { return prob.jacobian(x); }, x0, lo, hi, opt);
    out.q = prob.unpack(out.solver.x);
    out.cov = lsq::covariance(out.solver.jtj, out.solver.rss, data.x.size());
    return out;
}

inline FitResult package(const RawFit& raw, const std::vector< int >& free, std::size_t n)
{
    FitResult fr;
    fr.params = from_internal(raw.q);
    fr.rss = raw.solver.rss;
    fr.converged = raw.solver.converged;
    fr.n_iter = raw.solver.n_iter;
    fr.n_points = n;
    for (int id : free)
        fr.free.emplace_back(param_names[id]);
    if (!fr.converged)
        fr.warnings.emplace_back("solver did not converge within the iteration limit");
    if (!raw.cov)
    {
        if (fr.converged)
            fr.warnings.emplace_back("information matrix is singular; uncertainties omitted");
        return fr;
    }
    if (!fr.converged)
        return fr;
    for (std::size_t k = 0; k < free.size(); ++k)
    {
        const auto kk = static_cast< Eigen::Index >(k);
        const double se = std::sqrt((*raw.cov)(kk, kk));
        switch (free[k])
        {
        case p_od: fr.uncertainty.od = se; break;
        case p_omega_c: fr.uncertainty.omega_c = from_mhz(se); break;
        case p_delta_c: fr.uncertainty.delta_c = from_mhz(se); break;
        case p_gamma_ryd: fr.uncertainty.gamma_ryd = from_mhz(se); break;
        case p_offset: fr.uncertainty.offset = from_mhz(se); break;
        case p_gamma: fr.uncertainty.gamma = from_mhz(se); break;
        default: break;
        }
    }
    return fr;
}

inline std::vector< double > clipped_absorbance(const SpectrumData& d)
{
    std::vector< double > a;
    for (double y : d.y)
        a.push_back(-std::log(std::clamp(y, 1e-4, 1.0)));
    return a;
}
} // namespace detail

/// Two-level absorption fit of {od, offset} (and gamma when requested).
inline FitResult fit_od(const Spectrum& spec, const FitOptions& opt = {})
{
    using namespace detail;
    std::vector< int > free{p_od, p_offset};
    if (opt.fit_gamma)
        free.push_back(p_gamma);
    spec.validate(free.size());
    const auto data = prepare(spec);

    std::array< double, n_params > start{};
    if (opt.init)
    {
        start = to_internal(*opt.init);
        start[p_omega_c] = 0.0;
    }
    else
    {
        // Absorbance centroid locates the line even when its core is saturated.
        const auto a = clipped_absorbance(data);
        const double total = std::accumulate(a.begin(), a.end(), 0.0);
        double centroid = 0.5 * (data.x.front() + data.x.back());
        if (total > 0.0)
            centroid = std::inner_product(a.begin(), a.end(), data.x.begin(), 0.0) / total;
        start[p_od] = *std::max_element(a.begin(), a.end());
        start[p_offset] = centroid;
        start[p_gamma] = to_mhz(opt.gamma);
        start[p_gamma_ryd] = 1.0;
    }
    start[p_omega_c] = 0.0;
    start[p_delta_c] = 0.0;
    if (!opt.init)
        start[p_gamma] = to_mhz(opt.gamma);

    const auto raw = run(data, start, free, opt.solver);
    auto fr = package(raw, free, spec.size());
    fr.params.omega_c = 0.0;
    if (fr.params.od < 1e-6)
    {
        fr.degenerate = true;
        fr.warnings.emplace_back("no absorption: optical depth fitted to zero");
    }
    return fr;
}

/// Absorption fit that ignores transparency features: points lying more than `k` standard
/// errors above the line (EIT windows, holes burnt by atom loss) are dropped and the line is
/// refitted until no more points go.
inline FitResult fit_od_robust(Spectrum spec, double k = 3.0, const FitOptions& opt = {})
{
    std::size_t dropped = 0;
    while (true)
    {
        FitResult fr = fit_od(spec, opt);
        const bool w = spec.weighted();
        std::vector< double > resid;
        for (const auto& p : spec.points)
            resid.push_back(p.transmission - transmission_od(p.detuning - fr.params.offset, fr.params.od, fr.params.gamma));
        // Unweighted: MAD scale, so the excluded points do not inflate it.
        const auto median = [](std::vector< double > v) {
            std::nth_element(v.begin(), v.begin() + static_cast< long >(v.size() / 2), v.end());
            return v[v.size() / 2];
        };
        const double mid = median(resid);
        std::vector< double > dev;
        for (double r : resid)
            dev.push_back(std::abs(r - mid));
        const double mad = std::max(1.4826 * median(dev), 1e-9);
        Spectrum keep;
        for (std::size_t i = 0; i < spec.size(); ++i)
        {
            const double scale = w ? *spec.points[i].sigma : mad;
            if (!(resid[i] > k * scale))
                keep.points.push_back(spec.points[i]);
        }
        if (keep.size() == spec.size() || keep.size() < 4)
        {
            if (dropped > 0)
                fr.warnings.push_back(std::to_string(dropped) + " points above the line excluded");
            return fr;
        }
        dropped += spec.size() - keep.size();
        spec = std::move(keep);
    }
}

/// Ladder-EIT fit of {od, omega_c, delta_c, gamma_ryd, offset} (and gamma when requested).
/// Falls back to the absorption-only fit when no transparency window stands above the noise.
inline FitResult fit_eit(const Spectrum& spec, const FitOptions& opt = {})
{
    using namespace detail;
    std::vector< int > free{p_od, p_omega_c, p_delta_c, p_gamma_ryd, p_offset};
    if (opt.fit_gamma)
        free.push_back(p_gamma);
    spec.validate(free.size());
    const auto data = prepare(spec);

    FitOptions od_opt = opt;
    if (od_opt.init)
        od_opt.init->omega_c = 0.0;
    const FitResult lorentz = fit_od(spec, od_opt);
    const double center = to_mhz(lorentz.params.offset);
    const double gamma = to_mhz(lorentz.params.gamma);

    // The window search starts from the largest excess transmission near line center.
    std::size_t peak_idx = 0;
    double peak_excess = -std::numeric_limits< double >::infinity();
    for (std::size_t i = 0; i < data.x.size(); ++i)
    {
        if (std::abs(data.x[i] - center) >= 2.0 * gamma)
            continue;
        const double r = data.y[i] - transmission_od(data.x[i] - center, lorentz.params.od, gamma);
        if (r > peak_excess)
        {
            peak_excess = r;
            peak_idx = i;
        }
    }
    const auto no_window = [&] {
        FitResult fr = lorentz;
        fr.eit_window = false;
        fr.dephasing_excess = 0.0;
        fr.warnings.emplace_back("no EIT window detected; returning absorption-only fit");
        return fr;
    };
    if (!(peak_excess > 0.0))
        return no_window();

    // Starting points: the window position gives delta_c, its height omega_c for a guessed gamma_ryd.
    std::vector< std::array< double, n_params > > starts;
    if (opt.init)
        starts.push_back(to_internal(*opt.init));
    else
    {
        const double od0 = std::max(lorentz.params.od, 0.1);
        const double peak_pos = data.x[peak_idx];
        const double im_chi = std::clamp(-std::log(std::clamp(data.y[peak_idx], 1e-6, 1.0)) / od0, 0.01, 0.99);
        for (double gr : {0.3, 1.0, 3.0, 8.0})
        {
            std::array< double, n_params > q{};
            q[p_od] = od0;
            q[p_offset] = center;
            q[p_gamma] = gamma;
            q[p_gamma_ryd] = gr;
            q[p_delta_c] = center - peak_pos;
            q[p_omega_c] = std::sqrt(gr * gamma * (1.0 / im_chi - 1.0));
            starts.push_back(q);
        }
    }
    if (!opt.fit_gamma)
        for (auto& q : starts)
            q[p_gamma] = opt.init ? to_mhz(opt.init->gamma) : to_mhz(opt.gamma);

    std::optional< RawFit > best;
    for (const auto& q : starts)
    {
        auto raw = run(data, q, free, opt.solver);
        if (!best || raw.solver.rss < best->solver.rss)
            best = std::move(raw);
    }
    // Keep the EIT model only if it beats the absorption line significantly (nested F test,
    // three extra parameters) and by more than rounding noise.
    const double rss_l = lorentz.rss;
    const double rss_e = best->solver.rss;
    const std::size_t n = spec.size();
    double tss = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        tss += data.y[i] * data.y[i] * data.inv_sigma[i] * data.inv_sigma[i];
    if (!(rss_l - rss_e > 1e-10 * tss))
        return no_window();
    if (n > free.size() && rss_e > 0.0)
    {
        const double df2 = static_cast< double >(n - free.size());
        const double f_stat = (rss_l - rss_e) / 3.0 / (rss_e / df2);
        const boost::math::fisher_f_distribution<> dist(3.0, df2);
        if (!(boost::math::cdf(boost::math::complement(dist, f_stat)) < opt.window_alpha))
            return no_window();
    }
    auto fr = package(*best, free, n);
    fr.eit_window = true;
    fr.dephasing_excess = dephasing_excess(fr.params.gamma_ryd, opt.constants);
    fr.dephasing_excess_stderr = fr.uncertainty.gamma_ryd;
    if (fr.params.od < 1e-6)
        fr.degenerate = true;
    return fr;
}

// ---------------------------------------------------------------------------
// Exponential decay with a regime change: ln y is fitted piecewise linearly.

struct DecayPoint
{
    double t; // s
    double y; // > 0
    std::optional< double > sigma; // standard error of y
};

struct SegmentFit
{
    std::size_t first = 0; // index of the first point
    std::size_t count = 0;
    double rate = 0.0;     // 1/s, decay of y
    std::optional< double > rate_stderr;
    double intercept = 0.0; // ln y at t = 0
    double rss = 0.0;

    /// Decay time 1/rate; infinite for a non-decaying segment.
    double tau() const { return rate > 0.0 ? 1.0 / rate : std::numeric_limits< double >::infinity(); }
    std::optional< double > tau_stderr() const
    {
        if (!rate_stderr || !(rate > 0.0))
            return std::nullopt;
        return *rate_stderr / (rate * rate);
    }
};

struct DecayFit
{
    std::optional< SegmentFit > early;
    std::optional< SegmentFit > late;
    std::optional< std::size_t > break_index; // first point of the late segment
    std::optional< double > breakpoint;       // its time, s
    bool informative = false;                 // two segments beat one significantly
    double p_value = 1.0;                     // Bonferroni-corrected over candidate breakpoints
    std::vector< std::string > warnings;
};

struct DecayOptions
{
    std::optional< double > breakpoint; // fixed break time; searched when absent
    std::size_t min_segment = 4;
    double alpha = 0.01;
};

namespace detail
{
struct Line
{
    double intercept = 0.0;
    double slope = 0.0;
    double slope_var_unscaled = 0.0;
    double rss = 0.0;
    std::size_t n = 0;
};

// Weighted straight line through (t, z).
inline Line line_fit(std::span< const double > t, std::span< const double > z, std::span< const double > w)
{
    Line l;
    l.n = t.size();
    double sw = 0.0, st = 0.0, sz = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i)
    {
        sw += w[i];
        st += w[i] * t[i];
        sz += w[i] * z[i];
    }
    const double tm = st / sw;
    const double zm = sz / sw;
    double stt = 0.0, stz = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i)
    {
        stt += w[i] * (t[i] - tm) * (t[i] - tm);
        stz += w[i] * (t[i] - tm) * (z[i] - zm);
    }
    l.slope = stt > 0.0 ? stz / stt : 0.0;
    l.intercept = zm - l.slope * tm;
    l.slope_var_unscaled = stt > 0.0 ? 1.0 / stt : std::numeric_limits< double >::infinity();
    for (std::size_t i = 0; i < t.size(); ++i)
    {
        const double r = z[i] - (l.intercept + l.slope * t[i]);
        l.rss += w[i] * r * r;
    }
    return l;
}

struct LogSeries
{
    std::vector< double > t, z, w;
};

inline LogSeries to_log(std::span< const DecayPoint > s)
{
    LogSeries out;
    const bool weighted = std::all_of(s.begin(), s.end(), [](const DecayPoint& p) {
        return p.sigma && *p.sigma > 0.0 && std::isfinite(*p.sigma);
    });
    for (const auto& p : s)
    {
        if (!(p.y > 0.0) || !all_finite(p.t, p.y))
            throw std::invalid_argument("decay series needs finite y > 0");
        out.t.push_back(p.t);
        out.z.push_back(std::log(p.y));
        const double rel = weighted ? *p.sigma / p.y : 1.0;
        out.w.push_back(1.0 / (rel * rel));
    }
    for (std::size_t i = 1; i < out.t.size(); ++i)
        if (!(out.t[i] > out.t[i - 1]))
            throw std::invalid_argument("decay series times must increase");
    return out;
}

inline Line segment(const LogSeries& s, std::size_t first, std::size_t count)
{
    return line_fit(std::span{s.t}.subspan(first, count), std::span{s.z}.subspan(first, count),
                    std::span{s.w}.subspan(first, count));
}

inline SegmentFit to_segment(const Line& l, std::size_t first)
{
    SegmentFit f;
    f.first = first;
    f.count = l.n;
    f.rate = -l.slope;
    f.intercept = l.intercept;
    f.rss = l.rss;
    if (l.n > 2 && std::isfinite(l.slope_var_unscaled))
        f.rate_stderr = std::sqrt(l.slope_var_unscaled * l.rss / static_cast< double >(l.n - 2));
    return f;
}

inline double total_ss(const LogSeries& s)
{
    const double sw = std::accumulate(s.w.begin(), s.w.end(), 0.0);
    double zm = 0.0;
    for (std::size_t i = 0; i < s.z.size(); ++i)
        zm += s.w[i] * s.z[i];
    zm /= sw;
    double tss = 0.0;
    for (std::size_t i = 0; i < s.z.size(); ++i)
        tss += s.w[i] * (s.z[i] - zm) * (s.z[i] - zm);
    return tss;
}

inline std::size_t split_index(const LogSeries& s, double bp)
{
    return static_cast< std::size_t >(std::lower_bound(s.t.begin(), s.t.end(), bp) - s.t.begin());
}
} // namespace detail

/// Two-regime exponential fit of a positive series: ln y is fitted by one straight line
/// per regime. Without a fixed breakpoint every point is tried as the first point of the
/// late regime and the earliest candidate minimizing the summed weighted RSS wins.
/// The split is `informative` when an F test of one line against two rejects at `alpha`
/// after Bonferroni correction for the number of candidates tried.
inline DecayFit fit_two_segment_decay(std::span< const DecayPoint > series, const DecayOptions& opt = {})
{
    using namespace detail;
    if (series.size() < 2)
        throw std::invalid_argument("decay fit needs at least two points");
    const LogSeries l = to_log(series);
    const std::size_t n = l.t.size();
    const std::size_t m = std::max< std::size_t >(opt.min_segment, 2);
    DecayFit f;

    std::optional< std::size_t > k;
    std::size_t n_candidates = 1;
    if (opt.breakpoint)
        k = split_index(l, *opt.breakpoint);
    else
    {
        double best = std::numeric_limits< double >::infinity();
        n_candidates = 0;
        for (std::size_t i = m; i + m <= n; ++i)
        {
            ++n_candidates;
            const double cost = segment(l, 0, i).rss + segment(l, i, n - i).rss;
            if (cost < best)
            {
                best = cost;
                k = i;
            }
        }
        if (!k)
        {
            f.warnings.emplace_back("series too short for a breakpoint search; single segment fitted");
            if (n >= 2)
                f.early = to_segment(segment(l, 0, n), 0);
            return f;
        }
    }

    f.break_index = *k;
    if (*k < n)
        f.breakpoint = l.t[*k];
    else
        f.breakpoint = opt.breakpoint;
    if (*k >= m)
        f.early = to_segment(segment(l, 0, *k), 0);
    else
        f.warnings.emplace_back("early segment too short; rate omitted");
    if (n - *k >= m)
        f.late = to_segment(segment(l, *k, n - *k), *k);
    else
        f.warnings.emplace_back("late segment too short; rate omitted");
    if (!f.early || !f.late)
        return f;

    // One line against two: q = 2 extra parameters.
    const double rss_one = segment(l, 0, n).rss;
    const double rss_two = f.early->rss + f.late->rss;
    const double improvement = rss_one - rss_two;
    if (n > 4 && improvement > 1e-10 * (total_ss(l) + std::numeric_limits< double >::min()))
    {
        if (rss_two <= 0.0)
            f.p_value = 0.0;
        else
        {
            const double df2 = static_cast< double >(n - 4);
            const double f_stat = (improvement / 2.0) / (rss_two / df2);
            boost::math::fisher_f_distribution<> dist(2.0, df2);
            f.p_value = boost::math::cdf(boost::math::complement(dist, f_stat));
        }
        f.p_value = std::min(1.0, f.p_value * static_cast< double >(n_candidates));
    }
    f.informative = f.p_value < opt.alpha;
    if (!f.informative && !opt.breakpoint)
        f.warnings.emplace_back("breakpoint not significant; data are consistent with a single decay");
    return f;
}

} // namespace rydfiber
#endif // RYDFIBER_FIT_HPP
