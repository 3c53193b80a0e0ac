#ifndef RYDFIBER_TRACE_ANALYSIS_HPP
#define RYDFIBER_TRACE_ANALYSIS_HPP

#include "rydfiber/fit.hpp"
#include "rydfiber/sequence_sim.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rydfiber
{
/// Values over (detuning, repetition).
struct TimeMap
{
    std::vector< double > detunings;
    std::size_t n_reps = 0;
    std::vector< double > values;

    double at(std::size_t det, std::size_t rep) const noexcept { return values[det * n_reps + rep]; }
    double& at(std::size_t det, std::size_t rep) noexcept { return values[det * n_reps + rep]; }
};

namespace detail
{
// Centered moving mean. Odd windows are plain boxcars; even windows use w + 1 taps with
// half-weight end points so the filter stays symmetric. Near the ends the half width
// shrinks to the distance from the edge.
inline std::vector< double > centered_mean(std::span< const double > x, std::size_t window)
{
    const std::size_t n = x.size();
    std::vector< double > out(n);
    const std::size_t half = window / 2;
    const bool even = window % 2 == 0;
    for (std::size_t i = 0; i < n; ++i)
    {
        const std::size_t h = std::min({half, i, n - 1 - i});
        double sum = 0.0;
        for (std::size_t j = i - h; j <= i + h; ++j)
            sum += x[j];
        if (even && h == half && h > 0)
        {
            sum -= 0.5 * (x[i - h] + x[i + h]);
            out[i] = sum / static_cast< double >(window);
        }
        else
            out[i] = sum / static_cast< double >(2 * h + 1);
    }
    return out;
}

inline std::vector< double > series(const TraceSet& ts, std::size_t det, Slot s)
{
    std::vector< double > v(ts.n_reps);
    for (std::size_t r = 0; r < ts.n_reps; ++r)
        v[r] = ts.at(det, r, s);
    return v;
}

inline std::vector< Slot > slots_of(const TraceSet& ts)
{
    if (ts.has_od_slot())
        return {Slot::eit, Slot::od};
    return {Slot::eit};
}
} // namespace detail

/// Smooth every (detuning, slot) trace over neighbouring repetitions.
inline TraceSet moving_average(const TraceSet& ts, std::size_t window = 20)
{
    if (window < 1)
        throw std::invalid_argument("moving_average: window must be >= 1");
    if (window > ts.n_reps)
        throw std::invalid_argument("moving_average: window exceeds the number of repetitions");
    TraceSet out = ts;
    for (std::size_t d = 0; d < ts.n_detunings(); ++d)
        for (const Slot s : detail::slots_of(ts))
        {
            const auto smooth = detail::centered_mean(detail::series(ts, d, s), window);
            for (std::size_t r = 0; r < ts.n_reps; ++r)
                out.at(d, r, s) = smooth[r];
        }
    return out;
}

/// Mean spectrum of `count` repetitions starting at 1-based repetition `start`, with the
/// standard error of each mean as sigma (absent for a single repetition).
inline Spectrum block_average(const TraceSet& ts, Slot slot, std::size_t start, std::size_t count = 20)
{
    if (slot == Slot::od && !ts.has_od_slot())
        throw std::invalid_argument("block_average: trace set has no OD slot");
    if (start < 1 || count < 1 || start - 1 + count > ts.n_reps)
        throw std::out_of_range("block_average: repetition range outside the trace set");
    Spectrum spec;
    for (std::size_t d = 0; d < ts.n_detunings(); ++d)
    {
        double sum = 0.0;
        for (std::size_t r = start - 1; r < start - 1 + count; ++r)
            sum += ts.at(d, r, slot);
        const double mean = sum / static_cast< double >(count);
        std::optional< double > sem;
        if (count > 1)
        {
            double ss = 0.0;
            for (std::size_t r = start - 1; r < start - 1 + count; ++r)
                ss += (ts.at(d, r, slot) - mean) * (ts.at(d, r, slot) - mean);
            sem = std::sqrt(ss / static_cast< double >(count - 1) / static_cast< double >(count));
        }
        spec.points.push_back({ts.detunings[d], mean, sem});
    }
    return spec;
}

/// Replace each sigma by the shot-noise error of a mean over `photons` detected photons
/// (photon budget times repetitions averaged). Dark points count as one photon so their
/// weight stays finite.
inline void set_shot_noise_sigma(Spectrum& s, double photons)
{
    if (!(photons > 0.0))
        throw std::invalid_argument("set_shot_noise_sigma: photons must be positive");
    for (auto& p : s.points)
        p.sigma = std::sqrt(std::max(p.transmission, 1.0 / photons) / photons);
}

/// Smoothed EIT-slot minus smoothed OD-slot transmission.
inline TimeMap diff_map(const TraceSet& ts, std::size_t window = 20)
{
    if (!ts.has_od_slot())
        throw std::invalid_argument("diff_map: needs a two-pulse trace set");
    const TraceSet sm = moving_average(ts, window);
    TimeMap m{ts.detunings, ts.n_reps, std::vector< double >(ts.n_detunings() * ts.n_reps)};
    for (std::size_t d = 0; d < ts.n_detunings(); ++d)
        for (std::size_t r = 0; r < ts.n_reps; ++r)
            m.at(d, r) = sm.at(d, r, Slot::eit) - sm.at(d, r, Slot::od);
    return m;
}

/// Smoothed map of a single slot, as in the time-resolved spectra.
inline TimeMap slot_map(const TraceSet& ts, Slot slot, std::size_t window = 20)
{
    const TraceSet sm = moving_average(ts, window);
    TimeMap m{ts.detunings, ts.n_reps, std::vector< double >(ts.n_detunings() * ts.n_reps)};
    for (std::size_t d = 0; d < ts.n_detunings(); ++d)
        for (std::size_t r = 0; r < ts.n_reps; ++r)
            m.at(d, r) = sm.at(d, r, slot);
    return m;
}

struct RepBlock
{
    std::size_t start = 1; // 1-based repetition
    std::size_t count = 20;
};

struct PeakLocation
{
    double position = 0.0; // rad/s
    double height = 0.0;
    double prominence = 0.0;
    std::size_t index = 0;
    bool significant = false;
};

struct PeakShiftOptions
{
    // The search is limited to the absorption core: detunings where the early OD-slot
    // transmission is below this value (whole grid when there is no OD slot).
    double core_threshold = 0.1;
    double min_prominence = 3.0; // in units of the standard error at the peak
    std::size_t refine_points = 3; // parabola through 3 or 5 grid points
};

struct PeakShift
{
    double shift = 0.0; // late peak minus early peak, rad/s
    PeakLocation early;
    PeakLocation late;
    bool located = false; // both peaks found
    bool flagged = false;
    std::vector< std::string > warnings;
};

namespace detail
{
/// Vertex of a least-squares parabola through `points` (3 or 5) grid points around
/// index i, clamped to the neighbouring grid points.
inline double refine_vertex(const Spectrum& s, const std::vector< bool >& mask, std::size_t i, std::size_t points)
{
    const bool wide = points >= 5;
    const std::size_t lo = (wide && i >= 2 && mask[i - 2]) ? i - 2 : i - 1;
    const std::size_t hi = (wide && i + 2 < s.size() && mask[i + 2]) ? i + 2 : i + 1;
    const double x_ref = s.points[i].detuning;
    const double scale = s.points[i + 1].detuning - s.points[i - 1].detuning;
    Eigen::MatrixXd a(static_cast< Eigen::Index >(hi - lo + 1), 3);
    Eigen::VectorXd b(a.rows());
    for (std::size_t j = lo; j <= hi; ++j)
    {
        const double u = (s.points[j].detuning - x_ref) / scale;
        const auto row = static_cast< Eigen::Index >(j - lo);
        a(row, 0) = 1.0;
        a(row, 1) = u;
        a(row, 2) = u * u;
        b[row] = s.points[j].transmission;
    }
    const Eigen::Vector3d c = a.colPivHouseholderQr().solve(b);
    double pos = x_ref;
    if (c[2] < 0.0)
        pos = x_ref - c[1] / (2.0 * c[2]) * scale;
    return std::clamp(pos, s.points[i - 1].detuning, s.points[i + 1].detuning);
}

/// Highest-prominence interior local maximum of the masked spectrum, refined to sub-grid
/// resolution by refine_vertex.
inline std::optional< PeakLocation > locate_peak(const Spectrum& s, const std::vector< bool >& mask, double k_sigma,
                                                std::size_t refine_points = 3)
{
    const std::size_t n = s.size();
    std::optional< PeakLocation > best;
    for (std::size_t i = 1; i + 1 < n; ++i)
    {
        if (!mask[i] || !mask[i - 1] || !mask[i + 1])
            continue;
        const double y = s.points[i].transmission;
        if (!(y > s.points[i - 1].transmission && y >= s.points[i + 1].transmission))
            continue;
        // Prominence within the mask: drop to the lowest point before a higher one on each side.
        double left_min = y, right_min = y;
        for (std::size_t j = i; j-- > 0 && mask[j];)
        {
            if (s.points[j].transmission > y)
                break;
            left_min = std::min(left_min, s.points[j].transmission);
        }
        for (std::size_t j = i + 1; j < n && mask[j]; ++j)
        {
            if (s.points[j].transmission > y)
                break;
            right_min = std::min(right_min, s.points[j].transmission);
        }
        const double prominence = y - std::max(left_min, right_min);
        if (best && prominence <= best->prominence)
            continue;

        const double pos = refine_vertex(s, mask, i, refine_points);
        const double sigma = s.points[i].sigma.value_or(0.0);
        best = PeakLocation{pos, y, prominence, i, prominence > k_sigma * sigma};
    }
    return best;
}
} // namespace detail

/// Position of the late OD-slot (loss) peak relative to the early EIT-slot peak.
inline PeakShift peak_shift(const TraceSet& ts, RepBlock early, RepBlock late, const PeakShiftOptions& opt = {})
{
    if (!ts.has_od_slot())
        throw std::invalid_argument("peak_shift: needs a two-pulse trace set");
    const Spectrum early_eit = block_average(ts, Slot::eit, early.start, early.count);
    const Spectrum early_od = block_average(ts, Slot::od, early.start, early.count);
    const Spectrum late_od = block_average(ts, Slot::od, late.start, late.count);

    std::vector< bool > core(ts.n_detunings());
    for (std::size_t d = 0; d < core.size(); ++d)
        core[d] = early_od.points[d].transmission < opt.core_threshold;

    PeakShift out;
    const auto e = detail::locate_peak(early_eit, core, opt.min_prominence, opt.refine_points);
    const auto l = detail::locate_peak(late_od, core, opt.min_prominence, opt.refine_points);
    if (!e || !l)
    {
        out.flagged = true;
        out.warnings.emplace_back(!e ? "no early EIT peak inside the absorption core" :
                                       "no late loss peak inside the absorption core");
        if (e)
            out.early = *e;
        if (l)
            out.late = *l;
        return out;
    }
    out.early = *e;
    out.late = *l;
    out.located = true;
    out.shift = l->position - e->position;
    if (!e->significant || !l->significant)
    {
        out.flagged = true;
        out.warnings.emplace_back("peak not above the noise floor");
    }
    return out;
}

struct CutPoint
{
    std::size_t first_rep = 1; // 1-based
    std::size_t count = 0;
    double t = 0.0;            // mean repetition time, s
    double mean = 0.0;         // block-mean transmission
    double sem = 0.0;
    bool usable = false;       // absorbance well defined and measured
};

struct CutOptions
{
    std::size_t block = 20;
    double max_relative_noise = 0.3; // sem / mean above which a block is unusable
};

/// Block-averaged transmission of one slot at a fixed detuning, as a function of time.
inline std::vector< CutPoint > cut_series(const TraceSet& ts, std::size_t det, Slot slot, const CutOptions& opt = {})
{
    if (slot == Slot::od && !ts.has_od_slot())
        throw std::invalid_argument("cut_series: trace set has no OD slot");
    if (opt.block < 1)
        throw std::invalid_argument("cut_series: block must be >= 1");
    std::vector< CutPoint > out;
    for (std::size_t r0 = 0; r0 + opt.block <= ts.n_reps; r0 += opt.block)
    {
        CutPoint p;
        p.first_rep = r0 + 1;
        p.count = opt.block;
        double sum = 0.0, tsum = 0.0;
        for (std::size_t r = r0; r < r0 + opt.block; ++r)
        {
            sum += ts.at(det, r, slot);
            tsum += ts.sequence.rep_time(r);
        }
        p.mean = sum / static_cast< double >(opt.block);
        p.t = tsum / static_cast< double >(opt.block);
        if (opt.block > 1)
        {
            double ss = 0.0;
            for (std::size_t r = r0; r < r0 + opt.block; ++r)
                ss += (ts.at(det, r, slot) - p.mean) * (ts.at(det, r, slot) - p.mean);
            p.sem = std::sqrt(ss / static_cast< double >(opt.block - 1) / static_cast< double >(opt.block));
        }
        p.usable = p.mean > 0.0 && p.mean < 1.0 && p.sem <= opt.max_relative_noise * p.mean;
        if (p.usable && p.sem > 0.0)
        {
            // relative error of the absorbance -ln T
            const double y = -std::log(p.mean);
            p.usable = (p.sem / p.mean) / y <= 0.5;
        }
        out.push_back(p);
    }
    return out;
}

/// Absorbance -ln T of the usable cut points, ready for a decay fit.
inline std::vector< DecayPoint > absorbance_series(std::span< const CutPoint > cut)
{
    std::vector< DecayPoint > out;
    const bool any_zero_sem = std::any_of(cut.begin(), cut.end(), [](const CutPoint& p) { return p.usable && !(p.sem > 0.0); });
    for (const auto& p : cut)
    {
        if (!p.usable)
            continue;
        DecayPoint d{p.t, -std::log(p.mean), std::nullopt};
        if (!any_zero_sem)
            d.sigma = p.sem / p.mean;
        out.push_back(d);
    }
    return out;
}

struct RegimeOptions
{
    std::size_t block = 20;  // repetitions per point of the decay cut
    std::size_t window = 20; // moving average for the equality test
    double equality_k = 2.0; // |T_EIT - T_OD| < k * pooled sigma ...
    std::size_t equality_run = 20; // ... for this many consecutive repetitions
    double equality_floor = 1e-3;  // smallest threshold, for noise-free data
    double alpha = 0.01;
    std::optional< double > breakpoint; // fixed break time, s
    // Peak-shift blocks; by default the first 10% and the last 40% of the sequence.
    std::optional< RepBlock > early_block;
    std::optional< RepBlock > late_block;
    PeakShiftOptions peak;
};

struct RegimeReport
{
    std::size_t cut_index = 0;
    double cut_detuning = 0.0; // rad/s, grid point actually used
    std::optional< std::size_t > breakpoint_rep; // 1-based first repetition of the late regime
    std::optional< double > breakpoint_time;     // s
    bool breakpoint_found = false;
    double p_value = 1.0;
    DecayFit eit;
    DecayFit od;
    std::optional< double > peak_shift; // rad/s
    bool peak_shift_flagged = false;
    std::optional< std::size_t > equality_rep; // 1-based
    std::vector< std::string > warnings;
};

namespace detail
{
inline double mad_sigma_of_steps(std::span< const double > x)
{
    if (x.size() < 3)
        return 0.0;
    std::vector< double > d;
    for (std::size_t i = 1; i < x.size(); ++i)
        d.push_back(x[i] - x[i - 1]);
    auto med = [](std::vector< double > v) {
        std::nth_element(v.begin(), v.begin() + static_cast< long >(v.size() / 2), v.end());
        return v[v.size() / 2];
    };
    const double m = med(d);
    for (auto& v : d)
        v = std::abs(v - m);
    return 1.4826 * med(d) / std::sqrt(2.0);
}
} // namespace detail

/// Regime analysis at a fixed probe detuning: two-regime decay fits of both slots with a
/// shared breakpoint, the repetition where both slots become equal, and the loss-peak shift.
inline RegimeReport detect_regimes(const TraceSet& ts, double cut_detuning, const RegimeOptions& opt = {})
{
    if (!ts.has_od_slot())
        throw std::invalid_argument("detect_regimes: needs a two-pulse trace set");
    RegimeReport rep;
    rep.cut_index = ts.nearest_detuning(cut_detuning);
    rep.cut_detuning = ts.detunings[rep.cut_index];
    if (std::abs(rep.cut_detuning - cut_detuning) > 1e-9 * std::max(1.0, std::abs(cut_detuning)))
        rep.warnings.emplace_back("cut detuning not on the grid; using nearest grid point " +
                                  std::to_string(to_mhz(rep.cut_detuning)) + " MHz");

    const CutOptions cut_opt{opt.block};
    const auto cut_eit = cut_series(ts, rep.cut_index, Slot::eit, cut_opt);
    const auto cut_od = cut_series(ts, rep.cut_index, Slot::od, cut_opt);
    const auto eit_series = absorbance_series(cut_eit);
    const auto od_series = absorbance_series(cut_od);

    // The EIT slot stays measurable throughout, so it locates the break; the OD slot is
    // then split at the same time (its early blocks may be too dark to use).
    DecayOptions dopt;
    dopt.breakpoint = opt.breakpoint;
    dopt.alpha = opt.alpha;
    rep.eit = fit_two_segment_decay(eit_series, dopt);
    rep.p_value = rep.eit.p_value;
    rep.breakpoint_found = opt.breakpoint.has_value() || rep.eit.informative;
    if (rep.eit.break_index && rep.breakpoint_found)
    {
        // the block whose mean time is the breakpoint starts the late regime
        const auto it = std::find_if(cut_eit.begin(), cut_eit.end(), [&](const CutPoint& p) {
            return p.usable && p.t >= rep.eit.breakpoint.value_or(0.0);
        });
        if (it != cut_eit.end())
        {
            rep.breakpoint_rep = it->first_rep;
            rep.breakpoint_time = ts.sequence.rep_time(it->first_rep - 1);
        }
    }
    DecayOptions od_opt = dopt;
    od_opt.breakpoint = rep.breakpoint_time ? rep.eit.breakpoint : opt.breakpoint;
    if (od_series.size() >= 2)
        rep.od = fit_two_segment_decay(od_series, od_opt);
    else
        rep.od.warnings.emplace_back("OD slot has no usable points at the cut");
    if (!rep.breakpoint_found)
        rep.warnings.emplace_back("no breakpoint: a single decay describes both slots");

    // Equality of the smoothed slots at the cut.
    const auto e = detail::series(ts, rep.cut_index, Slot::eit);
    const auto o = detail::series(ts, rep.cut_index, Slot::od);
    std::vector< double > diff(ts.n_reps);
    for (std::size_t r = 0; r < ts.n_reps; ++r)
        diff[r] = e[r] - o[r];
    const std::size_t window = std::min(opt.window, ts.n_reps);
    const auto smooth = detail::centered_mean(diff, window);
    const double sigma = detail::mad_sigma_of_steps(diff) / std::sqrt(static_cast< double >(window));
    const double thr = std::max(opt.equality_k * sigma, opt.equality_floor);
    std::size_t run = 0;
    for (std::size_t r = 0; r < ts.n_reps; ++r)
    {
        run = std::abs(smooth[r]) < thr ? run + 1 : 0;
        if (run == opt.equality_run)
        {
            rep.equality_rep = r + 2 - opt.equality_run;
            break;
        }
    }

    const std::size_t n = ts.n_reps;
    const RepBlock early = opt.early_block.value_or(RepBlock{1, std::max< std::size_t >(1, n / 10)});
    const std::size_t late_count = std::max< std::size_t >(1, n * 2 / 5);
    const RepBlock late = opt.late_block.value_or(RepBlock{n - late_count + 1, late_count});
    const auto ps = peak_shift(ts, early, late, opt.peak);
    if (ps.located)
        rep.peak_shift = ps.shift;
    rep.peak_shift_flagged = ps.flagged;
    for (const auto& w : ps.warnings)
        rep.warnings.push_back("peak shift: " + w);
    return rep;
}

} // namespace rydfiber
#endif // RYDFIBER_TRACE_ANALYSIS_HPP
