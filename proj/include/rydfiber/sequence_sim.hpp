#ifndef RYDFIBER_SEQUENCE_SIM_HPP
#define RYDFIBER_SEQUENCE_SIM_HPP

#include "rydfiber/spectro_model.hpp"
#include "rydfiber/units.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rydfiber
{
enum class PulseMode
{
    single_pulse, // EIT pulse only
    two_pulse     // EIT pulse followed directly by a control-off (OD) pulse
};

enum class Slot : std::size_t
{
    eit = 0,
    od = 1
};

/// Aggregates every field that failed validation.
class ValidationError : public std::invalid_argument
{
public:
    explicit ValidationError(std::vector< std::string > fields)
        : std::invalid_argument{join(fields)}, fields_{std::move(fields)}
    {}
    const std::vector< std::string >& fields() const noexcept { return fields_; }

private:
    static std::string join(const std::vector< std::string >& f)
    {
        std::string s = "validation failed:";
        for (const auto& x : f)
            s += " " + x;
        return s;
    }
    std::vector< std::string > fields_;
};

struct SequenceConfig
{
    std::size_t n_reps = 1000;
    double t_probe = 2e-6;
    // The OD pulse of the two-pulse protocol runs inside the hold window, so the
    // repetition period is t_probe + t_hold in both modes.
    double t_hold = 8e-6;
    PulseMode mode = PulseMode::single_pulse;
    double probe_power = 100e-12;
    double probe_rabi = from_mhz(0.3);
    double detection_efficiency = 0.1;
    bool noise = true;
    std::uint64_t rng_seed = 1;
    std::vector< double > detuning_grid; // rad/s, strictly increasing
    unsigned threads = 1;                // 0: one per hardware thread

    double period() const noexcept { return t_probe + t_hold; }
    std::size_t n_slots() const noexcept { return mode == PulseMode::two_pulse ? 2 : 1; }
    double rep_time(std::size_t rep_index) const noexcept { return static_cast< double >(rep_index) * period(); }

    std::vector< std::string > violations() const
    {
        std::vector< std::string > bad;
        if (n_reps < 1)
            bad.emplace_back("sequence.n_reps");
        if (!(t_probe > 0.0) || !std::isfinite(t_probe))
            bad.emplace_back("sequence.t_probe");
        if (!(t_hold > 0.0) || !std::isfinite(t_hold))
            bad.emplace_back("sequence.t_hold");
        else if (mode == PulseMode::two_pulse && t_hold < t_probe)
            bad.emplace_back("sequence.t_hold");
        if (!(probe_power > 0.0) || !std::isfinite(probe_power))
            bad.emplace_back("sequence.probe_power");
        if (!(probe_rabi >= 0.0) || !std::isfinite(probe_rabi))
            bad.emplace_back("sequence.probe_rabi");
        if (!(detection_efficiency > 0.0 && detection_efficiency <= 1.0))
            bad.emplace_back("sequence.detection_efficiency");
        bool grid_ok = !detuning_grid.empty();
        for (std::size_t i = 0; grid_ok && i < detuning_grid.size(); ++i)
            grid_ok = std::isfinite(detuning_grid[i]) && (i == 0 || detuning_grid[i] > detuning_grid[i - 1]);
        if (!grid_ok)
            bad.emplace_back("sequence.detuning_grid");
        return bad;
    }
};

/// Evenly spaced detuning grid given in MHz, returned in rad/s.
inline std::vector< double > uniform_grid_mhz(double lo, double hi, std::size_t n)
{
    if (n < 2 || !(hi > lo))
        throw std::invalid_argument("uniform_grid_mhz: need n >= 2 and hi > lo");
    std::vector< double > g(n);
    for (std::size_t i = 0; i < n; ++i)
        g[i] = from_mhz(lo + (hi - lo) * static_cast< double >(i) / static_cast< double >(n - 1));
    return g;
}

/// Phenomenological atom-loss model.
///
/// Atom number (expressed as OD) decays smoothly with time constant tau1 up to
/// t_break and tau2 afterwards. From t_break on the sequence is loss dominated:
/// every probe pulse removes a fraction loss_amp * L(d - center) of the atoms
/// in the run at detuning d (L a unit-peak Lorentzian of FWHM loss_width, centered
/// loss_shift from the two-photon resonance), multiplied by (1 + eit_loss_boost)
/// when the control beam is on, and only late_eit_coherence of the control
/// coupling (Omega_c^2) survives.
struct LossModel
{
    bool enabled = true;
    double od0 = 19.0;
    double tau1 = 2.0e-3;
    double tau2 = 4.85e-3;
    double t_break = 3.0e-3;
    double loss_shift = from_mhz(2.5);
    double loss_width = from_mhz(2.0);
    double loss_amp = 0.004;
    double eit_loss_boost = 1.0;
    double late_eit_coherence = 0.0;

    std::vector< std::string > violations() const
    {
        std::vector< std::string > bad;
        if (!(od0 > 0.0) || !std::isfinite(od0))
            bad.emplace_back("loss.od0");
        if (!(tau1 > 0.0) || std::isnan(tau1))
            bad.emplace_back("loss.tau1");
        if (!(tau2 > 0.0) || std::isnan(tau2))
            bad.emplace_back("loss.tau2");
        if (!(t_break >= 0.0) || std::isnan(t_break))
            bad.emplace_back("loss.t_break");
        if (!std::isfinite(loss_shift))
            bad.emplace_back("loss.loss_shift");
        if (!(loss_width > 0.0) || !std::isfinite(loss_width))
            bad.emplace_back("loss.loss_width");
        if (!(loss_amp >= 0.0 && loss_amp < 1.0))
            bad.emplace_back("loss.loss_amp");
        if (!(eit_loss_boost >= 0.0) || !std::isfinite(eit_loss_boost))
            bad.emplace_back("loss.eit_loss_boost");
        if (!(late_eit_coherence >= 0.0 && late_eit_coherence <= 1.0))
            bad.emplace_back("loss.late_eit_coherence");
        return bad;
    }

    /// Index of the first repetition in the loss-dominated regime. The small tolerance keeps
    /// a break placed exactly on a repetition start from slipping by one through rounding.
    std::size_t first_late_rep(double period) const noexcept
    {
        if (!enabled)
            return std::numeric_limits< std::size_t >::max();
        const double x = std::ceil(t_break / period - 1e-9);
        return x >= 1.8e19 ? std::numeric_limits< std::size_t >::max() : static_cast< std::size_t >(x);
    }

    /// Smooth-decay exponent: OD(t) = od0 * exp(-smooth_exponent(t)) away from the loss peak.
    double smooth_exponent(double t) const noexcept
    {
        if (!enabled)
            return 0.0;
        if (t < t_break)
            return t / tau1;
        return t_break / tau1 + (t - t_break) / tau2;
    }

    double spectral_profile(double detuning, const EitParams& p) const noexcept
    {
        const double x = (detuning - (eit_peak_position(p) + loss_shift)) / loss_width;
        return 1.0 / (1.0 + 4.0 * x * x);
    }

    /// Survival fraction of one probe pulse in the loss-dominated regime.
    double survival(double detuning, const EitParams& p, bool control_on) const noexcept
    {
        const double boost = control_on ? 1.0 + eit_loss_boost : 1.0;
        return std::max(0.0, 1.0 - loss_amp * boost * spectral_profile(detuning, p));
    }
};

/// Per-repetition transmission for every detuning run and pulse slot.
struct TraceSet
{
    std::vector< double > detunings; // rad/s
    std::size_t n_reps = 0;
    std::size_t n_slots = 1;
    std::vector< double > transmission; // measured, [detuning][rep][slot]
    std::vector< double > od_true;      // OD seen by each pulse, same layout
    SequenceConfig sequence;
    LossModel loss;
    EitParams params;

    std::size_t index(std::size_t det, std::size_t rep, Slot s) const noexcept
    {
        return (det * n_reps + rep) * n_slots + static_cast< std::size_t >(s);
    }
    double at(std::size_t det, std::size_t rep, Slot s) const noexcept { return transmission[index(det, rep, s)]; }
    double& at(std::size_t det, std::size_t rep, Slot s) noexcept { return transmission[index(det, rep, s)]; }
    double true_od(std::size_t det, std::size_t rep, Slot s) const noexcept { return od_true[index(det, rep, s)]; }
    bool has_od_slot() const noexcept { return n_slots == 2; }
    std::size_t n_detunings() const noexcept { return detunings.size(); }

    void resize(std::size_t n_det, std::size_t reps, std::size_t slots)
    {
        n_reps = reps;
        n_slots = slots;
        transmission.assign(n_det * reps * slots, 0.0);
        od_true.assign(n_det * reps * slots, 0.0);
    }

    std::size_t nearest_detuning(double d) const
    {
        const auto it = std::min_element(detunings.begin(), detunings.end(),
                                          [d](double a, double b) { return std::abs(a - d) < std::abs(b - d); });
        return static_cast< std::size_t >(std::distance(detunings.begin(), it));
    }
};

/// Mean number of probe photons reaching the detector for T = 1.
inline double photon_budget(const SequenceConfig& s)
{
    const double photon_energy = constants::planck * constants::speed_of_light / constants::probe_wavelength;
    return s.probe_power * s.t_probe / photon_energy * s.detection_efficiency;
}

/// PMT photon counting: Poisson(N T) / N. Returns the input untouched when noise is off.
template < typename Rng >
double detect(double true_transmission, const SequenceConfig& s, Rng& rng)
{
    if (!s.noise)
        return true_transmission;
    const double n = photon_budget(s);
    const double mean = n * true_transmission;
    if (!(mean > 0.0))
        return 0.0;
    std::poisson_distribution< long long > counts{mean};
    return static_cast< double >(counts(rng)) / n;
}

/// Weak-probe validity of the steady-state lineshape: Omega_p < gamma / 5.
inline bool weak_probe_check(const EitParams& p, const SequenceConfig& s) { return s.probe_rabi < p.gamma / 5.0; }

/// Independent RNG stream per detuning run; parallel and serial runs draw identical numbers.
inline std::mt19937_64 run_rng(std::uint64_t seed, std::size_t run)
{
    std::seed_seq seq{static_cast< std::uint32_t >(seed), static_cast< std::uint32_t >(seed >> 32),
                      static_cast< std::uint32_t >(run), static_cast< std::uint32_t >(std::uint64_t{run} >> 32)};
    return std::mt19937_64{seq};
}

/// Ground-truth decay rate (1/s) of the absorbance -ln T at `detuning` in regime 1 or 2.
/// In regime 2 the spectrally selective loss adds to the smooth decay.
inline double ln_signal_decay_rate(const TraceSet& ts, double detuning, int regime)
{
    const auto& l = ts.loss;
    if (!l.enabled)
        return 0.0;
    if (regime == 1)
        return 1.0 / l.tau1;
    double per_rep = -std::log(l.survival(detuning, ts.params, true));
    if (ts.has_od_slot())
        per_rep -= std::log(l.survival(detuning, ts.params, false));
    return 1.0 / l.tau2 + per_rep / ts.sequence.period();
}

namespace detail
{
inline void simulate_run(TraceSet& ts, std::size_t det)
{
    const auto& s = ts.sequence;
    const auto& l = ts.loss;
    const auto& p = ts.params;
    const double d = ts.detunings[det];
    auto rng = run_rng(s.rng_seed, det);
    const std::size_t first_late = l.first_late_rep(s.period());
    const double m_on = l.survival(d, p, true);
    const double m_off = l.survival(d, p, false);
    double spectral = 1.0;

    for (std::size_t r = 0; r < ts.n_reps; ++r)
    {
        const double t = s.rep_time(r);
        const bool late = r >= first_late;
        const double smooth = l.od0 * std::exp(-l.smooth_exponent(t));

        EitParams pulse = p;
        pulse.od = smooth * spectral;
        if (late)
            pulse.omega_c *= std::sqrt(l.late_eit_coherence);
        ts.od_true[ts.index(det, r, Slot::eit)] = pulse.od;
        ts.at(det, r, Slot::eit) = detect(transmission_eit(d, pulse), s, rng);
        if (late)
            spectral *= m_on;

        if (ts.has_od_slot())
        {
            const double od = smooth * spectral;
            ts.od_true[ts.index(det, r, Slot::od)] = od;
            ts.at(det, r, Slot::od) = detect(transmission_od(d - p.offset, od, p.gamma), s, rng);
            if (late)
                spectral *= m_off;
        }
    }
}
} // namespace detail

/// Forward simulation of the pulsed measurement. Each detuning is an independent run
/// (fixed probe frequency per run). `p.od` is ignored; the initial OD is `l.od0`.
inline TraceSet simulate(const EitParams& p, const SequenceConfig& s, const LossModel& l)
{
    std::vector< std::string > bad;
    for (const auto& f : p.violations())
        if (f != "od") // overridden by l.od0
            bad.push_back("eit." + f);
    for (auto&& v : {s.violations(), l.violations()})
        bad.insert(bad.end(), v.begin(), v.end());
    if (!bad.empty())
        throw ValidationError{std::move(bad)};

    TraceSet ts;
    ts.detunings = s.detuning_grid;
    ts.sequence = s;
    ts.loss = l;
    ts.params = p;
    ts.params.od = l.od0;
    ts.resize(s.detuning_grid.size(), s.n_reps, s.n_slots());

    const std::size_t n_det = ts.detunings.size();
    unsigned workers = s.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : s.threads;
    workers = static_cast< unsigned >(std::min< std::size_t >(workers, n_det));
    if (workers <= 1)
    {
        for (std::size_t det = 0; det < n_det; ++det)
            detail::simulate_run(ts, det);
        return ts;
    }
    std::atomic< std::size_t > next{0};
    {
        std::vector< std::jthread > pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t det = next++; det < n_det; det = next++)
                    detail::simulate_run(ts, det);
            });
    }
    return ts;
}

} // namespace rydfiber
#endif // RYDFIBER_SEQUENCE_SIM_HPP
