#ifndef RYDFIBER_PIPELINE_HPP
#define RYDFIBER_PIPELINE_HPP

#include "rydfiber/conveyor.hpp"
#include "rydfiber/fit.hpp"
#include "rydfiber/io.hpp"
#include "rydfiber/sequence_sim.hpp"
#include "rydfiber/stark.hpp"
#include "rydfiber/trace_analysis.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rydfiber
{
namespace fs = std::filesystem;
using io::json;

/// Fit did not converge; maps to its own exit code.
class ConvergenceError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

enum ExitCode : int
{
    exit_ok = 0,
    exit_validation = 1,
    exit_convergence = 2,
    exit_io = 3,
};

struct AnalysisOptions
{
    std::size_t window = 20;     // moving average, repetitions
    std::size_t block = 20;      // repetitions per averaged point
    std::size_t fit_start = 201; // 1-based first repetition of the averaged spectrum
    std::optional< double > cut_detuning; // rad/s; default: the EIT peak
    std::optional< double > breakpoint;   // s; searched when absent
};

struct OutputOptions
{
    std::string dir = "out";
    std::string prefix = "trace";
    bool gnuplot = false;
};

struct RunConfig
{
    std::string preset = "inside";
    SequenceConfig sequence;
    EitParams eit;
    LossModel loss;
    AnalysisOptions analysis;
    OutputOptions output;

    std::vector< std::string > violations() const
    {
        std::vector< std::string > bad;
        for (const auto& f : eit.violations())
            if (f != "od")
                bad.push_back("eit." + f);
        for (auto&& v : {sequence.violations(), loss.violations()})
            bad.insert(bad.end(), v.begin(), v.end());
        if (analysis.window < 1 || analysis.window > sequence.n_reps)
            bad.emplace_back("analysis.window");
        if (analysis.block < 1 || analysis.block > sequence.n_reps)
            bad.emplace_back("analysis.block");
        if (analysis.fit_start < 1 || analysis.fit_start + analysis.block - 1 > sequence.n_reps)
            bad.emplace_back("analysis.fit_start");
        if (analysis.cut_detuning && !std::isfinite(*analysis.cut_detuning))
            bad.emplace_back("analysis.cut_MHz");
        if (analysis.breakpoint && !(*analysis.breakpoint > 0.0))
            bad.emplace_back("analysis.breakpoint_ms");
        if (output.prefix.empty() || output.prefix.find('/') != std::string::npos)
            bad.emplace_back("output.prefix");
        return bad;
    }

    void validate() const
    {
        if (auto bad = violations(); !bad.empty())
            throw ValidationError{std::move(bad)};
    }

    double cut() const { return analysis.cut_detuning.value_or(eit_peak_position(eit)); }
};

// ---------------------------------------------------------------------------
// Presets for the two measurement positions. Inside the fiber the Rydberg level is
// broadened and shifted and the loss-dominated regime starts earlier.

inline RunConfig preset(std::string_view name)
{
    RunConfig c;
    c.sequence.mode = PulseMode::two_pulse;
    c.sequence.detection_efficiency = 0.1;
    c.sequence.detuning_grid = uniform_grid_mhz(-20.0, 20.0, 41);
    c.sequence.threads = 0;
    c.eit.delta_c = 0.0;
    const double g29 = RydbergConstants{}.gamma_29s;
    if (name == "inside")
    {
        c.preset = "inside";
        c.eit.omega_c = from_mhz(9.5);
        c.eit.gamma_ryd = from_mhz(2.6) + g29;
        c.eit.offset = from_mhz(2.2);
        c.loss.od0 = 19.0;
        c.loss.tau1 = 2.0e-3;
        c.loss.tau2 = 4.85e-3;
        c.loss.t_break = 3.0e-3;
    }
    else if (name == "outside")
    {
        c.preset = "outside";
        c.eit.omega_c = from_mhz(9.9);
        c.eit.gamma_ryd = from_mhz(0.9) + g29;
        c.eit.offset = 0.0;
        c.loss.od0 = 32.0;
        c.loss.tau1 = 3.0e-3;
        c.loss.tau2 = 5.17e-3;
        c.loss.t_break = 6.0e-3;
    }
    else
        throw ValidationError{{"preset: unknown '" + std::string{name} + "' (inside|outside)"}};
    c.eit.od = c.loss.od0;
    return c;
}

inline json to_json(const RunConfig& c)
{
    json a{{"window", c.analysis.window},
           {"block", c.analysis.block},
           {"fit_start", c.analysis.fit_start},
           {"cut_MHz", io::optional_mhz(c.analysis.cut_detuning)},
           {"breakpoint_ms", c.analysis.breakpoint ? json(*c.analysis.breakpoint * 1e3) : json(nullptr)}};
    json o{{"dir", c.output.dir}, {"prefix", c.output.prefix}, {"gnuplot", c.output.gnuplot}};
    return json{{"format_version", io::format_version},
                {"preset", c.preset},
                {"sequence", io::to_json(c.sequence)},
                {"eit", io::to_json(c.eit)},
                {"loss", io::to_json(c.loss)},
                {"analysis", a},
                {"output", o}};
}

/// Build a configuration from JSON: start from the named preset (default "inside") and
/// override whatever the document specifies. Unknown keys and bad values are collected and
/// reported together.
inline RunConfig parse_config(const json& j)
{
    std::vector< std::string > errors;
    io::ObjectReader root{j, "", errors};
    int version = io::format_version;
    root.get("format_version", version);
    if (version != io::format_version)
        errors.push_back("format_version: unsupported " + std::to_string(version));
    std::string name = "inside";
    root.get("preset", name);
    RunConfig c;
    try
    {
        c = preset(name);
    }
    catch (const ValidationError& e)
    {
        errors.insert(errors.end(), e.fields().begin(), e.fields().end());
    }
    if (const json* s = root.child("sequence"))
    {
        io::ObjectReader r{*s, "sequence", errors};
        io::read(r, c.sequence, errors);
        r.finish();
    }
    if (const json* e = root.child("eit"))
    {
        io::ObjectReader r{*e, "eit", errors};
        io::read(r, c.eit);
        r.finish();
    }
    if (const json* l = root.child("loss"))
    {
        io::ObjectReader r{*l, "loss", errors};
        io::read(r, c.loss);
        r.finish();
    }
    if (const json* a = root.child("analysis"))
    {
        io::ObjectReader r{*a, "analysis", errors};
        r.get("window", c.analysis.window);
        r.get("block", c.analysis.block);
        r.get("fit_start", c.analysis.fit_start);
        if (r.has("cut_MHz") && !a->at("cut_MHz").is_null())
        {
            double v = 0.0;
            r.get("cut_MHz", v);
            c.analysis.cut_detuning = from_mhz(v);
        }
        else
            r.child("cut_MHz");
        if (r.has("breakpoint_ms") && !a->at("breakpoint_ms").is_null())
        {
            double v = 0.0;
            r.get("breakpoint_ms", v);
            c.analysis.breakpoint = v * 1e-3;
        }
        else
            r.child("breakpoint_ms");
        r.finish();
    }
    if (const json* o = root.child("output"))
    {
        io::ObjectReader r{*o, "output", errors};
        r.get("dir", c.output.dir);
        r.get("prefix", c.output.prefix);
        r.get("gnuplot", c.output.gnuplot);
        r.finish();
    }
    root.finish();
    if (errors.empty())
        for (auto& v : c.violations())
            errors.push_back(std::move(v));
    if (!errors.empty())
        throw ValidationError{std::move(errors)};
    c.eit.od = c.loss.od0;
    return c;
}

inline RunConfig load_config(const fs::path& path)
{
    json j;
    try
    {
        j = json::parse(io::read_file(path));
    }
    catch (const json::parse_error& e)
    {
        throw ValidationError{{"config: " + std::string{e.what()}}};
    }
    return parse_config(j);
}

// ---------------------------------------------------------------------------
// Commands

inline TraceSet run_simulation(const RunConfig& c)
{
    c.validate();
    return simulate(c.eit, c.sequence, c.loss);
}

/// Simulate and write <dir>/<prefix>.csv plus its JSON sidecar. Returns the CSV path.
inline fs::path cmd_simulate(const RunConfig& c)
{
    const TraceSet ts = run_simulation(c);
    const fs::path csv = fs::path{c.output.dir} / (c.output.prefix + ".csv");
    io::write_trace(ts, csv);
    return csv;
}

enum class FitKind
{
    od,
    eit,
    decay
};

struct FitRequest
{
    FitKind kind = FitKind::eit;
    fs::path data;
    Slot slot = Slot::eit;
    std::size_t start = 201; // spectrum fits: averaged block of trace data
    std::size_t count = 20;
    std::optional< double > cut;        // decay fits on trace data; default the EIT peak
    std::optional< double > breakpoint; // s
};

struct FitOutput
{
    json result;
    bool converged = true;
    std::vector< std::string > warnings;
};

inline bool is_trace_file(const fs::path& p)
{
    const std::string text = io::read_file(p);
    return text.rfind(io::trace_header, 0) == 0;
}

/// Fit a spectrum (od|eit) or a decay (decay) from a trace CSV, or a decay from a cut CSV.
inline FitOutput cmd_fit(const FitRequest& req)
{
    FitOutput out;
    const std::string text = io::read_file(req.data);
    if (text.empty())
        throw ValidationError{{"data: file is empty"}};
    const bool trace = text.rfind(io::trace_header, 0) == 0;

    if (req.kind == FitKind::decay)
    {
        std::vector< DecayPoint > series;
        if (trace)
        {
            const TraceSet ts = io::read_trace(req.data, &out.warnings);
            if (req.slot == Slot::od && !ts.has_od_slot())
                throw ValidationError{{"slot: trace has no OD slot"}};
            const std::size_t det = ts.nearest_detuning(req.cut.value_or(eit_peak_position(ts.params)));
            series = absorbance_series(cut_series(ts, det, req.slot));
        }
        else
        {
            try
            {
                series = io::parse_cut_csv(text, req.slot);
            }
            catch (const std::invalid_argument& e)
            {
                throw ValidationError{{std::string{"data: "} + e.what()}};
            }
        }
        DecayOptions opt;
        opt.breakpoint = req.breakpoint;
        const DecayFit f = fit_two_segment_decay(series, opt);
        out.result = io::to_json(f);
        out.converged = f.early.has_value() || f.late.has_value();
        return out;
    }

    Spectrum spec;
    if (trace)
    {
        const TraceSet ts = io::read_trace(req.data, &out.warnings);
        if (req.slot == Slot::od && !ts.has_od_slot())
            throw ValidationError{{"slot: trace has no OD slot"}};
        if (req.start < 1 || req.count < 1 || req.start + req.count - 1 > ts.n_reps)
            throw ValidationError{{"start/count: outside the recorded repetitions"}};
        spec = block_average(ts, req.slot, req.start, req.count);
    }
    else
        throw ValidationError{{"data: expected a trace CSV for spectrum fits"}};
    const FitResult f = req.kind == FitKind::od ? fit_od(spec) : fit_eit(spec);
    out.result = io::to_json(f);
    out.converged = f.converged;
    return out;
}

// ---------------------------------------------------------------------------
// Figure reproduction

struct SummaryRow
{
    std::string quantity;
    std::string unit;
    double value = 0.0;
    std::optional< double > stderr_value;
    double reference = 0.0;
    double tolerance = 0.0;
    std::string source; // "published" or "injected"

    bool pass() const { return std::isfinite(value) && std::abs(value - reference) <= tolerance; }
};

struct Summary
{
    std::string figure;
    std::vector< SummaryRow > rows;
    std::vector< fs::path > files;
    std::vector< std::string > warnings;

    bool all_pass() const
    {
        return std::all_of(rows.begin(), rows.end(), [](const SummaryRow& r) { return r.pass(); });
    }
};

inline json to_json(const Summary& s)
{
    json rows = json::array();
    for (const auto& r : s.rows)
        rows.push_back({{"quantity", r.quantity},
                        {"unit", r.unit},
                        {"value", std::isfinite(r.value) ? json(r.value) : json(nullptr)},
                        {"stderr", io::optional_num(r.stderr_value)},
                        {"reference", r.reference},
                        {"tolerance", r.tolerance},
                        {"source", r.source},
                        {"pass", r.pass()}});
    json files = json::array();
    for (const auto& f : s.files)
        files.push_back(f.filename().string());
    return json{{"format_version", io::format_version},
                {"figure", s.figure},
                {"all_pass", s.all_pass()},
                {"rows", rows},
                {"files", files},
                {"warnings", s.warnings}};
}

inline std::string summary_table(const Summary& s)
{
    std::string out = "quantity,unit,value,stderr,reference,tolerance,source,pass\n";
    for (const auto& r : s.rows)
    {
        out += r.quantity + "," + r.unit + ",";
        io::append_number(out, r.value);
        out += ",";
        if (r.stderr_value)
            io::append_number(out, *r.stderr_value);
        out += ",";
        io::append_number(out, r.reference);
        out += ",";
        io::append_number(out, r.tolerance);
        out += "," + r.source + (r.pass() ? ",1\n" : ",0\n");
    }
    return out;
}

/// Run `f`, tagging any failure with the pipeline stage it came from.
template < typename F >
auto stage(std::string_view name, F&& f) -> decltype(f())
{
    const std::string tag = std::string{name} + ": ";
    try
    {
        return f();
    }
    catch (const ValidationError& e)
    {
        std::vector< std::string > fields;
        for (const auto& x : e.fields())
            fields.push_back(tag + x);
        throw ValidationError{std::move(fields)};
    }
    catch (const io::IoError& e)
    {
        throw io::IoError{tag + e.what()};
    }
    catch (const ConvergenceError& e)
    {
        throw ConvergenceError{tag + e.what()};
    }
    catch (const std::exception& e)
    {
        throw std::runtime_error{tag + e.what()};
    }
}

struct ReproduceOptions
{
    std::uint64_t seed = 1;
    fs::path out_dir = "out";
    std::size_t window = 20;
    std::optional< double > breakpoint; // s, fig4 only
    bool gnuplot = false;
    unsigned threads = 0;
};

namespace detail
{
inline RunConfig figure_config(std::string_view name, const ReproduceOptions& o)
{
    RunConfig c = preset(name);
    c.sequence.rng_seed = o.seed;
    c.sequence.threads = o.threads;
    c.analysis.window = o.window;
    c.analysis.breakpoint = o.breakpoint;
    c.output.dir = o.out_dir.string();
    c.output.gnuplot = o.gnuplot;
    return c;
}

inline void write_map(Summary& s, const fs::path& dir, const std::string& stem, const TimeMap& m, bool gnuplot)
{
    const fs::path csv = dir / (stem + ".csv");
    io::write_atomic(csv, io::time_map_csv(m));
    s.files.push_back(csv);
    if (gnuplot)
    {
        const fs::path dat = dir / (stem + ".dat");
        io::write_atomic(dat, io::time_map_gnuplot(m));
        s.files.push_back(dat);
    }
}

inline void write_json(Summary& s, const fs::path& path, const json& j)
{
    io::write_atomic(path, j.dump(1) + "\n");
    s.files.push_back(path);
}

inline FitResult checked(FitResult f, std::string_view what)
{
    if (!f.converged)
        throw ConvergenceError{std::string{what} + " did not converge"};
    return f;
}

inline std::optional< double > mhz(const std::optional< double >& v)
{
    return v ? std::optional< double >{to_mhz(*v)} : std::nullopt;
}

// Spectra averaged over a block of repetitions, fitted with the full EIT model.
inline Summary fig2c(const ReproduceOptions& o)
{
    Summary s;
    s.figure = "fig2c";
    std::array< FitResult, 2 > fits;
    const std::array< const char*, 2 > names{"inside", "outside"};
    for (std::size_t k = 0; k < 2; ++k)
    {
        const RunConfig c = figure_config(names[k], o);
        const TraceSet ts = stage("simulate", [&] { return run_simulation(c); });
        const Spectrum spec = stage("average", [&] {
            return block_average(ts, Slot::eit, c.analysis.fit_start, c.analysis.block);
        });
        fits[k] = stage("fit", [&] { return checked(fit_eit(spec), std::string{"EIT fit "} + names[k]); });
        std::string csv = "detuning_MHz,transmission,sem,fit\n";
        for (const auto& p : spec.points)
        {
            io::append_number(csv, to_mhz(p.detuning));
            csv += ",";
            io::append_number(csv, p.transmission);
            csv += ",";
            io::append_number(csv, p.sigma.value_or(0.0));
            csv += ",";
            io::append_number(csv, transmission_eit(p.detuning, fits[k].params));
            csv += "\n";
        }
        stage("write", [&] {
            const fs::path path = o.out_dir / (std::string{"fig2c_"} + names[k] + ".csv");
            io::write_atomic(path, csv);
            s.files.push_back(path);
            write_json(s, o.out_dir / (std::string{"fig2c_"} + names[k] + "_fit.json"), io::to_json(fits[k]));
            return 0;
        });
        for (const auto& w : fits[k].warnings)
            s.warnings.push_back(std::string{names[k]} + ": " + w);
    }
    const auto& in = fits[0];
    const auto& out = fits[1];
    s.rows.push_back({"omega_c inside", "MHz", to_mhz(in.params.omega_c), mhz(in.uncertainty.omega_c), 9.5, 0.6,
                      "published"});
    s.rows.push_back({"omega_c outside", "MHz", to_mhz(out.params.omega_c), mhz(out.uncertainty.omega_c), 9.9, 0.8,
                      "published"});
    s.rows.push_back({"gamma_ryd excess inside", "MHz", to_mhz(in.dephasing_excess), mhz(in.dephasing_excess_stderr),
                      2.6, 0.75, "published"});
    s.rows.push_back({"gamma_ryd excess outside", "MHz", to_mhz(out.dephasing_excess),
                      mhz(out.dephasing_excess_stderr), 0.9, 0.4, "published"});
    // Relative shift of the two-photon resonance between the two positions.
    const double shift = to_mhz(eit_peak_position(in.params) - eit_peak_position(out.params));
    std::optional< double > shift_err;
    if (in.uncertainty.offset && out.uncertainty.offset)
        shift_err = std::hypot(to_mhz(*in.uncertainty.offset), to_mhz(*out.uncertainty.offset));
    s.rows.push_back({"resonance shift inside-outside", "MHz", shift, shift_err, 2.2, 1.0, "published"});
    s.rows.push_back({"electric field", "V/cm", stark::field_from_shift(std::abs(shift)), std::nullopt, 2.0, 1.3,
                      "published"});
    return s;
}

// Time-resolved EIT spectra, single probe pulse per repetition.
inline Summary fig2d(const ReproduceOptions& o)
{
    Summary s;
    s.figure = "fig2d";
    struct Anchor
    {
        const char* name;
        double od_start, od_end;
    };
    for (const Anchor a : {Anchor{"inside", 19.0, 1.0}, Anchor{"outside", 32.0, 2.0}})
    {
        RunConfig c = figure_config(a.name, o);
        c.sequence.mode = PulseMode::single_pulse;
        const TraceSet ts = stage("simulate", [&] { return run_simulation(c); });
        const TimeMap m = stage("analyze", [&] { return slot_map(ts, Slot::eit, c.analysis.window); });
        stage("write", [&] {
            write_map(s, o.out_dir, std::string{"fig2d_"} + a.name, m, c.output.gnuplot);
            return 0;
        });
        const std::size_t b = c.analysis.block;
        const FitResult first = stage("fit", [&] {
            return checked(fit_eit(block_average(ts, Slot::eit, 1, b)), "first-block fit");
        });
        const FitResult last = stage("fit", [&] {
            // No coherent window is left at the end; a bare line fitted around the loss hole.
            return checked(fit_od_robust(block_average(ts, Slot::eit, ts.n_reps - b + 1, b)), "last-block fit");
        });
        // Rounded published values. The end value is pulled down by the tails of the
        // loss hole, hence the wider band.
        s.rows.push_back({std::string{"od start "} + a.name, "", first.params.od, first.uncertainty.od, a.od_start,
                          0.25 * a.od_start, "published"});
        s.rows.push_back({std::string{"od end "} + a.name, "", last.params.od, last.uncertainty.od, a.od_end,
                          0.5 * a.od_end, "published"});
    }
    return s;
}

// EIT minus OD pulse over the sequence, two pulses per repetition.
inline Summary fig3c(const ReproduceOptions& o)
{
    Summary s;
    s.figure = "fig3c";
    struct Anchor
    {
        const char* name;
        double vanish;
    };
    for (const Anchor a : {Anchor{"inside", 300.0}, Anchor{"outside", 600.0}})
    {
        const RunConfig c = figure_config(a.name, o);
        const TraceSet ts = stage("simulate", [&] { return run_simulation(c); });
        const TimeMap m = stage("analyze", [&] { return diff_map(ts, c.analysis.window); });
        RegimeOptions ro;
        ro.block = c.analysis.block;
        ro.window = c.analysis.window;
        const RegimeReport r = stage("analyze", [&] { return detect_regimes(ts, c.cut(), ro); });
        stage("write", [&] {
            write_map(s, o.out_dir, std::string{"fig3c_"} + a.name, m, c.output.gnuplot);
            write_json(s, o.out_dir / (std::string{"fig3c_"} + a.name + "_regimes.json"), io::to_json(r));
            return 0;
        });
        s.rows.push_back({std::string{"eit ridge vanishes "} + a.name, "rep",
                          r.equality_rep ? static_cast< double >(*r.equality_rep) : NAN, std::nullopt, a.vanish,
                          50.0, "published"});
        if (std::string_view{a.name} == "inside")
            s.rows.push_back({"loss peak shift inside", "MHz", r.peak_shift ? to_mhz(*r.peak_shift) : NAN,
                              std::nullopt, 2.5, 0.5, "published"});
        for (const auto& w : r.warnings)
            s.warnings.push_back(std::string{a.name} + ": " + w);
    }
    return s;
}

// Decay of the absorbance at the EIT peak, split into two regimes.
inline Summary fig4(const ReproduceOptions& o)
{
    Summary s;
    s.figure = "fig4";
    for (const char* name : {"inside", "outside"})
    {
        const RunConfig c = figure_config(name, o);
        const TraceSet ts = stage("simulate", [&] { return run_simulation(c); });
        RegimeOptions ro;
        ro.block = c.analysis.block;
        ro.window = c.analysis.window;
        ro.breakpoint = c.analysis.breakpoint;
        const RegimeReport r = stage("analyze", [&] { return detect_regimes(ts, c.cut(), ro); });
        const auto eit = cut_series(ts, r.cut_index, Slot::eit, {.block = ro.block});
        const auto od = cut_series(ts, r.cut_index, Slot::od, {.block = ro.block});
        stage("write", [&] {
            const fs::path path = o.out_dir / (std::string{"fig4_"} + name + "_cut.csv");
            io::write_atomic(path, io::cut_csv(eit, od));
            s.files.push_back(path);
            write_json(s, o.out_dir / (std::string{"fig4_"} + name + "_regimes.json"), io::to_json(r));
            return 0;
        });
        const std::string n{name};
        const double t_break = c.loss.t_break * 1e3;
        s.rows.push_back({"breakpoint " + n, "ms", r.breakpoint_time ? *r.breakpoint_time * 1e3 : NAN, std::nullopt,
                          t_break, 0.2, n == "inside" ? "published" : "injected"});
        const auto tau_row = [&](const std::optional< SegmentFit >& seg, const std::string& label, int regime) {
            const double truth = 1e3 / ln_signal_decay_rate(ts, ts.detunings[r.cut_index], regime);
            const double tau = seg ? seg->tau() * 1e3 : NAN;
            const auto err = seg ? seg->tau_stderr() : std::nullopt;
            s.rows.push_back({label + " " + n, "ms", tau,
                              err ? std::optional< double >{*err * 1e3} : std::nullopt, truth, 0.1 * truth,
                              "injected"});
        };
        if (r.breakpoint_found)
        {
            tau_row(r.eit.early, "eit tau1", 1);
            tau_row(r.eit.late, "eit tau2", 2);
            tau_row(r.od.late, "od tau2", 2);
        }
        for (const auto& w : r.warnings)
            s.warnings.push_back(n + ": " + w);
    }
    return s;
}
} // namespace detail

inline const std::array< std::string_view, 4 > figures{"fig2c", "fig2d", "fig3c", "fig4"};

/// Run the simulate -> analyze -> fit pipeline for one figure and write its data files,
/// summary.json and summary.csv into the output directory.
inline Summary cmd_reproduce(std::string_view figure, const ReproduceOptions& o)
{
    Summary s;
    if (figure == "fig2c")
        s = detail::fig2c(o);
    else if (figure == "fig2d")
        s = detail::fig2d(o);
    else if (figure == "fig3c")
        s = detail::fig3c(o);
    else if (figure == "fig4")
        s = detail::fig4(o);
    else
        throw ValidationError{{"figure: unknown '" + std::string{figure} + "' (fig2c|fig2d|fig3c|fig4)"}};
    stage("write", [&] {
        const fs::path stem = o.out_dir / (std::string{figure} + "_summary");
        io::write_atomic(fs::path{stem} += ".json", to_json(s).dump(1) + "\n");
        io::write_atomic(fs::path{stem} += ".csv", summary_table(s));
        s.files.push_back(fs::path{stem} += ".json");
        s.files.push_back(fs::path{stem} += ".csv");
        return 0;
    });
    return s;
}

// ---------------------------------------------------------------------------
// Transport table: time, lattice detuning, velocity, position.

inline std::string transport_table(const ConveyorRamp& ramp, std::size_t steps)
{
    std::string out = "t_s,detuning_Hz,velocity_m_per_s,position_m\n";
    const double t0 = ramp.knots().front().t;
    const double dt = ramp.duration() / static_cast< double >(std::max< std::size_t >(steps, 2) - 1);
    for (std::size_t i = 0; i < std::max< std::size_t >(steps, 2); ++i)
    {
        const double t = t0 + dt * static_cast< double >(i);
        for (double v : {t, ramp.detuning_at(t), ramp.velocity_at(t), ramp.position_at(t)})
        {
            io::append_number(out, v);
            out += ",";
        }
        out.back() = '\n';
    }
    return out;
}

} // namespace rydfiber
#endif // RYDFIBER_PIPELINE_HPP
