#ifndef RYDFIBER_IO_HPP
#define RYDFIBER_IO_HPP

#include "rydfiber/fit.hpp"
#include "rydfiber/sequence_sim.hpp"
#include "rydfiber/trace_analysis.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace rydfiber::io
{
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline constexpr int format_version = 1;
inline constexpr std::string_view trace_header = "detuning_MHz,repetition,slot,transmission";

class IoError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Number formatting: shortest representation that parses back to the same double,
// independent of the C locale.

inline void append_number(std::string& out, double v)
{
    char buf[64];
    // Plain notation for everyday magnitudes (500000 rather than 5e+05).
    const double a = std::abs(v);
    const bool plain = a == 0.0 || (a >= 1e-5 && a < 1e16);
    const auto res = plain ? std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed)
                           : std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

inline std::string format_number(double v)
{
    std::string s;
    append_number(s, v);
    return s;
}

inline double parse_number(std::string_view s)
{
    double v = 0.0;
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t'))
        s.remove_suffix(1);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw std::invalid_argument("not a number: '" + std::string{s} + "'");
    return v;
}

inline std::vector< std::string_view > split(std::string_view line, char sep = ',')
{
    std::vector< std::string_view > f;
    std::size_t pos = 0;
    while (true)
    {
        const auto next = line.find(sep, pos);
        f.push_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
        if (next == std::string_view::npos)
            break;
        pos = next + 1;
    }
    return f;
}

/// Write through a temporary file in the same directory, then rename over the target.
inline void write_atomic(const fs::path& path, std::string_view content)
{
    std::error_code ec;
    if (path.has_parent_path())
    {
        fs::create_directories(path.parent_path(), ec);
        if (ec)
            throw IoError{"cannot create directory " + path.parent_path().string() + ": " + ec.message()};
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError{"cannot open " + tmp.string() + " for writing"};
        out.write(content.data(), static_cast< std::streamsize >(content.size()));
        if (!out)
            throw IoError{"write failed: " + tmp.string()};
    }
    fs::rename(tmp, path, ec);
    if (ec)
        throw IoError{"cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message()};
}

inline std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError{"cannot open " + path.string()};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Strict JSON object reader: remembers which keys were consumed so leftovers can be
// reported as unknown.

class ObjectReader
{
public:
    ObjectReader(const json& obj, std::string path, std::vector< std::string >& errors)
        : obj_{obj}, path_{std::move(path)}, errors_{errors}
    {
        if (!obj_.is_object())
            errors_.push_back(path_ + ": expected an object");
    }

    // Holds a reference; a temporary would dangle.
    ObjectReader(json&&, std::string, std::vector< std::string >&) = delete;
    ~ObjectReader() = default;
    ObjectReader(const ObjectReader&) = delete;
    ObjectReader& operator=(const ObjectReader&) = delete;

    bool has(const std::string& key) const { return obj_.is_object() && obj_.contains(key); }

    template < typename T >
    void get(const std::string& key, T& target)
    {
        if (!has(key))
            return;
        seen_.insert(key);
        try
        {
            target = obj_.at(key).get< T >();
        }
        catch (const std::exception&)
        {
            errors_.push_back(name(key) + ": wrong type");
        }
    }

    /// Frequency given in MHz, stored as rad/s.
    void get_mhz(const std::string& key, double& target)
    {
        double v = to_mhz(target);
        get(key, v);
        target = from_mhz(v);
    }

    /// Time constant that may be null for "no decay".
    void get_time_or_inf(const std::string& key, double& target)
    {
        if (has(key) && obj_.at(key).is_null())
        {
            seen_.insert(key);
            target = std::numeric_limits< double >::infinity();
            return;
        }
        get(key, target);
    }

    const json* child(const std::string& key)
    {
        if (!has(key))
            return nullptr;
        seen_.insert(key);
        return &obj_.at(key);
    }

    std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish()
    {
        if (!obj_.is_object())
            return;
        for (const auto& [k, v] : obj_.items())
            if (!seen_.contains(k))
                errors_.push_back(name(k) + ": unknown key");
    }

private:
    const json& obj_;
    std::string path_;
    std::vector< std::string >& errors_;
    std::set< std::string > seen_;
};

// ---------------------------------------------------------------------------
// Domain types <-> JSON. Frequencies in MHz, times in seconds.

inline json time_or_null(double t) { return std::isfinite(t) ? json(t) : json(nullptr); }

inline json to_json(const EitParams& p)
{
    return json{{"od", p.od},
                {"gamma_MHz", to_mhz(p.gamma)},
                {"omega_c_MHz", to_mhz(p.omega_c)},
                {"delta_c_MHz", to_mhz(p.delta_c)},
                {"gamma_ryd_MHz", to_mhz(p.gamma_ryd)},
                {"offset_MHz", to_mhz(p.offset)}};
}

inline void read(ObjectReader& r, EitParams& p)
{
    r.get("od", p.od);
    r.get_mhz("gamma_MHz", p.gamma);
    r.get_mhz("omega_c_MHz", p.omega_c);
    r.get_mhz("delta_c_MHz", p.delta_c);
    r.get_mhz("gamma_ryd_MHz", p.gamma_ryd);
    r.get_mhz("offset_MHz", p.offset);
}

inline std::string to_string(PulseMode m) { return m == PulseMode::two_pulse ? "two-pulse" : "single-pulse"; }

inline json to_json(const SequenceConfig& s)
{
    json grid = json::array();
    for (double d : s.detuning_grid)
        grid.push_back(to_mhz(d));
    return json{{"n_reps", s.n_reps},
                {"t_probe_s", s.t_probe},
                {"t_hold_s", s.t_hold},
                {"mode", to_string(s.mode)},
                {"probe_power_W", s.probe_power},
                {"probe_rabi_MHz", to_mhz(s.probe_rabi)},
                {"detection_efficiency", s.detection_efficiency},
                {"noise", s.noise},
                {"rng_seed", s.rng_seed},
                {"threads", s.threads},
                {"detuning_grid_MHz", grid}};
}

inline void read(ObjectReader& r, SequenceConfig& s, std::vector< std::string >& errors)
{
    r.get("n_reps", s.n_reps);
    r.get("t_probe_s", s.t_probe);
    r.get("t_hold_s", s.t_hold);
    std::string mode = to_string(s.mode);
    r.get("mode", mode);
    if (mode == "two-pulse")
        s.mode = PulseMode::two_pulse;
    else if (mode == "single-pulse")
        s.mode = PulseMode::single_pulse;
    else
        errors.push_back(r.name("mode") + ": expected single-pulse or two-pulse");
    r.get("probe_power_W", s.probe_power);
    r.get_mhz("probe_rabi_MHz", s.probe_rabi);
    r.get("detection_efficiency", s.detection_efficiency);
    r.get("noise", s.noise);
    r.get("rng_seed", s.rng_seed);
    r.get("threads", s.threads);
    if (const json* g = r.child("detuning_grid_MHz"))
    {
        if (g->is_array())
        {
            s.detuning_grid.clear();
            for (const auto& v : *g)
            {
                if (!v.is_number())
                {
                    errors.push_back(r.name("detuning_grid_MHz") + ": expected numbers");
                    break;
                }
                s.detuning_grid.push_back(from_mhz(v.get< double >()));
            }
        }
        else
        {
            // {"min": -20, "max": 20, "n": 41}
            ObjectReader gr{*g, r.name("detuning_grid_MHz"), errors};
            double lo = -20.0, hi = 20.0;
            std::size_t n = 41;
            gr.get("min", lo);
            gr.get("max", hi);
            gr.get("n", n);
            gr.finish();
            if (n >= 2 && hi > lo)
                s.detuning_grid = uniform_grid_mhz(lo, hi, n);
            else
                errors.push_back(r.name("detuning_grid_MHz") + ": need n >= 2 and max > min");
        }
    }
}

inline json to_json(const LossModel& l)
{
    return json{{"enabled", l.enabled},
                {"od0", l.od0},
                {"tau1_s", time_or_null(l.tau1)},
                {"tau2_s", time_or_null(l.tau2)},
                {"t_break_s", time_or_null(l.t_break)},
                {"loss_shift_MHz", to_mhz(l.loss_shift)},
                {"loss_width_MHz", to_mhz(l.loss_width)},
                {"loss_amp", l.loss_amp},
                {"eit_loss_boost", l.eit_loss_boost},
                {"late_eit_coherence", l.late_eit_coherence}};
}

inline void read(ObjectReader& r, LossModel& l)
{
    r.get("enabled", l.enabled);
    r.get("od0", l.od0);
    r.get_time_or_inf("tau1_s", l.tau1);
    r.get_time_or_inf("tau2_s", l.tau2);
    r.get_time_or_inf("t_break_s", l.t_break);
    r.get_mhz("loss_shift_MHz", l.loss_shift);
    r.get_mhz("loss_width_MHz", l.loss_width);
    r.get("loss_amp", l.loss_amp);
    r.get("eit_loss_boost", l.eit_loss_boost);
    r.get("late_eit_coherence", l.late_eit_coherence);
}

inline json optional_mhz(const std::optional< double >& v) { return v ? json(to_mhz(*v)) : json(nullptr); }
inline json optional_num(const std::optional< double >& v) { return v ? json(*v) : json(nullptr); }

inline json to_json(const FitResult& f)
{
    json errs{{"od", optional_num(f.uncertainty.od)},
              {"gamma_MHz", optional_mhz(f.uncertainty.gamma)},
              {"omega_c_MHz", optional_mhz(f.uncertainty.omega_c)},
              {"delta_c_MHz", optional_mhz(f.uncertainty.delta_c)},
              {"gamma_ryd_MHz", optional_mhz(f.uncertainty.gamma_ryd)},
              {"offset_MHz", optional_mhz(f.uncertainty.offset)}};
    return json{{"format_version", format_version},
                {"params", to_json(f.params)},
                {"stderr", errs},
                {"free", f.free},
                {"dephasing_excess_MHz", to_mhz(f.dephasing_excess)},
                {"dephasing_excess_stderr_MHz", optional_mhz(f.dephasing_excess_stderr)},
                {"rss", f.rss},
                {"n_points", f.n_points},
                {"converged", f.converged},
                {"n_iter", f.n_iter},
                {"degenerate", f.degenerate},
                {"eit_window", f.eit_window},
                {"warnings", f.warnings}};
}

inline json to_json(const std::optional< SegmentFit >& s)
{
    if (!s)
        return nullptr;
    const double tau = s->tau();
    return json{{"first_point", s->first},
                {"points", s->count},
                {"rate_per_s", s->rate},
                {"rate_stderr_per_s", optional_num(s->rate_stderr)},
                {"tau_s", time_or_null(tau)},
                {"tau_stderr_s", optional_num(s->tau_stderr())},
                {"ln_intercept", s->intercept},
                {"rss", s->rss}};
}

inline json to_json(const DecayFit& d)
{
    return json{{"format_version", format_version},
                {"breakpoint_s", optional_num(d.breakpoint)},
                {"break_index", d.break_index ? json(*d.break_index) : json(nullptr)},
                {"informative", d.informative},
                {"p_value", d.p_value},
                {"early", to_json(d.early)},
                {"late", to_json(d.late)},
                {"warnings", d.warnings}};
}

inline json to_json(const RegimeReport& r)
{
    return json{{"format_version", format_version},
                {"cut_detuning_MHz", to_mhz(r.cut_detuning)},
                {"breakpoint_found", r.breakpoint_found},
                {"breakpoint_rep", r.breakpoint_rep ? json(*r.breakpoint_rep) : json(nullptr)},
                {"breakpoint_s", optional_num(r.breakpoint_time)},
                {"p_value", r.p_value},
                {"eit", to_json(r.eit)},
                {"od", to_json(r.od)},
                {"peak_shift_MHz", optional_mhz(r.peak_shift)},
                {"peak_shift_flagged", r.peak_shift_flagged},
                {"equality_rep", r.equality_rep ? json(*r.equality_rep) : json(nullptr)},
                {"warnings", r.warnings}};
}

// ---------------------------------------------------------------------------
// Trace files: CSV data plus a JSON sidecar with configuration and ground truth.

inline fs::path sidecar_path(const fs::path& csv)
{
    fs::path p = csv;
    p.replace_extension(".json");
    return p;
}

inline std::string slot_name(Slot s) { return s == Slot::od ? "od" : "eit"; }

inline std::string trace_csv(const TraceSet& ts)
{
    std::string out;
    out.reserve(ts.transmission.size() * 32 + 64);
    out.append(trace_header);
    out.push_back('\n');
    for (std::size_t d = 0; d < ts.n_detunings(); ++d)
    {
        std::string det;
        append_number(det, to_mhz(ts.detunings[d]));
        for (std::size_t r = 0; r < ts.n_reps; ++r)
            for (std::size_t s = 0; s < ts.n_slots; ++s)
            {
                out.append(det);
                out.push_back(',');
                out.append(std::to_string(r + 1));
                out.push_back(',');
                out.append(slot_name(static_cast< Slot >(s)));
                out.push_back(',');
                append_number(out, ts.at(d, r, static_cast< Slot >(s)));
                out.push_back('\n');
            }
    }
    return out;
}

inline json trace_sidecar(const TraceSet& ts)
{
    json od = json::array();
    for (std::size_t s = 0; s < ts.n_slots; ++s)
    {
        json per_slot = json::array();
        for (std::size_t d = 0; d < ts.n_detunings(); ++d)
        {
            json row = json::array();
            for (std::size_t r = 0; r < ts.n_reps; ++r)
                row.push_back(ts.true_od(d, r, static_cast< Slot >(s)));
            per_slot.push_back(std::move(row));
        }
        od.push_back(std::move(per_slot));
    }
    return json{{"format", "rydfiber-trace"},
                {"format_version", format_version},
                {"sequence", to_json(ts.sequence)},
                {"eit", to_json(ts.params)},
                {"loss", to_json(ts.loss)},
                {"photon_budget", photon_budget(ts.sequence)},
                {"ground_truth", {{"layout", "od_true[slot][detuning][repetition]"}, {"od_true", od}}}};
}

inline void write_trace(const TraceSet& ts, const fs::path& csv)
{
    write_atomic(csv, trace_csv(ts));
    write_atomic(sidecar_path(csv), trace_sidecar(ts).dump(1) + "\n");
}

/// Parse trace CSV text. Only the measured data is recovered here; see read_trace.
inline TraceSet parse_trace_csv(std::string_view text)
{
    std::istringstream in{std::string{text}};
    std::string line;
    if (!std::getline(in, line))
        throw std::invalid_argument("trace file is empty");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != trace_header)
        throw std::invalid_argument("unexpected trace header: " + line);

    struct Row
    {
        double det;
        std::size_t rep;
        std::size_t slot;
        double t;
    };
    std::vector< Row > rows;
    std::size_t lineno = 1;
    while (std::getline(in, line))
    {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto f = split(line);
        if (f.size() != 4)
            throw std::invalid_argument("line " + std::to_string(lineno) + ": expected 4 fields");
        Row r{};
        try
        {
            r.det = parse_number(f[0]);
            const double rep = parse_number(f[1]);
            if (!(rep >= 1.0) || rep != std::floor(rep))
                throw std::invalid_argument("bad repetition");
            r.rep = static_cast< std::size_t >(rep);
            r.t = parse_number(f[3]);
        }
        catch (const std::invalid_argument& e)
        {
            throw std::invalid_argument("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (f[2] == "eit")
            r.slot = 0;
        else if (f[2] == "od")
            r.slot = 1;
        else
            throw std::invalid_argument("line " + std::to_string(lineno) + ": slot must be eit or od");
        rows.push_back(r);
    }
    if (rows.empty())
        throw std::invalid_argument("trace file has no data rows");

    TraceSet ts;
    std::size_t n_reps = 0, n_slots = 1;
    for (const auto& r : rows)
    {
        if (ts.detunings.empty() || ts.detunings.back() != from_mhz(r.det))
        {
            if (!ts.detunings.empty() && !(from_mhz(r.det) > ts.detunings.back()))
                throw std::invalid_argument("trace detunings must be increasing");
            ts.detunings.push_back(from_mhz(r.det));
        }
        n_reps = std::max(n_reps, r.rep);
        if (r.slot == 1)
            n_slots = 2;
    }
    ts.resize(ts.detunings.size(), n_reps, n_slots);
    if (rows.size() != ts.transmission.size())
        throw std::invalid_argument("trace file is not a complete detuning x repetition x slot table");
    std::vector< bool > filled(rows.size(), false);
    std::size_t det = 0;
    for (const auto& r : rows)
    {
        while (ts.detunings[det] != from_mhz(r.det))
            ++det;
        const auto idx = ts.index(det, r.rep - 1, static_cast< Slot >(r.slot));
        if (filled[idx])
            throw std::invalid_argument("duplicate trace entry");
        filled[idx] = true;
        ts.transmission[idx] = r.t;
    }
    ts.sequence.n_reps = n_reps;
    ts.sequence.mode = n_slots == 2 ? PulseMode::two_pulse : PulseMode::single_pulse;
    ts.sequence.detuning_grid = ts.detunings;
    return ts;
}

/// Read a trace CSV and, when present, its sidecar (configuration and ground truth).
inline TraceSet read_trace(const fs::path& csv, std::vector< std::string >* warnings = nullptr)
{
    TraceSet ts = parse_trace_csv(read_file(csv));
    const fs::path side = sidecar_path(csv);
    if (!fs::exists(side))
    {
        if (warnings)
            warnings->push_back("no sidecar " + side.string() + "; assuming default sequence timing");
        return ts;
    }
    json j;
    try
    {
        j = json::parse(read_file(side));
    }
    catch (const json::exception& e)
    {
        throw IoError{"cannot parse " + side.string() + ": " + e.what()};
    }
    std::vector< std::string > errors;
    SequenceConfig seq;
    EitParams p;
    LossModel l;
    if (j.contains("sequence"))
    {
        ObjectReader r{j["sequence"], "sequence", errors};
        read(r, seq, errors);
    }
    if (j.contains("eit"))
    {
        ObjectReader r{j["eit"], "eit", errors};
        read(r, p);
    }
    if (j.contains("loss"))
    {
        ObjectReader r{j["loss"], "loss", errors};
        read(r, l);
    }
    if (!errors.empty())
        throw ValidationError{errors};
    seq.detuning_grid = ts.detunings;
    seq.n_reps = ts.n_reps;
    ts.sequence = seq;
    ts.params = p;
    ts.loss = l;
    if (j.contains("ground_truth") && j["ground_truth"].contains("od_true"))
    {
        const auto& od = j["ground_truth"]["od_true"];
        if (od.size() == ts.n_slots)
            for (std::size_t s = 0; s < ts.n_slots; ++s)
                for (std::size_t d = 0; d < ts.n_detunings() && d < od[s].size(); ++d)
                    for (std::size_t r = 0; r < ts.n_reps && r < od[s][d].size(); ++r)
                        ts.od_true[ts.index(d, r, static_cast< Slot >(s))] = od[s][d][r].get< double >();
    }
    return ts;
}

// ---------------------------------------------------------------------------
// Maps and series.

/// CSV matrix: one row per repetition, one column per detuning.
inline std::string time_map_csv(const TimeMap& m)
{
    std::string out = "repetition";
    for (double d : m.detunings)
    {
        out += ",";
        append_number(out, to_mhz(d));
    }
    out += "\n";
    for (std::size_t r = 0; r < m.n_reps; ++r)
    {
        out += std::to_string(r + 1);
        for (std::size_t d = 0; d < m.detunings.size(); ++d)
        {
            out += ",";
            append_number(out, m.at(d, r));
        }
        out += "\n";
    }
    return out;
}

/// gnuplot grid format ("splot ... with pm3d"): blank line between detuning blocks.
inline std::string time_map_gnuplot(const TimeMap& m)
{
    std::string out = "# detuning_MHz repetition value\n";
    for (std::size_t d = 0; d < m.detunings.size(); ++d)
    {
        for (std::size_t r = 0; r < m.n_reps; ++r)
        {
            append_number(out, to_mhz(m.detunings[d]));
            out += " " + std::to_string(r + 1) + " ";
            append_number(out, m.at(d, r));
            out += "\n";
        }
        out += "\n";
    }
    return out;
}

inline constexpr std::string_view cut_header =
    "t_s,first_rep,eit_mean,eit_sem,eit_usable,od_mean,od_sem,od_usable";

inline std::string cut_csv(std::span< const CutPoint > eit, std::span< const CutPoint > od)
{
    std::string out{cut_header};
    out += "\n";
    for (std::size_t i = 0; i < eit.size(); ++i)
    {
        append_number(out, eit[i].t);
        out += "," + std::to_string(eit[i].first_rep) + ",";
        append_number(out, eit[i].mean);
        out += ",";
        append_number(out, eit[i].sem);
        out += eit[i].usable ? ",1," : ",0,";
        if (i < od.size())
        {
            append_number(out, od[i].mean);
            out += ",";
            append_number(out, od[i].sem);
            out += od[i].usable ? ",1" : ",0";
        }
        else
            out += ",,,0";
        out += "\n";
    }
    return out;
}

/// Decay series from a cut CSV, for the chosen slot ("eit" or "od"); unusable rows dropped.
inline std::vector< DecayPoint > parse_cut_csv(std::string_view text, Slot slot)
{
    std::istringstream in{std::string{text}};
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != cut_header)
        throw std::invalid_argument("unexpected cut header: " + line);
    std::vector< CutPoint > pts;
    while (std::getline(in, line))
    {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto f = split(line);
        if (f.size() != 8)
            throw std::invalid_argument("cut row must have 8 fields");
        const std::size_t o = slot == Slot::od ? 5 : 2;
        CutPoint p;
        p.t = parse_number(f[0]);
        p.first_rep = static_cast< std::size_t >(parse_number(f[1]));
        if (f[o + 2] != "1")
            continue;
        p.mean = parse_number(f[o]);
        p.sem = parse_number(f[o + 1]);
        p.usable = true;
        pts.push_back(p);
    }
    return absorbance_series(pts);
}

} // namespace rydfiber::io
#endif // RYDFIBER_IO_HPP
