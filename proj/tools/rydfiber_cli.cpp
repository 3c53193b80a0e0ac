// rydfiber: simulate, fit and analyze pulsed EIT measurements of atoms in a hollow-core fiber.

#include "rydfiber/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace
{
using namespace rydfiber;

struct Common
{
    std::string config;
    std::string preset = "inside";
    std::optional< std::uint64_t > seed;
    std::optional< std::string > out_dir;
    bool no_noise = false;
    bool no_loss = false;
    std::optional< double > break_ms;
    std::optional< std::size_t > window;
    std::optional< unsigned > threads;
    bool gnuplot = false;
};

void add_run_flags(CLI::App* cmd, Common& c)
{
    cmd->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--preset", c.preset, "base parameters")->check(CLI::IsMember({"inside", "outside"}));
    cmd->add_option("--seed", c.seed, "RNG seed");
    cmd->add_option("--out-dir", c.out_dir, "output directory");
    cmd->add_flag("--no-noise", c.no_noise, "noise-free transmissions");
    cmd->add_flag("--no-loss", c.no_loss, "disable the atom-loss model");
    cmd->add_option("--threads", c.threads, "worker threads (0: all cores)");
}

RunConfig make_config(const Common& c)
{
    RunConfig cfg = c.config.empty() ? preset(c.preset) : load_config(c.config);
    if (c.seed)
        cfg.sequence.rng_seed = *c.seed;
    if (c.out_dir)
        cfg.output.dir = *c.out_dir;
    if (c.no_noise)
        cfg.sequence.noise = false;
    if (c.no_loss)
        cfg.loss.enabled = false;
    if (c.break_ms)
        cfg.analysis.breakpoint = *c.break_ms * 1e-3;
    if (c.window)
        cfg.analysis.window = *c.window;
    if (c.threads)
        cfg.sequence.threads = *c.threads;
    if (c.gnuplot)
        cfg.output.gnuplot = true;
    cfg.validate();
    return cfg;
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

int report(const std::exception& e, int code)
{
    json err{{"error", e.what()}, {"exit_code", code}};
    if (const auto* v = dynamic_cast< const ValidationError* >(&e))
        err["fields"] = v->fields();
    std::cerr << err.dump(2) << "\n";
    return code;
}

Slot parse_slot(const std::string& s)
{
    if (s == "od")
        return Slot::od;
    if (s == "eit")
        return Slot::eit;
    throw ValidationError{{"slot: expected eit or od"}};
}

TraceSet load_trace(const std::string& path, std::vector< std::string >& warnings)
{
    try
    {
        return io::read_trace(path, &warnings);
    }
    catch (const std::invalid_argument& e)
    {
        if (dynamic_cast< const ValidationError* >(&e))
            throw;
        throw ValidationError{{std::string{"data: "} + e.what()}};
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Pulsed Rydberg-EIT measurement simulator and analysis toolkit"};
    app.require_subcommand(1);

    Common common;
    std::string data;
    std::string slot = "eit";
    std::size_t start = 201;
    std::size_t count = 20;
    std::optional< double > cut_mhz;

    auto* sim = app.add_subcommand("simulate", "simulate a measurement sequence, write CSV + JSON sidecar");
    add_run_flags(sim, common);

    auto add_fit = [&](const char* name, const char* help) {
        auto* cmd = app.add_subcommand(name, help);
        cmd->add_option("data", data, "trace CSV (or cut CSV for fit-decay)")->required()->check(CLI::ExistingFile);
        cmd->add_option("--slot", slot, "pulse slot: eit|od");
        return cmd;
    };
    auto* fit_od_cmd = add_fit("fit-od", "fit the absorption line to an averaged spectrum");
    auto* fit_eit_cmd = add_fit("fit-eit", "fit the EIT model to an averaged spectrum");
    auto* fit_decay_cmd = add_fit("fit-decay", "two-regime exponential fit of a decay cut");
    for (auto* cmd : {fit_od_cmd, fit_eit_cmd})
    {
        cmd->add_option("--start", start, "first repetition of the average (1-based)");
        cmd->add_option("--count", count, "repetitions averaged");
    }
    fit_decay_cmd->add_option("--cut", cut_mhz, "cut detuning in MHz (trace input)");
    fit_decay_cmd->add_option("--break", common.break_ms, "fixed breakpoint in ms");

    auto* diffmap = app.add_subcommand("diffmap", "moving-averaged EIT minus OD map");
    diffmap->add_option("data", data, "two-pulse trace CSV")->required()->check(CLI::ExistingFile);
    diffmap->add_option("--window", common.window, "moving-average window");
    diffmap->add_option("--out-dir", common.out_dir, "output directory");
    diffmap->add_flag("--gnuplot", common.gnuplot, "also write gnuplot grid data");

    auto* regimes = app.add_subcommand("regimes", "breakpoint, decay times, peak shift and EIT/OD equality");
    regimes->add_option("data", data, "two-pulse trace CSV")->required()->check(CLI::ExistingFile);
    regimes->add_option("--cut", cut_mhz, "cut detuning in MHz (default: EIT peak)");
    regimes->add_option("--break", common.break_ms, "fixed breakpoint in ms");
    regimes->add_option("--window", common.window, "moving-average window");

    auto* cut = app.add_subcommand("cut", "block-averaged transmission at one detuning vs time");
    cut->add_option("data", data, "trace CSV")->required()->check(CLI::ExistingFile);
    cut->add_option("--cut", cut_mhz, "detuning in MHz (default: EIT peak)");
    cut->add_option("--count", count, "repetitions per point");
    cut->add_option("--out-dir", common.out_dir, "output directory");

    double field = -1.0, shift_mhz = -1.0, alpha = stark::alpha_29s;
    auto* stark_cmd = app.add_subcommand("stark", "quadratic Stark shift <-> electric field");
    auto* field_opt = stark_cmd->add_option("--field", field, "field in V/cm");
    stark_cmd->add_option("--shift", shift_mhz, "shift in MHz")->excludes(field_opt);
    stark_cmd->add_option("--alpha", alpha, "polarizability in MHz cm^2/V^2");

    double peak_khz = 500.0, duration_ms = 100.0, wavelength_nm = 805.0;
    std::size_t steps = 101;
    auto* transport = app.add_subcommand("transport", "optical conveyor kinematics table");
    transport->add_option("--peak-khz", peak_khz, "final lattice detuning in kHz");
    transport->add_option("--duration-ms", duration_ms, "ramp duration in ms");
    transport->add_option("--wavelength-nm", wavelength_nm, "lattice wavelength in nm");
    transport->add_option("--steps", steps, "table rows")->check(CLI::Range(2, 1000000));

    std::string figure;
    auto* reproduce = app.add_subcommand("reproduce", "run a figure pipeline: fig2c|fig2d|fig3c|fig4");
    reproduce->add_option("figure", figure, "figure id")
        ->required()
        ->check(CLI::IsMember({"fig2c", "fig2d", "fig3c", "fig4"}));
    reproduce->add_option("--seed", common.seed, "RNG seed");
    reproduce->add_option("--out-dir", common.out_dir, "output directory");
    reproduce->add_option("--break", common.break_ms, "fixed breakpoint in ms (fig4)");
    reproduce->add_option("--window", common.window, "moving-average window");
    reproduce->add_option("--threads", common.threads, "worker threads (0: all cores)");
    reproduce->add_flag("--gnuplot", common.gnuplot, "also write gnuplot grid data");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_validation;
    }

    try
    {
        if (*sim)
        {
            const RunConfig cfg = make_config(common);
            const auto path = cmd_simulate(cfg);
            print({{"trace", path.string()}, {"sidecar", io::sidecar_path(path).string()}});
            return exit_ok;
        }
        if (*fit_od_cmd || *fit_eit_cmd || *fit_decay_cmd)
        {
            FitRequest req;
            req.kind = *fit_od_cmd ? FitKind::od : *fit_eit_cmd ? FitKind::eit : FitKind::decay;
            req.data = data;
            req.slot = parse_slot(slot);
            req.start = start;
            req.count = count;
            if (cut_mhz)
                req.cut = from_mhz(*cut_mhz);
            if (common.break_ms)
                req.breakpoint = *common.break_ms * 1e-3;
            FitOutput out;
            try
            {
                out = cmd_fit(req);
            }
            catch (const std::invalid_argument& e)
            {
                if (dynamic_cast< const ValidationError* >(&e))
                    throw;
                throw ValidationError{{e.what()}};
            }
            for (const auto& w : out.warnings)
                out.result["warnings"].push_back(w);
            print(out.result);
            return out.converged ? exit_ok : exit_convergence;
        }
        if (*diffmap || *regimes || *cut)
        {
            std::vector< std::string > warnings;
            const TraceSet ts = load_trace(data, warnings);
            const std::size_t window = common.window.value_or(20);
            const fs::path dir = common.out_dir.value_or(".");
            if (*diffmap)
            {
                if (!ts.has_od_slot())
                    throw ValidationError{{"data: diffmap needs a two-pulse trace"}};
                const TimeMap m = diff_map(ts, window);
                const fs::path csv = dir / "diffmap.csv";
                io::write_atomic(csv, io::time_map_csv(m));
                json out{{"map", csv.string()}};
                if (common.gnuplot)
                {
                    io::write_atomic(dir / "diffmap.dat", io::time_map_gnuplot(m));
                    out["gnuplot"] = (dir / "diffmap.dat").string();
                }
                print(out);
                return exit_ok;
            }
            const double where = cut_mhz ? from_mhz(*cut_mhz) : eit_peak_position(ts.params);
            if (*regimes)
            {
                if (!ts.has_od_slot())
                    throw ValidationError{{"data: regimes needs a two-pulse trace"}};
                RegimeOptions ro;
                ro.window = window;
                if (common.break_ms)
                    ro.breakpoint = *common.break_ms * 1e-3;
                RegimeReport r = detect_regimes(ts, where, ro);
                r.warnings.insert(r.warnings.end(), warnings.begin(), warnings.end());
                print(io::to_json(r));
                return exit_ok;
            }
            const std::size_t det = ts.nearest_detuning(where);
            const auto eit = cut_series(ts, det, Slot::eit, {.block = count});
            const auto od = ts.has_od_slot() ? cut_series(ts, det, Slot::od, {.block = count})
                                             : std::vector< CutPoint >{};
            const fs::path csv = dir / "cut.csv";
            io::write_atomic(csv, io::cut_csv(eit, od));
            print({{"cut", csv.string()}, {"detuning_MHz", to_mhz(ts.detunings[det])}});
            return exit_ok;
        }
        if (*stark_cmd)
        {
            if (field >= 0.0)
                print({{"field_V_per_cm", field}, {"shift_MHz", stark::shift_from_field(field, alpha)}});
            else if (shift_mhz >= 0.0)
                print({{"shift_MHz", shift_mhz}, {"field_V_per_cm", stark::field_from_shift(shift_mhz, alpha)}});
            else
                throw ValidationError{{"stark: give --field or --shift (non-negative)"}};
            return exit_ok;
        }
        if (*transport)
        {
            ConveyorRamp ramp = [&] {
                try
                {
                    return ConveyorRamp::linear(peak_khz * 1e3, duration_ms * 1e-3, wavelength_nm * 1e-9);
                }
                catch (const std::invalid_argument& e)
                {
                    throw ValidationError{{e.what()}};
                }
            }();
            std::cout << transport_table(ramp, steps);
            return exit_ok;
        }
        if (*reproduce)
        {
            ReproduceOptions o;
            o.seed = common.seed.value_or(1);
            o.out_dir = common.out_dir.value_or("out");
            o.window = common.window.value_or(20);
            if (common.break_ms)
                o.breakpoint = *common.break_ms * 1e-3;
            o.threads = common.threads.value_or(0);
            o.gnuplot = common.gnuplot;
            const Summary s = cmd_reproduce(figure, o);
            std::cout << summary_table(s);
            for (const auto& w : s.warnings)
                std::cerr << "warning: " << w << "\n";
            return exit_ok;
        }
    }
    catch (const ValidationError& e)
    {
        return report(e, exit_validation);
    }
    catch (const std::domain_error& e)
    {
        return report(e, exit_validation);
    }
    catch (const ConvergenceError& e)
    {
        return report(e, exit_convergence);
    }
    catch (const io::IoError& e)
    {
        return report(e, exit_io);
    }
    catch (const std::filesystem::filesystem_error& e)
    {
        return report(e, exit_io);
    }
    catch (const std::exception& e)
    {
        return report(e, exit_validation);
    }
    return exit_ok;
}
