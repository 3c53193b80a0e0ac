#include "rydfiber/pipeline.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <random>

using namespace rydfiber;
namespace fs = std::filesystem;

namespace
{
fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("rydfiber_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

RunConfig small(const char* name = "inside")
{
    RunConfig c = preset(name);
    c.sequence.n_reps = 60;
    c.analysis.fit_start = 1;
    c.sequence.detuning_grid = uniform_grid_mhz(-10.0, 10.0, 9);
    return c;
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string{RYDFIBER_CLI} + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
} // namespace

TEST(Numbers, ShortestRoundTrip)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution< double > u(0.0, 1.0);
    for (int i = 0; i < 10000; ++i)
    {
        const double v = u(rng) * std::pow(10.0, static_cast< int >(rng() % 20) - 10);
        ASSERT_EQ(io::parse_number(io::format_number(v)), v);
    }
    EXPECT_EQ(io::format_number(0.5), "0.5");
    EXPECT_THROW(io::parse_number("1,5"), std::invalid_argument);
    EXPECT_THROW(io::parse_number(""), std::invalid_argument);
}

TEST(TraceCsv, RoundTripIsBitExact)
{
    const TraceSet ts = run_simulation(small());
    const TraceSet back = io::parse_trace_csv(io::trace_csv(ts));
    EXPECT_EQ(back.transmission, ts.transmission);
    EXPECT_EQ(back.n_reps, ts.n_reps);
    EXPECT_EQ(back.n_slots, 2u);
    ASSERT_EQ(back.detunings.size(), ts.detunings.size());
    for (std::size_t i = 0; i < ts.detunings.size(); ++i)
        EXPECT_NEAR(back.detunings[i], ts.detunings[i], 1e-9);
}

TEST(TraceCsv, HeaderAndLayout)
{
    const std::string csv = io::trace_csv(run_simulation(small()));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "detuning_MHz,repetition,slot,transmission");
    const auto second = csv.substr(csv.find('\n') + 1, csv.find('\n', csv.find('\n') + 1) - csv.find('\n') - 1);
    EXPECT_EQ(second.substr(0, 9), "-10,1,eit");
}

TEST(TraceCsv, MalformedInputRejected)
{
    EXPECT_THROW(io::parse_trace_csv(""), std::invalid_argument);
    EXPECT_THROW(io::parse_trace_csv("a,b,c,d\n"), std::invalid_argument);
    EXPECT_THROW(io::parse_trace_csv("detuning_MHz,repetition,slot,transmission\n"), std::invalid_argument);
    EXPECT_THROW(io::parse_trace_csv("detuning_MHz,repetition,slot,transmission\n0,1,xx,0.5\n"),
                 std::invalid_argument);
    // missing repetition 1 at the second detuning
    EXPECT_THROW(io::parse_trace_csv("detuning_MHz,repetition,slot,transmission\n0,1,eit,0.5\n0,2,eit,0.5\n"
                                     "1,2,eit,0.5\n"),
                 std::invalid_argument);
}

TEST(TraceFiles, SidecarCarriesConfigAndTruth)
{
    const fs::path dir = scratch("sidecar");
    RunConfig c = small();
    c.output.dir = dir.string();
    const fs::path csv = cmd_simulate(c);
    const auto j = io::json::parse(io::read_file(io::sidecar_path(csv)));
    EXPECT_EQ(j["format_version"], 1);
    EXPECT_EQ(j["loss"]["od0"], 19.0);
    EXPECT_EQ(j["eit"]["omega_c_MHz"], 9.5);
    EXPECT_EQ(j["sequence"]["mode"], "two-pulse");
    EXPECT_EQ(j["ground_truth"]["od_true"][0][0][0], 19.0);

    const TraceSet back = io::read_trace(csv);
    const TraceSet ts = run_simulation(c);
    EXPECT_EQ(back.transmission, ts.transmission);
    EXPECT_EQ(back.od_true, ts.od_true);
    EXPECT_NEAR(to_mhz(back.params.omega_c), 9.5, 1e-12);
    EXPECT_EQ(back.sequence.mode, PulseMode::two_pulse);
    EXPECT_DOUBLE_EQ(back.loss.t_break, 3e-3);
    EXPECT_FALSE(fs::exists(fs::path{csv} += ".tmp"));
}

TEST(TraceFiles, MissingSidecarWarns)
{
    const fs::path dir = scratch("nosidecar");
    RunConfig c = small();
    c.output.dir = dir.string();
    const fs::path csv = cmd_simulate(c);
    fs::remove(io::sidecar_path(csv));
    std::vector< std::string > w;
    const TraceSet ts = io::read_trace(csv, &w);
    EXPECT_EQ(w.size(), 1u);
    EXPECT_EQ(ts.n_reps, 60u);
}

TEST(TraceFiles, InfiniteDecayTimeWrittenAsNull)
{
    LossModel l;
    l.tau2 = std::numeric_limits< double >::infinity();
    EXPECT_TRUE(io::to_json(l)["tau2_s"].is_null());
    std::vector< std::string > errors;
    LossModel back;
    const io::json j = io::to_json(l);
    io::ObjectReader r{j, "loss", errors};
    io::read(r, back);
    r.finish();
    EXPECT_TRUE(errors.empty());
    EXPECT_TRUE(std::isinf(back.tau2));
}

TEST(Simulate, SameSeedByteIdenticalFiles)
{
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    RunConfig c = small();
    c.output.dir = a.string();
    const auto fa = cmd_simulate(c);
    c.output.dir = b.string();
    c.sequence.threads = 1;
    const auto fb = cmd_simulate(c);
    EXPECT_EQ(io::read_file(fa), io::read_file(fb));
}

TEST(Simulate, NoNoiseNoLossMatchesClosedForm)
{
    RunConfig c = small();
    c.sequence.noise = false;
    c.loss.enabled = false;
    const TraceSet ts = run_simulation(c);
    EitParams p = c.eit;
    p.od = c.loss.od0;
    for (std::size_t d = 0; d < ts.n_detunings(); ++d)
        ASSERT_DOUBLE_EQ(ts.at(d, 42, Slot::eit), transmission_eit(ts.detunings[d], p));
}

TEST(Config, PresetsDiffer)
{
    const RunConfig in = preset("inside"), out = preset("outside");
    EXPECT_EQ(in.loss.od0, 19.0);
    EXPECT_EQ(out.loss.od0, 32.0);
    EXPECT_NEAR(to_mhz(dephasing_excess(in.eit.gamma_ryd)), 2.6, 1e-12);
    EXPECT_NEAR(to_mhz(dephasing_excess(out.eit.gamma_ryd)), 0.9, 1e-12);
    EXPECT_THROW(preset("nowhere"), ValidationError);
}

TEST(Config, JsonRoundTrip)
{
    RunConfig c = preset("outside");
    c.sequence.rng_seed = 99;
    c.analysis.breakpoint = 3e-3;
    c.analysis.cut_detuning = from_mhz(2.5);
    c.output.prefix = "x";
    const RunConfig back = parse_config(to_json(c));
    EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
    EXPECT_EQ(back.sequence.rng_seed, 99u);
    EXPECT_EQ(back.preset, "outside");
}

TEST(Config, OverridesOnTopOfPreset)
{
    const auto j = io::json::parse(R"({"preset": "outside", "loss": {"od0": 25},
        "sequence": {"detuning_grid_MHz": {"min": -5, "max": 5, "n": 11}}})");
    const RunConfig c = parse_config(j);
    EXPECT_EQ(c.loss.od0, 25.0);
    EXPECT_NEAR(to_mhz(c.eit.omega_c), 9.9, 1e-12);
    EXPECT_EQ(c.sequence.detuning_grid.size(), 11u);
}

TEST(Config, UnknownKeysAndBadValuesReported)
{
    const auto j = io::json::parse(R"({"sequence": {"n_rep": 5, "t_probe_s": -1}, "eit": {"omega_c_MHz": "x"},
        "extra": 1})");
    try
    {
        parse_config(j);
        FAIL() << "expected ValidationError";
    }
    catch (const ValidationError& e)
    {
        const auto& f = e.fields();
        const auto has = [&](const std::string& s) {
            return std::any_of(f.begin(), f.end(), [&](const std::string& x) { return x.find(s) != std::string::npos; });
        };
        EXPECT_TRUE(has("sequence.n_rep: unknown key"));
        EXPECT_TRUE(has("eit.omega_c_MHz: wrong type"));
        EXPECT_TRUE(has("extra: unknown key"));
    }
}

TEST(Config, SubInvariantsCheckedBeforeRunning)
{
    const auto j = io::json::parse(R"({"sequence": {"t_probe_s": -1}, "loss": {"tau1_s": 0}})");
    try
    {
        parse_config(j);
        FAIL();
    }
    catch (const ValidationError& e)
    {
        EXPECT_EQ(e.fields(), (std::vector< std::string >{"sequence.t_probe", "loss.tau1"}));
    }
}

TEST(Config, UnsupportedVersion)
{
    EXPECT_THROW(parse_config(io::json::parse(R"({"format_version": 7})")), ValidationError);
}

TEST(CmdFit, EitOnPresetRecoversControlRabi)
{
    const fs::path dir = scratch("fit_eit");
    RunConfig c = preset("inside");
    c.output.dir = dir.string();
    const fs::path csv = cmd_simulate(c);
    FitRequest req;
    req.kind = FitKind::eit;
    req.data = csv;
    const FitOutput out = cmd_fit(req);
    ASSERT_TRUE(out.converged);
    const double om = out.result["params"]["omega_c_MHz"];
    const double se = out.result["stderr"]["omega_c_MHz"];
    EXPECT_NEAR(om, 9.5, se);
    EXPECT_TRUE(out.result["eit_window"].get< bool >());
}

TEST(CmdFit, EmptyFileIsValidationError)
{
    const fs::path dir = scratch("fit_empty");
    io::write_atomic(dir / "empty.csv", "");
    FitRequest req;
    req.kind = FitKind::od;
    req.data = dir / "empty.csv";
    EXPECT_THROW(cmd_fit(req), ValidationError);
}

TEST(CmdFit, DecayFixedBreakMatchesFreeSearch)
{
    const fs::path dir = scratch("fit_decay");
    RunConfig c = preset("inside");
    c.output.dir = dir.string();
    const fs::path csv = cmd_simulate(c);
    FitRequest req;
    req.kind = FitKind::decay;
    req.data = csv;
    const FitOutput free = cmd_fit(req);
    req.breakpoint = 3e-3;
    const FitOutput fixed = cmd_fit(req);
    EXPECT_EQ(free.result["break_index"], fixed.result["break_index"]);
    const double t1 = free.result["early"]["tau_s"], t2 = fixed.result["early"]["tau_s"];
    EXPECT_DOUBLE_EQ(t1, t2);
    EXPECT_DOUBLE_EQ(free.result["late"]["tau_s"].get< double >(), fixed.result["late"]["tau_s"].get< double >());
}

TEST(CmdFit, DecayFromCutFile)
{
    const RunConfig c = preset("inside");
    const TraceSet ts = run_simulation(c);
    const std::size_t det = ts.nearest_detuning(c.cut());
    const fs::path dir = scratch("cut_file");
    io::write_atomic(dir / "cut.csv", io::cut_csv(cut_series(ts, det, Slot::eit), cut_series(ts, det, Slot::od)));
    FitRequest req;
    req.kind = FitKind::decay;
    req.data = dir / "cut.csv";
    const FitOutput a = cmd_fit(req);
    const DecayFit b = fit_two_segment_decay(absorbance_series(cut_series(ts, det, Slot::eit)));
    EXPECT_EQ(a.result["break_index"].get< std::size_t >(), *b.break_index);
    EXPECT_NEAR(a.result["early"]["rate_per_s"].get< double >(), b.early->rate, 1e-9 * b.early->rate);
}

TEST(Reproduce, SameSeedSameSummary)
{
    ReproduceOptions o;
    o.out_dir = scratch("repro_a");
    const Summary a = cmd_reproduce("fig3c", o);
    const std::string ja = io::read_file(o.out_dir / "fig3c_summary.json");
    o.out_dir = scratch("repro_b");
    o.threads = 1;
    cmd_reproduce("fig3c", o);
    EXPECT_EQ(ja, io::read_file(o.out_dir / "fig3c_summary.json"));
    EXPECT_TRUE(a.all_pass());
}

TEST(Reproduce, UnknownFigure)
{
    EXPECT_THROW(cmd_reproduce("fig9", {}), ValidationError);
}

TEST(Transport, TableColumns)
{
    const std::string t = transport_table(ConveyorRamp::linear(500e3, 0.1), 3);
    EXPECT_EQ(t, "t_s,detuning_Hz,velocity_m_per_s,position_m\n"
                 "0,0,0,0\n"
                 "0.05,250000,0.100625,0.002515625\n"
                 "0.1,500000,0.20125,0.0100625\n");
}

TEST(Cli, ExitCodes)
{
    const fs::path dir = scratch("cli");
    EXPECT_EQ(run_cli("stark --shift 2.2"), 0);
    EXPECT_EQ(run_cli("stark --shift -2"), 1);
    EXPECT_EQ(run_cli("transport --steps 5"), 0);
    EXPECT_EQ(run_cli("simulate --preset nowhere"), 1);
    io::write_atomic(dir / "bad.json", R"({"sequence": {"bogus": 1}})");
    EXPECT_EQ(run_cli("simulate --config " + (dir / "bad.json").string()), 1);
    io::write_atomic(dir / "empty.csv", "");
    EXPECT_EQ(run_cli("fit-od " + (dir / "empty.csv").string()), 1);
    // a regular file where the output directory should be
    io::write_atomic(dir / "blocker", "x");
    EXPECT_EQ(run_cli("simulate --out-dir " + (dir / "blocker" / "sub").string()), 3);
    io::write_atomic(dir / "small.json", R"({"sequence": {"n_reps": 40, "detuning_grid_MHz": {"min": -10, "max": 10, "n": 9}}, "analysis": {"fit_start": 1}})");
    EXPECT_EQ(run_cli("simulate --config " + (dir / "small.json").string() + " --out-dir " + dir.string()), 0);
    EXPECT_TRUE(fs::exists(dir / "trace.csv"));
    EXPECT_EQ(run_cli("fit-eit " + (dir / "trace.csv").string() + " --start 1 --count 20"), 0);
}
