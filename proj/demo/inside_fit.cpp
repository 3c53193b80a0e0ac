// Simulate the inside-fiber sequence, fit the averaged EIT spectrum and look at the two regimes.

#include "rydfiber/pipeline.hpp"

#include <cstdio>

int main()
{
    using namespace rydfiber;

    RunConfig cfg = preset("inside");
    cfg.sequence.rng_seed = 7;
    const TraceSet ts = run_simulation(cfg);

    const Spectrum spec = block_average(ts, Slot::eit, 201, 20);
    const FitResult fit = fit_eit(spec);
    std::printf("Omega_c   = 2pi x %.2f MHz\n", to_mhz(fit.params.omega_c));
    std::printf("excess    = 2pi x %.2f MHz\n", to_mhz(fit.dephasing_excess));
    std::printf("resonance = %.2f MHz\n", to_mhz(eit_peak_position(fit.params)));

    const RegimeReport r = detect_regimes(ts, cfg.cut());
    if (r.breakpoint_time)
        std::printf("breakpoint at %.2f ms (repetition %zu)\n", *r.breakpoint_time * 1e3, *r.breakpoint_rep);
    if (r.eit.early && r.eit.late)
        std::printf("EIT decay: %.2f ms then %.2f ms\n", r.eit.early->tau() * 1e3, r.eit.late->tau() * 1e3);
    if (r.peak_shift)
        std::printf("loss peak sits %.2f MHz from the EIT peak\n", to_mhz(*r.peak_shift));
}
