// Release gate for the laboratory.  Each criterion below is a standalone
// check over the public API; the binary prints one PASS/FAIL line per
// criterion and exits nonzero when any of them fails.  Run with a list of
// criterion numbers (e.g. "./acceptance 4 5") to re-run a subset while
// tuning; the full sweep is the default and is what ctest runs.
//
// Tolerances are pinned here, next to the checks they guard.  Monte Carlo
// gates use pre-registered seeds: fixed before the runs were first looked
// at, never searched over.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rehom/analytic.hpp"
#include "rehom/coupling.hpp"
#include "rehom/domain.hpp"
#include "rehom/environment.hpp"
#include "rehom/errors.hpp"
#include "rehom/harness.hpp"
#include "rehom/renorm.hpp"
#include "rehom/rng.hpp"
#include "rehom/schedule.hpp"
#include "rehom/vecmat.hpp"
#include "rehom/walk.hpp"

namespace {

using namespace rehom;
using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double elapsed_s(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

bool approx(double x, double y, double rel) {
    return std::abs(x - y) <= rel * std::max(std::abs(x), std::abs(y));
}

double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

EnvSpec flat_spec() {
    EnvSpec s;
    s.d = 3;
    s.eta = 0.0;
    s.range_R = 1.5;
    s.lattice_spacing = 0.5;
    s.kernel_radius = 0.5;
    s.seed = 3;
    return s;
}

// Coefficient field whose correlation length survives coarse-graining at
// the base rung L0 = 25: node spacing 5 and kernel radius 5.  The default
// unit-range field decorrelates far below that scale and leaves nothing
// for the small-scale trend checks to see.
EnvSpec coarse_spec(double eta, std::uint64_t seed) {
    EnvSpec s;
    s.d = 3;
    s.eta = eta;
    s.range_R = 15.0;
    s.lattice_spacing = 5.0;
    s.kernel_radius = 5.0;
    s.seed = seed;
    return s;
}

ScaleParams desk_params(double c0) {
    ScaleParams p;  // d = 3, beta = 1/2, a = 1/2, L0 = 25
    p.c0 = c0;
    return p;
}

Vec origin3() { return Vec(3); }

Vec vec3(double a, double b, double c) {
    Vec v(3);
    v[0] = a;
    v[1] = b;
    v[2] = c;
    return v;
}

// Cache the node noise over a centered box before a long quenched run;
// values are identical to the on-demand path, just cheaper to reach.
void prepare_reach(Environment& env, double reach) {
    Vec lo(env.spec().d), hi(env.spec().d);
    for (int i = 0; i < env.spec().d; ++i) {
        lo[i] = -reach;
        hi[i] = reach;
    }
    env.prepare_box(lo, hi);
}

// Plain running mean / variance accumulator for the direct Monte Carlo
// loops below (the library estimators carry their own).
struct MeanVar {
    std::int64_t n = 0;
    double mean = 0.0, m2 = 0.0;
    void add(double x) {
        ++n;
        const double d1 = x - mean;
        mean += d1 / static_cast<double>(n);
        m2 += d1 * (x - mean);
    }
    double se() const {
        return n > 1 ? std::sqrt(m2 / (static_cast<double>(n) - 1.0) /
                                 static_cast<double>(n))
                     : 0.0;
    }
};

// ---------------------------------------------------------------------------
// 1. Annulus mean exit time: closed form, boundary values, Brownian MC.

Outcome criterion1() {
    const auto t0 = Clock::now();
    const double exact = annulus_mean_exit(1.0, 2.0, 1.0, 3, 1.5);
    const bool exact_ok = std::abs(exact - 0.125) < 1e-13;

    const AnnulusExit profile(1.0, 2.0, 1.0, 3);
    const double b1 = std::abs(profile.value(1.0));
    const double b2 = std::abs(profile.value(2.0));
    const bool boundary_ok = b1 <= 1e-10 && b2 <= 1e-10;

    // The closed form solves alpha * Laplacian(u) = -1; the matching walk
    // has per-coordinate variance 2 * alpha.
    const Domain ring = Domain::annulus(1.0, 2.0);
    StoppingRules rules;
    rules.exit_domain = &ring;
    SimConfig cfg;
    cfg.dt = 1e-4;
    cfg.max_time = 50.0;
    cfg.seed = 101;
    MeanVar mc;
    std::int64_t no_exit = 0;
    for (std::int64_t p = 0; p < 100000; ++p) {
        cfg.path_index = static_cast<std::uint64_t>(p);
        const StoppedPath sp = simulate_wiener(2.0, vec3(1.5, 0.0, 0.0), cfg, rules);
        if (!sp.exit.fired) {
            ++no_exit;
            continue;
        }
        mc.add(sp.exit.time);
    }
    const bool mc_ok = no_exit == 0 && std::abs(mc.mean - exact) <= 0.05 * exact;
    const double secs = elapsed_s(t0);
    const bool time_ok = secs <= 120.0;

    std::ostringstream d;
    d << "closed form " << fmt(exact, 17) << ", boundary |u| " << fmt(b1, 2) << "/"
      << fmt(b2, 2) << ", walk mean " << fmt(mc.mean) << " +- " << fmt(mc.se(), 2)
      << " over 1e5 paths, " << fmt(secs, 3) << " s";
    if (no_exit > 0) d << ", " << no_exit << " paths hit the horizon";
    return {exact_ok && boundary_ok && mc_ok && time_ok, d.str()};
}

// ---------------------------------------------------------------------------
// 2. Exit functional at two scales against the ball profile.

Outcome criterion2() {
    const auto t0 = Clock::now();
    const Environment env(flat_spec());
    const Domain ball = Domain::ball(1.0);
    const ScaleTable table = build_schedule(desk_params(1.0), 3);
    const NamedFunction& f = named_function("zero");
    const NamedFunction& g = named_function("neg_one");
    const std::vector<Vec> center = {origin3()};

    const double want = 1.0 / 3.0;
    bool walks_ok = true;
    std::ostringstream d;
    const double eps_list[2] = {1.0 / 25.0, 1.0 / 125.0};
    for (int i = 0; i < 2; ++i) {
        const double eps = eps_list[i];
        const int n = table.locate_scale(eps);
        const double horizon =
            4.0 * std::pow(static_cast<double>(table.row(n + 2).L), 2.0);
        const FunctionalEstimate est =
            exit_functional(env, ball, eps, f, g, center, 10000, 0.1, horizon,
                            907 + static_cast<std::uint64_t>(i));
        walks_ok = walks_ok && std::abs(est.value[0] - want) <= 0.05 * want &&
                   !est.flagged;
        d << "1/eps " << fmt(1.0 / eps, 4) << ": " << fmt(est.value[0]) << " +- "
          << fmt(est.stderr_[0], 2) << "; ";
    }

    const RadialSolution ref(ball, 3, 1.0, [](double) { return -1.0; }, 0.0);
    const double cv = ref.center_value();
    const bool radial_ok = std::abs(cv - want) <= 1e-6;
    const double secs = elapsed_s(t0);
    const bool time_ok = secs <= 180.0;

    d << "radial center " << fmt(cv, 10) << ", " << fmt(secs, 3) << " s";
    return {walks_ok && radial_ok && time_ok, d.str()};
}

// ---------------------------------------------------------------------------
// 3. Diffusivity estimates at the first two rungs.

Outcome criterion3() {
    const Environment env(flat_spec());
    const ScaleTable table = build_schedule(desk_params(1.0), 3);
    // The estimator is unbiased (exact Gaussian increments, stops never
    // bind here) with standard error ~0.008 at this budget, so the 2%
    // gate sits at ~2.4 sigma: a fixed seed carries a small honest risk
    // of an unlucky draw.  Seed = date of the gate's freeze.
    const std::uint64_t seed = 20260814;
    const AlphaEstimate a0 = estimate_alpha(env, table, 0, 10000, 0.1, seed);
    const AlphaEstimate a1 = estimate_alpha(env, table, 1, 10000, 0.1, seed + 1);
    const AlphaEstimate aw = estimate_alpha_wiener(1.5, table, 0, 10000, 0.1, seed + 2);

    const bool flat_ok =
        std::abs(a0.value - 1.0) <= 0.02 && std::abs(a1.value - 1.0) <= 0.02;
    const bool wiener_ok = std::abs(aw.value - 1.5) <= 0.03 * 1.5;

    std::ostringstream d;
    d << "rung 0: " << fmt(a0.value) << " +- " << fmt(a0.stderr_, 2) << ", rung 1: "
      << fmt(a1.value) << " +- " << fmt(a1.stderr_, 2) << ", variance-1.5 walk: "
      << fmt(aw.value) << " +- " << fmt(aw.stderr_, 2);
    return {flat_ok && wiener_ok, d.str()};
}

// ---------------------------------------------------------------------------
// 4. Convergence-rate study in the flat environment: small errors at every
//    scale and a fitted slope indistinguishable from zero.

Outcome criterion4() {
    const auto t0 = Clock::now();
    ExperimentConfig cfg;
    cfg.env = flat_spec();
    cfg.schedule = desk_params(1.0);
    cfg.epsilons = {1.0 / 25.0, 1.0 / 35.0, 1.0 / 50.0};
    cfg.dts = {0.01, 0.02, 0.05};
    cfg.paths = 25000;
    cfg.alpha_paths = 20000;
    cfg.seed = 2026;

    const RateReport rep = convergence_rate_experiment(cfg);
    const double u_scale = 1.0 / (3.0 * rep.alpha_bar);  // sup of the profile
    const double gate = 0.02 * u_scale;

    bool points_ok = rep.points.size() == cfg.epsilons.size();
    std::ostringstream d;
    d << "alpha " << fmt(rep.alpha_bar) << ", sup errors";
    for (const RatePoint& p : rep.points) {
        points_ok = points_ok && p.usable && p.sup_error <= gate;
        d << " " << fmt(p.sup_error, 3);
    }
    const bool slope_ok = rep.fit_ok && std::abs(rep.slope) <= rep.slope_ci_half;
    d << " (gate " << fmt(gate, 3) << "), slope " << fmt(rep.slope, 3) << " +- "
      << fmt(rep.slope_ci_half, 3) << ", " << fmt(elapsed_s(t0), 3) << " s";
    return {points_ok && slope_ok, d.str()};
}

// ---------------------------------------------------------------------------
// 5. Perturbed environment: the homogenization error grows with epsilon.

Outcome criterion5() {
    const auto t0 = Clock::now();
    ExperimentConfig cfg;
    cfg.env = coarse_spec(0.05, 21);
    cfg.schedule = desk_params(1.0);
    cfg.epsilons = {1.0 / 25.0, 1.0 / 35.0, 1.0 / 50.0};
    cfg.dts = {0.02, 0.05, 0.1};
    cfg.paths = 9000;
    cfg.alpha_paths = 20000;
    cfg.seed = 512;

    const RateReport rep = convergence_rate_experiment(cfg);
    bool usable = rep.points.size() == 3;
    std::ostringstream d;
    d << "alpha " << fmt(rep.alpha_bar) << " +- " << fmt(rep.alpha_se, 2)
      << ", sup errors (coarse to fine)";
    for (const RatePoint& p : rep.points) {
        usable = usable && p.usable;
        d << " " << fmt(p.sup_error, 3);
    }
    bool trend_ok = false;
    int drops = 0;
    if (usable) {
        trend_ok = rep.points.front().sup_error > rep.points.back().sup_error;
        for (std::size_t i = 0; i + 1 < rep.points.size(); ++i)
            if (rep.points[i].sup_error > rep.points[i + 1].sup_error) ++drops;
    }
    d << ", " << drops << "/2 adjacent drops, " << fmt(elapsed_s(t0), 3) << " s";
    return {usable && trend_ok, d.str()};
}

// ---------------------------------------------------------------------------
// 6. Kernel coupling at rung 1: shared-noise chains never separate, both
//    marginals stay exact, and the failure rate respects the cost bound.

Outcome criterion6() {
    const Environment env(flat_spec());
    const ScaleTable table = build_schedule(desk_params(1.0), 3);
    const int n = 1;
    const double ref_len = static_cast<double>(table.row(table.discretization_row(n)).L);
    const double step_time = ref_len * ref_len;
    const double beta = table.params.beta;
    const double gamma = ref_len;
    const int K = 10;

    const KernelSampler kq = KernelSampler::quenched(env, step_time);
    const KernelSampler kg = KernelSampler::gaussian(1.0, 3, step_time);

    ChainOptions opt;
    opt.steps = K;
    opt.batch = 64;
    opt.gamma = gamma;
    opt.shared_noise = true;
    opt.seed = 77;
    std::vector<CoupledChain> shared;
    for (int c = 0; c < 64; ++c) {
        opt.chain_id = static_cast<std::uint64_t>(c);
        shared.push_back(run_coupled_chain(kq, kg, table, n, origin3(), opt));
    }
    const double rate = coupling_failure_rate(shared, gamma);
    const ChebyshevCheck cheb_s = coupling_chebyshev(shared, gamma, ref_len, beta);

    ChainOptions ind = opt;
    ind.shared_noise = false;
    ind.seed = 79;
    std::vector<CoupledChain> independent;
    for (int c = 0; c < 32; ++c) {
        ind.chain_id = static_cast<std::uint64_t>(c);
        independent.push_back(run_coupled_chain(kq, kg, table, n, origin3(), ind));
    }
    const ChebyshevCheck cheb_i = coupling_chebyshev(independent, gamma, ref_len, beta);

    // Marginal audit: drive the transition directly so the endpoints are
    // visible, then test each side of the K-step chain against the exact
    // Gaussian law N(0, K * step_time) per coordinate.
    std::vector<double> xs, ys;
    for (int c = 0; c < 64; ++c) {
        Vec x = origin3(), y = origin3();
        for (int k = 0; k < K; ++k) {
            const CoupleStep s =
                couple_step(kq, kg, x, y, ref_len, beta, 64, true, 7788,
                            static_cast<std::uint64_t>(c) * 64u + static_cast<std::uint64_t>(k));
            x = s.x;
            y = s.y;
        }
        xs.push_back(x[0]);
        ys.push_back(y[0]);
    }
    const double sigma = std::sqrt(static_cast<double>(K) * step_time);
    const auto cdf = [sigma](double t) { return normal_cdf(t / sigma); };
    const double dx = ks_statistic_one_sample(xs, cdf);
    const double dy = ks_statistic_one_sample(ys, cdf);
    const double crit = ks_critical_one_sample(64, 0.01);

    const bool ok = rate < 0.01 && cheb_s.pass && cheb_i.pass && dx < crit && dy < crit;
    std::ostringstream d;
    d << "failure rate " << fmt(rate, 3) << " over 64 shared chains (gamma " << fmt(gamma, 4)
      << "), KS " << fmt(dx, 3) << "/" << fmt(dy, 3) << " vs crit " << fmt(crit, 3)
      << ", cost bound lhs/rhs " << fmt(cheb_s.lhs, 3) << "/" << fmt(cheb_s.rhs, 3)
      << " shared, " << fmt(cheb_i.lhs, 3) << "/" << fmt(cheb_i.rhs, 3) << " independent";
    return {ok, d.str()};
}

// ---------------------------------------------------------------------------
// 7. Stopping-time order across three configurations: the near-boundary
//    skeleton time never follows the far-side one, and the skeleton exit
//    never precedes the continuous exit.

Outcome criterion7() {
    const auto t0 = Clock::now();
    const ScaleTable table = build_schedule(desk_params(0.2), 3);
    const Environment flat(flat_spec());
    Environment rough_env(coarse_spec(0.05, 22));
    prepare_reach(rough_env, 130.0 + table.row(0).D_tilde + 15.0);

    struct Config {
        const Environment* env;
        Domain domain;
        double eps;
        Vec start;
        const char* tag;
    };
    std::vector<Config> configs;
    configs.push_back({&flat, Domain::ball(1.0), 1.0 / 125.0, origin3(), "ball/flat"});
    configs.push_back(
        {&rough_env, Domain::ball(1.0), 1.0 / 130.0, origin3(), "ball/perturbed"});
    configs.push_back(
        {&flat, Domain::annulus(1.0, 2.0), 1.0 / 125.0, vec3(1.5, 0.0, 0.0), "annulus/flat"});

    const std::int64_t paths = 3334;  // 3 x 3334 >= 1e4 paths in total
    bool ok = true;
    std::ostringstream d;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const Config& c = configs[i];
        const BarrierReport rep = boundary_barrier_report(
            *c.env, c.domain, c.eps, table, c.start, paths, 0.1, 400 + i);
        ok = ok && rep.both_fired > 0 && rep.order_ok_fraction == 1.0 &&
             rep.tilde_after_exit == 1.0;
        d << c.tag << ": order " << fmt(rep.order_ok_fraction, 4) << ", skeleton-late "
          << fmt(rep.tilde_after_exit, 4) << ", lag exceedance " << fmt(rep.exceed, 3)
          << " +- " << fmt(rep.exceed_se, 2) << " (" << rep.both_fired << " fired); ";
    }
    d << fmt(elapsed_s(t0), 3) << " s";
    return {ok, d.str()};
}

// ---------------------------------------------------------------------------
// 8. Excursion localization: the running maximum stays below the rung
//    envelope with the advertised probability margin.

Outcome criterion8() {
    const Environment env(flat_spec());
    const ScaleTable table = build_schedule(desk_params(1.0), 3);
    bool ok = true;
    std::ostringstream d;
    const int paths_for[2] = {2000, 600};
    for (int n = 0; n < 2; ++n) {
        const double kap = table.row(n).kappa;
        ok = ok && kap >= 1.5;  // the envelope only binds once kappa is real
        WindowOptions opt;
        opt.paths = paths_for[n];
        opt.seed = 60 + static_cast<std::uint64_t>(n);
        // Rows at and below the rung under test; the default window also
        // sweeps two rungs above, whose horizons are desk-hostile.
        opt.m_lo = 0;
        opt.m_hi = n;
        const WindowReport rep =
            scale_window_report(env, table, n, {origin3()}, opt);
        ok = ok && !rep.rows.empty() && rep.pass_fraction() == 1.0;
        d << "rung " << n << " (kappa " << fmt(kap, 3) << "): ";
        for (const WindowRow& r : rep.rows)
            d << "P " << fmt(r.lhs, 3) << " vs " << fmt(r.rhs, 3) << "; ";
    }
    return {ok, d.str()};
}

// ---------------------------------------------------------------------------
// 9. Exit-time tails: exceedances decay monotonically and the first tail
//    bin is already negligible when two spare rungs cover the scale.

Outcome criterion9() {
    const Environment env(flat_spec());
    const ScaleTable table = build_schedule(desk_params(1.0), 3);
    const Domain ball = Domain::ball(1.0);

    const TailCurve flat_curve =
        exit_tail_curve(env, ball, 1.0 / 25.0, table, 5,
                        {origin3(), vec3(0.5, 0.0, 0.0)}, 2000, 0.1, 91);
    bool mono_flat = true;
    for (std::size_t i = 0; i + 1 < flat_curve.exceedance.size(); ++i)
        mono_flat = mono_flat && flat_curve.exceedance[i + 1] <= flat_curve.exceedance[i];
    const bool spare_ok =
        static_cast<double>(table.row(flat_curve.n + 2).L) >= 4.0 * 25.0;
    const bool first_bin_ok = flat_curve.exceedance[1] < 1e-2;

    Environment rough_env(coarse_spec(0.05, 23));
    prepare_reach(rough_env, 145.0);
    const TailCurve rough_curve = exit_tail_curve(rough_env, ball, 1.0 / 130.0, table, 3,
                                                  {origin3()}, 800, 0.1, 92);
    bool mono_rough = true;
    for (std::size_t i = 0; i + 1 < rough_curve.exceedance.size(); ++i)
        mono_rough =
            mono_rough && rough_curve.exceedance[i + 1] <= rough_curve.exceedance[i];

    std::ostringstream d;
    d << "flat run P(tau > k unit):";
    for (double e : flat_curve.exceedance) d << " " << fmt(e, 3);
    d << "; perturbed run:";
    for (double e : rough_curve.exceedance) d << " " << fmt(e, 3);
    return {mono_flat && mono_rough && spare_ok && first_bin_ok, d.str()};
}

// ---------------------------------------------------------------------------
// 10. Ladder identities over randomized admissible parameters; degenerate
//     parameters must refuse loudly.

Outcome criterion10() {
    std::uint64_t state = 0x20260814ull;
    const auto next_u01 = [&state]() {
        // xorshift64*: plenty for parameter jitter
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        return static_cast<double>((state * 0x2545F4914F6CDD1Dull) >> 11) /
               9007199254740992.0;
    };

    int verified = 0, degenerate = 0;
    bool ok = true;
    while (verified < 20 && ok) {
        ScaleParams p;
        p.a = 0.25 + 0.65 * next_u01();
        p.L0 = 6 + static_cast<std::uint64_t>(next_u01() * 620.0);
        p.c0 = 0.05 + 1.45 * next_u01();
        ScaleTable t;
        try {
            t = build_schedule(p, 3);
        } catch (const DegenerateSchedule&) {
            ++degenerate;
            // Only a base rung too small to coarsen may land here.
            ok = ok && std::pow(static_cast<double>(p.L0), p.a) < 5.0 * (1.0 + 1e-9);
            continue;
        }
        ++verified;
        for (int n = 0; n + 1 < t.depth(); ++n) {
            const ScaleRow& r = t.row(n);
            const long double L = static_cast<long double>(r.L);
            const long double pw = powl(L, 1.0L + static_cast<long double>(p.a));
            const long double Lnext = static_cast<long double>(t.row(n + 1).L);
            ok = ok && r.ell >= 5u && r.ell % 5u == 0u;
            ok = ok && t.row(n + 1).L == r.L * r.ell;
            ok = ok && Lnext >= 0.5L * pw * (1.0L - 1e-9L);
            ok = ok && Lnext <= 2.0L * pw * (1.0L + 1e-9L);
        }
        for (const ScaleRow& r : t.rows) {
            const double lls = std::pow(std::log(r.log_L), 2.0);
            ok = ok && approx(r.kappa, std::exp(p.c0 * lls), 1e-12);
            ok = ok && approx(r.kappa_tilde, r.kappa * r.kappa, 1e-12);
            ok = ok && approx(r.D, static_cast<double>(r.L) * r.kappa, 1e-12);
            ok = ok && approx(r.D_tilde, static_cast<double>(r.L) * r.kappa_tilde, 1e-12);
        }
    }

    bool degenerate_throws = false;
    try {
        ScaleParams bad;
        bad.a = 0.2;
        bad.L0 = 10;  // 10^0.2 < 5: no admissible coarsening factor
        build_schedule(bad, 2);
    } catch (const DegenerateSchedule&) {
        degenerate_throws = true;
    }

    std::ostringstream d;
    d << verified << " randomized ladders verified, " << degenerate
      << " degenerate draws refused, explicit degenerate case "
      << (degenerate_throws ? "throws" : "DOES NOT THROW");
    return {ok && verified == 20 && degenerate_throws, d.str()};
}

// ---------------------------------------------------------------------------
// 11. Variance-swap envelope: the measured gap between radial solutions at
//     two diffusivities sits inside the certified envelope and closes as
//     the diffusivities merge.

Outcome criterion11() {
    const Domain ball = Domain::ball(1.0);
    const auto g_one = [](double) { return 1.0; };
    const RadialSolution base(ball, 3, 1.0, g_one, 0.0);

    const double offsets[3] = {1.1, 1.05, 1.01};
    double gaps[3];
    for (int i = 0; i < 3; ++i) {
        const RadialSolution pert(ball, 3, offsets[i], g_one, 0.0);
        gaps[i] = std::abs(pert.center_value() - base.center_value());
        const double closed = (1.0 / 3.0) * (1.0 - 1.0 / offsets[i]);
        if (std::abs(gaps[i] - closed) > 1e-6)
            return {false, "radial solver drifted from the closed form at " +
                               fmt(offsets[i], 3)};
    }
    const double envelope = alpha_perturbation_gap(ball, 3, 1.0, 1.1, 1.0);

    const bool gap_ok = std::abs(gaps[0] - 0.0303030303) <= 3e-4;
    const bool envelope_ok = gaps[0] < envelope && std::abs(envelope - 1.0 / 15.0) <= 1e-9;
    const bool closes = gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] < 4e-3;

    std::ostringstream d;
    d << "gaps " << fmt(gaps[0]) << "/" << fmt(gaps[1]) << "/" << fmt(gaps[2])
      << ", envelope " << fmt(envelope) << " at offset 1.1";
    return {gap_ok && envelope_ok && closes, d.str()};
}

// ---------------------------------------------------------------------------
// 12. Reproducibility: identical configurations reproduce every serialized
//     output byte for byte, independent of the thread count.

Outcome criterion12() {
    ExperimentConfig cfg;
    cfg.env = flat_spec();
    cfg.schedule = desk_params(1.0);
    cfg.dts = {0.05};
    cfg.paths = 400;
    cfg.alpha_paths = 500;
    cfg.seed = 99;

    const auto rate_csv = [](const ExperimentConfig& c) {
        std::ostringstream os;
        write_rate_csv(convergence_rate_experiment(c), os);
        return os.str();
    };
    const std::string r1 = rate_csv(cfg);
    const std::string r2 = rate_csv(cfg);
    ExperimentConfig threaded = cfg;
    threaded.threads = 3;
    const std::string r3 = rate_csv(threaded);

    const Environment env(flat_spec());
    const Domain ball = Domain::ball(1.0);
    const ScaleTable table = build_schedule(desk_params(1.0), 3);
    const auto tail_csv = [&]() {
        std::ostringstream os;
        write_tail_csv(
            exit_tail_curve(env, ball, 1.0 / 25.0, table, 3, {origin3()}, 300, 0.1, 5),
            os);
        return os.str();
    };
    const std::string t1 = tail_csv();
    const std::string t2 = tail_csv();

    const auto audit_csv = [&]() {
        std::ostringstream os;
        write_audit_csv(representation_audit(env, ball, 1.0 / 25.0, table,
                                             named_function("zero"),
                                             named_function("neg_one"), origin3(), 100,
                                             0.1, 1.0, 17),
                        os);
        return os.str();
    };
    const std::string a1 = audit_csv();
    const std::string a2 = audit_csv();

    const std::string m1 = manifest_json(cfg, {"rate.csv", "alpha.csv"});
    const std::string m2 = manifest_json(cfg, {"rate.csv", "alpha.csv"});

    const bool ok = r1 == r2 && r1 == r3 && t1 == t2 && a1 == a2 && m1 == m2;
    std::ostringstream d;
    d << "rate csv " << (r1 == r2 ? "stable" : "DRIFTS") << ", threads 1 vs 3 "
      << (r1 == r3 ? "identical" : "DIFFER") << ", tail csv "
      << (t1 == t2 ? "stable" : "DRIFTS") << ", audit csv "
      << (a1 == a2 ? "stable" : "DRIFTS") << ", manifest "
      << (m1 == m2 ? "stable" : "DRIFTS");
    return {ok, d.str()};
}

struct Criterion {
    int id;
    const char* label;
    Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "annulus exit identity and Brownian check", criterion1},
    {2, "small-scale exit functional matches the ball profile", criterion2},
    {3, "diffusivity estimates at the first two rungs", criterion3},
    {4, "convergence-rate study, flat environment", criterion4},
    {5, "convergence-rate trend, perturbed environment", criterion5},
    {6, "kernel coupling: failures, marginals, cost bound", criterion6},
    {7, "boundary stopping-time order across configurations", criterion7},
    {8, "excursion localization at the rung scale", criterion8},
    {9, "exit-time tail decay", criterion9},
    {10, "scale ladder identities on randomized parameters", criterion10},
    {11, "variance-swap envelope on the radial solver", criterion11},
    {12, "bitwise reproducibility of experiment outputs", criterion12},
};

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

    int failures = 0, ran = 0;
    const auto t0 = Clock::now();
    for (const Criterion& c : kCriteria) {
        if (!wanted.empty() &&
            std::find(wanted.begin(), wanted.end(), c.id) == wanted.end())
            continue;
        ++ran;
        Outcome out;
        try {
            out = c.run();
        } catch (const Error& e) {
            out = {false, std::string("error: ") + e.what()};
        } catch (const std::exception& e) {
            out = {false, std::string("unexpected error: ") + e.what()};
        }
        if (!out.pass) ++failures;
        std::cout << (out.pass ? "PASS" : "FAIL") << std::setw(3) << c.id << ": "
                  << c.label << " | " << out.detail << std::endl;
    }
    std::cout << "acceptance: " << (ran - failures) << "/" << ran
              << " criteria passed in " << fmt(elapsed_s(t0), 4) << " s" << std::endl;
    return failures == 0 ? 0 : 1;
}
