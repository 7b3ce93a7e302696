#pragma once
// Euler-Maruyama simulation of the quenched diffusion
//
//   X_{t+dt} = X_t + b(X_t) dt + sigma(X_t) sqrt(dt) Z,   Z ~ N(0, I),
//
// and of centered Brownian motion with variance alpha per unit time
// (b = 0, sigma = sqrt(alpha) I, for which the Gaussian increments are
// exact in law).  A walk carries a set of stopping rules evaluated in a
// fixed order after every step -- excursion stop, continuous exit, then
// skeleton (discrete-time) rules -- so simultaneous triggers resolve
// deterministically.  Exit detection is a per-step membership check with
// no bridge correction; its bias is controlled experimentally by halving
// dt.
//
// Paths never retain full trajectories.  They keep running accumulators
// (maximal excursion, a trapezoidal line integral of a caller-supplied
// integrand, per-step displacement totals) plus position snapshots at
// multiples of record_stride, which is all the discrete-stopping and
// audit machinery needs at 1e5+ paths.

#include <cstdint>
#include <functional>
#include <vector>

#include "rehom/domain.hpp"
#include "rehom/environment.hpp"
#include "rehom/errors.hpp"
#include "rehom/schedule.hpp"
#include "rehom/vecmat.hpp"

namespace rehom {

struct SimConfig {
    double dt = 0.01;
    double max_time = 1e6;
    // Skeleton spacing: positions are retained at times 0, h, 2h, ... and
    // discrete rules are evaluated there.  0 disables recording.  Must be
    // an integer multiple of dt.
    double record_stride = 0.0;
    std::uint64_t seed = 1;
    std::uint64_t path_index = 0;

    // Throws InvalidParams unless 0 < dt <= 0.1, max_time > 0, the step
    // count fits in a 64-bit integer, and record_stride is a multiple of dt.
    void validate() const;
    std::int64_t step_count() const;         // round(max_time / dt)
    std::int64_t steps_per_record() const;   // round(record_stride / dt), 0 if none
};

// Which rules must fire before the walk may stop (the excursion stop and
// the horizon always terminate regardless).
enum : unsigned {
    kRuleExit = 1u,
    kRuleTau1 = 2u,
    kRuleTau2 = 4u,
    kRuleTilde = 8u,
};

struct StoppingRules {
    // Continuous exit: first step with X outside this open set.
    const Domain* exit_domain = nullptr;
    // Excursion stop: first time the running maximum X*_t reaches the
    // threshold; fires terminally (the walk is the stopped process).
    double excursion_threshold = 0.0;
    // Skeleton rules, evaluated at multiples of record_stride:
    //   tau1: d(X, complement of exit_domain) <= near_complement
    //   tau2: d(X, exit_domain)               >= beyond_domain
    //   tilde: X outside exit_domain
    double near_complement = 0.0;
    double beyond_domain = 0.0;
    bool discrete_exit = false;
    // Rules that must all fire before stopping; 0 means "exit rule if one
    // is installed, otherwise run to the horizon".
    unsigned required = 0;

    unsigned effective_required() const {
        if (required != 0) return required;
        return exit_domain != nullptr ? kRuleExit : 0u;
    }
};

struct RuleHit {
    bool fired = false;
    double time = 0.0;
    Vec pos;
};

struct StoppedPath {
    Vec x0;
    Vec x_final;
    double t_final = 0.0;
    double max_excursion = 0.0;  // sup_{s <= t} |X_s - x0|, sampled at steps

    RuleHit exit;       // continuous exit
    RuleHit excursion;  // excursion threshold crossing
    RuleHit tau1;       // skeleton: near the complement
    RuleHit tau2;       // skeleton: beyond the domain
    RuleHit tilde;      // skeleton: outside the domain

    // True when some required rule was still pending at max_time.  This is
    // a flagged outcome, not an exception: estimators must count and
    // report such paths.
    bool horizon_exceeded = false;

    // Accumulated until the continuous exit fires (whole path if no exit
    // rule is installed).
    double g_integral = 0.0;          // trapezoidal integral of the integrand
    double step_excursion_sum = 0.0;  // sum of per-step displacements
    std::int64_t steps_to_exit = 0;

    std::int64_t steps = 0;
    std::vector<Vec> skeleton;  // positions at 0, h, 2h, ...
    double record_stride = 0.0;
};

using Integrand = std::function<double(const Vec&)>;

/// Quenched walk in the given environment.
StoppedPath simulate_quenched(const Environment& env, const Vec& x0, const SimConfig& cfg,
                              const StoppingRules& rules, const Integrand& integrand = {});

/// Brownian walk with variance alpha per unit time (exact increments).
StoppedPath simulate_wiener(double alpha, const Vec& x0, const SimConfig& cfg,
                            const StoppingRules& rules, const Integrand& integrand = {});

struct SkeletonStops {
    RuleHit tau1, tau2, tilde;
};

/// Re-derives the three skeleton stopping times of a recorded path against
/// the discretization row attached to scale n of the table: the skeleton
/// spacing is L^2 and the neighborhood width is D-tilde of that row.
/// Throws NotRecorded when the path's skeleton is missing or its stride
/// does not match.
SkeletonStops discrete_stop_times(const StoppedPath& path, const ScaleTable& table, int n,
                                  const Domain& microscopic_domain);

}  // namespace rehom
