#pragma once
// Experiment driver: exit-functional estimation on the dilated domain,
// exit-time tail curves, discrete-vs-continuous stopping comparisons,
// boundary-barrier statistics, the homogenization-rate study with log-log
// fitting, and the stage-by-stage representation audit.  Every experiment
// is reproducible from its manifest: all randomness flows from the master
// seed through fixed stream assignments, and results are independent of
// the worker-thread count.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rehom/analytic.hpp"
#include "rehom/config.hpp"
#include "rehom/domain.hpp"
#include "rehom/environment.hpp"
#include "rehom/errors.hpp"
#include "rehom/renorm.hpp"
#include "rehom/schedule.hpp"
#include "rehom/vecmat.hpp"

namespace rehom {

// A closed-form test function together with its exact constants, so error
// envelopes are evaluable without numerical differentiation.
struct NamedFunction {
    std::string name;
    std::function<double(const Vec&)> fn;
    double sup_norm = 0.0;  // exact sup |f|
    double lip = 0.0;       // exact Lipschitz constant
    bool radial = false;    // depends on |x| only (enables 1-d references)

    double operator()(const Vec& x) const { return fn(x); }
    // Modulus of continuity at separation r (Lipschitz ramp capped by 2 sup).
    double modulus(double r) const;
};

// Registry of boundary data f and sources g: constants, a smoothly clipped
// coordinate, a radial bump.  Throws InvalidSpec for unknown names.
const NamedFunction& named_function(const std::string& name);
std::vector<std::string> named_function_list();

struct ExperimentConfig {
    std::string experiment = "rate";
    EnvSpec env;
    Domain domain = Domain::ball(1.0);
    ScaleParams schedule;
    std::vector<double> epsilons = {1.0 / 25.0, 1.0 / 35.0, 1.0 / 50.0};
    std::vector<double> dts = {0.1};  // per-epsilon step sizes (broadcast if single)
    std::int64_t paths = 10000;
    std::int64_t alpha_paths = 2000;
    int alpha_scale = 0;     // ladder row used for the diffusivity estimate
    int query_per_axis = 3;  // query grid resolution per axis
    int ref_cells = 32;      // mesh for the comparison solution
    double horizon_factor = 4.0;  // walk horizon in units of L_{n+2}^2
    std::string f_name = "zero";
    std::string g_name = "neg_one";
    std::string out_dir = ".";
    std::uint64_t seed = 1;
    int threads = 1;

    // Epsilons strictly decreasing, every 1/eps inside the ladder span,
    // dts broadcastable, registry names known, counts positive.
    void validate(const ScaleTable& table) const;
    double dt_for(std::size_t eps_index) const;
};

ExperimentConfig experiment_from_config(const ConfigMap& cfg);

// Deepest ladder that brackets every epsilon with two spare rows above it.
// Inadmissible parameters fail as in build_schedule; a ladder that cannot
// reach some 1/eps before 128-bit overflow reports OutOfRange.
ScaleTable spanning_table(const ScaleParams& params, const std::vector<double>& epsilons);

// Deterministic query grid: the points of a per-axis lattice over the
// bounding box that land inside the closed domain.
std::vector<Vec> query_grid(const Domain& domain, int d, int per_axis);

// ---------------------------------------------------------------------------
// Exit functional

struct FunctionalEstimate {
    std::vector<double> value;
    std::vector<double> stderr_;
    std::vector<std::int64_t> truncated;  // per query: paths that hit the horizon
    std::int64_t paths = 0;
    bool flagged = false;  // some query truncated more than 0.1% of its paths
};

// Monte Carlo estimate at each macroscopic query point of
//   E[ f(eps X_exit) - eps^2 * integral of g(eps X_s) up to the exit ]
// for the quenched walk on the 1/eps-dilated domain.  Paths still inside
// at the horizon contribute their truncated value and are counted; more
// than 5% of them at any query raises HorizonDominated.
FunctionalEstimate exit_functional(const Environment& env, const Domain& domain,
                                   double epsilon, const NamedFunction& f,
                                   const NamedFunction& g, const std::vector<Vec>& queries,
                                   std::int64_t paths, double dt, double horizon,
                                   std::uint64_t seed, int threads = 1);

// ---------------------------------------------------------------------------
// Exit-time tails

struct TailCurve {
    int n = 0;          // ladder row bracketing 1/eps
    double unit = 0.0;  // L_{n+2}^2, the tail time unit
    std::vector<double> k;
    std::vector<double> exceedance;  // P(exit time > k * unit), pooled
    std::vector<double> stderr_;
    double log_slope = 0.0;  // least-squares slope of log P against k >= 1
    std::int64_t paths = 0;  // per start point
};

// Pooled exceedance over the start points at k = 0..k_max (k = 0 is the
// exact row 1).  Exceedance is non-increasing in k by construction.
TailCurve exit_tail_curve(const Environment& env, const Domain& domain, double epsilon,
                          const ScaleTable& table, int k_max,
                          const std::vector<Vec>& starts, std::int64_t paths, double dt,
                          std::uint64_t seed, int threads = 1);

// ---------------------------------------------------------------------------
// Boundary barrier

struct BarrierReport {
    int n = 0;
    double threshold = 0.0;  // L_{n-1}^2
    std::int64_t paths = 0;
    // P(exit - first-near-boundary-time >= threshold), among paths where
    // both fired, with a binomial error bar.
    double exceed = 0.0, exceed_se = 0.0;
    std::int64_t both_fired = 0;
    // Brownian analogue started within 2 D~_ref of the complement.
    double brown_exceed = 0.0, brown_se = 0.0;
    // Ordering audit over fired paths.
    double order_ok_fraction = 0.0;     // tau1 <= tau2 among paths where both fired
    double tilde_after_exit = 0.0;      // fraction with skeleton exit >= continuous exit
    std::int64_t tau1_positive = 0;     // paths whose near-boundary time is > 0
};

BarrierReport boundary_barrier_report(const Environment& env, const Domain& domain,
                                      double epsilon, const ScaleTable& table,
                                      const Vec& start_macro, std::int64_t paths, double dt,
                                      std::uint64_t seed, int threads = 1);

// ---------------------------------------------------------------------------
// Convergence-rate study

struct RatePoint {
    double epsilon = 0.0;
    int n = 0;
    double sup_error = 0.0;  // max over the query grid vs the reference mesh
    double error_bar = 0.0;  // max stderr over the grid
    bool usable = true;
};

struct RateReport {
    std::vector<RatePoint> points;
    double alpha_bar = 1.0, alpha_se = 0.0;
    int alpha_scale = 0;
    double slope = 0.0;          // fitted d log(err) / d log(eps)
    double slope_ci_half = 0.0;  // 95% half-width
    bool fit_ok = false;
    std::vector<Vec> queries;
};

// For each epsilon: exit functional on the query grid against the
// fixed-coefficient reference solution at the measured diffusivity, then a
// weighted log-log fit of the sup errors.  FitUnstable when fewer than 3
// epsilons survive.
RateReport convergence_rate_experiment(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Representation audit

struct AuditStage {
    std::string name;
    double value = 0.0, stderr_ = 0.0;
    double diff = 0.0, diff_se = 0.0;  // against the previous stage
    double allowance = 0.0;            // analytic envelope entering `within`
    bool within = true;                // |diff| <= allowance + 3 diff_se
};

struct AuditReport {
    std::vector<AuditStage> stages;  // raw, truncated, riemann, kernel_chain, brownian
    double riemann_envelope = 0.0;   // Lipschitz + stride-rounding allowance
    std::int64_t paths = 0;
    std::int64_t chain_no_exit = 0;  // kernel chains still inside at the step cap
};

// Recomputes the exit functional through its discretization ladder: exact
// horizon, truncated horizon, skeleton Riemann sum for the running
// integral, kernel-chain replacement of the skeleton, and the Brownian
// unwind at the measured diffusivity.  Successive differences carry error
// bars; the Riemann stage also carries its Lipschitz/rounding envelope.
AuditReport representation_audit(const Environment& env, const Domain& domain,
                                 double epsilon, const ScaleTable& table,
                                 const NamedFunction& f, const NamedFunction& g,
                                 const Vec& start_macro, std::int64_t paths, double dt,
                                 double alpha_hat, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Reporting

void write_functional_csv(const std::vector<Vec>& queries, const FunctionalEstimate& est,
                          std::ostream& os);
void write_tail_csv(const TailCurve& curve, std::ostream& os);
void write_rate_csv(const RateReport& report, std::ostream& os);
void write_audit_csv(const AuditReport& report, std::ostream& os);
// Full provenance record (config, seed, outputs) as JSON.
std::string manifest_json(const ExperimentConfig& cfg,
                          const std::vector<std::string>& outputs);
// Self-contained plot script for the rate study.
std::string rate_plot_script(const std::string& csv_name);

// Deterministic worker pool: splits [0, total) into fixed 256-sized blocks
// and runs fn(block_begin, block_end, block_index); results must be merged
// by block index so the outcome is independent of the thread count.
void parallel_blocks(std::int64_t total, int threads,
                     const std::function<void(std::int64_t, std::int64_t, std::int64_t)>& fn);

}  // namespace rehom
