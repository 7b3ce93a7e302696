#pragma once
// One-step kernel coupling at a reference scale: samplers for the quenched
// and Gaussian transition kernels over a square time step, cost-minimizing
// batch matching under the rescaled Holder metric, coupled chains, and the
// failure-rate / tail-consistency diagnostics built on them.
//
// Every kernel draw integrates exactly 256 Euler sub-steps, so a draw is a
// pure function of (seed, stream): two samplers handed the same stream ids
// consume identical Gaussian increments.  That shared-noise mode makes the
// coupling of a trivial environment against its own Gaussian limit exact;
// independent streams give the honest two-marginal coupling.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "rehom/environment.hpp"
#include "rehom/errors.hpp"
#include "rehom/schedule.hpp"
#include "rehom/vecmat.hpp"

namespace rehom {

class KernelSampler {
  public:
    // Endpoint law of the quenched walk run for `step_time` (256 sub-steps).
    static KernelSampler quenched(const Environment& env, double step_time);
    // Endpoint law of the Brownian walk with the given per-coordinate
    // variance rate, same sub-stepping.
    static KernelSampler gaussian(double alpha, int d, double step_time);

    int dim() const { return d_; }
    double step_time() const { return step_time_; }

    // One endpoint started at x, driven by the noise stream (seed, stream).
    Vec draw_one(const Vec& x, std::uint64_t seed, std::uint64_t stream) const;
    // Draws with streams stream_base + 0 .. stream_base + count - 1.
    std::vector<Vec> draw(const Vec& x, int count, std::uint64_t seed,
                          std::uint64_t stream_base) const;

  private:
    KernelSampler() = default;
    const Environment* env_ = nullptr;  // borrowed, not owned
    double alpha_ = 1.0;
    int d_ = 0;
    double step_time_ = 0.0;
};

// Minimum-total-cost perfect matching of an n x n cost matrix (row-major).
// Exact (Hungarian) for n <= 64; above that a sorted greedy assignment,
// whose cost can exceed the optimum but never by re-using a row or column.
// Returns match[row] = column.
std::vector<int> min_cost_matching(const std::vector<double>& cost, int n);

struct CoupleStep {
    Vec x, y;                       // picked endpoint pair
    double pair_dist = 0.0;         // |x - y|
    double picked_cost = 0.0;       // (pair_dist / ref_len)^beta
    double mean_matched_cost = 0.0;  // average cost across the matching
};

// One coupling transition: draw `batch` endpoints from each kernel, match
// them at minimum total cost under (|a - b| / ref_len)^beta, then pick one
// matched pair uniformly.  The uniform pick keeps both marginals exact.
// `block` separates the noise of different transitions; shared_noise hands
// both kernels the same streams.
CoupleStep couple_step(const KernelSampler& ka, const KernelSampler& kb, const Vec& x,
                       const Vec& y, double ref_len, double beta, int batch,
                       bool shared_noise, std::uint64_t seed, std::uint64_t block);

struct ChainStep {
    int k = 0;
    double pair_dist = 0.0;
    double picked_cost = 0.0;
    double mean_matched_cost = 0.0;
};

struct CoupledChain {
    std::uint64_t id = 0;
    std::vector<ChainStep> steps;
    double max_pair_dist = 0.0;
    double sum_picked_cost = 0.0;
    int failure_step = -1;  // first step with pair_dist >= gamma; -1 if none
};

struct ChainOptions {
    int steps = 8;          // chain length K
    int batch = 16;         // draws per side per transition, >= 2
    double gamma = 0.0;     // failure threshold on |x_k - y_k|; 0 disables
    bool shared_noise = false;
    std::uint64_t seed = 1;
    std::uint64_t chain_id = 0;
};

// Runs K coupling transitions from the diagonal start (x0, x0).  The
// reference length is the scale of the discretization row attached to n;
// both kernels must carry step time ref_len^2.  K is capped by
// 2 (L_{n+2} / ref_len)^2: longer chains leave the regime the transition
// count was budgeted for.
CoupledChain run_coupled_chain(const KernelSampler& ka, const KernelSampler& kb,
                               const ScaleTable& table, int n, const Vec& x0,
                               const ChainOptions& opt);

// Fraction of chains whose maximal pair distance reached gamma.  Requires
// at least 30 chains (TooFewChains below that: the rate would carry no
// resolution).
double coupling_failure_rate(const std::vector<CoupledChain>& chains, double gamma);

struct ChebyshevCheck {
    double lhs = 0.0;     // rate * (gamma / ref_len)^beta
    double rhs = 0.0;     // mean over chains of the summed picked cost
    double margin = 0.0;  // 2 * stderr of the rhs estimate
    bool pass = false;
};

// Markov-inequality consistency of the failure rate against the realized
// chain costs: P(max dist >= gamma) (gamma/L)^beta <= E sum_k cost_k.
ChebyshevCheck coupling_chebyshev(const std::vector<CoupledChain>& chains, double gamma,
                                  double ref_len, double beta);

// CSV rows "chain,K,max_pair_dist,failure_step".
void write_chain_csv(const std::vector<CoupledChain>& chains, std::ostream& os);

// Kolmogorov-Smirnov machinery for the marginal audits.
double ks_statistic_two_sample(std::vector<double> a, std::vector<double> b);
double ks_statistic_one_sample(std::vector<double> x,
                               const std::function<double(double)>& cdf);
// Critical values at the given level (asymptotic): reject when the
// statistic exceeds them.
double ks_critical_two_sample(std::size_t na, std::size_t nb, double level = 0.01);
double ks_critical_one_sample(std::size_t n, double level = 0.01);

}  // namespace rehom
