#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "rehom/coupling.hpp"
#include "rehom/environment.hpp"
#include "rehom/rng.hpp"
#include "rehom/schedule.hpp"

using namespace rehom;

namespace {

Vec vec3(double a, double b, double c) {
    Vec v(3);
    v[0] = a;
    v[1] = b;
    v[2] = c;
    return v;
}

EnvSpec trivial_spec() {
    EnvSpec s;
    s.d = 3;
    s.eta = 0.0;
    s.kernel_radius = 0.5;
    s.lattice_spacing = 0.5;
    s.range_R = 1.5;
    s.seed = 3;
    return s;
}

double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

double matching_total(const std::vector<double>& cost, const std::vector<int>& match, int n) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += cost[static_cast<std::size_t>(i) * n + match[i]];
    return total;
}

bool is_permutation_of_range(const std::vector<int>& match, int n) {
    std::vector<char> seen(n, 0);
    for (int m : match) {
        if (m < 0 || m >= n || seen[m]) return false;
        seen[m] = 1;
    }
    return true;
}

}  // namespace

TEST_CASE("matching: hand-solved 3x3 instance") {
    // Optimal assignment 0->1, 1->0, 2->2 with total 1 + 2 + 2 = 5.
    const std::vector<double> cost = {4, 1, 3,  //
                                      2, 0, 5,  //
                                      3, 2, 2};
    const std::vector<int> match = min_cost_matching(cost, 3);
    CHECK(match[0] == 1);
    CHECK(match[1] == 0);
    CHECK(match[2] == 2);
    CHECK(matching_total(cost, match, 3) == doctest::Approx(5.0));

    // Zero diagonal forces the identity.
    std::vector<double> diag(16, 1.0);
    for (int i = 0; i < 4; ++i) diag[static_cast<std::size_t>(i) * 4 + i] = 0.0;
    const std::vector<int> id = min_cost_matching(diag, 4);
    for (int i = 0; i < 4; ++i) CHECK(id[i] == i);
}

TEST_CASE("matching: one-dimensional optimum is the sorted coupling") {
    // On the line, the minimum-cost matching under |a - b| pairs order
    // statistics; the exact solver must reproduce that total.
    NoiseCursor cur(17, stream_id(StreamTag::kGeneric, 1));
    for (int rep = 0; rep < 5; ++rep) {
        const int n = 24;
        std::vector<double> a(n), b(n);
        for (int i = 0; i < n; ++i) a[i] = cur.normal();
        for (int i = 0; i < n; ++i) b[i] = cur.normal() + 0.5;
        std::vector<double> cost(static_cast<std::size_t>(n) * n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                cost[static_cast<std::size_t>(i) * n + j] = std::abs(a[i] - b[j]);
        const std::vector<int> match = min_cost_matching(cost, n);
        CHECK(is_permutation_of_range(match, n));

        std::vector<double> sa = a, sb = b;
        std::sort(sa.begin(), sa.end());
        std::sort(sb.begin(), sb.end());
        double sorted_total = 0.0;
        for (int i = 0; i < n; ++i) sorted_total += std::abs(sa[i] - sb[i]);
        CHECK(matching_total(cost, match, n) == doctest::Approx(sorted_total).epsilon(1e-12));
    }
}

TEST_CASE("matching: shifted-gaussian batch cost sits near the mean shift") {
    NoiseCursor cur(29, stream_id(StreamTag::kGeneric, 2));
    const int n = 64;
    double mean_cost = 0.0;
    const int reps = 20;
    for (int rep = 0; rep < reps; ++rep) {
        std::vector<double> cost(static_cast<std::size_t>(n) * n);
        std::vector<double> a(n), b(n);
        for (int i = 0; i < n; ++i) a[i] = cur.normal();
        for (int i = 0; i < n; ++i) b[i] = cur.normal() + 0.5;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                cost[static_cast<std::size_t>(i) * n + j] = std::abs(a[i] - b[j]);
        mean_cost += matching_total(cost, min_cost_matching(cost, n), n) / n;
    }
    mean_cost /= reps;
    CHECK(mean_cost > 0.45);
    CHECK(mean_cost < 0.62);
}

TEST_CASE("matching: large batches fall back to a valid greedy assignment") {
    NoiseCursor cur(31, stream_id(StreamTag::kGeneric, 3));
    const int n = 80;
    std::vector<double> cost(static_cast<std::size_t>(n) * n);
    for (double& c : cost) c = cur.uniform();
    const std::vector<int> match = min_cost_matching(cost, n);
    CHECK(is_permutation_of_range(match, n));

    CHECK_THROWS_AS(min_cost_matching({1.0, 2.0}, 2), InvalidParams);  // wrong size
    CHECK_THROWS_AS(min_cost_matching({std::nan("")}, 1), InvalidParams);
}

TEST_CASE("kernel sampler: gaussian endpoint moments") {
    const KernelSampler k = KernelSampler::gaussian(0.8, 3, 4.0);
    const Vec x0 = vec3(1, -2, 0.5);
    const int n = 1500;
    std::vector<Vec> ends = k.draw(x0, n, 7, stream_id(StreamTag::kGeneric, 9));
    const double want_var = 0.8 * 4.0;
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (const Vec& e : ends) mean += e[c];
        mean /= n;
        for (const Vec& e : ends) var += (e[c] - mean) * (e[c] - mean);
        var /= n - 1;
        CHECK(std::abs(mean - x0[c]) < 4.0 * std::sqrt(want_var / n));
        CHECK(std::abs(var - want_var) < 4.0 * want_var * std::sqrt(2.0 / n));
    }
}

TEST_CASE("kernel sampler: trivial environment equals the unit gaussian kernel") {
    const Environment env(trivial_spec());
    const KernelSampler kq = KernelSampler::quenched(env, 625.0);
    const KernelSampler kg = KernelSampler::gaussian(1.0, 3, 625.0);
    const Vec x0 = vec3(3, 4, -1);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Vec a = kq.draw_one(x0, 11, 1000 + s);
        const Vec b = kg.draw_one(x0, 11, 1000 + s);
        CHECK(dist(a, b) == 0.0);  // same stream, same branch, bitwise equal
    }
    CHECK_THROWS_AS(KernelSampler::gaussian(0.0, 3, 1.0), InvalidParams);
    CHECK_THROWS_AS(KernelSampler::gaussian(1.0, 3, 0.0), InvalidParams);
    CHECK_THROWS_AS(KernelSampler::gaussian(1.0, 99, 1.0), InvalidParams);
}

TEST_CASE("couple step: shared noise couples a trivial environment exactly") {
    const Environment env(trivial_spec());
    const KernelSampler kq = KernelSampler::quenched(env, 625.0);
    const KernelSampler kg = KernelSampler::gaussian(1.0, 3, 625.0);
    const Vec x0 = vec3(0, 0, 0);
    const CoupleStep s = couple_step(kq, kg, x0, x0, 25.0, 0.5, 8, true, 5, 0);
    CHECK(s.pair_dist == 0.0);
    CHECK(s.mean_matched_cost == 0.0);
    CHECK(s.picked_cost == 0.0);
}

TEST_CASE("couple step: independent marginals stay exact") {
    // Both sides are unit-variance kernels over t = 1 from different
    // starts; after the matching and the uniform pick, each marginal must
    // still be the untouched kernel law.
    const KernelSampler k = KernelSampler::gaussian(1.0, 3, 1.0);
    const Vec x0 = vec3(0, 0, 0), y0 = vec3(2, 0, 0);
    const int reps = 300;
    std::vector<double> xs, ys;
    for (int r = 0; r < reps; ++r) {
        const CoupleStep s = couple_step(k, k, x0, y0, 1.0, 0.5, 8, false, 41,
                                         static_cast<std::uint64_t>(r));
        xs.push_back(s.x[0]);
        ys.push_back(s.y[0]);
    }
    const double dx = ks_statistic_one_sample(xs, [](double t) { return normal_cdf(t); });
    const double dy = ks_statistic_one_sample(ys, [](double t) { return normal_cdf(t - 2.0); });
    const double crit = ks_critical_one_sample(reps, 0.01);
    CHECK(dx < crit);
    CHECK(dy < crit);
}

TEST_CASE("couple step: translation equivariance of the gaussian coupling") {
    const KernelSampler k = KernelSampler::gaussian(1.0, 3, 1.0);
    const Vec x0 = vec3(0, 0, 0), y0 = vec3(1, 0, 0);
    const Vec h = vec3(5, -3, 2);
    Vec x1 = x0, y1 = y0;
    x1 += h;
    y1 += h;
    const CoupleStep a = couple_step(k, k, x0, y0, 1.0, 0.5, 8, false, 13, 4);
    const CoupleStep b = couple_step(k, k, x1, y1, 1.0, 0.5, 8, false, 13, 4);
    // Identical increments, shifted starts: the picked pair shifts rigidly.
    Vec ax = a.x, ay = a.y;
    ax += h;
    ay += h;
    CHECK(dist(ax, b.x) < 1e-12);
    CHECK(dist(ay, b.y) < 1e-12);
    CHECK(a.pair_dist == doctest::Approx(b.pair_dist).epsilon(1e-12));
    CHECK(a.mean_matched_cost == doctest::Approx(b.mean_matched_cost).epsilon(1e-12));
}

TEST_CASE("couple step: larger batches match tighter") {
    const KernelSampler k = KernelSampler::gaussian(1.0, 3, 1.0);
    const Vec x0 = vec3(0, 0, 0);
    auto mean_cost = [&](int batch) {
        double total = 0.0;
        const int reps = 40;
        for (int r = 0; r < reps; ++r)
            total += couple_step(k, k, x0, x0, 1.0, 0.5, batch, false, 59,
                                 static_cast<std::uint64_t>(r))
                         .mean_matched_cost;
        return total / reps;
    };
    const double c4 = mean_cost(4);
    const double c32 = mean_cost(32);
    CHECK(c32 < c4);

    CHECK_THROWS_AS(couple_step(k, k, x0, x0, 1.0, 0.5, 1, false, 1, 0), InvalidParams);
    CHECK_THROWS_AS(couple_step(k, k, x0, x0, 0.0, 0.5, 4, false, 1, 0), InvalidParams);
    CHECK_THROWS_AS(couple_step(k, k, x0, x0, 1.0, 1.5, 4, false, 1, 0), InvalidParams);
    const KernelSampler other = KernelSampler::gaussian(1.0, 3, 2.0);
    CHECK_THROWS_AS(couple_step(k, other, x0, x0, 1.0, 0.5, 4, false, 1, 0), InvalidParams);
}

TEST_CASE("coupled chain: self-coupling under shared noise never separates") {
    const Environment env(trivial_spec());
    const ScaleTable table = build_schedule(ScaleParams{}, 3);
    const KernelSampler kq = KernelSampler::quenched(env, 625.0);
    const KernelSampler kg = KernelSampler::gaussian(1.0, 3, 625.0);
    ChainOptions opt;
    opt.steps = 6;
    opt.batch = 8;
    opt.gamma = 25.0;
    opt.shared_noise = true;
    opt.seed = 21;
    const CoupledChain chain = run_coupled_chain(kq, kg, table, 0, vec3(0, 0, 0), opt);
    REQUIRE(chain.steps.size() == 6);
    CHECK(chain.max_pair_dist == 0.0);
    CHECK(chain.failure_step == -1);
    CHECK(chain.sum_picked_cost == 0.0);
    for (const ChainStep& s : chain.steps) CHECK(s.pair_dist == 0.0);
}

TEST_CASE("coupled chain: scale budget and step-time validation") {
    const Environment env(trivial_spec());
    const ScaleTable table = build_schedule(ScaleParams{}, 3);
    const KernelSampler kq = KernelSampler::quenched(env, 625.0);
    const KernelSampler kg = KernelSampler::gaussian(1.0, 3, 625.0);
    ChainOptions opt;
    opt.steps = 5001;  // cap is 2 (1250/25)^2 = 5000
    CHECK_THROWS_AS(run_coupled_chain(kq, kg, table, 0, vec3(0, 0, 0), opt), InvalidParams);

    const KernelSampler bad = KernelSampler::gaussian(1.0, 3, 100.0);
    ChainOptions ok;
    ok.steps = 2;
    CHECK_THROWS_AS(run_coupled_chain(kq, bad, table, 0, vec3(0, 0, 0), ok), InvalidParams);

    // Two rows of headroom are required: n = 2 needs row 4 in a depth-4 table.
    CHECK_THROWS_AS(run_coupled_chain(kq, kg, table, 2, vec3(0, 0, 0), ok), OutOfRange);
}

TEST_CASE("failure rate: thresholding, counting, and the chain floor") {
    std::vector<CoupledChain> chains(40);
    for (std::size_t i = 0; i < chains.size(); ++i) {
        chains[i].id = i;
        chains[i].max_pair_dist = static_cast<double>(i);  // 0, 1, ..., 39
    }
    CHECK(coupling_failure_rate(chains, 20.0) == doctest::Approx(0.5));
    CHECK(coupling_failure_rate(chains, 39.0) == doctest::Approx(1.0 / 40.0));
    // Monotone in the threshold by construction.
    CHECK(coupling_failure_rate(chains, 10.0) >= coupling_failure_rate(chains, 30.0));

    CHECK_THROWS_AS(coupling_failure_rate(chains, 0.0), InvalidParams);
    chains.resize(29);
    CHECK_THROWS_AS(coupling_failure_rate(chains, 1.0), TooFewChains);
}

TEST_CASE("chebyshev consistency on real chains") {
    const ScaleTable table = build_schedule(ScaleParams{}, 3);
    const Environment env(trivial_spec());
    const double ref = 25.0;
    const KernelSampler kq = KernelSampler::quenched(env, ref * ref);
    const KernelSampler kg = KernelSampler::gaussian(1.0, 3, ref * ref);

    // Independent noise: the pair wanders apart on the kernel scale, the
    // matched costs are positive, and the Markov bound must cover the
    // realized failure rate for any threshold.
    std::vector<CoupledChain> chains;
    for (int c = 0; c < 32; ++c) {
        ChainOptions opt;
        opt.steps = 4;
        opt.batch = 8;
        opt.shared_noise = false;
        opt.seed = 77;
        opt.chain_id = static_cast<std::uint64_t>(c);
        chains.push_back(run_coupled_chain(kq, kg, table, 0, vec3(0, 0, 0), opt));
    }
    for (double gamma : {10.0, 25.0, 60.0}) {
        const ChebyshevCheck chk = coupling_chebyshev(chains, gamma, ref, 0.5);
        CHECK(chk.pass);
        CHECK(chk.rhs > 0.0);
    }

    // Shared noise: every term is exactly zero and the bound is tight.
    std::vector<CoupledChain> tight;
    for (int c = 0; c < 32; ++c) {
        ChainOptions opt;
        opt.steps = 4;
        opt.batch = 8;
        opt.shared_noise = true;
        opt.seed = 78;
        opt.chain_id = static_cast<std::uint64_t>(c);
        tight.push_back(run_coupled_chain(kq, kg, table, 0, vec3(0, 0, 0), opt));
    }
    const ChebyshevCheck z = coupling_chebyshev(tight, 25.0, ref, 0.5);
    CHECK(z.lhs == 0.0);
    CHECK(z.rhs == 0.0);
    CHECK(z.pass);
}

TEST_CASE("chain csv: shape and determinism") {
    std::vector<CoupledChain> chains(2);
    chains[0].id = 0;
    chains[0].steps.resize(3);
    chains[0].max_pair_dist = 1.25;
    chains[0].failure_step = 2;
    chains[1].id = 1;
    chains[1].steps.resize(3);
    chains[1].max_pair_dist = 0.5;
    chains[1].failure_step = -1;

    std::ostringstream os;
    write_chain_csv(chains, os);
    const std::string text = os.str();
    std::istringstream is(text);
    std::string line;
    std::getline(is, line);
    CHECK(line == "chain,K,max_pair_dist,failure_step");
    std::getline(is, line);
    CHECK(line == "0,3,1.25,2");
    std::getline(is, line);
    CHECK(line == "1,3,0.5,-1");

    std::ostringstream os2;
    write_chain_csv(chains, os2);
    CHECK(os2.str() == text);
}

TEST_CASE("ks helpers: statistics and critical values") {
    // Equal samples: the statistic collapses to the 1/n staircase gap.
    std::vector<double> a(100), b(100);
    for (int i = 0; i < 100; ++i) a[i] = b[i] = static_cast<double>(i);
    CHECK(ks_statistic_two_sample(a, b) <= 0.01 + 1e-12);

    // Disjoint supports: the statistic saturates at 1.
    for (int i = 0; i < 100; ++i) b[i] = 1000.0 + i;
    CHECK(ks_statistic_two_sample(a, b) == doctest::Approx(1.0));

    // A same-law pair stays under the 1% critical value.
    NoiseCursor cur(97, stream_id(StreamTag::kGeneric, 4));
    std::vector<double> u(400), v(400);
    for (auto& t : u) t = cur.normal();
    for (auto& t : v) t = cur.normal();
    CHECK(ks_statistic_two_sample(u, v) < ks_critical_two_sample(400, 400, 0.01));
    CHECK(ks_statistic_one_sample(u, [](double t) { return normal_cdf(t); }) <
          ks_critical_one_sample(400, 0.01));

    // A mean shift of one standard deviation is detected at n = 400.
    for (auto& t : v) t += 1.0;
    CHECK(ks_statistic_two_sample(u, v) > ks_critical_two_sample(400, 400, 0.01));

    // Exact uniform staircase: D = 1/(2n).
    std::vector<double> grid(50);
    for (int i = 0; i < 50; ++i) grid[i] = (i + 0.5) / 50.0;
    CHECK(ks_statistic_one_sample(grid, [](double t) { return t; }) ==
          doctest::Approx(0.01).epsilon(1e-12));

    // c(0.01) = sqrt(-ln(0.005)/2) = 1.6276...
    CHECK(ks_critical_one_sample(100, 0.01) == doctest::Approx(0.16276).epsilon(1e-3));
    CHECK(ks_critical_two_sample(100, 100, 0.01) ==
          doctest::Approx(1.6276 * std::sqrt(0.02)).epsilon(1e-3));
    CHECK_THROWS_AS(ks_critical_one_sample(0, 0.01), InvalidParams);
    CHECK_THROWS_AS(ks_critical_two_sample(10, 10, 0.0), InvalidParams);
    CHECK_THROWS_AS(ks_statistic_two_sample({}, {1.0}), InvalidParams);
}
