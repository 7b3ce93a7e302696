#include "rehom/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "rehom/rng.hpp"

namespace rehom {

namespace {

constexpr int kSubSteps = 256;

// Stream roles inside one coupling transition.  The two draw sides get
// batch-sized stream ranges; shared-noise mode points side B at side A's
// range so both kernels integrate the same increments.
std::uint64_t draw_stream_base(std::uint64_t block, int side) {
    return stream_id(StreamTag::kCouple, block, static_cast<std::uint64_t>(side), 0);
}
std::uint64_t pick_stream(std::uint64_t block) {
    return stream_id(StreamTag::kCouple, block, 3, 1);
}

struct Accum {
    std::int64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;
    void add(double v) {
        ++count;
        const double d1 = v - mean;
        mean += d1 / static_cast<double>(count);
        m2 += d1 * (v - mean);
    }
    double stderr_of_mean() const {
        if (count < 2) return 0.0;
        return std::sqrt(std::max(m2, 0.0) /
                         (static_cast<double>(count - 1) * static_cast<double>(count)));
    }
};

// Exact assignment via shortest augmenting paths with potentials; O(n^3).
std::vector<int> hungarian(const std::vector<double>& a, int n) {
    const double inf = 1e300;
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> match(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] > 0) match[p[j] - 1] = j - 1;
    return match;
}

// Cheap fallback above the exact-size cap: take pairs in ascending cost
// order, skipping used rows/columns.
std::vector<int> greedy_match(const std::vector<double>& a, int n) {
    std::vector<int> order(static_cast<std::size_t>(n) * n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) { return a[x] < a[y]; });
    std::vector<int> match(n, -1);
    std::vector<char> col_used(n, 0);
    int assigned = 0;
    for (int idx : order) {
        const int i = idx / n, j = idx % n;
        if (match[i] >= 0 || col_used[j]) continue;
        match[i] = j;
        col_used[j] = 1;
        if (++assigned == n) break;
    }
    return match;
}

}  // namespace

KernelSampler KernelSampler::quenched(const Environment& env, double step_time) {
    if (!(step_time > 0.0)) throw InvalidParams("KernelSampler: step_time must be positive");
    KernelSampler k;
    k.env_ = &env;
    k.d_ = env.spec().d;
    k.step_time_ = step_time;
    return k;
}

KernelSampler KernelSampler::gaussian(double alpha, int d, double step_time) {
    if (!(alpha > 0.0)) throw InvalidParams("KernelSampler: alpha must be positive");
    if (!(step_time > 0.0)) throw InvalidParams("KernelSampler: step_time must be positive");
    if (d < 1 || d > kMaxDim) throw InvalidParams("KernelSampler: unsupported dimension");
    KernelSampler k;
    k.alpha_ = alpha;
    k.d_ = d;
    k.step_time_ = step_time;
    return k;
}

Vec KernelSampler::draw_one(const Vec& x, std::uint64_t seed, std::uint64_t stream) const {
    if (x.n != d_) throw InvalidParams("KernelSampler: start dimension mismatch");
    NoiseCursor cur(seed, stream);
    const double dt = step_time_ / kSubSteps;
    const double sdt = std::sqrt(dt);
    Vec pos = x;
    Vec z(d_);
    if (env_ != nullptr && !env_->is_trivial()) {
        Mat sigma(d_);
        Vec b(d_);
        for (int s = 0; s < kSubSteps; ++s) {
            env_->eval(pos, nullptr, &sigma, &b);
            cur.fill_normal(z);
            const Vec sz = sigma.mul(z);
            for (int i = 0; i < d_; ++i) pos[i] += b[i] * dt + sdt * sz[i];
        }
    } else {
        // Trivial environment and the Gaussian kernel share this branch, so
        // shared streams yield bitwise-equal endpoints when alpha == 1.
        const double scale = sdt * std::sqrt(env_ != nullptr ? 1.0 : alpha_);
        for (int s = 0; s < kSubSteps; ++s) {
            cur.fill_normal(z);
            for (int i = 0; i < d_; ++i) pos[i] += scale * z[i];
        }
    }
    return pos;
}

std::vector<Vec> KernelSampler::draw(const Vec& x, int count, std::uint64_t seed,
                                     std::uint64_t stream_base) const {
    if (count < 1) throw InvalidParams("KernelSampler: count must be positive");
    std::vector<Vec> out;
    out.reserve(count);
    for (int j = 0; j < count; ++j)
        out.push_back(draw_one(x, seed, stream_base + static_cast<std::uint64_t>(j)));
    return out;
}

std::vector<int> min_cost_matching(const std::vector<double>& cost, int n) {
    if (n < 1) throw InvalidParams("min_cost_matching: empty problem");
    if (cost.size() != static_cast<std::size_t>(n) * n)
        throw InvalidParams("min_cost_matching: cost matrix size mismatch");
    for (double c : cost)
        if (!std::isfinite(c)) throw InvalidParams("min_cost_matching: non-finite cost");
    return n <= 64 ? hungarian(cost, n) : greedy_match(cost, n);
}

CoupleStep couple_step(const KernelSampler& ka, const KernelSampler& kb, const Vec& x,
                       const Vec& y, double ref_len, double beta, int batch,
                       bool shared_noise, std::uint64_t seed, std::uint64_t block) {
    if (batch < 2 || batch > 4096) throw InvalidParams("couple_step: batch must be in [2,4096]");
    if (!(ref_len > 0.0)) throw InvalidParams("couple_step: ref_len must be positive");
    if (!(beta > 0.0 && beta <= 1.0))
        throw InvalidParams("couple_step: beta must lie in (0,1]");
    if (ka.dim() != kb.dim() || x.n != ka.dim() || y.n != ka.dim())
        throw InvalidParams("couple_step: dimension mismatch");
    if (std::abs(ka.step_time() - kb.step_time()) >
        1e-9 * std::max(ka.step_time(), kb.step_time()))
        throw InvalidParams("couple_step: kernels must share the step time");

    const std::vector<Vec> a = ka.draw(x, batch, seed, draw_stream_base(block, 0));
    const std::vector<Vec> b = kb.draw(y, batch, seed, draw_stream_base(block, shared_noise ? 0 : 1));

    std::vector<double> cost(static_cast<std::size_t>(batch) * batch);
    for (int i = 0; i < batch; ++i)
        for (int j = 0; j < batch; ++j)
            cost[static_cast<std::size_t>(i) * batch + j] =
                std::pow(dist(a[i], b[j]) / ref_len, beta);
    const std::vector<int> match = min_cost_matching(cost, batch);

    double total = 0.0;
    for (int i = 0; i < batch; ++i) total += cost[static_cast<std::size_t>(i) * batch + match[i]];

    NoiseCursor pick_cur(seed, pick_stream(block));
    int pick = static_cast<int>(pick_cur.uniform() * batch);
    pick = std::min(pick, batch - 1);

    CoupleStep out;
    out.x = a[pick];
    out.y = b[match[pick]];
    out.pair_dist = dist(out.x, out.y);
    out.picked_cost = cost[static_cast<std::size_t>(pick) * batch + match[pick]];
    out.mean_matched_cost = total / batch;
    return out;
}

CoupledChain run_coupled_chain(const KernelSampler& ka, const KernelSampler& kb,
                               const ScaleTable& table, int n, const Vec& x0,
                               const ChainOptions& opt) {
    if (opt.steps < 1) throw InvalidParams("run_coupled_chain: need at least one step");
    const int ref_row = table.discretization_row(n);
    const double ref_len = static_cast<double>(table.row(ref_row).L);
    const double want_time = ref_len * ref_len;
    if (std::abs(ka.step_time() - want_time) > 1e-6 * want_time ||
        std::abs(kb.step_time() - want_time) > 1e-6 * want_time)
        throw InvalidParams("run_coupled_chain: kernel step time must equal ref_len^2");
    // Two rows of headroom bound the transition budget.
    const double top = static_cast<double>(table.row(n + 2).L);
    const double cap = 2.0 * (top / ref_len) * (top / ref_len);
    if (static_cast<double>(opt.steps) > cap)
        throw InvalidParams("run_coupled_chain: chain length exceeds the scale budget");
    if (x0.n != ka.dim()) throw InvalidParams("run_coupled_chain: start dimension mismatch");

    CoupledChain chain;
    chain.id = opt.chain_id;
    Vec x = x0, y = x0;
    for (int k = 0; k < opt.steps; ++k) {
        const std::uint64_t block =
            opt.chain_id * static_cast<std::uint64_t>(opt.steps) + static_cast<std::uint64_t>(k);
        const CoupleStep step = couple_step(ka, kb, x, y, ref_len, table.params.beta,
                                            opt.batch, opt.shared_noise, opt.seed, block);
        x = step.x;
        y = step.y;
        ChainStep rec;
        rec.k = k;
        rec.pair_dist = step.pair_dist;
        rec.picked_cost = step.picked_cost;
        rec.mean_matched_cost = step.mean_matched_cost;
        chain.steps.push_back(rec);
        chain.max_pair_dist = std::max(chain.max_pair_dist, step.pair_dist);
        chain.sum_picked_cost += step.picked_cost;
        if (opt.gamma > 0.0 && chain.failure_step < 0 && step.pair_dist >= opt.gamma)
            chain.failure_step = k;
    }
    return chain;
}

double coupling_failure_rate(const std::vector<CoupledChain>& chains, double gamma) {
    if (!(gamma > 0.0)) throw InvalidParams("coupling_failure_rate: gamma must be positive");
    if (chains.size() < 30)
        throw TooFewChains("coupling_failure_rate: need at least 30 chains");
    std::size_t failed = 0;
    for (const CoupledChain& c : chains) failed += c.max_pair_dist >= gamma ? 1 : 0;
    return static_cast<double>(failed) / static_cast<double>(chains.size());
}

ChebyshevCheck coupling_chebyshev(const std::vector<CoupledChain>& chains, double gamma,
                                  double ref_len, double beta) {
    if (!(ref_len > 0.0) || !(beta > 0.0) || beta > 1.0)
        throw InvalidParams("coupling_chebyshev: bad metric parameters");
    const double rate = coupling_failure_rate(chains, gamma);
    Accum acc;
    for (const CoupledChain& c : chains) acc.add(c.sum_picked_cost);
    ChebyshevCheck out;
    out.lhs = rate * std::pow(gamma / ref_len, beta);
    out.rhs = acc.mean;
    out.margin = 2.0 * acc.stderr_of_mean();
    out.pass = out.lhs <= out.rhs + out.margin;
    return out;
}

void write_chain_csv(const std::vector<CoupledChain>& chains, std::ostream& os) {
    os << "chain,K,max_pair_dist,failure_step\n";
    std::ostringstream line;
    line << std::setprecision(17);
    for (const CoupledChain& c : chains) {
        line.str("");
        line << c.id << ',' << c.steps.size() << ',' << c.max_pair_dist << ','
             << c.failure_step << '\n';
        os << line.str();
    }
}

double ks_statistic_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw InvalidParams("ks_statistic_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double dmax = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j])
            ++i;
        else
            ++j;
        dmax = std::max(dmax, std::abs(static_cast<double>(i) / a.size() -
                                       static_cast<double>(j) / b.size()));
    }
    return dmax;
}

double ks_statistic_one_sample(std::vector<double> x,
                               const std::function<double(double)>& cdf) {
    if (x.empty()) throw InvalidParams("ks_statistic_one_sample: empty sample");
    if (!cdf) throw InvalidParams("ks_statistic_one_sample: empty cdf");
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double dmax = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        dmax = std::max(dmax, std::max(f - static_cast<double>(i) / n,
                                       static_cast<double>(i + 1) / n - f));
    }
    return dmax;
}

namespace {
double ks_coefficient(double level) {
    if (!(level > 0.0) || !(level < 1.0))
        throw InvalidParams("ks critical value: level must lie in (0,1)");
    return std::sqrt(-0.5 * std::log(0.5 * level));
}
}  // namespace

double ks_critical_two_sample(std::size_t na, std::size_t nb, double level) {
    if (na == 0 || nb == 0) throw InvalidParams("ks_critical_two_sample: empty sample");
    const double fa = static_cast<double>(na), fb = static_cast<double>(nb);
    return ks_coefficient(level) * std::sqrt((fa + fb) / (fa * fb));
}

double ks_critical_one_sample(std::size_t n, double level) {
    if (n == 0) throw InvalidParams("ks_critical_one_sample: empty sample");
    return ks_coefficient(level) / std::sqrt(static_cast<double>(n));
}

}  // namespace rehom
