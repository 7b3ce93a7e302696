#include "rehom/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "rehom/coupling.hpp"
#include "rehom/rng.hpp"
#include "rehom/walk.hpp"

namespace rehom {

namespace {

// Streaming mean/variance (Welford), mergeable in a fixed block order so
// estimates are bitwise independent of the worker-thread count.
struct Accum {
    std::int64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double v) {
        ++count;
        const double d = v - mean;
        mean += d / static_cast<double>(count);
        m2 += d * (v - mean);
    }
    void merge(const Accum& o) {
        if (o.count == 0) return;
        if (count == 0) {
            *this = o;
            return;
        }
        const double d = o.mean - mean;
        const std::int64_t n = count + o.count;
        mean += d * static_cast<double>(o.count) / static_cast<double>(n);
        m2 += o.m2 + d * d * static_cast<double>(count) * static_cast<double>(o.count) /
                         static_cast<double>(n);
        count = n;
    }
    double stderr_mean() const {
        if (count < 2) return 0.0;
        const double nn = static_cast<double>(count);
        return std::sqrt(std::max(0.0, m2) / (nn * (nn - 1.0)));
    }
};

double binom_se(double p, std::int64_t n) {
    if (n <= 0) return 0.0;
    return std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(n));
}

Vec scaled(const Vec& x, double s) {
    Vec y = x;
    y *= s;
    return y;
}

double row_len(const ScaleTable& table, int n) {
    return static_cast<double>(table.row(n).L);
}

}  // namespace

ScaleTable spanning_table(const ScaleParams& params, const std::vector<double>& epsilons) {
    ScaleTable table = build_schedule(params, 3);
    int n_max = 3;
    for (;;) {
        bool spans = true;
        try {
            for (double eps : epsilons) table.row(table.locate_scale(eps) + 2);
        } catch (const OutOfRange&) {
            spans = false;
        }
        if (spans) return table;
        if (n_max >= 14) throw OutOfRange("schedule: ladder cannot bracket every epsilon");
        ++n_max;
        try {
            table = build_schedule(params, n_max);
        } catch (const InvalidParams&) {
            throw OutOfRange("schedule: ladder overflows before bracketing epsilon");
        }
    }
}

namespace {

void check_start_inside(const Domain& domain, const Vec& x, const char* who) {
    if (x.n <= 0 || x.n > kMaxDim) throw InvalidParams(std::string(who) + ": bad point dimension");
    if (!(domain.signed_dist(x) < 0.0))
        throw InvalidParams(std::string(who) + ": start point is not inside the domain");
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::string item;
    std::istringstream is(text);
    while (std::getline(is, item, ',')) {
        if (item.find_first_not_of(" \t") == std::string::npos) continue;
        out.push_back(std::stod(item));
    }
    return out;
}

// Weighted least squares of y against x; returns {slope, se(slope)} under
// the per-point known-variance model.
std::pair<double, double> wls_slope(const std::vector<double>& x, const std::vector<double>& y,
                                    const std::vector<double>& w) {
    double sw = 0.0, sx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        sx += w[i] * x[i];
    }
    const double xbar = sx / sw;
    double sxx = 0.0, sxy = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sy += w[i] * y[i];
    const double ybar = sy / sw;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += w[i] * (x[i] - xbar) * (x[i] - xbar);
        sxy += w[i] * (x[i] - xbar) * (y[i] - ybar);
    }
    if (!(sxx > 0.0)) throw FitUnstable("rate fit: query abscissae are degenerate");
    return {sxy / sxx, 1.0 / std::sqrt(sxx)};
}

}  // namespace

// ---------------------------------------------------------------------------
// Function registry

double NamedFunction::modulus(double r) const {
    if (!(r >= 0.0)) throw InvalidParams("modulus: negative separation");
    return std::min(2.0 * sup_norm, lip * r);
}

namespace {

std::map<std::string, NamedFunction> make_registry() {
    std::map<std::string, NamedFunction> reg;
    reg["zero"] = {"zero", [](const Vec&) { return 0.0; }, 0.0, 0.0, true};
    reg["one"] = {"one", [](const Vec&) { return 1.0; }, 1.0, 0.0, true};
    reg["neg_one"] = {"neg_one", [](const Vec&) { return -1.0; }, 1.0, 0.0, true};
    // 2 tanh(x1 / 2): bounded odd coordinate function, |f| < 2, |f'| <= 1.
    reg["coord_clip"] = {"coord_clip",
                         [](const Vec& x) { return 2.0 * std::tanh(0.5 * x[0]); }, 2.0, 1.0,
                         false};
    // exp(-|x|^2): radial bump, Lipschitz constant sqrt(2/e) at |x| = 1/sqrt(2).
    reg["radial_bump"] = {"radial_bump", [](const Vec& x) { return std::exp(-x.norm2()); }, 1.0,
                          std::sqrt(2.0 / std::exp(1.0)), true};
    return reg;
}

const std::map<std::string, NamedFunction>& registry() {
    static const std::map<std::string, NamedFunction> reg = make_registry();
    return reg;
}

}  // namespace

const NamedFunction& named_function(const std::string& name) {
    const auto& reg = registry();
    auto it = reg.find(name);
    if (it == reg.end()) throw InvalidSpec("named_function: unknown name '" + name + "'");
    return it->second;
}

std::vector<std::string> named_function_list() {
    std::vector<std::string> names;
    for (const auto& kv : registry()) names.push_back(kv.first);
    return names;
}

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate(const ScaleTable& table) const {
    if (experiment.empty()) throw InvalidParams("config: empty experiment name");
    env.validate();
    if (paths <= 0 || alpha_paths <= 0) throw InvalidParams("config: path counts must be positive");
    if (query_per_axis < 2) throw InvalidParams("config: query_per_axis must be at least 2");
    if (ref_cells < 8) throw InvalidParams("config: ref_cells must be at least 8");
    if (!(horizon_factor > 0.0)) throw InvalidParams("config: horizon_factor must be positive");
    if (threads < 1) throw InvalidParams("config: threads must be at least 1");
    if (alpha_scale < 0 || alpha_scale >= table.depth())
        throw InvalidParams("config: alpha_scale outside the ladder");
    if (epsilons.empty()) throw InvalidParams("config: no epsilons");
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
        if (!(epsilons[i] > 0.0 && epsilons[i] < 1.0))
            throw InvalidParams("config: epsilon must lie in (0, 1)");
        if (i > 0 && !(epsilons[i] < epsilons[i - 1]))
            throw InvalidParams("config: epsilons must be strictly decreasing");
        const int n = table.locate_scale(epsilons[i]);  // OutOfRange if unbracketed
        table.row(n + 2);                               // tail/horizon unit must exist
    }
    if (dts.size() != 1 && dts.size() != epsilons.size())
        throw InvalidParams("config: dts must broadcast or match epsilons");
    for (double dt : dts)
        if (!(dt > 0.0 && dt <= 0.1)) throw InvalidParams("config: dt outside (0, 0.1]");
    named_function(f_name);
    named_function(g_name);
}

double ExperimentConfig::dt_for(std::size_t eps_index) const {
    if (dts.size() == 1) return dts[0];
    return dts.at(eps_index);
}

ExperimentConfig experiment_from_config(const ConfigMap& cfg) {
    ExperimentConfig out;
    out.experiment = cfg_string(cfg, "experiment", out.experiment);
    out.env = envspec_from_config(cfg);
    out.domain = domain_from_config(cfg);
    out.schedule.d = out.env.d;
    out.schedule.beta = cfg_double(cfg, "schedule.beta", out.schedule.beta);
    out.schedule.a = cfg_double(cfg, "schedule.a", out.schedule.a);
    out.schedule.L0 = cfg_u64(cfg, "schedule.L0", out.schedule.L0);
    out.schedule.c0 = cfg_double(cfg, "schedule.c0", out.schedule.c0);
    out.schedule.strict_exponent =
        cfg_bool(cfg, "schedule.strict_exponent", out.schedule.strict_exponent);
    if (cfg_has(cfg, "epsilons")) out.epsilons = parse_list(cfg_string(cfg, "epsilons", ""));
    if (cfg_has(cfg, "dts")) out.dts = parse_list(cfg_string(cfg, "dts", ""));
    out.paths = cfg_int(cfg, "paths", out.paths);
    out.alpha_paths = cfg_int(cfg, "alpha_paths", out.alpha_paths);
    out.alpha_scale = static_cast<int>(cfg_int(cfg, "alpha_scale", out.alpha_scale));
    out.query_per_axis = static_cast<int>(cfg_int(cfg, "query_per_axis", out.query_per_axis));
    out.ref_cells = static_cast<int>(cfg_int(cfg, "ref_cells", out.ref_cells));
    out.horizon_factor = cfg_double(cfg, "horizon_factor", out.horizon_factor);
    out.f_name = cfg_string(cfg, "f", out.f_name);
    out.g_name = cfg_string(cfg, "g", out.g_name);
    out.out_dir = cfg_string(cfg, "out_dir", out.out_dir);
    out.seed = cfg_u64(cfg, "seed", out.seed);
    out.threads = static_cast<int>(cfg_int(cfg, "threads", out.threads));
    return out;
}

std::vector<Vec> query_grid(const Domain& domain, int d, int per_axis) {
    if (d < 1 || d > kMaxDim) throw InvalidParams("query_grid: dimension outside [1, 8]");
    if (per_axis < 2) throw InvalidParams("query_grid: per_axis must be at least 2");
    const double r = domain.bounding_radius();
    const double lo = -0.9 * r;
    const double step = 1.8 * r / static_cast<double>(per_axis - 1);
    std::vector<Vec> grid;
    std::array<int, kMaxDim> idx{};
    const double slack = 1e-9 * r;
    for (;;) {
        Vec x(d);
        for (int i = 0; i < d; ++i) x[i] = lo + step * idx[i];
        if (domain.signed_dist(x) <= slack) grid.push_back(x);
        int i = 0;
        while (i < d && ++idx[i] == per_axis) idx[i++] = 0;
        if (i == d) break;
    }
    if (grid.empty()) throw InvalidParams("query_grid: no lattice point lands in the domain");
    return grid;
}

// ---------------------------------------------------------------------------
// Worker pool

void parallel_blocks(std::int64_t total, int threads,
                     const std::function<void(std::int64_t, std::int64_t, std::int64_t)>& fn) {
    if (total <= 0) return;
    if (threads < 1) throw InvalidParams("parallel_blocks: threads must be at least 1");
    constexpr std::int64_t kBlock = 256;
    const std::int64_t n_blocks = (total + kBlock - 1) / kBlock;
    if (threads == 1 || n_blocks == 1) {
        for (std::int64_t b = 0; b < n_blocks; ++b)
            fn(b * kBlock, std::min(total, (b + 1) * kBlock), b);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    auto worker = [&]() {
        for (;;) {
            const std::int64_t b = next.fetch_add(1);
            if (b >= n_blocks) return;
            try {
                fn(b * kBlock, std::min(total, (b + 1) * kBlock), b);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    const int n_workers = static_cast<int>(std::min<std::int64_t>(threads, n_blocks));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Exit functional

FunctionalEstimate exit_functional(const Environment& env, const Domain& domain, double epsilon,
                                   const NamedFunction& f, const NamedFunction& g,
                                   const std::vector<Vec>& queries, std::int64_t paths, double dt,
                                   double horizon, std::uint64_t seed, int threads) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidParams("exit_functional: bad epsilon");
    if (paths < 2) throw InvalidParams("exit_functional: needs at least 2 paths");
    if (!(horizon > 0.0)) throw InvalidParams("exit_functional: horizon must be positive");
    if (queries.empty()) throw InvalidParams("exit_functional: no query points");
    const double slack = 1e-9 * domain.bounding_radius();
    for (const Vec& q : queries) {
        if (q.n != env.spec().d) throw InvalidParams("exit_functional: query dimension mismatch");
        if (domain.signed_dist(q) > slack)
            throw InvalidParams("exit_functional: query outside the closed domain");
    }

    const Domain big = domain.dilate_by(1.0 / epsilon);
    const double eps2 = epsilon * epsilon;
    Integrand micro_g = [&](const Vec& x) { return g(scaled(x, epsilon)); };

    FunctionalEstimate est;
    est.paths = paths;
    est.value.resize(queries.size());
    est.stderr_.resize(queries.size());
    est.truncated.assign(queries.size(), 0);

    constexpr std::int64_t kBlock = 256;
    const std::int64_t n_blocks = (paths + kBlock - 1) / kBlock;
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        const Vec x0 = scaled(queries[qi], 1.0 / epsilon);
        std::vector<Accum> acc(static_cast<std::size_t>(n_blocks));
        std::vector<std::int64_t> trunc(static_cast<std::size_t>(n_blocks), 0);
        parallel_blocks(paths, threads, [&](std::int64_t b0, std::int64_t b1, std::int64_t bi) {
            StoppingRules rules;
            rules.exit_domain = &big;
            SimConfig cfg;
            cfg.dt = dt;
            cfg.max_time = horizon;
            cfg.seed = seed;
            for (std::int64_t p = b0; p < b1; ++p) {
                cfg.path_index = static_cast<std::uint64_t>(qi) * static_cast<std::uint64_t>(paths) +
                                 static_cast<std::uint64_t>(p);
                const StoppedPath path = simulate_quenched(env, x0, cfg, rules, micro_g);
                const double v = f(scaled(path.x_final, epsilon)) - eps2 * path.g_integral;
                acc[static_cast<std::size_t>(bi)].add(v);
                if (path.horizon_exceeded) ++trunc[static_cast<std::size_t>(bi)];
            }
        });
        Accum total;
        std::int64_t t_count = 0;
        for (std::int64_t b = 0; b < n_blocks; ++b) {
            total.merge(acc[static_cast<std::size_t>(b)]);
            t_count += trunc[static_cast<std::size_t>(b)];
        }
        est.value[qi] = total.mean;
        est.stderr_[qi] = total.stderr_mean();
        est.truncated[qi] = t_count;
        const double frac = static_cast<double>(t_count) / static_cast<double>(paths);
        if (frac > 0.001) est.flagged = true;
        if (frac > 0.05) {
            std::ostringstream msg;
            msg << "exit_functional: " << 100.0 * frac << "% of paths never exited at query "
                << qi;
            throw HorizonDominated(msg.str());
        }
    }
    return est;
}

// ---------------------------------------------------------------------------
// Exit-time tails

TailCurve exit_tail_curve(const Environment& env, const Domain& domain, double epsilon,
                          const ScaleTable& table, int k_max, const std::vector<Vec>& starts,
                          std::int64_t paths, double dt, std::uint64_t seed, int threads) {
    if (k_max < 1) throw InvalidParams("exit_tail_curve: k_max must be at least 1");
    if (starts.empty()) throw InvalidParams("exit_tail_curve: no start points");
    if (paths < 2) throw InvalidParams("exit_tail_curve: needs at least 2 paths");
    for (const Vec& s : starts) check_start_inside(domain, s, "exit_tail_curve");

    TailCurve curve;
    curve.n = table.locate_scale(epsilon);
    const double len = row_len(table, curve.n + 2);
    curve.unit = len * len;
    curve.paths = paths;

    const Domain big = domain.dilate_by(1.0 / epsilon);
    const std::int64_t total = static_cast<std::int64_t>(starts.size()) * paths;
    constexpr std::int64_t kBlock = 256;
    const std::int64_t n_blocks = (paths + kBlock - 1) / kBlock;

    // counts[k] = number of paths with exit time > k * unit, pooled.
    std::vector<std::int64_t> counts(static_cast<std::size_t>(k_max) + 1, 0);
    counts[0] = total;  // exit times are positive, so the k = 0 row is exact
    for (std::size_t si = 0; si < starts.size(); ++si) {
        const Vec x0 = scaled(starts[si], 1.0 / epsilon);
        std::vector<std::vector<std::int64_t>> blk(
            static_cast<std::size_t>(n_blocks),
            std::vector<std::int64_t>(static_cast<std::size_t>(k_max), 0));
        parallel_blocks(paths, threads, [&](std::int64_t b0, std::int64_t b1, std::int64_t bi) {
            StoppingRules rules;
            rules.exit_domain = &big;
            SimConfig cfg;
            cfg.dt = dt;
            cfg.max_time = static_cast<double>(k_max) * curve.unit;
            cfg.seed = seed;
            auto& mine = blk[static_cast<std::size_t>(bi)];
            for (std::int64_t p = b0; p < b1; ++p) {
                cfg.path_index = static_cast<std::uint64_t>(si) * static_cast<std::uint64_t>(paths) +
                                 static_cast<std::uint64_t>(p);
                const StoppedPath path = simulate_quenched(env, x0, cfg, rules, {});
                const double tau =
                    path.exit.fired ? path.exit.time : std::numeric_limits<double>::infinity();
                for (int k = 1; k <= k_max; ++k)
                    if (tau > static_cast<double>(k) * curve.unit) ++mine[static_cast<std::size_t>(k - 1)];
            }
        });
        for (std::int64_t b = 0; b < n_blocks; ++b)
            for (int k = 1; k <= k_max; ++k)
                counts[static_cast<std::size_t>(k)] +=
                    blk[static_cast<std::size_t>(b)][static_cast<std::size_t>(k - 1)];
    }

    curve.k.resize(static_cast<std::size_t>(k_max) + 1);
    curve.exceedance.resize(static_cast<std::size_t>(k_max) + 1);
    curve.stderr_.resize(static_cast<std::size_t>(k_max) + 1);
    for (int k = 0; k <= k_max; ++k) {
        const double p = static_cast<double>(counts[static_cast<std::size_t>(k)]) /
                         static_cast<double>(total);
        curve.k[static_cast<std::size_t>(k)] = static_cast<double>(k);
        curve.exceedance[static_cast<std::size_t>(k)] = p;
        curve.stderr_[static_cast<std::size_t>(k)] = (k == 0) ? 0.0 : binom_se(p, total);
    }

    // Geometric fit: least squares of log P against k over the positive rows.
    std::vector<double> xs, ys, ws;
    for (int k = 1; k <= k_max; ++k) {
        const double p = curve.exceedance[static_cast<std::size_t>(k)];
        if (p > 0.0) {
            xs.push_back(static_cast<double>(k));
            ys.push_back(std::log(p));
            ws.push_back(1.0);
        }
    }
    if (xs.size() >= 2) curve.log_slope = wls_slope(xs, ys, ws).first;
    return curve;
}

// ---------------------------------------------------------------------------
// Boundary barrier

namespace {

// Point at the given depth inside the domain along the +e1 ray from x0:
// bisects the first sign change of the signed distance along the ray.
Vec boundary_offset_point(const Domain& big, const Vec& x0, double depth) {
    Vec dir(x0.n);
    dir[0] = 1.0;
    double t_lo = 0.0;
    double t_hi = 0.0;
    const double reach = 2.2 * big.bounding_radius();
    const int coarse = 4096;
    bool found = false;
    for (int i = 1; i <= coarse; ++i) {
        const double t = reach * static_cast<double>(i) / coarse;
        if (big.signed_dist(x0 + dir * t) >= 0.0) {
            t_hi = t;
            t_lo = reach * static_cast<double>(i - 1) / coarse;
            found = true;
            break;
        }
    }
    if (!found) throw InvalidParams("barrier: ray never leaves the domain");
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (t_lo + t_hi);
        if (big.signed_dist(x0 + dir * mid) >= 0.0)
            t_hi = mid;
        else
            t_lo = mid;
    }
    const double t_in = std::max(0.0, t_lo - depth);
    return x0 + dir * t_in;
}

}  // namespace

BarrierReport boundary_barrier_report(const Environment& env, const Domain& domain,
                                      double epsilon, const ScaleTable& table,
                                      const Vec& start_macro, std::int64_t paths, double dt,
                                      std::uint64_t seed, int threads) {
    if (paths < 2) throw InvalidParams("barrier: needs at least 2 paths");
    check_start_inside(domain, start_macro, "barrier");
    BarrierReport rep;
    rep.n = table.locate_scale(epsilon);
    if (rep.n < 1)
        throw InvalidParams("barrier: epsilon sits on the bottom ladder row, no finer scale");
    const double prev_len = row_len(table, rep.n - 1);
    rep.threshold = prev_len * prev_len;
    rep.paths = paths;
    const int ref = table.discretization_row(rep.n);
    const double ref_len = row_len(table, ref);
    const double stride = ref_len * ref_len;
    const double d_tilde = table.row(ref).D_tilde;
    const double horizon_len = row_len(table, rep.n + 2);
    const double horizon = 4.0 * horizon_len * horizon_len;

    const Domain big = domain.dilate_by(1.0 / epsilon);
    const Vec x0 = scaled(start_macro, 1.0 / epsilon);

    constexpr std::int64_t kBlock = 256;
    const std::int64_t n_blocks = (paths + kBlock - 1) / kBlock;
    struct Counts {
        std::int64_t both = 0, exceed = 0, pair12 = 0, order_ok = 0;
        std::int64_t exit_tilde = 0, tilde_ok = 0, tau1_pos = 0;
    };
    std::vector<Counts> blk(static_cast<std::size_t>(n_blocks));
    parallel_blocks(paths, threads, [&](std::int64_t b0, std::int64_t b1, std::int64_t bi) {
        StoppingRules rules;
        rules.exit_domain = &big;
        rules.near_complement = d_tilde;
        rules.beyond_domain = d_tilde;
        rules.discrete_exit = true;
        rules.required = kRuleExit | kRuleTau1 | kRuleTau2 | kRuleTilde;
        SimConfig cfg;
        cfg.dt = dt;
        cfg.max_time = horizon;
        cfg.record_stride = stride;
        cfg.seed = seed;
        Counts& c = blk[static_cast<std::size_t>(bi)];
        for (std::int64_t p = b0; p < b1; ++p) {
            cfg.path_index = static_cast<std::uint64_t>(p);
            const StoppedPath path = simulate_quenched(env, x0, cfg, rules, {});
            if (path.tau1.fired && path.tau1.time > 0.0) ++c.tau1_pos;
            if (path.exit.fired && path.tau1.fired) {
                ++c.both;
                if (path.exit.time - path.tau1.time >= rep.threshold) ++c.exceed;
            }
            if (path.tau1.fired && path.tau2.fired) {
                ++c.pair12;
                if (path.tau1.time <= path.tau2.time) ++c.order_ok;
            }
            if (path.exit.fired && path.tilde.fired) {
                ++c.exit_tilde;
                if (path.tilde.time >= path.exit.time) ++c.tilde_ok;
            }
        }
    });
    Counts tot;
    for (const Counts& c : blk) {
        tot.both += c.both;
        tot.exceed += c.exceed;
        tot.pair12 += c.pair12;
        tot.order_ok += c.order_ok;
        tot.exit_tilde += c.exit_tilde;
        tot.tilde_ok += c.tilde_ok;
        tot.tau1_pos += c.tau1_pos;
    }
    rep.both_fired = tot.both;
    rep.exceed = tot.both > 0 ? static_cast<double>(tot.exceed) / static_cast<double>(tot.both) : 0.0;
    rep.exceed_se = binom_se(rep.exceed, tot.both);
    rep.order_ok_fraction =
        tot.pair12 > 0 ? static_cast<double>(tot.order_ok) / static_cast<double>(tot.pair12) : 1.0;
    rep.tilde_after_exit = tot.exit_tilde > 0
                               ? static_cast<double>(tot.tilde_ok) / static_cast<double>(tot.exit_tilde)
                               : 1.0;
    rep.tau1_positive = tot.tau1_pos;

    // Brownian analogue: exit-time exceedance from a start placed within
    // 2 D~_ref of the complement (clamped to half the bounding radius so the
    // point exists at desk scales).
    const double depth = std::min(2.0 * d_tilde, 0.5 * big.bounding_radius());
    const Vec xb = boundary_offset_point(big, x0, depth);
    std::vector<std::int64_t> bexc(static_cast<std::size_t>(n_blocks), 0);
    parallel_blocks(paths, threads, [&](std::int64_t b0, std::int64_t b1, std::int64_t bi) {
        StoppingRules rules;
        rules.exit_domain = &big;
        SimConfig cfg;
        cfg.dt = dt;
        cfg.max_time = horizon;
        cfg.seed = seed;
        for (std::int64_t p = b0; p < b1; ++p) {
            cfg.path_index = static_cast<std::uint64_t>(paths + p);
            const StoppedPath path = simulate_wiener(1.0, xb, cfg, rules, {});
            const double tau =
                path.exit.fired ? path.exit.time : std::numeric_limits<double>::infinity();
            if (tau >= rep.threshold) ++bexc[static_cast<std::size_t>(bi)];
        }
    });
    std::int64_t bex = 0;
    for (std::int64_t v : bexc) bex += v;
    rep.brown_exceed = static_cast<double>(bex) / static_cast<double>(paths);
    rep.brown_se = binom_se(rep.brown_exceed, paths);
    return rep;
}

// ---------------------------------------------------------------------------
// Convergence-rate study

RateReport convergence_rate_experiment(const ExperimentConfig& cfg) {
    const ScaleTable table = spanning_table(cfg.schedule, cfg.epsilons);
    cfg.validate(table);
    Environment env(cfg.env);
    const int d = cfg.env.d;
    if (!env.is_trivial()) {
        // Cache the node noise over the largest microscopic domain (plus the
        // alpha-estimation excursion range) once, instead of hashing nodes on
        // demand inside every walk step.  Values are identical either way.
        const double eps_min = *std::min_element(cfg.epsilons.begin(), cfg.epsilons.end());
        const double micro = cfg.domain.bounding_radius() / eps_min;
        // The alpha walks live within a few root-time radii of the origin;
        // the occasional farther node falls back to the on-demand path.
        const double alpha_reach =
            4.0 * static_cast<double>(table.row(cfg.alpha_scale).L) * std::sqrt(double(d));
        const double reach = std::max(micro, alpha_reach) + 2.0 * cfg.env.lattice_spacing;
        Vec lo(d), hi(d);
        for (int i = 0; i < d; ++i) {
            lo[i] = -reach;
            hi[i] = reach;
        }
        try {
            env.prepare_box(lo, hi);
        } catch (const InvalidParams&) {
            // Region too large to cache at this lattice spacing; the walks
            // simply evaluate nodes on demand.
        }
    }
    const NamedFunction& f = named_function(cfg.f_name);
    const NamedFunction& g = named_function(cfg.g_name);

    RateReport rep;
    rep.alpha_scale = cfg.alpha_scale;
    const AlphaEstimate ae =
        estimate_alpha(env, table, cfg.alpha_scale, static_cast<int>(cfg.alpha_paths), 0.1,
                       cfg.seed + 0x9E3779B97F4A7C15ull);
    rep.alpha_bar = ae.value;
    rep.alpha_se = ae.stderr_;
    rep.queries = query_grid(cfg.domain, d, cfg.query_per_axis);

    // Comparison solution at the measured diffusivity.  Radial data on a
    // ball or annulus use the 1-d solver (much tighter than the mesh).
    const bool radial_case =
        f.radial && g.radial &&
        (cfg.domain.kind() == DomainKind::kBall || cfg.domain.kind() == DomainKind::kAnnulus);
    std::vector<double> ref_vals(rep.queries.size());
    if (radial_case) {
        Vec outer(d);
        outer[0] = cfg.domain.outer_radius();
        Vec inner(d);
        inner[0] = cfg.domain.inner_radius();
        const RadialSolution radial_ref(
            cfg.domain, d, rep.alpha_bar,
            [&](double r) {
                Vec x(d);
                x[0] = r;
                return g(x);
            },
            f(outer), cfg.domain.kind() == DomainKind::kAnnulus ? f(inner) : 0.0, 4096);
        for (std::size_t qi = 0; qi < rep.queries.size(); ++qi)
            ref_vals[qi] = radial_ref.value(rep.queries[qi].norm());
    } else {
        const GridSolution grid_ref(cfg.domain, d, rep.alpha_bar, g.fn, f.fn, cfg.ref_cells);
        for (std::size_t qi = 0; qi < rep.queries.size(); ++qi)
            ref_vals[qi] = grid_ref.value(rep.queries[qi]);
    }

    for (std::size_t i = 0; i < cfg.epsilons.size(); ++i) {
        const double eps = cfg.epsilons[i];
        RatePoint pt;
        pt.epsilon = eps;
        pt.n = table.locate_scale(eps);
        const double len = row_len(table, pt.n + 2);
        const double horizon = cfg.horizon_factor * len * len;
        try {
            const FunctionalEstimate est = exit_functional(
                env, cfg.domain, eps, f, g, rep.queries, cfg.paths, cfg.dt_for(i), horizon,
                cfg.seed + 1000003ull * (i + 1), cfg.threads);
            for (std::size_t qi = 0; qi < rep.queries.size(); ++qi) {
                pt.sup_error = std::max(pt.sup_error, std::abs(est.value[qi] - ref_vals[qi]));
                pt.error_bar = std::max(pt.error_bar, est.stderr_[qi]);
            }
        } catch (const HorizonDominated&) {
            pt.usable = false;
        }
        rep.points.push_back(pt);
    }

    std::vector<double> xs, ys, ws;
    for (const RatePoint& pt : rep.points) {
        if (!pt.usable || !(pt.sup_error > 0.0)) continue;
        xs.push_back(std::log(pt.epsilon));
        ys.push_back(std::log(pt.sup_error));
        const double rel = std::max(pt.error_bar / pt.sup_error, 1e-3);
        ws.push_back(1.0 / (rel * rel));
    }
    if (xs.size() < 3)
        throw FitUnstable("rate: fewer than 3 usable epsilons for the log-log fit");
    const auto [slope, se] = wls_slope(xs, ys, ws);
    rep.slope = slope;
    rep.slope_ci_half = 1.96 * se;
    rep.fit_ok = true;
    return rep;
}

// ---------------------------------------------------------------------------
// Representation audit

AuditReport representation_audit(const Environment& env, const Domain& domain, double epsilon,
                                 const ScaleTable& table, const NamedFunction& f,
                                 const NamedFunction& g, const Vec& start_macro,
                                 std::int64_t paths, double dt, double alpha_hat,
                                 std::uint64_t seed) {
    if (paths < 2) throw InvalidParams("audit: needs at least 2 paths");
    if (!(alpha_hat > 0.0)) throw InvalidParams("audit: alpha_hat must be positive");
    check_start_inside(domain, start_macro, "audit");
    const int n = table.locate_scale(epsilon);
    const int ref = table.discretization_row(n);
    const double ref_len = row_len(table, ref);
    const double stride = ref_len * ref_len;
    const double top_len = row_len(table, n + 2);
    const double trunc_horizon = top_len * top_len;
    const double raw_horizon = 4.0 * trunc_horizon;
    const double eps2 = epsilon * epsilon;
    const int d = env.spec().d;

    const Domain big = domain.dilate_by(1.0 / epsilon);
    const Vec x0 = scaled(start_macro, 1.0 / epsilon);
    Integrand micro_g = [&](const Vec& x) { return g(scaled(x, epsilon)); };

    const KernelSampler ka = KernelSampler::quenched(env, stride);
    const KernelSampler kb = KernelSampler::gaussian(alpha_hat, d, stride);
    // Kernel chains walk the skeleton directly; cap their length well past
    // the expected exit and count the stragglers instead of running to the
    // raw horizon.
    const std::int64_t chain_cap = 4000;

    Accum stage[5], diff[4];
    double dev_sum_mean = 0.0;
    std::int64_t no_exit = 0;

    StoppingRules rules_exit;
    rules_exit.exit_domain = &big;
    for (std::int64_t p = 0; p < paths; ++p) {
        // Stage 0: running integral to the exit under a generous horizon.
        SimConfig cfg_a;
        cfg_a.dt = dt;
        cfg_a.max_time = raw_horizon;
        cfg_a.seed = seed;
        cfg_a.path_index = static_cast<std::uint64_t>(p);
        const StoppedPath pa = simulate_quenched(env, x0, cfg_a, rules_exit, micro_g);
        const double v0 = f(scaled(pa.x_final, epsilon)) - eps2 * pa.g_integral;

        // Stage 1: same noise, horizon cut to L_{n+2}^2, skeleton retained.
        SimConfig cfg_b = cfg_a;
        cfg_b.max_time = trunc_horizon;
        cfg_b.record_stride = stride;
        const StoppedPath pb = simulate_quenched(env, x0, cfg_b, rules_exit, micro_g);
        const double v1 = f(scaled(pb.x_final, epsilon)) - eps2 * pb.g_integral;

        // Stage 2: left Riemann sum of the running integral over the
        // skeleton times strictly before the stop.
        const double t_stop = pb.exit.fired ? pb.exit.time : pb.t_final;
        double ksum = 0.0;
        for (std::size_t k = 0; k < pb.skeleton.size(); ++k) {
            if (static_cast<double>(k) * stride >= t_stop - 1e-9) break;
            ksum += g(scaled(pb.skeleton[k], epsilon));
        }
        const double v2 = f(scaled(pb.x_final, epsilon)) - eps2 * stride * ksum;
        dev_sum_mean += (pb.step_excursion_sum - dev_sum_mean) / static_cast<double>(p + 1);

        // Stage 3: coupled kernel chain on the same skeleton spacing; the
        // functional is read off the Gaussian marginal.
        Vec cx = x0, cy = x0;
        double gsum = g(scaled(cy, epsilon));
        double v3 = 0.0;
        bool fired = false;
        for (std::int64_t k = 0; k < chain_cap; ++k) {
            const CoupleStep cs =
                couple_step(ka, kb, cx, cy, ref_len, table.params.beta, 8, true, seed,
                            static_cast<std::uint64_t>(p) * static_cast<std::uint64_t>(chain_cap) +
                                static_cast<std::uint64_t>(k));
            cx = cs.x;
            cy = cs.y;
            if (!big.contains(cy)) {
                v3 = f(scaled(cy, epsilon)) - eps2 * stride * gsum;
                fired = true;
                break;
            }
            gsum += g(scaled(cy, epsilon));
        }
        if (!fired) {
            ++no_exit;
            v3 = f(scaled(cy, epsilon)) - eps2 * stride * gsum;
        }

        // Stage 4: Brownian unwind at the measured diffusivity.
        SimConfig cfg_d = cfg_a;
        cfg_d.seed = seed ^ 0x2545F4914F6CDD1Dull;
        const StoppedPath pd = simulate_wiener(alpha_hat, x0, cfg_d, rules_exit, micro_g);
        const double v4 = f(scaled(pd.x_final, epsilon)) - eps2 * pd.g_integral;

        const double vs[5] = {v0, v1, v2, v3, v4};
        for (int s = 0; s < 5; ++s) stage[s].add(vs[s]);
        for (int s = 0; s < 4; ++s) diff[s].add(vs[s + 1] - vs[s]);
    }

    AuditReport rep;
    rep.paths = paths;
    rep.chain_no_exit = no_exit;
    // Total-variation bound on the Riemann defect plus the rounding of the
    // final partial stride; exact zero for g = 0.
    rep.riemann_envelope = (g.lip > 0.0 || g.sup_norm > 0.0)
                               ? eps2 * epsilon * g.lip * stride * dev_sum_mean +
                                     eps2 * stride * g.sup_norm
                               : 0.0;
    const char* names[5] = {"raw", "truncated", "riemann", "kernel_chain", "brownian"};
    for (int s = 0; s < 5; ++s) {
        AuditStage st;
        st.name = names[s];
        st.value = stage[s].mean;
        st.stderr_ = stage[s].stderr_mean();
        if (s > 0) {
            st.diff = diff[s - 1].mean;
            st.diff_se = diff[s - 1].stderr_mean();
            st.allowance = (s == 2) ? rep.riemann_envelope : 0.0;
            st.within = std::abs(st.diff) <= st.allowance + 3.0 * st.diff_se;
        }
        rep.stages.push_back(st);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Reporting

namespace {

std::ostream& prep(std::ostream& os) {
    os << std::setprecision(17);
    return os;
}

}  // namespace

void write_functional_csv(const std::vector<Vec>& queries, const FunctionalEstimate& est,
                          std::ostream& os) {
    if (queries.size() != est.value.size())
        throw InvalidParams("write_functional_csv: query/estimate size mismatch");
    prep(os);
    const int d = queries.empty() ? 0 : queries[0].n;
    for (int i = 0; i < d; ++i) os << "q" << i << ",";
    os << "value,stderr,truncated\n";
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        for (int i = 0; i < d; ++i) os << queries[qi][i] << ",";
        os << est.value[qi] << "," << est.stderr_[qi] << "," << est.truncated[qi] << "\n";
    }
}

void write_tail_csv(const TailCurve& curve, std::ostream& os) {
    prep(os);
    os << "# n=" << curve.n << " unit=" << curve.unit << " log_slope=" << curve.log_slope
       << " paths=" << curve.paths << "\n";
    os << "k,exceedance,stderr\n";
    for (std::size_t i = 0; i < curve.k.size(); ++i)
        os << curve.k[i] << "," << curve.exceedance[i] << "," << curve.stderr_[i] << "\n";
}

void write_rate_csv(const RateReport& report, std::ostream& os) {
    prep(os);
    os << "# alpha_bar=" << report.alpha_bar << " alpha_se=" << report.alpha_se
       << " alpha_scale=" << report.alpha_scale << " slope=" << report.slope
       << " slope_ci_half=" << report.slope_ci_half << " fit_ok=" << (report.fit_ok ? 1 : 0)
       << "\n";
    os << "epsilon,n,sup_error,error_bar,usable\n";
    for (const RatePoint& pt : report.points)
        os << pt.epsilon << "," << pt.n << "," << pt.sup_error << "," << pt.error_bar << ","
           << (pt.usable ? 1 : 0) << "\n";
}

void write_audit_csv(const AuditReport& report, std::ostream& os) {
    prep(os);
    os << "# paths=" << report.paths << " chain_no_exit=" << report.chain_no_exit
       << " riemann_envelope=" << report.riemann_envelope << "\n";
    os << "stage,value,stderr,diff,diff_se,allowance,within\n";
    for (const AuditStage& st : report.stages)
        os << st.name << "," << st.value << "," << st.stderr_ << "," << st.diff << ","
           << st.diff_se << "," << st.allowance << "," << (st.within ? 1 : 0) << "\n";
}

std::string manifest_json(const ExperimentConfig& cfg, const std::vector<std::string>& outputs) {
    nlohmann::json j;
    j["format"] = 1;
    j["experiment"] = cfg.experiment;
    j["env"] = {{"d", cfg.env.d},
                {"eta", cfg.env.eta},
                {"range_R", cfg.env.range_R},
                {"lattice_spacing", cfg.env.lattice_spacing},
                {"kernel_radius", cfg.env.kernel_radius},
                {"seed", cfg.env.seed}};
    j["domain"] = {{"label", cfg.domain.label()},
                   {"bounding_radius", cfg.domain.bounding_radius()},
                   {"inner_radius", cfg.domain.inner_radius()},
                   {"outer_radius", cfg.domain.outer_radius()}};
    j["schedule"] = {{"d", cfg.schedule.d},
                     {"beta", cfg.schedule.beta},
                     {"a", cfg.schedule.a},
                     {"L0", cfg.schedule.L0},
                     {"c0", cfg.schedule.c0},
                     {"strict_exponent", cfg.schedule.strict_exponent}};
    j["epsilons"] = cfg.epsilons;
    j["dts"] = cfg.dts;
    j["paths"] = cfg.paths;
    j["alpha_paths"] = cfg.alpha_paths;
    j["alpha_scale"] = cfg.alpha_scale;
    j["query_per_axis"] = cfg.query_per_axis;
    j["ref_cells"] = cfg.ref_cells;
    j["horizon_factor"] = cfg.horizon_factor;
    j["f"] = cfg.f_name;
    j["g"] = cfg.g_name;
    j["out_dir"] = cfg.out_dir;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["outputs"] = outputs;
    return j.dump(2) + "\n";
}

std::string rate_plot_script(const std::string& csv_name) {
    std::ostringstream os;
    os << "#!/usr/bin/env python3\n"
       << "\"\"\"Log-log plot of the sup errors in " << csv_name << ".\"\"\"\n"
       << "import csv\n"
       << "import math\n\n"
       << "import matplotlib\n"
       << "matplotlib.use(\"Agg\")\n"
       << "import matplotlib.pyplot as plt\n\n"
       << "eps, err, bar = [], [], []\n"
       << "meta = \"\"\n"
       << "with open(\"" << csv_name << "\") as fh:\n"
       << "    for row in fh:\n"
       << "        if row.startswith(\"#\"):\n"
       << "            meta = row[1:].strip()\n"
       << "    fh.seek(0)\n"
       << "    rows = [r for r in csv.DictReader(\n"
       << "        (l for l in fh if not l.startswith(\"#\")))]\n"
       << "for r in rows:\n"
       << "    if int(r[\"usable\"]):\n"
       << "        eps.append(float(r[\"epsilon\"]))\n"
       << "        err.append(float(r[\"sup_error\"]))\n"
       << "        bar.append(float(r[\"error_bar\"]))\n"
       << "fig, ax = plt.subplots(figsize=(5, 4))\n"
       << "ax.errorbar(eps, err, yerr=bar, fmt=\"o-\", capsize=3)\n"
       << "ax.set_xscale(\"log\")\n"
       << "ax.set_yscale(\"log\")\n"
       << "ax.set_xlabel(\"epsilon\")\n"
       << "ax.set_ylabel(\"sup error over the query grid\")\n"
       << "ax.set_title(meta, fontsize=7)\n"
       << "ax.grid(True, which=\"both\", alpha=0.3)\n"
       << "fig.tight_layout()\n"
       << "fig.savefig(\"" << csv_name << ".png\", dpi=150)\n"
       << "print(\"wrote " << csv_name << ".png\")\n";
    return os.str();
}

}  // namespace rehom
