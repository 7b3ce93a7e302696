#include "rehom/renorm.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>

#include "rehom/rng.hpp"
#include "rehom/walk.hpp"

namespace rehom {

namespace {

constexpr double kPi = 3.14159265358979323846;

double dist2(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (int i = 0; i < a.n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// Uniform point in the ball of the given radius: isotropic direction from
// a normal vector, radius from the d-th root of a uniform variate.
Vec uniform_in_ball(NoiseCursor& cur, int d, double radius) {
    Vec dir = cur.normal_vec(d);
    double nrm = dir.norm();
    while (nrm < 1e-12) {  // astronomically rare; redraw
        dir = cur.normal_vec(d);
        nrm = dir.norm();
    }
    const double r = radius * std::pow(cur.uniform(), 1.0 / static_cast<double>(d));
    Vec out = Vec::zero(d);
    for (int i = 0; i < d; ++i) out[i] = dir[i] * (r / nrm);
    return out;
}

Vec uniform_direction(NoiseCursor& cur, int d) {
    Vec dir = cur.normal_vec(d);
    double nrm = dir.norm();
    while (nrm < 1e-12) {
        dir = cur.normal_vec(d);
        nrm = dir.norm();
    }
    for (int i = 0; i < d; ++i) dir[i] /= nrm;
    return dir;
}

// Streaming mean/variance accumulator (Welford).
struct Accum {
    std::int64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++count;
        const double d1 = x - mean;
        mean += d1 / static_cast<double>(count);
        m2 += d1 * (x - mean);
    }
    double stderr_of_mean() const {
        if (count < 2) return 0.0;
        const double var = m2 / static_cast<double>(count - 1);
        return std::sqrt(std::max(var, 0.0) / static_cast<double>(count));
    }
};

}  // namespace

void FieldSample::validate() const {
    if (points.size() < 2) throw InvalidParams("FieldSample: need at least 2 points");
    if (values.size() != points.size())
        throw InvalidParams("FieldSample: values/points size mismatch");
    if (!(scale_len > 0.0) || !(beta > 0.0) || !(beta <= 1.0))
        throw InvalidParams("FieldSample: need scale_len > 0 and beta in (0,1]");
    const int np = static_cast<int>(points.size());
    for (double v : values)
        if (!std::isfinite(v)) throw InvalidParams("FieldSample: non-finite value");
    for (const auto& [i, j] : pairs) {
        if (i < 0 || j < 0 || i >= np || j >= np || i == j)
            throw InvalidParams("FieldSample: pair index out of range");
    }
}

double holder_norm(const FieldSample& sample) {
    sample.validate();
    double sup = 0.0;
    for (double v : sample.values) sup = std::max(sup, std::abs(v));
    double semi = 0.0;
    const double lb = std::pow(sample.scale_len, sample.beta);
    for (const auto& [i, j] : sample.pairs) {
        const double sep = dist(sample.points[i], sample.points[j]);
        if (sep <= 0.0) throw InvalidParams("holder_norm: coincident pair");
        const double q = lb * std::abs(sample.values[i] - sample.values[j]) /
                         std::pow(sep, sample.beta);
        semi = std::max(semi, q);
    }
    return sup + semi;
}

FieldSample sample_field(const std::function<double(const Vec&)>& f, const Vec& center,
                         double radius, int grid_per_axis, int pair_count, int n,
                         double scale_len, double beta, std::uint64_t seed) {
    if (!f) throw InvalidParams("sample_field: empty function");
    if (!(radius > 0.0)) throw InvalidParams("sample_field: radius must be positive");
    if (grid_per_axis < 2 || grid_per_axis > 6)
        throw InvalidParams("sample_field: grid_per_axis must be in [2,6]");
    if (pair_count < 1 || pair_count > 4096)
        throw InvalidParams("sample_field: pair_count must be in [1,4096]");
    const int d = center.n;

    FieldSample out;
    out.n = n;
    out.scale_len = scale_len;
    out.beta = beta;

    // Lattice on the cube inscribed in the sampling ball.
    const double half = radius / std::sqrt(static_cast<double>(d));
    std::int64_t grid_total = 1;
    for (int i = 0; i < d; ++i) grid_total *= grid_per_axis;
    for (std::int64_t idx = 0; idx < grid_total; ++idx) {
        std::int64_t rem = idx;
        Vec p = center;
        for (int ax = 0; ax < d; ++ax) {
            const int k = static_cast<int>(rem % grid_per_axis);
            rem /= grid_per_axis;
            p[ax] += -half + 2.0 * half * static_cast<double>(k) /
                                  static_cast<double>(grid_per_axis - 1);
        }
        out.points.push_back(p);
    }

    // Random pairs: base point in the half-radius ball, separations sweep
    // dyadic fractions radius/2, radius/4, ..., radius/64, so both
    // endpoints stay inside the sampling ball.
    NoiseCursor cur(seed, stream_id(StreamTag::kCloud, static_cast<std::uint64_t>(n)));
    for (int k = 0; k < pair_count; ++k) {
        const double sep = radius * 0.5 / static_cast<double>(1 << (k % 6));
        Vec base = uniform_in_ball(cur, d, radius * 0.5);
        for (int i = 0; i < d; ++i) base[i] += center[i];
        const Vec dir = uniform_direction(cur, d);
        Vec a = base, b = base;
        for (int i = 0; i < d; ++i) {
            a[i] += 0.5 * sep * dir[i];
            b[i] -= 0.5 * sep * dir[i];
        }
        const int ia = static_cast<int>(out.points.size());
        out.points.push_back(a);
        out.points.push_back(b);
        out.pairs.emplace_back(ia, ia + 1);
    }

    out.values.reserve(out.points.size());
    for (const Vec& p : out.points) out.values.push_back(f(p));
    out.validate();
    return out;
}

double CutoffFn::value(const Vec& y) const {
    const double t = dist(y, center) / v;
    return std::min(1.0, std::max(0.0, 2.0 - t));
}

CutoffFn CutoffFn::at_scale(const Vec& center, double scale_len) {
    if (!(scale_len > 0.0)) throw InvalidParams("CutoffFn: scale length must be positive");
    CutoffFn chi;
    chi.center = center;
    chi.v = 30.0 * std::sqrt(static_cast<double>(center.n)) * scale_len;
    return chi;
}

// ---------------------------------------------------------------------------
// Gauss-Hermite nodes (weight e^{-t^2}) by Newton iteration on the
// orthonormal Hermite recurrence; nodes returned in ascending order.

namespace {

GaussHermite compute_gauss_hermite(int m) {
    GaussHermite gh;
    gh.nodes.assign(m, 0.0);
    gh.weights.assign(m, 0.0);
    const int half = (m + 1) / 2;
    std::vector<double> desc(half, 0.0);  // positive roots, descending
    const double pim4 = std::pow(kPi, -0.25);
    double z = 0.0;
    for (int i = 0; i < half; ++i) {
        if (i == 0) {
            z = std::sqrt(2.0 * m + 1.0) - 1.85575 * std::pow(2.0 * m + 1.0, -1.0 / 6.0);
        } else if (i == 1) {
            z -= 1.14 * std::pow(static_cast<double>(m), 0.426) / z;
        } else if (i == 2) {
            z = 1.86 * z - 0.86 * desc[0];
        } else if (i == 3) {
            z = 1.91 * z - 0.91 * desc[1];
        } else {
            z = 2.0 * z - desc[i - 2];
        }
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 1; j <= m; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
            }
            pp = std::sqrt(2.0 * m) * p2;
            const double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        desc[i] = z;
        gh.nodes[m - 1 - i] = z;
        gh.nodes[i] = -z;
        gh.weights[m - 1 - i] = 2.0 / (pp * pp);
        gh.weights[i] = gh.weights[m - 1 - i];
    }
    if (m % 2 == 1) gh.nodes[half - 1] = 0.0;  // exact middle root
    return gh;
}

}  // namespace

const GaussHermite& gauss_hermite(int m) {
    if (m < 1 || m > 64) throw InvalidParams("gauss_hermite: order must be in [1,64]");
    static std::map<int, GaussHermite> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(m);
    if (it == cache.end()) it = cache.emplace(m, compute_gauss_hermite(m)).first;
    return it->second;
}

SmoothedValues quenched_smoothing(const Environment& env,
                                  const std::function<double(const Vec&)>& f,
                                  double step_time, const std::vector<Vec>& queries,
                                  int paths, double dt, std::uint64_t seed) {
    if (!f) throw InvalidParams("quenched_smoothing: empty function");
    if (queries.empty()) throw InvalidParams("quenched_smoothing: no query points");
    if (paths < 2) throw InvalidParams("quenched_smoothing: need at least 2 paths");
    if (!(step_time > 0.0)) throw InvalidParams("quenched_smoothing: step_time must be positive");

    const std::size_t nq = queries.size();
    std::vector<Accum> acc(nq);
    SimConfig cfg;
    cfg.dt = dt;
    cfg.max_time = step_time;
    cfg.seed = seed;
    const StoppingRules rules;  // no rules: run to the exact horizon
    // Path loop outermost: cfg.path_index alone selects the noise stream,
    // so every query point sees the same increments (common random
    // numbers); differences across queries are nearly noise-free.
    for (int p = 0; p < paths; ++p) {
        cfg.path_index = static_cast<std::uint64_t>(p);
        for (std::size_t q = 0; q < nq; ++q) {
            const StoppedPath path = simulate_quenched(env, queries[q], cfg, rules);
            acc[q].add(f(path.x_final));
        }
    }
    SmoothedValues out;
    out.value.reserve(nq);
    out.stderr_.reserve(nq);
    for (const Accum& a : acc) {
        out.value.push_back(a.mean);
        out.stderr_.push_back(a.stderr_of_mean());
    }
    return out;
}

std::vector<double> gaussian_smoothing(double alpha,
                                       const std::function<double(const Vec&)>& f,
                                       double step_time, const std::vector<Vec>& queries,
                                       int nodes_per_axis) {
    if (!f) throw InvalidParams("gaussian_smoothing: empty function");
    if (queries.empty()) throw InvalidParams("gaussian_smoothing: no query points");
    if (!(alpha > 0.0) || !(step_time > 0.0))
        throw InvalidParams("gaussian_smoothing: alpha and step_time must be positive");
    const int d = queries.front().n;
    double combos = 1.0;
    for (int i = 0; i < d; ++i) combos *= static_cast<double>(nodes_per_axis);
    if (combos > 2e7)
        throw InvalidParams("gaussian_smoothing: tensor rule too large; lower nodes_per_axis");

    const GaussHermite& gh = gauss_hermite(nodes_per_axis);
    // E f(x + sigma Z) with Z standard normal per coordinate: substitute
    // z = sqrt(2) t and divide by pi^{d/2}.
    const double sigma = std::sqrt(alpha * step_time);
    const double scale = sigma * std::sqrt(2.0);
    const double norm = std::pow(kPi, -0.5 * d);

    std::vector<double> out;
    out.reserve(queries.size());
    std::array<int, kMaxDim> idx{};
    for (const Vec& x : queries) {
        idx.fill(0);
        double total = 0.0;
        bool done = false;
        while (!done) {
            Vec p = x;
            double w = 1.0;
            for (int i = 0; i < d; ++i) {
                p[i] += scale * gh.nodes[idx[i]];
                w *= gh.weights[idx[i]];
            }
            total += w * f(p);
            done = true;
            for (int i = 0; i < d; ++i) {  // odometer increment
                if (++idx[i] < nodes_per_axis) {
                    done = false;
                    break;
                }
                idx[i] = 0;
            }
        }
        out.push_back(total * norm);
    }
    return out;
}

namespace {

template <typename RunPath>
AlphaEstimate alpha_core(RunPath&& run, const ScaleTable& table, int n, int paths,
                         double nu) {
    if (paths < 2) throw InvalidParams("estimate_alpha: need at least 2 paths");
    const ScaleRow& row = table.row(n);
    const int d = table.params.d;
    const double L = static_cast<double>(row.L);
    const double horizon = L * L;
    const Vec x0 = Vec::zero(d);

    Accum acc;
    for (int p = 0; p < paths; ++p) {
        const StoppedPath path = run(x0, horizon, row.D_tilde, p);
        acc.add(dist2(path.x_final, x0) / (static_cast<double>(d) * horizon));
    }
    AlphaEstimate est;
    est.n = n;
    est.value = acc.mean;
    est.stderr_ = acc.stderr_of_mean();
    est.paths = paths;
    est.window_lo = 1.0 / (2.0 * nu);
    est.window_hi = 2.0 * nu;
    est.in_window = est.value >= est.window_lo && est.value <= est.window_hi;
    return est;
}

}  // namespace

AlphaEstimate estimate_alpha(const Environment& env, const ScaleTable& table, int n,
                             int paths, double dt, std::uint64_t seed) {
    auto run = [&](const Vec& x0, double horizon, double dtil, int p) {
        SimConfig cfg;
        cfg.dt = dt;
        cfg.max_time = horizon;
        cfg.seed = seed;
        cfg.path_index = static_cast<std::uint64_t>(p);
        StoppingRules rules;
        rules.excursion_threshold = dtil;
        return simulate_quenched(env, x0, cfg, rules);
    };
    return alpha_core(run, table, n, paths, env.nu());
}

AlphaEstimate estimate_alpha_wiener(double alpha, const ScaleTable& table, int n,
                                    int paths, double dt, std::uint64_t seed) {
    if (!(alpha > 0.0)) throw InvalidParams("estimate_alpha_wiener: alpha must be positive");
    auto run = [&](const Vec& x0, double horizon, double dtil, int p) {
        SimConfig cfg;
        cfg.dt = dt;
        cfg.max_time = horizon;
        cfg.seed = seed;
        cfg.path_index = static_cast<std::uint64_t>(p);
        StoppingRules rules;
        rules.excursion_threshold = dtil;
        return simulate_wiener(alpha, x0, cfg, rules);
    };
    return alpha_core(run, table, n, paths, 1.0);
}

ControlCheck holder_contraction_check(const Environment& env, const ScaleTable& table,
                                      int n, const Vec& center,
                                      const std::function<double(const Vec&)>& f,
                                      double alpha_n, const HolderCheckOptions& opt) {
    if (!(alpha_n > 0.0)) throw InvalidParams("holder_contraction_check: alpha_n must be positive");
    const ScaleRow& row = table.row(n);
    const int d = table.params.d;
    if (center.n != d) throw InvalidParams("holder_contraction_check: center dimension mismatch");
    const double L = static_cast<double>(row.L);
    const double radius = 60.0 * std::sqrt(static_cast<double>(d)) * L;

    FieldSample cloud = sample_field(f, center, radius, opt.grid_per_axis, opt.pair_count,
                                     n, L, table.params.beta, opt.seed);
    const SmoothedValues qs =
        quenched_smoothing(env, f, L * L, cloud.points, opt.paths, opt.dt, opt.seed);
    const std::vector<double> gs =
        gaussian_smoothing(alpha_n, f, L * L, cloud.points, opt.gh_nodes);
    const CutoffFn chi = CutoffFn::at_scale(center, L);

    FieldSample contrast = cloud;
    std::vector<double> chi_se(cloud.points.size(), 0.0);
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const double c = chi.value(cloud.points[i]);
        contrast.values[i] = c * (qs.value[i] - gs[i]);
        chi_se[i] = c * qs.stderr_[i];
    }

    ControlCheck check;
    check.lhs = holder_norm(contrast);
    check.rhs = std::pow(L, -table.delta) * holder_norm(cloud);
    double sup_allow = 0.0;
    for (double se : chi_se) sup_allow = std::max(sup_allow, 3.0 * se);
    double pair_allow = 0.0;
    const double lb = std::pow(L, table.params.beta);
    for (const auto& [i, j] : cloud.pairs) {
        const double sep = dist(cloud.points[i], cloud.points[j]);
        pair_allow = std::max(pair_allow,
                              3.0 * lb * (chi_se[i] + chi_se[j]) / std::pow(sep, cloud.beta));
    }
    check.allowance = std::max(sup_allow, pair_allow);
    check.pass = check.lhs <= check.rhs + check.allowance;
    return check;
}

double WindowReport::pass_fraction() const {
    if (rows.empty()) return 0.0;
    std::size_t ok = 0;
    for (const WindowRow& r : rows) ok += r.pass ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(rows.size());
}

WindowReport scale_window_report(const Environment& env, const ScaleTable& table, int n,
                                 const std::vector<Vec>& centers, const WindowOptions& opt,
                                 const std::function<double(const Vec&)>& f) {
    if (centers.empty()) throw InvalidParams("scale_window_report: no centers");
    if (centers.size() > 50) throw InvalidParams("scale_window_report: more than 50 centers");
    if (opt.paths < 2) throw InvalidParams("scale_window_report: need at least 2 paths");
    if (opt.include_holder && !f)
        throw InvalidParams("scale_window_report: holder rows need a field");
    const int m_lo = opt.m_lo < 0 ? table.discretization_row(n) : opt.m_lo;
    const int m_hi = opt.m_hi < 0 ? std::min(n + 2, table.depth() - 1) : opt.m_hi;
    if (m_lo < 0 || m_hi >= table.depth() || m_lo > m_hi)
        throw InvalidParams("scale_window_report: scale window out of range");

    WindowReport report;
    report.d = table.params.d;
    const double rhs_loc = std::exp(-1.0);
    const int span = m_hi - m_lo + 1;
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
        const Vec& center = centers[ci];
        if (center.n != table.params.d)
            throw InvalidParams("scale_window_report: center dimension mismatch");
        for (int m = m_lo; m <= m_hi; ++m) {
            const ScaleRow& row = table.row(m);
            const double L = static_cast<double>(row.L);
            SimConfig cfg;
            cfg.dt = opt.dt;
            cfg.max_time = L * L;
            cfg.seed = opt.seed;
            StoppingRules rules;
            rules.excursion_threshold = row.D;
            int fired = 0;
            // Disjoint stream blocks per (center, scale) cell.
            const std::uint64_t block =
                static_cast<std::uint64_t>(ci) * static_cast<std::uint64_t>(span) +
                static_cast<std::uint64_t>(m - m_lo);
            for (int p = 0; p < opt.paths; ++p) {
                cfg.path_index = block * static_cast<std::uint64_t>(opt.paths) +
                                 static_cast<std::uint64_t>(p);
                const StoppedPath path = simulate_quenched(env, center, cfg, rules);
                fired += path.excursion.fired ? 1 : 0;
            }
            const double phat = static_cast<double>(fired) / static_cast<double>(opt.paths);
            const double se = std::sqrt(std::max(phat * (1.0 - phat), 0.0) /
                                        static_cast<double>(opt.paths));
            WindowRow loc;
            loc.center = center;
            loc.m = m;
            loc.control = "localization";
            loc.lhs = phat;
            loc.rhs = rhs_loc;
            loc.pass = phat <= rhs_loc + 1.96 * se;
            report.rows.push_back(loc);

            if (opt.include_holder) {
                HolderCheckOptions hopt = opt.holder;
                hopt.seed = opt.holder.seed + 1000003ull * block;
                const ControlCheck c =
                    holder_contraction_check(env, table, m, center, f, opt.alpha_n, hopt);
                WindowRow h;
                h.center = center;
                h.m = m;
                h.control = "holder";
                h.lhs = c.lhs;
                h.rhs = c.rhs;
                h.pass = c.pass;
                report.rows.push_back(h);
            }
        }
    }
    return report;
}

void write_window_csv(const WindowReport& report, std::ostream& os) {
    for (int i = 0; i < report.d; ++i) os << 'c' << i << ',';
    os << "m,control,lhs,rhs,pass\n";
    std::ostringstream line;
    line << std::setprecision(17);
    for (const WindowRow& r : report.rows) {
        line.str("");
        for (int i = 0; i < report.d; ++i) line << r.center[i] << ',';
        line << r.m << ',' << r.control << ',' << r.lhs << ',' << r.rhs << ','
             << (r.pass ? 1 : 0) << '\n';
        os << line.str();
    }
}

}  // namespace rehom
