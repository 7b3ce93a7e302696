#include "rehom/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace rehom {

std::string u128_to_string(u128 v) {
    if (v == 0) return "0";
    char buf[48];
    int pos = 48;
    while (v > 0) {
        buf[--pos] = static_cast<char>('0' + static_cast<int>(v % 10));
        v /= 10;
    }
    return std::string(buf + pos, buf + 48);
}

void ScaleParams::validate() const {
    if (d < 3) throw InvalidParams("schedule: dimension must be >= 3, got " + std::to_string(d));
    if (!(beta > 0.0) || beta > 0.5)
        throw InvalidParams("schedule: beta must lie in (0, 1/2]");
    if (!(a > 0.0) || !(a < 1.0))
        throw InvalidParams("schedule: exponent a must lie in (0, 1)");
    if (L0 < 3) throw InvalidParams("schedule: base scale L0 must be >= 3");
    if (!(c0 > 0.0)) throw InvalidParams("schedule: c0 must be positive");
    if (strict_exponent && a > beta / (1000.0 * d))
        throw InvalidParams("schedule: strict mode requires a <= beta/(1000 d)");
}

namespace {

// (log log L)^2 from the integer scale.
double loglog_sq(u128 L) {
    const double logL = static_cast<double>(logl(static_cast<long double>(L)));
    const double ll = std::log(logL);
    return ll * ll;
}

// 5 * floor(L^a / 5), computed in long double with a tiny relative snap so
// that mathematically exact multiples (e.g. 25^(1/2) = 5) land on the
// intended side of the floor despite rounding in exp/log.
u128 coarsening_factor(u128 L, double a) {
    const long double t = expl(static_cast<long double>(a) * logl(static_cast<long double>(L)));
    const long double q = t / 5.0L;
    long double f = floorl(q + 1e-12L);
    if (f < 0.0L) f = 0.0L;
    return static_cast<u128>(f) * 5u;
}

}  // namespace

int compute_mbar(double a) {
    if (!(a > 0.0) || !(a < 1.0))
        throw InvalidParams("mbar: exponent a must lie in (0, 1)");
    const double disc = 1.0 - 12.0 * a - a * a;
    if (!(disc > 0.0))
        throw InvalidParams("mbar: requires 12a + a^2 < 1, got a = " + std::to_string(a));
    const long double t =
        1.0L - logl(static_cast<long double>(disc)) / logl(1.0L + static_cast<long double>(a));
    return static_cast<int>(floorl(t)) + 1;  // smallest integer strictly above t
}

int compute_m0(double a) {
    if (!(a > 0.0) || !(a < 1.0))
        throw InvalidParams("m0: exponent a must lie in (0, 1)");
    // smallest m0 >= 2 with (1+a)^(m0-1) > 100; then (1+a)^(m0-2) <= 100
    // holds automatically because consecutive powers straddle the level.
    long double pw = 1.0L + static_cast<long double>(a);
    int k = 1;
    while (pw <= 100.0L) {
        pw *= (1.0L + static_cast<long double>(a));
        ++k;
        if (k > 100000) throw InvalidParams("m0: exponent a too small to bracket");
    }
    return k + 1;
}

ScaleTable build_schedule(const ScaleParams& params, int n_max) {
    params.validate();
    if (n_max < 0) throw InvalidParams("schedule: n_max must be >= 0");

    ScaleTable t;
    t.params = params;
    t.delta = (5.0 / 32.0) * params.beta;
    t.m0 = compute_m0(params.a);
    t.M0 = 100.0 * params.d * std::pow(1.0 + params.a, t.m0 + 2);
    if (12.0 * params.a + params.a * params.a < 1.0) t.mbar = compute_mbar(params.a);

    u128 L = params.L0;
    for (int n = 0; n <= n_max; ++n) {
        ScaleRow r;
        r.n = n;
        r.L = L;
        r.log_L = static_cast<double>(logl(static_cast<long double>(L)));
        const double s = loglog_sq(L);
        r.kappa = std::exp(params.c0 * s);
        r.kappa_tilde = std::exp(2.0 * params.c0 * s);
        r.D = static_cast<double>(L) * r.kappa;
        r.D_tilde = static_cast<double>(L) * r.kappa_tilde;
        r.ell = coarsening_factor(L, params.a);
        t.rows.push_back(r);

        if (n == n_max) break;
        if (r.ell < 5)
            throw DegenerateSchedule("schedule: ell_" + std::to_string(n) + " = " +
                                     u128_to_string(r.ell) + " < 5 at L_" + std::to_string(n) +
                                     " = " + u128_to_string(L) +
                                     " (base scale too small for exponent a)");
        constexpr u128 kMax = ~static_cast<u128>(0);
        if (L > kMax / r.ell)
            throw InvalidParams("schedule: L_" + std::to_string(n + 1) +
                                " overflows 128-bit range; reduce n_max");
        L = L * r.ell;
    }
    return t;
}

const ScaleRow& ScaleTable::row(int n) const {
    if (n < 0 || n >= depth())
        throw OutOfRange("schedule row " + std::to_string(n) + " outside [0, " +
                         std::to_string(depth() - 1) + "]");
    return rows[static_cast<size_t>(n)];
}

int ScaleTable::locate_scale(double eps) const {
    if (!(eps > 0.0)) throw InvalidParams("locate_scale: eps must be positive");
    if (depth() < 2) throw OutOfRange("locate_scale: table needs at least two rows");
    const long double x = 1.0L / static_cast<long double>(eps);
    const long double slack = 1.0L + 1e-12L;
    // largest n with L_n <= x (allowing the relative slack on the boundary)
    int n = -1;
    for (int i = 0; i < depth(); ++i) {
        if (static_cast<long double>(rows[static_cast<size_t>(i)].L) <= x * slack) n = i;
    }
    if (n < 0)
        throw OutOfRange("locate_scale: 1/eps below the base scale L_0");
    if (n == depth() - 1)
        throw OutOfRange("locate_scale: 1/eps at or beyond the deepest scale; extend the table");
    return n;
}

int ScaleTable::discretization_row(int n) const {
    if (n < 0 || n >= depth())
        throw OutOfRange("discretization_row: scale index " + std::to_string(n) +
                         " outside the table");
    const int offset = mbar.value_or(n);
    return std::max(n - offset, 0);
}

std::string ScaleTable::to_csv() const {
    std::ostringstream out;
    out << "n,L_n,ell_n,kappa_n,kappa_tilde_n,D_n,D_tilde_n\n";
    char buf[512];
    for (const ScaleRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%s,%.17g,%.17g,%.17g,%.17g\n", r.n,
                      u128_to_string(r.L).c_str(), u128_to_string(r.ell).c_str(), r.kappa,
                      r.kappa_tilde, r.D, r.D_tilde);
        out << buf;
    }
    return out.str();
}

ScaleTable schedule_from_config(const ConfigMap& cfg) {
    ScaleParams p;
    p.d = static_cast<int>(cfg_int(cfg, "schedule.d", p.d));
    p.beta = cfg_double(cfg, "schedule.beta", p.beta);
    p.a = cfg_double(cfg, "schedule.a", p.a);
    p.L0 = cfg_u64(cfg, "schedule.L0", p.L0);
    p.c0 = cfg_double(cfg, "schedule.c0", p.c0);
    p.strict_exponent = cfg_bool(cfg, "schedule.strict_exponent", p.strict_exponent);
    const int n_max = static_cast<int>(cfg_int(cfg, "schedule.n_max", 3));
    return build_schedule(p, n_max);
}

}  // namespace rehom
