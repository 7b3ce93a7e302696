#include "rehom/analytic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <utility>

namespace rehom {
namespace {

constexpr double kPi = 3.14159265358979323846;

// 5-point Gauss-Legendre on [lo, hi]; exact through degree 9, so the
// composite rule below is far below 1e-12 for the smooth integrands here.
double gl5(const std::function<double(double)>& f, double lo, double hi) {
    static constexpr std::array<double, 5> kNode = {
        -0.9061798459386640, -0.5384693101056831, 0.0,
        0.5384693101056831, 0.9061798459386640};
    static constexpr std::array<double, 5> kWeight = {
        0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
        0.4786286704993665, 0.2369268850561891};
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    double acc = 0.0;
    for (int k = 0; k < 5; ++k) acc += kWeight[k] * f(mid + half * kNode[k]);
    return acc * half;
}

// Cumulative integral of f from a, tabulated at uniform cell boundaries;
// partial cells are finished off with one extra Gauss panel.
struct CumulativeIntegral {
    double a = 0.0, h = 0.0;
    std::vector<double> cum;  // cum[i] = integral over [a, a + i h]

    CumulativeIntegral() = default;
    CumulativeIntegral(const std::function<double(double)>& f, double a_, double b,
                       int cells)
        : a(a_), h((b - a_) / cells) {
        cum.resize(static_cast<std::size_t>(cells) + 1, 0.0);
        for (int i = 0; i < cells; ++i)
            cum[i + 1] = cum[i] + gl5(f, a + i * h, a + (i + 1) * h);
    }

    double eval(const std::function<double(double)>& f, double r) const {
        const double pos = (r - a) / h;
        int i = static_cast<int>(std::floor(pos));
        i = std::clamp(i, 0, static_cast<int>(cum.size()) - 2);
        const double lo = a + i * h;
        return cum[i] + (r > lo ? gl5(f, lo, r) : 0.0);
    }
};

double surface_area_unit_sphere(int d) {
    return 2.0 * std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d);
}

}  // namespace

// ---------------------------------------------------------------------------
// AnnulusExit

AnnulusExit::AnnulusExit(double r1_in, double r2_in, double alpha_in, int d_in)
    : r1(r1_in), r2(r2_in), alpha(alpha_in), d(d_in) {
    if (!(r1 > 0.0) || !(r2 > r1))
        throw InvalidRadii("annulus exit needs 0 < r1 < r2");
    if (!(alpha > 0.0)) throw InvalidParams("annulus exit needs alpha > 0");
    if (d < 3) throw InvalidParams("annulus exit needs d >= 3");
    const double p1 = std::pow(r1, 2.0 - d);
    const double p2 = std::pow(r2, 2.0 - d);
    const double denom = p2 - p1;
    const double pref = 1.0 / (2.0 * d * alpha);
    c1 = pref * (r1 * r1 * p2 - r2 * r2 * p1) / denom;
    c2 = pref * (r2 * r2 - r1 * r1) / denom;
}

double AnnulusExit::value(double r) const {
    const double tol = 1e-12 * r2;
    if (r < r1 - tol || r > r2 + tol)
        throw InvalidRadii("query radius outside [r1, r2]");
    r = std::clamp(r, r1, r2);
    return c1 + c2 * std::pow(r, 2.0 - d) - r * r / (2.0 * d * alpha);
}

double AnnulusExit::linear_slope() const {
    // u is concave on [r1, r2] (c2 < 0), so the tangent at r1 dominates and
    // dropping its negative -r1/(d alpha) term keeps a valid constant.
    return c2 * (2.0 - d) * std::pow(r1, 1.0 - d);
}

double AnnulusExit::boundary_residual() const {
    const double scale = std::max({std::abs(c1), std::abs(c2), 1.0});
    const double u1 = c1 + c2 * std::pow(r1, 2.0 - d) - r1 * r1 / (2.0 * d * alpha);
    const double u2 = c1 + c2 * std::pow(r2, 2.0 - d) - r2 * r2 / (2.0 * d * alpha);
    return std::max(std::abs(u1), std::abs(u2)) / scale;
}

double annulus_mean_exit(double r1, double r2, double alpha, int d, double r) {
    return AnnulusExit(r1, r2, alpha, d).value(r);
}

// ---------------------------------------------------------------------------
// HeatKernel

HeatKernel::HeatKernel(double alpha_in, double t_in, int d_in)
    : alpha(alpha_in), t(t_in), d(d_in) {
    if (!(alpha > 0.0) || !(t > 0.0))
        throw InvalidParams("heat kernel needs alpha > 0 and t > 0");
    if (d < 1 || d > static_cast<int>(kMaxDim))
        throw InvalidParams("heat kernel dimension out of range");
}

double HeatKernel::density(const Vec& x, const Vec& y) const {
    double q = 0.0;
    for (int i = 0; i < x.n; ++i) {
        const double diff = y[i] - x[i];
        q += diff * diff;
    }
    const double var = alpha * t;
    return std::pow(2.0 * kPi * var, -0.5 * d) * std::exp(-q / (2.0 * var));
}

double HeatKernel::mass_within(double radius) const {
    if (!(radius > 0.0)) throw InvalidParams("mass_within needs radius > 0");
    const double var = alpha * t;
    const double pref =
        surface_area_unit_sphere(d) * std::pow(2.0 * kPi * var, -0.5 * d);
    const auto integrand = [this, var](double r) {
        return std::pow(r, d - 1.0) * std::exp(-r * r / (2.0 * var));
    };
    return pref * CumulativeIntegral(integrand, 0.0, radius, 4096).cum.back();
}

// ---------------------------------------------------------------------------
// boundary_exit_linear_bound

LinearExitBound boundary_exit_linear_bound(const Domain& dom, int d, double delta,
                                           double alpha) {
    const double r0 = dom.r0();
    if (!(delta > 0.0) || !(delta < 0.5 * r0))
        throw InvalidDelta("boundary layer width must lie in (0, r0/2)");
    // Shell around an exterior-ball center of the delta-enlarged domain: the
    // inner radius is the shrunken exterior-ball radius, and the outer one
    // covers the whole enlarged domain seen from any such center.
    const double r1 = r0 - delta;
    const double r2 = r1 + 2.0 * (dom.bounding_radius() + delta);
    AnnulusExit shell(r1, r2, alpha, d);
    LinearExitBound out;
    out.r1 = r1;
    out.r2 = r2;
    out.delta = delta;
    out.alpha = alpha;
    out.slope = shell.linear_slope();
    out.bound = shell.value(std::min(r1 + delta, r2));
    return out;
}

// ---------------------------------------------------------------------------
// RadialSolution

RadialSolution::RadialSolution(const Domain& dom, int d, double alpha_bar,
                               std::function<double(double)> g_radial,
                               double f_outer, double f_inner, int cells)
    : d_(d), alpha_(alpha_bar), f_in_(f_inner), f_out_(f_outer),
      g_(std::move(g_radial)) {
    if (d_ < 3) throw InvalidParams("radial solver needs d >= 3");
    if (!(alpha_ > 0.0)) throw InvalidParams("radial solver needs alpha_bar > 0");
    if (cells < 16) throw InvalidParams("radial solver needs at least 16 cells");
    switch (dom.kind()) {
        case DomainKind::kBall:
            is_ball_ = true;
            rin_ = 0.0;
            rout_ = dom.outer_radius();
            break;
        case DomainKind::kAnnulus:
            is_ball_ = false;
            rin_ = dom.inner_radius();
            rout_ = dom.outer_radius();
            break;
        default:
            throw InvalidParams("radial solver needs a ball or annulus domain");
    }

    const double h = (rout_ - rin_) / cells;
    grid_.resize(static_cast<std::size_t>(cells) + 1);
    for (int i = 0; i <= cells; ++i) grid_[i] = rin_ + i * h;

    // G(r) = int_{rin}^{r} t^{d-1} g(t) dt, then
    // P(r) = int_{rin}^{r} s^{1-d} G(s) ds; near s = 0 the integrand decays
    // like s g(0)/d, so the ball case is regular.
    const auto g_int = [this](double t) {
        return std::pow(t, d_ - 1.0) * g_(t);
    };
    cum_g_.assign(grid_.size(), 0.0);
    for (std::size_t i = 0; i + 1 < grid_.size(); ++i)
        cum_g_[i + 1] = cum_g_[i] + gl5(g_int, grid_[i], grid_[i + 1]);

    const auto p_int = [this, &g_int](double s) {
        if (s <= 0.0) return 0.0;
        return std::pow(s, 1.0 - d_) * eval_g_cum(s);
    };
    cum_p_.assign(grid_.size(), 0.0);
    for (std::size_t i = 0; i + 1 < grid_.size(); ++i)
        cum_p_[i + 1] = cum_p_[i] + gl5(p_int, grid_[i], grid_[i + 1]);

    const double p_total = cum_p_.back();
    if (is_ball_) {
        // Regularity at the origin suppresses the homogeneous r^{2-d} part.
        flux_k_ = 0.0;
        offset_ = f_out_ - (2.0 / alpha_) * p_total;
    } else {
        const double q_total = eval_q(rout_);
        flux_k_ = (f_out_ - f_in_ - (2.0 / alpha_) * p_total) / q_total;
        offset_ = f_in_;
    }
}

double RadialSolution::eval_g_cum(double r) const {
    const double h = grid_[1] - grid_[0];
    int i = static_cast<int>(std::floor((r - rin_) / h));
    i = std::clamp(i, 0, static_cast<int>(grid_.size()) - 2);
    const auto g_int = [this](double t) {
        return std::pow(t, d_ - 1.0) * g_(t);
    };
    return cum_g_[i] + (r > grid_[i] ? gl5(g_int, grid_[i], r) : 0.0);
}

double RadialSolution::eval_p(double r) const {
    const double h = grid_[1] - grid_[0];
    int i = static_cast<int>(std::floor((r - rin_) / h));
    i = std::clamp(i, 0, static_cast<int>(grid_.size()) - 2);
    const auto p_int = [this](double s) {
        if (s <= 0.0) return 0.0;
        return std::pow(s, 1.0 - d_) * eval_g_cum(s);
    };
    return cum_p_[i] + (r > grid_[i] ? gl5(p_int, grid_[i], r) : 0.0);
}

double RadialSolution::eval_q(double r) const {
    // int_{rin}^{r} s^{1-d} ds in closed form (only used for the shell).
    return (std::pow(r, 2.0 - d_) - std::pow(rin_, 2.0 - d_)) / (2.0 - d_);
}

double RadialSolution::value(double r) const {
    const double tol = 1e-12 * rout_;
    if (r < rin_ - tol || r > rout_ + tol)
        throw InvalidRadii("radius outside the solved domain");
    r = std::clamp(r, rin_, rout_);
    double u = offset_ + (2.0 / alpha_) * eval_p(r);
    if (!is_ball_) u += flux_k_ * eval_q(r);
    return u;
}

double RadialSolution::center_value() const {
    if (!is_ball_) throw InvalidParams("center value is only defined on a ball");
    return value(0.0);
}

double RadialSolution::sup_abs() const {
    double m = 0.0;
    for (double r : grid_) m = std::max(m, std::abs(value(r)));
    return m;
}

void RadialSolution::write_csv(std::ostream& os) const {
    os << "r,u\n";
    char buf[64];
    for (double r : grid_) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", r, value(r));
        os << buf;
    }
}

// ---------------------------------------------------------------------------
// GridSolution

namespace {

// One axis arm of a cut-cell stencil: either a full step to an interior
// neighbour or a shortened step to the boundary carrying the Dirichlet value.
struct Arm {
    bool interior = false;
    std::int64_t neighbour = -1;  // unknown index when interior
    double len = 0.0;
    double bval = 0.0;  // f at the crossing point when !interior
};

// Fraction of the step h from x (inside) toward x+h*e (outside) at which
// the signed distance changes sign.
double crossing_fraction(const Domain& dom, Vec x, int axis, double step) {
    double lo = 0.0, hi = 1.0;
    const double base = x[axis];
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        x[axis] = base + mid * step;
        (dom.signed_dist(x) < 0.0 ? lo : hi) = mid;
    }
    return std::max(hi, 1e-3);
}

}  // namespace

GridSolution::GridSolution(const Domain& dom, int d, double alpha_bar,
                           const std::function<double(const Vec&)>& g,
                           const std::function<double(const Vec&)>& f,
                           int cells_per_axis)
    : d_(d), cells_(cells_per_axis) {
    if (d_ < 1 || d_ > static_cast<int>(kMaxDim))
        throw InvalidParams("grid solver dimension out of range");
    if (!(alpha_bar > 0.0)) throw InvalidParams("grid solver needs alpha_bar > 0");
    if (cells_ < 4) throw InvalidParams("grid solver needs at least 4 cells per axis");

    const double bound = dom.bounding_radius();
    h_ = 2.0 * bound / cells_;
    npts_ = cells_ + 5;  // two guard cells per side keep every stencil on-grid
    lo_ = Vec::zero(d_);
    for (int i = 0; i < d_; ++i) lo_[i] = -bound - 2.0 * h_;

    std::size_t total = 1;
    for (int i = 0; i < d_; ++i) {
        total *= static_cast<std::size_t>(npts_);
        if (total > (std::size_t{1} << 25))
            throw InvalidParams("grid solver mesh too large");
    }

    const auto node_pos = [&](std::size_t flat_idx) {
        Vec x = Vec::zero(d_);
        const auto np = static_cast<std::size_t>(npts_);
        for (int i = d_ - 1; i >= 0; --i) {
            x[i] = lo_[i] + h_ * static_cast<double>(flat_idx % np);
            flat_idx /= np;
        }
        return x;
    };

    inside_.assign(total, 0);
    std::vector<std::int64_t> unknown(total, -1);
    std::vector<std::size_t> node_of;
    for (std::size_t idx = 0; idx < total; ++idx) {
        if (dom.contains(node_pos(idx))) {
            inside_[idx] = 1;
            unknown[idx] = static_cast<std::int64_t>(node_of.size());
            node_of.push_back(idx);
        }
    }
    const std::size_t n = node_of.size();
    if (n == 0) throw InvalidParams("grid solver found no interior nodes");

    std::vector<std::size_t> stride(static_cast<std::size_t>(d_), 1);
    for (int i = d_ - 2; i >= 0; --i)
        stride[i] = stride[i + 1] * static_cast<std::size_t>(npts_);

    // Assemble -(alpha/2) Laplacian(u) = -g row by row with Shortley-Weller
    // arms a (low side) and b (high side) per axis:
    //   -(alpha/2) u''  ~  alpha/(a b) u_C - alpha/(a(a+b)) u_L - alpha/(b(a+b)) u_R.
    const int max_nb = 2 * d_;
    std::vector<double> diag(n, 0.0), rhs(n, 0.0);
    std::vector<double> coef(n * static_cast<std::size_t>(max_nb), 0.0);
    std::vector<std::int64_t> nbr(n * static_cast<std::size_t>(max_nb), -1);

    for (std::size_t row = 0; row < n; ++row) {
        const std::size_t idx = node_of[row];
        const Vec x = node_pos(idx);
        rhs[row] = -g(x);
        for (int ax = 0; ax < d_; ++ax) {
            Arm arm[2];
            for (int side = 0; side < 2; ++side) {
                const double sgn = side == 0 ? -1.0 : 1.0;
                const std::size_t nidx =
                    side == 0 ? idx - stride[ax] : idx + stride[ax];
                if (inside_[nidx]) {
                    arm[side] = {true, unknown[nidx], h_, 0.0};
                } else {
                    const double th = crossing_fraction(dom, x, ax, sgn * h_);
                    Vec xb = x;
                    xb[ax] += sgn * th * h_;
                    arm[side] = {false, -1, th * h_, f(xb)};
                }
            }
            const double a = arm[0].len, b = arm[1].len;
            diag[row] += alpha_bar / (a * b);
            for (int side = 0; side < 2; ++side) {
                const double w =
                    alpha_bar / (arm[side].len * (a + b));
                if (arm[side].interior) {
                    const std::size_t slot =
                        row * static_cast<std::size_t>(max_nb) +
                        static_cast<std::size_t>(2 * ax + side);
                    coef[slot] = -w;
                    nbr[slot] = arm[side].neighbour;
                } else {
                    rhs[row] += w * arm[side].bval;
                }
            }
        }
    }

    // Jacobi row scaling: cut rows with tiny boundary arms are otherwise
    // orders of magnitude heavier than bulk rows, which both slows BiCGStab
    // and makes a residual-against-||b|| criterion meaningless.
    for (std::size_t row = 0; row < n; ++row) {
        const double inv = 1.0 / diag[row];
        diag[row] = 1.0;
        rhs[row] *= inv;
        const std::size_t base = row * static_cast<std::size_t>(max_nb);
        for (int k = 0; k < max_nb; ++k) coef[base + k] *= inv;
    }

    const auto apply = [&](const std::vector<double>& v, std::vector<double>& out) {
        for (std::size_t row = 0; row < n; ++row) {
            double acc = diag[row] * v[row];
            const std::size_t base = row * static_cast<std::size_t>(max_nb);
            for (int k = 0; k < max_nb; ++k) {
                const std::int64_t j = nbr[base + k];
                if (j >= 0) acc += coef[base + k] * v[static_cast<std::size_t>(j)];
            }
            out[row] = acc;
        }
    };
    const auto nrm2 = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double c : v) s += c * c;
        return std::sqrt(s);
    };

    // BiCGStab on the (mildly nonsymmetric) cut-cell operator.  The
    // recursive residual drifts away from the true one, so the solve runs
    // inside an iterative-refinement loop pinned to the true residual.
    const auto bicgstab = [&](const std::vector<double>& b, std::vector<double>& x,
                              int maxit) {
        std::vector<double> r(b), rhat(b), p(n, 0.0), v(n, 0.0), s(n, 0.0),
            t(n, 0.0);
        std::fill(x.begin(), x.end(), 0.0);
        const double bn = std::max(nrm2(b), 1e-300);
        double rho = 1.0, alpha_cg = 1.0, omega = 1.0;
        int it = 0;
        for (; it < maxit && nrm2(r) / bn > 1e-12; ++it) {
            double rho_new = 0.0;
            for (std::size_t i = 0; i < n; ++i) rho_new += rhat[i] * r[i];
            if (std::abs(rho_new) < 1e-290) break;  // stall; refinement retries
            if (it == 0) {
                p = r;
            } else {
                const double beta = (rho_new / rho) * (alpha_cg / omega);
                for (std::size_t i = 0; i < n; ++i)
                    p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            rho = rho_new;
            apply(p, v);
            double rhat_v = 0.0;
            for (std::size_t i = 0; i < n; ++i) rhat_v += rhat[i] * v[i];
            if (std::abs(rhat_v) < 1e-290) break;
            alpha_cg = rho / rhat_v;
            for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha_cg * v[i];
            if (nrm2(s) / bn <= 1e-12) {
                for (std::size_t i = 0; i < n; ++i) x[i] += alpha_cg * p[i];
                ++it;
                break;
            }
            apply(s, t);
            double tt = 0.0, ts = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                tt += t[i] * t[i];
                ts += t[i] * s[i];
            }
            if (tt < 1e-290) break;
            omega = ts / tt;
            for (std::size_t i = 0; i < n; ++i) {
                x[i] += alpha_cg * p[i] + omega * s[i];
                r[i] = s[i] - omega * t[i];
            }
        }
        return it;
    };

    std::vector<double> u(n, 0.0), work(n, 0.0), corr(n, 0.0);
    const double bnorm = std::max(nrm2(rhs), 1e-300);
    for (int round = 0; round < 5; ++round) {
        apply(u, work);
        for (std::size_t i = 0; i < n; ++i) work[i] = rhs[i] - work[i];
        residual_ = nrm2(work) / bnorm;
        if (residual_ <= 1e-12) break;
        iterations_ += bicgstab(work, corr, 20000);
        for (std::size_t i = 0; i < n; ++i) u[i] += corr[i];
    }
    apply(u, work);
    for (std::size_t i = 0; i < n; ++i) work[i] -= rhs[i];
    residual_ = nrm2(work) / bnorm;
    if (residual_ > 1e-8)
        throw SolverFailure("grid solver residual above 1e-8");

    // Interior nodes carry the solution; everything else carries f so that
    // interpolation near the boundary degrades gracefully.
    values_.assign(total, 0.0);
    for (std::size_t idx = 0; idx < total; ++idx)
        values_[idx] = inside_[idx] ? u[static_cast<std::size_t>(unknown[idx])]
                                    : f(node_pos(idx));
}

std::size_t GridSolution::flat(const std::array<int, kMaxDim>& idx) const {
    std::size_t out = 0;
    for (int i = 0; i < d_; ++i)
        out = out * static_cast<std::size_t>(npts_) + static_cast<std::size_t>(idx[i]);
    return out;
}

double GridSolution::value_at_node(const std::array<int, kMaxDim>& idx) const {
    return values_[flat(idx)];
}

bool GridSolution::node_inside(const std::array<int, kMaxDim>& idx) const {
    return inside_[flat(idx)] != 0;
}

double GridSolution::value(const Vec& x) const {
    std::array<int, kMaxDim> base{};
    std::array<double, kMaxDim> frac{};
    for (int i = 0; i < d_; ++i) {
        double pos = (x[i] - lo_[i]) / h_;
        int cell = static_cast<int>(std::floor(pos));
        cell = std::clamp(cell, 0, npts_ - 2);
        base[i] = cell;
        frac[i] = std::clamp(pos - cell, 0.0, 1.0);
    }
    double acc = 0.0;
    for (int corner = 0; corner < (1 << d_); ++corner) {
        double w = 1.0;
        std::array<int, kMaxDim> idx = base;
        for (int i = 0; i < d_; ++i) {
            if (corner & (1 << i)) {
                idx[i] += 1;
                w *= frac[i];
            } else {
                w *= 1.0 - frac[i];
            }
        }
        acc += w * values_[flat(idx)];
    }
    return acc;
}

double GridSolution::min_value() const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < values_.size(); ++i)
        if (inside_[i]) m = std::min(m, values_[i]);
    return m;
}

double GridSolution::max_value() const {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < values_.size(); ++i)
        if (inside_[i]) m = std::max(m, values_[i]);
    return m;
}

void GridSolution::write_csv(std::ostream& os) const {
    for (int i = 0; i < d_; ++i) os << 'x' << i << ',';
    os << "u\n";
    char buf[64];
    for (std::size_t idx = 0; idx < values_.size(); ++idx) {
        if (!inside_[idx]) continue;
        std::size_t rem = idx;
        std::array<double, kMaxDim> x{};
        for (int i = d_ - 1; i >= 0; --i) {
            x[i] = lo_[i] + h_ * static_cast<double>(rem % static_cast<std::size_t>(npts_));
            rem /= static_cast<std::size_t>(npts_);
        }
        for (int i = 0; i < d_; ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,", x[i]);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, "%.17g\n", values_[idx]);
        os << buf;
    }
}

// ---------------------------------------------------------------------------
// alpha_perturbation_gap

double alpha_perturbation_gap(const Domain& dom, int d, double alpha_bar,
                              double alpha_n, double g_sup_norm) {
    if (!(alpha_bar > 0.0) || !(alpha_n > 0.0))
        throw InvalidParams("perturbation gap needs positive variances");
    if (!(g_sup_norm >= 0.0))
        throw InvalidParams("perturbation gap needs a nonnegative sup norm");
    double sup_tau = 0.0;
    switch (dom.kind()) {
        case DomainKind::kBall: {
            const double rr = dom.outer_radius();
            sup_tau = rr * rr / (d * alpha_bar);
            break;
        }
        case DomainKind::kAnnulus: {
            // The exit time is concave in the radius; golden-section search
            // pins its maximum.  Variance alpha_bar maps to laplacian alpha/2.
            AnnulusExit shell(dom.inner_radius(), dom.outer_radius(),
                              0.5 * alpha_bar, d);
            const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
            double lo = shell.r1, hi = shell.r2;
            double m1 = hi - gr * (hi - lo), m2 = lo + gr * (hi - lo);
            double v1 = shell.value(m1), v2 = shell.value(m2);
            for (int i = 0; i < 200; ++i) {
                if (v1 < v2) {
                    lo = m1;
                    m1 = m2;
                    v1 = v2;
                    m2 = lo + gr * (hi - lo);
                    v2 = shell.value(m2);
                } else {
                    hi = m2;
                    m2 = m1;
                    v2 = v1;
                    m1 = hi - gr * (hi - lo);
                    v1 = shell.value(m1);
                }
            }
            sup_tau = std::max(v1, v2);
            break;
        }
        default: {
            // Conservative: the domain sits inside its bounding ball.
            const double rr = dom.bounding_radius();
            sup_tau = rr * rr / (d * alpha_bar);
            break;
        }
    }
    return (2.0 / alpha_bar) * std::abs(alpha_n - alpha_bar) * g_sup_norm * sup_tau;
}

}  // namespace rehom
