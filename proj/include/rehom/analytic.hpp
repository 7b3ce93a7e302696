#pragma once
// Closed-form exit-time quantities and the constant-coefficient elliptic
// solver.
//
// Normalization note.  Two alpha conventions coexist in the codebase and
// are always documented at the interface:
//   * walk/solver alpha ("variance"): the process has per-coordinate
//     variance alpha*t, generator (alpha/2)*Laplacian.  simulate_wiener,
//     solve_homogenized_* and alpha_perturbation_gap use this one.
//   * annulus alpha ("laplacian"): AnnulusExit solves
//     alpha*Laplacian(u) = -1, i.e. it describes a walk of per-coordinate
//     variance 2*alpha.  To compare with a simulated walk of variance v,
//     construct the annulus with alpha = v/2.

#include <functional>
#include <iosfwd>
#include <vector>

#include "rehom/domain.hpp"
#include "rehom/errors.hpp"
#include "rehom/vecmat.hpp"

namespace rehom {

// Mean exit time of the radial shell r1 < |x| < r2 for the alpha*Laplacian
// walk (see the normalization note):
//
//   u(r) = c1 + c2 r^{2-d} - r^2/(2 d alpha),
//   c1 = (1/(2 d alpha)) (r1^2 r2^{2-d} - r2^2 r1^{2-d}) / (r2^{2-d} - r1^{2-d}),
//   c2 = (1/(2 d alpha)) (r2^2 - r1^2)             / (r2^{2-d} - r1^{2-d}),
//
// which vanishes at both radii and is nonnegative between them.
struct AnnulusExit {
    double r1 = 0, r2 = 0, alpha = 0;
    int d = 0;
    double c1 = 0, c2 = 0;

    // Throws InvalidRadii unless 0 < r1 < r2; InvalidParams unless
    // alpha > 0 and d >= 3 (the c2 formula degenerates at d = 2).
    AnnulusExit(double r1, double r2, double alpha, int d);

    // u(r); throws InvalidRadii outside [r1, r2].
    double value(double r) const;

    // Slope constant of the linear boundary-layer bound:
    // u(r) <= linear_slope() * (r - r1) on all of [r1, r2], because u is
    // concave there and u'(r1) <= c2 (2-d) r1^{1-d}.
    double linear_slope() const;

    // max(|u(r1)|, |u(r2)|) over the natural value scale (for invariants).
    double boundary_residual() const;
};

double annulus_mean_exit(double r1, double r2, double alpha, int d, double r);

// Gaussian transition density of the variance-alpha walk:
// p_t(x, y) = (2 pi alpha t)^{-d/2} exp(-|y-x|^2 / (2 alpha t)).
struct HeatKernel {
    double alpha = 1.0;
    double t = 1.0;
    int d = 3;

    HeatKernel(double alpha, double t, int d);
    double density(const Vec& x, const Vec& y) const;
    // Probability mass inside the centered ball of the given radius,
    // by radial quadrature; mass_within(8 sqrt(alpha t)) == 1 to 1e-6.
    double mass_within(double radius) const;
};

// Linear-in-delta bound for the mean exit time started within delta of the
// boundary of a domain with exterior-ball radius r0: the comparison shell
// has inner radius r1 = r0 - delta and an outer radius large enough to
// enclose the delta-enlarged domain seen from any exterior-ball center.
// `bound` is the shell value one delta inside; `slope` the certified
// linear constant.  alpha is in the annulus (laplacian) normalization.
// Applied to a dilated domain the same geometry scales the bound by 1/eps
// automatically.  Throws InvalidDelta unless 0 < delta < r0/2.
struct LinearExitBound {
    double bound = 0;
    double slope = 0;
    double r1 = 0, r2 = 0;
    double delta = 0, alpha = 0;
};
LinearExitBound boundary_exit_linear_bound(const Domain& dom, int d, double delta,
                                           double alpha);

// Solution of (alpha_bar/2) Laplacian(u) = g on a ball or shell with
// radial g and constant boundary values, by two nested quadratures of the
// radial form; exact up to quadrature error (~1e-12 for smooth g).
class RadialSolution {
  public:
    // For a ball, f_inner is ignored (regularity replaces the inner BC).
    RadialSolution(const Domain& dom, int d, double alpha_bar,
                   std::function<double(double)> g_radial, double f_outer,
                   double f_inner = 0.0, int cells = 4096);

    double value(double r) const;  // throws InvalidRadii outside the domain
    double center_value() const;   // ball only
    double sup_abs() const;        // max |u| on the radial grid
    int dim() const { return d_; }

    // rows "r,value" on the quadrature grid
    void write_csv(std::ostream& os) const;

  private:
    int d_;
    double alpha_;
    double rin_, rout_;
    double f_in_, f_out_;
    double flux_k_ = 0.0;   // coefficient of the homogeneous part
    double offset_ = 0.0;
    std::vector<double> grid_;   // radii (cell boundaries)
    std::vector<double> cum_g_;  // cumulative integral of t^{d-1} g(t)
    std::vector<double> cum_p_;  // cumulative integral of s^{1-d} G(s)
    std::function<double(double)> g_;
    bool is_ball_ = true;

    double eval_g_cum(double r) const;
    double eval_p(double r) const;
    double eval_q(double r) const;  // closed form, shell homogeneous part
};

// Cut-cell finite-difference solution of (alpha_bar/2) Laplacian(u) = g,
// u = f on the boundary, on a Cartesian grid with Shortley-Weller stencils
// at cut cells (boundary located by bisection of the signed distance).
// The linear system is solved by BiCGStab to a relative residual of 1e-10;
// SolverFailure on non-convergence.
class GridSolution {
  public:
    GridSolution(const Domain& dom, int d, double alpha_bar,
                 const std::function<double(const Vec&)>& g,
                 const std::function<double(const Vec&)>& f, int cells_per_axis);

    // Multilinear interpolation; outside nodes carry f, so values are only
    // accurate away from the boundary layer.
    double value(const Vec& x) const;
    double value_at_node(const std::array<int, kMaxDim>& idx) const;
    bool node_inside(const std::array<int, kMaxDim>& idx) const;

    double relative_residual() const { return residual_; }
    int iterations() const { return iterations_; }
    int cells_per_axis() const { return cells_; }
    double spacing() const { return h_; }
    const Vec& origin() const { return lo_; }  // position of node (0, ..., 0)
    int points_per_axis() const { return npts_; }
    double min_value() const;  // over interior nodes
    double max_value() const;

    // rows "x0,...,x_{d-1},value" over interior nodes
    void write_csv(std::ostream& os) const;

  private:
    int d_, cells_, npts_;
    double h_;
    Vec lo_;
    std::vector<double> values_;
    std::vector<char> inside_;
    double residual_ = 0.0;
    int iterations_ = 0;

    std::size_t flat(const std::array<int, kMaxDim>& idx) const;
};

// Certified envelope for swapping the comparison variance: for data g with
// the given sup norm, the two constant-coefficient solutions at variances
// alpha_bar and alpha_n differ in sup norm by at most
//   (2/alpha_bar) * |alpha_n - alpha_bar| * ||g||_inf * sup_x E[tau_U],
// with the mean exit time taken at variance alpha_bar.  Both variances are
// in the walk normalization.
double alpha_perturbation_gap(const Domain& dom, int d, double alpha_bar,
                              double alpha_n, double g_sup_norm);

}  // namespace rehom
