#pragma once
// Random coefficient fields (A(x), b(x)) built from lattice noise.
//
// Construction: i.i.d. standard normals hang off the nodes of the lattice
// s·Z^d, shifted by a uniform random offset in [0,s)^d.  A compactly
// supported radial C^2 kernel K smears the node noise into smooth fields:
//
//   b_i(x) = eta * tanh( sum_z xi_{z,i} K(x - z - shift) )
//   A(x)   = I + eta * tanh_spectral( M(x) ) / sqrt(d),
//   M(x)   = sum_z K(x - z - shift) * H_z,   H_z = (G_z + G_z^T)/sqrt(2)
//
// with G_z an i.i.d. Gaussian matrix per node, so H_z has the
// orthogonal-conjugation-invariant symmetric Gaussian law (off-diagonal
// variance 1, diagonal variance 2).  The tanh clamps keep |b| < eta and
// |A - I| < eta, hence the eigenvalues of A stay inside (1-eta, 1+eta) and
// A is uniformly elliptic with nu = 1/(1-eta).  Because K vanishes beyond
// kernel_radius, field values at points farther apart than
// 2*kernel_radius + lattice_spacing depend on disjoint node sets: the
// dependence range is structural, not merely statistical.
//
// All node noise is a pure function of (seed, node, channel) through the
// counter-based generator, so an Environment is immutable, reproducible,
// and freely shareable across threads.  prepare_box() optionally
// precomputes node noise over a region into a flat cache; cached and
// on-demand evaluation produce bit-identical fields.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "rehom/config.hpp"
#include "rehom/errors.hpp"
#include "rehom/rng.hpp"
#include "rehom/vecmat.hpp"

namespace rehom {

struct EnvSpec {
    int d = 3;
    double eta = 0.1;              // perturbation amplitude, in [0, 1/2)
    double range_R = 1.0;          // dependence range
    double lattice_spacing = 0.25; // s
    double kernel_radius = 0.25;   // rho
    uint64_t seed = 1;

    // Throws InvalidSpec unless d is supported, 0 <= eta < 1/2, the radii
    // are positive, and 2*kernel_radius + lattice_spacing <= range_R.
    void validate() const;
};

EnvSpec envspec_from_config(const ConfigMap& cfg);

using NodeIndex = std::array<std::int64_t, kMaxDim>;

class Environment {
  public:
    explicit Environment(const EnvSpec& spec);

    const EnvSpec& spec() const { return spec_; }
    const Vec& shift() const { return shift_; }
    bool is_trivial() const { return spec_.eta == 0.0; }
    double nu() const { return 1.0 / (1.0 - spec_.eta); }

    // Radial kernel profile K(r) = (1 - r^2/rho^2)^3 on r <= rho, 0 outside.
    double kernel(double r) const;
    // sup_r |K'(r)| = (96/(25*sqrt(5))) / rho, attained at r = rho/sqrt(5).
    double kernel_slope_max() const { return kernel_slope_max_; }

    // Lattice nodes whose kernel support contains x.
    std::vector<NodeIndex> contributing_nodes(const Vec& x) const;

    // Field evaluations.  sigma is the principal (symmetric) square root of
    // A; A and sigma are computed from one eigendecomposition.  Any output
    // pointer may be null.
    void eval(const Vec& x, Mat* A, Mat* sigma, Vec* b) const;
    Vec drift(const Vec& x) const;
    Mat diffusion_matrix(const Vec& x) const;

    // Rigorous bound C(x) with |A(x)-A(y)|_F + |b(x)-b(y)| <= C(x)|x-y|
    // for all y within lattice_spacing/2 of x, assembled from the kernel
    // slope and the realized node-noise magnitudes near x.
    double lipschitz_bound(const Vec& x) const;

    // Raw node noise, exposed for the statistical test-bench: the drift
    // channels xi_{z,i}, i < d, and the symmetric matrix block H_z.
    double node_xi(const NodeIndex& z, int channel) const;
    Mat node_sym(const NodeIndex& z) const;

    // Precompute node noise for every node whose support can touch
    // [lo, hi] (corners of an axis-aligned box).  Call once, before
    // sharing the environment across threads.
    void prepare_box(const Vec& lo, const Vec& hi);
    bool prepared() const { return !cache_.empty(); }

  private:
    struct Accum;  // scratch for field assembly

    std::uint64_t node_stream(const NodeIndex& z) const;
    double raw_channel(const NodeIndex& z, int channel) const;
    // Writes xi (d values), packed upper-triangular H (d(d+1)/2 values),
    // |xi|_2 and |H|_F into out[0 .. stride-1].
    void fill_node_record(const NodeIndex& z, double* out) const;
    const double* cached_record(const NodeIndex& z) const;
    void accumulate(const Vec& x, Accum* acc) const;

    EnvSpec spec_;
    Vec shift_;
    double kernel_slope_max_ = 0.0;
    int n_pair_ = 0;    // d(d+1)/2
    int stride_ = 0;    // doubles per cached node record

    // Flat cache over an integer index box [cache_lo_, cache_hi_].
    NodeIndex cache_lo_{};
    NodeIndex cache_hi_{};
    std::vector<double> cache_;
};

// Samples A and b on a regular grid over [-extent, extent]^d and writes
// CSV rows: coordinates, packed upper-triangular A, then b.
void dump_coefficient_grid(const Environment& env, double extent,
                           int samples_per_axis, std::ostream& os);

}  // namespace rehom
