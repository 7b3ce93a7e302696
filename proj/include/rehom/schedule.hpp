#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rehom/config.hpp"
#include "rehom/errors.hpp"

// The multiscale schedule.  A geometric-in-exponent ladder of scales
//
//     ell_n = 5 * floor(L_n^a / 5),      L_{n+1} = ell_n * L_n,
//
// together with the slowly varying localization factors
//
//     kappa_n       = exp(c0 * (log log L_n)^2),
//     kappa~_n      = exp(2 c0 * (log log L_n)^2),
//     D_n = L_n kappa_n,   D~_n = L_n kappa~_n,
//
// and the derived ladder constants: the contraction exponent
// delta = (5/32) beta, the step-count threshold m0 (minimal integer >= 2
// with (1+a)^(m0-2) <= 100 < (1+a)^(m0-1)), the horizon constant
// M0 = 100 d (1+a)^(m0+2), and the discretization offset mbar (smallest
// integer > 1 - log(1 - 12a - a^2)/log(1+a), defined only when
// 12a + a^2 < 1).
//
// Scales are stored as 128-bit integers: the recursion squares the
// exponent every few rungs and leaves 64-bit range almost immediately.

namespace rehom {

using u128 = unsigned __int128;

std::string u128_to_string(u128 v);

/// Parameters of the ladder.  `strict_exponent` additionally enforces the
/// small-exponent regime a <= beta/(1000 d) used by the asymptotic theory;
/// the default admits any a in (0,1) so that desk-size ladders exist.
struct ScaleParams {
    int d = 3;
    double beta = 0.5;
    double a = 0.5;
    std::uint64_t L0 = 25;
    double c0 = 1.0;
    bool strict_exponent = false;

    void validate() const;
};

struct ScaleRow {
    int n = 0;
    u128 L = 0;
    u128 ell = 0;              // coarsening factor applied to reach L_{n+1}
    double kappa = 1.0;
    double kappa_tilde = 1.0;
    double D = 0.0;            // L_n * kappa_n
    double D_tilde = 0.0;      // L_n * kappa~_n
    double log_L = 0.0;        // natural log of L_n, kept for reporting
};

class ScaleTable {
  public:
    ScaleParams params;
    std::vector<ScaleRow> rows;
    double delta = 0.0;
    int m0 = 2;
    double M0 = 0.0;
    /// Discretization offset; absent when 12a + a^2 >= 1 (the defining
    /// expression has no real value there).  Desk-size ladders typically
    /// run with the offset clamped at the bottom row; see
    /// discretization_row().
    std::optional<int> mbar;

    int depth() const { return static_cast<int>(rows.size()); }

    const ScaleRow& row(int n) const;

    /// Unique n with L_n <= 1/eps < L_{n+1}.  Throws OutOfRange when 1/eps
    /// falls outside [L_0, L_{depth-1}).  Comparisons carry a relative
    /// slack of 1e-12 so that eps = 1.0/125.0 brackets at the row whose
    /// scale is exactly 125 despite the binary rounding of 1/eps.
    int locate_scale(double eps) const;

    /// Row index used for the one-step discretization attached to scale n:
    /// max(n - mbar, 0), with the offset treated as n when undefined (so
    /// the bottom row is used).  Desk-size ladders are much shallower than
    /// the offset the asymptotic regime would dictate, so this clamp is
    /// almost always active.
    int discretization_row(int n) const;

    /// CSV with header n,L_n,ell_n,kappa_n,kappa_tilde_n,D_n,D_tilde_n.
    std::string to_csv() const;
};

/// Smallest integer strictly greater than 1 - log(1-12a-a^2)/log(1+a).
/// Throws InvalidParams unless 0 < a and 12a + a^2 < 1.
int compute_mbar(double a);

/// Minimal integer >= 2 with (1+a)^(m0-2) <= 100 < (1+a)^(m0-1).
int compute_m0(double a);

/// Builds rows 0..n_max.  Throws DegenerateSchedule as soon as some
/// ell_n < 5 (the recursion would stall or step backwards), InvalidParams
/// for inadmissible parameters or 128-bit overflow of L_n.
ScaleTable build_schedule(const ScaleParams& params, int n_max);

/// Reads schedule.* keys (d, beta, a, L0, c0, strict_exponent, n_max) from
/// a parsed config, filling unset keys from the defaults above.
ScaleTable schedule_from_config(const ConfigMap& cfg);

}  // namespace rehom
