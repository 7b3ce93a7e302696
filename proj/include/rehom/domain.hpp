#pragma once

#include <functional>
#include <string>

#include "rehom/config.hpp"
#include "rehom/errors.hpp"
#include "rehom/vecmat.hpp"

// Bounded open domains with an exterior ball condition, their dilations
// U/eps and enlargements U_delta, and the distance queries the stopping
// rules consume.  Balls and annuli (centered at the origin) are exact;
// anything else enters through a signed-distance oracle with a
// user-declared exterior-ball radius.

namespace rehom {

enum class DomainKind { kBall, kAnnulus, kOracle };

class Domain {
  public:
    /// Signed distance to the boundary: negative inside, positive outside.
    /// Oracle domains must provide the exact Euclidean signed distance for
    /// the distance queries to be exact; anything weaker is the caller's
    /// accuracy trade-off.
    using SignedDist = std::function<double(const Vec&)>;

    static Domain ball(double radius);
    static Domain annulus(double r1, double r2);
    static Domain oracle(SignedDist sdf, double r0, double bounding_radius,
                         std::string label = "oracle");

    DomainKind kind() const { return kind_; }
    double r0() const { return r0_; }
    double bounding_radius() const { return bounding_; }
    double inner_radius() const { return r1_; }   // annulus only
    double outer_radius() const { return r2_; }   // ball: radius; annulus: r2
    const std::string& label() const { return label_; }

    double signed_dist(const Vec& x) const;

    /// Membership in the open set U.
    bool contains(const Vec& x) const { return signed_dist(x) < 0.0; }

    /// d(x, U^c): positive strictly inside, zero on the boundary and outside.
    double dist_to_complement(const Vec& x) const;

    /// d(x, U): positive strictly outside, zero on the boundary and inside.
    double dist_to_domain(const Vec& x) const;

    /// The open delta-enlargement { x : d(x, U) < delta }.  Its exterior
    /// ball radius is r0 - delta.  Requires 0 < delta < r0.
    Domain enlarge(double delta) const;

    /// The set U/eps = { x/eps : x in U }; all lengths scale by 1/eps.
    Domain dilate_by(double inv_eps) const;

  private:
    Domain() = default;

    DomainKind kind_ = DomainKind::kBall;
    double r1_ = 0.0;          // annulus inner radius
    double r2_ = 1.0;          // ball radius / annulus outer radius
    double r0_ = 1.0;
    double bounding_ = 1.0;
    std::string label_ = "ball";
    SignedDist sdf_;
};

/// Builds a domain from config keys domain.kind (ball|annulus), plus
/// domain.radius or domain.r1/domain.r2.
Domain domain_from_config(const ConfigMap& cfg);

}  // namespace rehom
