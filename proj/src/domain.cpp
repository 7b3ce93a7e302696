#include "rehom/domain.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace rehom {

Domain Domain::ball(double radius) {
    if (!(radius > 0.0)) throw InvalidParams("ball: radius must be positive");
    Domain d;
    d.kind_ = DomainKind::kBall;
    d.r2_ = radius;
    // Any exterior ball touches a sphere from outside; the radius of the
    // sphere itself is the scale-natural declared value.
    d.r0_ = radius;
    d.bounding_ = radius;
    d.label_ = "ball";
    return d;
}

Domain Domain::annulus(double r1, double r2) {
    if (!(r1 > 0.0) || !(r2 > r1))
        throw InvalidParams("annulus: need 0 < r1 < r2");
    Domain d;
    d.kind_ = DomainKind::kAnnulus;
    d.r1_ = r1;
    d.r2_ = r2;
    // The exterior ball at the inner boundary must fit inside B_{r1}.
    d.r0_ = r1;
    d.bounding_ = r2;
    d.label_ = "annulus";
    return d;
}

Domain Domain::oracle(SignedDist sdf, double r0, double bounding_radius, std::string label) {
    if (!sdf) throw InvalidParams("oracle domain: missing signed-distance function");
    if (!(r0 > 0.0) || !(bounding_radius > 0.0))
        throw InvalidParams("oracle domain: r0 and bounding radius must be positive");
    Domain d;
    d.kind_ = DomainKind::kOracle;
    d.r0_ = r0;
    d.bounding_ = bounding_radius;
    d.label_ = std::move(label);
    d.sdf_ = std::move(sdf);
    return d;
}

double Domain::signed_dist(const Vec& x) const {
    switch (kind_) {
        case DomainKind::kBall:
            return x.norm() - r2_;
        case DomainKind::kAnnulus: {
            const double r = x.norm();
            // distance to the annulus shell, negative between the radii
            return std::max(r1_ - r, r - r2_);
        }
        case DomainKind::kOracle:
            return sdf_(x);
    }
    return 0.0;
}

double Domain::dist_to_complement(const Vec& x) const {
    return std::max(-signed_dist(x), 0.0);
}

double Domain::dist_to_domain(const Vec& x) const {
    return std::max(signed_dist(x), 0.0);
}

Domain Domain::enlarge(double delta) const {
    if (!(delta > 0.0) || delta >= r0_)
        throw InvalidDelta("enlarge: delta must lie in (0, r0) = (0, " + std::to_string(r0_) +
                           "), got " + std::to_string(delta));
    Domain d = *this;
    d.r0_ = r0_ - delta;
    d.bounding_ = bounding_ + delta;
    switch (kind_) {
        case DomainKind::kBall:
            d.r2_ = r2_ + delta;
            break;
        case DomainKind::kAnnulus:
            d.r1_ = r1_ - delta;  // delta < r0 = r1 keeps this positive
            d.r2_ = r2_ + delta;
            break;
        case DomainKind::kOracle: {
            // d(x, U_delta-boundary) = sdf(x) - delta when sdf is the exact
            // Euclidean signed distance of U.
            auto base = sdf_;
            d.sdf_ = [base, delta](const Vec& x) { return base(x) - delta; };
            break;
        }
    }
    return d;
}

Domain Domain::dilate_by(double inv_eps) const {
    if (!(inv_eps > 0.0)) throw InvalidParams("dilate_by: scale must be positive");
    Domain d = *this;
    d.r1_ = r1_ * inv_eps;
    d.r2_ = r2_ * inv_eps;
    d.r0_ = r0_ * inv_eps;
    d.bounding_ = bounding_ * inv_eps;
    if (kind_ == DomainKind::kOracle) {
        auto base = sdf_;
        d.sdf_ = [base, inv_eps](const Vec& x) { return inv_eps * base((1.0 / inv_eps) * x); };
    }
    return d;
}

Domain domain_from_config(const ConfigMap& cfg) {
    const std::string kind = cfg_string(cfg, "domain.kind", "ball");
    if (kind == "ball") return Domain::ball(cfg_double(cfg, "domain.radius", 1.0));
    if (kind == "annulus")
        return Domain::annulus(cfg_double(cfg, "domain.r1", 1.0),
                               cfg_double(cfg, "domain.r2", 2.0));
    throw InvalidParams("domain.kind must be 'ball' or 'annulus' in config files, got '" +
                        kind + "'");
}

}  // namespace rehom
