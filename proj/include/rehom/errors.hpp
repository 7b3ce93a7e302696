#pragma once

#include <stdexcept>
#include <string>

namespace rehom {

/// Base class for all rehom error conditions, so callers can catch the
/// whole family with one handler when they do not care about the kind.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A parameter fails a precondition (out of admissible range, wrong sign,
/// inconsistent combination).  Thrown by constructors and validators.
struct InvalidParams : Error {
    explicit InvalidParams(const std::string& msg) : Error(msg) {}
};

/// The multiscale recursion cannot proceed because a coarsening factor
/// dropped below the smallest admissible value.
struct DegenerateSchedule : Error {
    explicit DegenerateSchedule(const std::string& msg) : Error(msg) {}
};

/// A lookup (scale bracketing, row access) left the range covered by the
/// table or data structure at hand.
struct OutOfRange : Error {
    explicit OutOfRange(const std::string& msg) : Error(msg) {}
};

/// An environment's parameters violate their structural invariants.
struct InvalidSpec : Error {
    explicit InvalidSpec(const std::string& msg) : Error(msg) {}
};

/// An enlargement parameter is too large for the declared exterior-ball
/// radius (or otherwise outside its admissible interval).
struct InvalidDelta : Error {
    explicit InvalidDelta(const std::string& msg) : Error(msg) {}
};

/// Radii passed to an annulus formula are out of order or the query radius
/// lies outside them.
struct InvalidRadii : Error {
    explicit InvalidRadii(const std::string& msg) : Error(msg) {}
};

/// An iterative numerical routine did not reach its tolerance.
struct SolverFailure : Error {
    explicit SolverFailure(const std::string& msg) : Error(msg) {}
};

/// A path was not recorded at the times a discrete rule needs.
struct NotRecorded : Error {
    explicit NotRecorded(const std::string& msg) : Error(msg) {}
};

/// A failure rate was requested from fewer chains than the minimum the
/// error bar needs to mean anything.
struct TooFewChains : Error {
    explicit TooFewChains(const std::string& msg) : Error(msg) {}
};

/// An estimator was dominated by paths that hit the simulation horizon,
/// so the returned value would be systematically biased.
struct HorizonDominated : Error {
    explicit HorizonDominated(const std::string& msg) : Error(msg) {}
};

/// A regression/fit had too few usable points or was otherwise unstable.
struct FitUnstable : Error {
    explicit FitUnstable(const std::string& msg) : Error(msg) {}
};

}  // namespace rehom
