#include "rehom/walk.hpp"

#include <cmath>
#include <string>

namespace rehom {

void SimConfig::validate() const {
    if (!(dt > 0.0) || dt > 0.1 + 1e-12)
        throw InvalidParams("dt = " + std::to_string(dt) + " outside (0, 0.1]");
    if (!(max_time > 0.0)) throw InvalidParams("max_time must be positive");
    const double quot = max_time / dt;
    if (!(quot < 4.0e15))
        throw InvalidParams("max_time/dt = " + std::to_string(quot) +
                            " does not fit a machine integer reliably");
    if (record_stride < 0.0) throw InvalidParams("record_stride must be >= 0");
    if (record_stride > 0.0) {
        const std::int64_t spr = std::llround(record_stride / dt);
        if (spr < 1 || std::abs(static_cast<double>(spr) * dt - record_stride) >
                           1e-9 * record_stride)
            throw InvalidParams("record_stride = " + std::to_string(record_stride) +
                                " is not an integer multiple of dt = " + std::to_string(dt));
    }
}

std::int64_t SimConfig::step_count() const { return std::llround(max_time / dt); }

std::int64_t SimConfig::steps_per_record() const {
    return record_stride > 0.0 ? std::llround(record_stride / dt) : 0;
}

namespace {

enum class StepperKind { kTrivial, kWiener, kQuenched };

unsigned fired_mask(const StoppedPath& p) {
    unsigned m = 0;
    if (p.exit.fired) m |= kRuleExit;
    if (p.tau1.fired) m |= kRuleTau1;
    if (p.tau2.fired) m |= kRuleTau2;
    if (p.tilde.fired) m |= kRuleTilde;
    return m;
}

void check_rules_consistent(const SimConfig& cfg, const StoppingRules& rules) {
    const bool has_discrete = rules.near_complement > 0.0 || rules.beyond_domain > 0.0 ||
                              rules.discrete_exit;
    if (has_discrete && rules.exit_domain == nullptr)
        throw InvalidParams("skeleton stopping rules need an exit domain");
    if (has_discrete && cfg.record_stride <= 0.0)
        throw InvalidParams("skeleton stopping rules need a positive record_stride");
    const unsigned req = rules.effective_required();
    if ((req & kRuleExit) && rules.exit_domain == nullptr)
        throw InvalidParams("required exit rule without an exit domain");
    if ((req & (kRuleTau1 | kRuleTau2 | kRuleTilde)) && !has_discrete)
        throw InvalidParams("required skeleton rule without skeleton thresholds");
}

template <StepperKind K>
StoppedPath run_walk([[maybe_unused]] const Environment* env, double alpha, const Vec& x0,
                     const SimConfig& cfg, const StoppingRules& rules,
                     const Integrand& integrand) {
    cfg.validate();
    check_rules_consistent(cfg, rules);
    const int d = x0.n;
    if (d < 1 || d > kMaxDim) throw InvalidParams("walk start point has invalid dimension");

    StoppedPath p;
    p.x0 = x0;
    p.x_final = x0;
    p.record_stride = cfg.record_stride;

    const double dt = cfg.dt;
    const double sdt = std::sqrt(dt);
    const double sadt = std::sqrt(alpha * dt);
    const std::int64_t n_steps = cfg.step_count();
    const std::int64_t spr = cfg.steps_per_record();
    const unsigned required = rules.effective_required();
    const Domain* dom = rules.exit_domain;

    NoiseCursor cur(cfg.seed, stream_id(StreamTag::kPath, cfg.path_index));

    auto skeleton_checks = [&](double t, const Vec& xs) {
        if (rules.near_complement > 0.0 && !p.tau1.fired &&
            dom->dist_to_complement(xs) <= rules.near_complement) {
            p.tau1 = {true, t, xs};
        }
        if (rules.beyond_domain > 0.0 && !p.tau2.fired &&
            dom->dist_to_domain(xs) >= rules.beyond_domain) {
            p.tau2 = {true, t, xs};
        }
        if (rules.discrete_exit && !p.tilde.fired && !dom->contains(xs)) {
            p.tilde = {true, t, xs};
        }
    };

    Vec x = x0;
    bool accumulating = true;
    double g_prev = integrand ? integrand(x) : 0.0;

    // time-zero records and checks
    if (spr > 0) {
        p.skeleton.push_back(x);
        skeleton_checks(0.0, x);
    }
    if (dom != nullptr && !dom->contains(x)) {
        p.exit = {true, 0.0, x};
        accumulating = false;
    }

    bool stopped = required != 0 && (fired_mask(p) & required) == required;
    Vec z(d), xn(d), b(d);
    Mat sigma(d);

    std::int64_t step = 0;
    while (!stopped && step < n_steps) {
        ++step;
        cur.fill_normal(z);
        if constexpr (K == StepperKind::kTrivial) {
            for (int i = 0; i < d; ++i) xn[i] = x[i] + sdt * z[i];
        } else if constexpr (K == StepperKind::kWiener) {
            for (int i = 0; i < d; ++i) xn[i] = x[i] + sadt * z[i];
        } else {
            env->eval(x, nullptr, &sigma, &b);
            const Vec sz = sigma.mul(z);
            for (int i = 0; i < d; ++i) xn[i] = x[i] + b[i] * dt + sdt * sz[i];
        }
        const double t = dt * static_cast<double>(step);
        p.steps = step;

        if (accumulating) {
            p.step_excursion_sum += dist(xn, x);
            if (integrand) {
                const double g_cur = integrand(xn);
                p.g_integral += 0.5 * (g_prev + g_cur) * dt;
                g_prev = g_cur;
            }
            p.steps_to_exit = step;
        }
        x = xn;

        const double exc = dist(x, x0);
        if (exc > p.max_excursion) p.max_excursion = exc;

        // fixed evaluation order: excursion stop, continuous exit, skeleton
        if (rules.excursion_threshold > 0.0 && !p.excursion.fired &&
            p.max_excursion >= rules.excursion_threshold) {
            p.excursion = {true, t, x};
            break;  // the walk is the excursion-stopped process
        }
        if (dom != nullptr && !p.exit.fired && !dom->contains(x)) {
            p.exit = {true, t, x};
            accumulating = false;
        }
        if (spr > 0 && step % spr == 0) {
            p.skeleton.push_back(x);
            skeleton_checks(t, x);
        }
        stopped = required != 0 && (fired_mask(p) & required) == required;
    }

    p.x_final = x;
    p.t_final = dt * static_cast<double>(p.steps);
    p.horizon_exceeded = !stopped && !p.excursion.fired && required != 0;
    return p;
}

}  // namespace

StoppedPath simulate_quenched(const Environment& env, const Vec& x0, const SimConfig& cfg,
                              const StoppingRules& rules, const Integrand& integrand) {
    if (x0.n != env.spec().d)
        throw InvalidParams("start point dimension does not match the environment");
    if (env.is_trivial())
        return run_walk<StepperKind::kTrivial>(&env, 1.0, x0, cfg, rules, integrand);
    return run_walk<StepperKind::kQuenched>(&env, 1.0, x0, cfg, rules, integrand);
}

StoppedPath simulate_wiener(double alpha, const Vec& x0, const SimConfig& cfg,
                            const StoppingRules& rules, const Integrand& integrand) {
    if (!(alpha > 0.0)) throw InvalidParams("wiener variance must be positive");
    return run_walk<StepperKind::kWiener>(nullptr, alpha, x0, cfg, rules, integrand);
}

SkeletonStops discrete_stop_times(const StoppedPath& path, const ScaleTable& table, int n,
                                  const Domain& microscopic_domain) {
    const int m = table.discretization_row(n);
    const ScaleRow& row = table.row(m);
    const double ell = static_cast<double>(row.L);
    const double stride = ell * ell;
    if (path.record_stride <= 0.0 || path.skeleton.empty())
        throw NotRecorded("path carries no skeleton positions");
    if (std::abs(path.record_stride - stride) > 1e-9 * stride)
        throw NotRecorded("skeleton stride " + std::to_string(path.record_stride) +
                          " does not match required " + std::to_string(stride));
    SkeletonStops s;
    for (std::size_t k = 0; k < path.skeleton.size(); ++k) {
        const double t = stride * static_cast<double>(k);
        const Vec& xs = path.skeleton[k];
        if (!s.tau1.fired && microscopic_domain.dist_to_complement(xs) <= row.D_tilde)
            s.tau1 = {true, t, xs};
        if (!s.tau2.fired && microscopic_domain.dist_to_domain(xs) >= row.D_tilde)
            s.tau2 = {true, t, xs};
        if (!s.tilde.fired && !microscopic_domain.contains(xs)) s.tilde = {true, t, xs};
    }
    return s;
}

}  // namespace rehom
