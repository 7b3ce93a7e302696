#include "rehom/environment.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

namespace rehom {

namespace {

// Largest slope of t -> (1 - t^2)^3 on [0, 1], attained at t = 1/sqrt(5).
const double kUnitKernelSlope = 96.0 / (25.0 * std::sqrt(5.0));

int packed_pair_index(int d, int i, int j) {
    // upper-triangular row-major: (0,0),(0,1),...,(0,d-1),(1,1),...
    return i * d - i * (i - 1) / 2 + (j - i);
}

}  // namespace

void EnvSpec::validate() const {
    if (d < 1 || d > kMaxDim)
        throw InvalidSpec("environment dimension " + std::to_string(d) +
                          " outside supported range [1, " + std::to_string(kMaxDim) + "]");
    if (!(eta >= 0.0 && eta < 0.5))
        throw InvalidSpec("perturbation amplitude eta = " + std::to_string(eta) +
                          " must lie in [0, 1/2)");
    if (!(kernel_radius > 0.0) || !(lattice_spacing > 0.0) || !(range_R > 0.0))
        throw InvalidSpec("kernel_radius, lattice_spacing and range_R must be positive");
    if (2.0 * kernel_radius + lattice_spacing > range_R * (1.0 + 1e-12))
        throw InvalidSpec("dependence range too small: need 2*kernel_radius + lattice_spacing"
                          " <= range_R, got 2*" + std::to_string(kernel_radius) + " + " +
                          std::to_string(lattice_spacing) + " > " + std::to_string(range_R));
}

EnvSpec envspec_from_config(const ConfigMap& cfg) {
    EnvSpec s;
    s.d = cfg_int(cfg, "env.d", s.d);
    s.eta = cfg_double(cfg, "env.eta", s.eta);
    s.range_R = cfg_double(cfg, "env.range_R", s.range_R);
    s.lattice_spacing = cfg_double(cfg, "env.lattice_spacing", s.lattice_spacing);
    s.kernel_radius = cfg_double(cfg, "env.kernel_radius", s.kernel_radius);
    s.seed = cfg_u64(cfg, "env.seed", s.seed);
    s.validate();
    return s;
}

struct Environment::Accum {
    std::array<double, kMaxDim> bsum{};
    std::array<double, kMaxDim*(kMaxDim + 1) / 2> hsum{};
};

Environment::Environment(const EnvSpec& spec) : spec_(spec) {
    spec_.validate();
    n_pair_ = spec_.d * (spec_.d + 1) / 2;
    stride_ = spec_.d + n_pair_ + 2;  // xi, packed H, |xi|, |H|_F
    kernel_slope_max_ = kUnitKernelSlope / spec_.kernel_radius;
    shift_ = Vec(spec_.d);
    NoiseCursor cur(spec_.seed, stream_id(StreamTag::kEnvShift));
    for (int i = 0; i < spec_.d; ++i) shift_[i] = spec_.lattice_spacing * cur.uniform();
}

double Environment::kernel(double r) const {
    const double u = r / spec_.kernel_radius;
    if (u >= 1.0) return 0.0;
    const double t = 1.0 - u * u;
    return t * t * t;
}

std::uint64_t Environment::node_stream(const NodeIndex& z) const {
    std::uint64_t h = stream_id(StreamTag::kEnvNode, static_cast<std::uint64_t>(spec_.d));
    for (int i = 0; i < spec_.d; ++i) h = combine64(h, static_cast<std::uint64_t>(z[i]));
    return h;
}

double Environment::raw_channel(const NodeIndex& z, int channel) const {
    return normal_at(spec_.seed, node_stream(z), static_cast<std::uint64_t>(channel));
}

double Environment::node_xi(const NodeIndex& z, int channel) const {
    return raw_channel(z, channel);
}

Mat Environment::node_sym(const NodeIndex& z) const {
    const int d = spec_.d;
    Mat h(d);
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            const double raw = raw_channel(z, d + packed_pair_index(d, i, j));
            const double v = (i == j) ? std::sqrt(2.0) * raw : raw;
            h.at(i, j) = v;
            h.at(j, i) = v;
        }
    return h;
}

void Environment::fill_node_record(const NodeIndex& z, double* out) const {
    const int d = spec_.d;
    const std::uint64_t stream = node_stream(z);
    double norm_xi2 = 0.0;
    for (int i = 0; i < d; ++i) {
        out[i] = normal_at(spec_.seed, stream, static_cast<std::uint64_t>(i));
        norm_xi2 += out[i] * out[i];
    }
    double fro2 = 0.0;
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            const int p = packed_pair_index(d, i, j);
            double v = normal_at(spec_.seed, stream, static_cast<std::uint64_t>(d + p));
            if (i == j) v *= std::sqrt(2.0);
            out[d + p] = v;
            fro2 += (i == j) ? v * v : 2.0 * v * v;
        }
    out[d + n_pair_] = std::sqrt(norm_xi2);
    out[d + n_pair_ + 1] = std::sqrt(fro2);
}

const double* Environment::cached_record(const NodeIndex& z) const {
    if (cache_.empty()) return nullptr;
    std::size_t flat = 0;
    for (int i = 0; i < spec_.d; ++i) {
        if (z[i] < cache_lo_[i] || z[i] > cache_hi_[i]) return nullptr;
        flat = flat * static_cast<std::size_t>(cache_hi_[i] - cache_lo_[i] + 1) +
               static_cast<std::size_t>(z[i] - cache_lo_[i]);
    }
    return cache_.data() + flat * static_cast<std::size_t>(stride_);
}

namespace {

// Visits every lattice node s*z + shift within `radius` of x; calls
// fn(node, record-needed-squared-distance).
template <typename Fn>
void for_nodes_near(const EnvSpec& spec, const Vec& shift, const Vec& x, double radius, Fn&& fn) {
    const int d = spec.d;
    const double s = spec.lattice_spacing;
    NodeIndex lo{}, hi{}, it{};
    for (int i = 0; i < d; ++i) {
        lo[i] = static_cast<std::int64_t>(std::ceil((x[i] - shift[i] - radius) / s));
        hi[i] = static_cast<std::int64_t>(std::floor((x[i] - shift[i] + radius) / s));
        if (hi[i] < lo[i]) return;
        it[i] = lo[i];
    }
    const double r2 = radius * radius;
    for (;;) {
        double dist2 = 0.0;
        for (int i = 0; i < d; ++i) {
            const double dx = x[i] - (s * static_cast<double>(it[i]) + shift[i]);
            dist2 += dx * dx;
        }
        if (dist2 <= r2) fn(it, dist2);
        int axis = d - 1;
        while (axis >= 0 && ++it[axis] > hi[axis]) {
            it[axis] = lo[axis];
            --axis;
        }
        if (axis < 0) return;
    }
}

}  // namespace

std::vector<NodeIndex> Environment::contributing_nodes(const Vec& x) const {
    std::vector<NodeIndex> out;
    for_nodes_near(spec_, shift_, x, spec_.kernel_radius,
                   [&](const NodeIndex& z, double) { out.push_back(z); });
    return out;
}

void Environment::accumulate(const Vec& x, Accum* acc) const {
    const int d = spec_.d;
    double tmp[kMaxDim + kMaxDim * (kMaxDim + 1) / 2 + 2];
    for_nodes_near(spec_, shift_, x, spec_.kernel_radius, [&](const NodeIndex& z, double dist2) {
        const double w = kernel(std::sqrt(dist2));
        if (w == 0.0) return;
        const double* rec = cached_record(z);
        if (rec == nullptr) {
            fill_node_record(z, tmp);
            rec = tmp;
        }
        for (int i = 0; i < d; ++i) acc->bsum[i] += w * rec[i];
        for (int p = 0; p < n_pair_; ++p) acc->hsum[p] += w * rec[d + p];
    });
}

void Environment::eval(const Vec& x, Mat* A, Mat* sigma, Vec* b) const {
    const int d = spec_.d;
    if (is_trivial()) {
        if (A) *A = Mat::identity(d);
        if (sigma) *sigma = Mat::identity(d);
        if (b) *b = Vec(d);
        return;
    }
    Accum acc;
    accumulate(x, &acc);
    if (b) {
        *b = Vec(d);
        for (int i = 0; i < d; ++i) (*b)[i] = spec_.eta * std::tanh(acc.bsum[i]);
    }
    if (A == nullptr && sigma == nullptr) return;

    Mat m(d);
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            const double v = acc.hsum[packed_pair_index(d, i, j)];
            m.at(i, j) = v;
            m.at(j, i) = v;
        }
    Vec lam(d);
    Mat q(d);
    jacobi_eigensym(m, lam, q);
    const double scale = spec_.eta / std::sqrt(static_cast<double>(d));
    double av[kMaxDim], sv[kMaxDim];
    for (int k = 0; k < d; ++k) {
        av[k] = 1.0 + scale * std::tanh(lam[k]);
        sv[k] = std::sqrt(av[k]);
    }
    if (A) *A = Mat(d);
    if (sigma) *sigma = Mat(d);
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            double sa = 0.0, ss = 0.0;
            for (int k = 0; k < d; ++k) {
                const double qq = q.at(i, k) * q.at(j, k);
                sa += qq * av[k];
                ss += qq * sv[k];
            }
            if (A) {
                A->at(i, j) = sa;
                A->at(j, i) = sa;
            }
            if (sigma) {
                sigma->at(i, j) = ss;
                sigma->at(j, i) = ss;
            }
        }
}

Vec Environment::drift(const Vec& x) const {
    Vec b(spec_.d);
    eval(x, nullptr, nullptr, &b);
    return b;
}

Mat Environment::diffusion_matrix(const Vec& x) const {
    Mat a(spec_.d);
    eval(x, &a, nullptr, nullptr);
    return a;
}

double Environment::lipschitz_bound(const Vec& x) const {
    if (is_trivial()) return 0.0;
    const int d = spec_.d;
    const double reach = spec_.kernel_radius + 0.5 * spec_.lattice_spacing;
    double tmp[kMaxDim + kMaxDim * (kMaxDim + 1) / 2 + 2];
    double noise_sum = 0.0;
    for_nodes_near(spec_, shift_, x, reach, [&](const NodeIndex& z, double) {
        const double* rec = cached_record(z);
        if (rec == nullptr) {
            fill_node_record(z, tmp);
            rec = tmp;
        }
        noise_sum += rec[d + n_pair_] + rec[d + n_pair_ + 1] / std::sqrt(static_cast<double>(d));
    });
    return spec_.eta * kernel_slope_max_ * noise_sum;
}

void Environment::prepare_box(const Vec& lo, const Vec& hi) {
    const int d = spec_.d;
    const double s = spec_.lattice_spacing;
    const double margin = spec_.kernel_radius + s;
    std::size_t total = 1;
    for (int i = 0; i < d; ++i) {
        cache_lo_[i] = static_cast<std::int64_t>(std::ceil((lo[i] - shift_[i] - margin) / s));
        cache_hi_[i] = static_cast<std::int64_t>(std::floor((hi[i] - shift_[i] + margin) / s));
        if (cache_hi_[i] < cache_lo_[i])
            throw InvalidParams("prepare_box: empty box on axis " + std::to_string(i));
        total *= static_cast<std::size_t>(cache_hi_[i] - cache_lo_[i] + 1);
    }
    if (total * static_cast<std::size_t>(stride_) > (std::size_t{1} << 28))
        throw InvalidParams("prepare_box: region too large to cache (" +
                            std::to_string(total) + " nodes)");
    cache_.assign(total * static_cast<std::size_t>(stride_), 0.0);
    NodeIndex it = cache_lo_;
    for (std::size_t flat = 0; flat < total; ++flat) {
        fill_node_record(it, cache_.data() + flat * static_cast<std::size_t>(stride_));
        int axis = d - 1;
        while (axis >= 0 && ++it[axis] > cache_hi_[axis]) {
            it[axis] = cache_lo_[axis];
            --axis;
        }
    }
}

void dump_coefficient_grid(const Environment& env, double extent, int samples_per_axis,
                           std::ostream& os) {
    const int d = env.spec().d;
    if (samples_per_axis < 2) throw InvalidParams("dump_coefficient_grid: need >= 2 samples");
    os << "# columns: x[0..d), packed upper-triangular A, b[0..d)\n";
    std::array<int, kMaxDim> it{};
    char buf[64];
    for (;;) {
        Vec x(d);
        for (int i = 0; i < d; ++i)
            x[i] = -extent + 2.0 * extent * static_cast<double>(it[i]) /
                       static_cast<double>(samples_per_axis - 1);
        Mat a(d);
        Vec b(d);
        env.eval(x, &a, nullptr, &b);
        bool first = true;
        auto put = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            if (!first) os << ',';
            os << buf;
            first = false;
        };
        for (int i = 0; i < d; ++i) put(x[i]);
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) put(a.at(i, j));
        for (int i = 0; i < d; ++i) put(b[i]);
        os << '\n';
        int axis = d - 1;
        while (axis >= 0 && ++it[axis] >= samples_per_axis) {
            it[axis] = 0;
            --axis;
        }
        if (axis < 0) return;
    }
}

}  // namespace rehom
