#pragma once

#include <array>
#include <cmath>
#include <cstring>

#include "rehom/errors.hpp"

// Small fixed-capacity dense vectors and symmetric matrices.  Everything in
// this project lives in dimension d with 3 <= d <= kMaxDim, so a stack
// array beats any heap-backed container in the inner simulation loops.

namespace rehom {

inline constexpr int kMaxDim = 8;

struct Vec {
    int n = 0;
    std::array<double, kMaxDim> c{};

    Vec() = default;
    explicit Vec(int dim) : n(dim) { c.fill(0.0); }

    static Vec zero(int dim) { return Vec(dim); }

    double& operator[](int i) { return c[static_cast<size_t>(i)]; }
    double operator[](int i) const { return c[static_cast<size_t>(i)]; }

    Vec& operator+=(const Vec& o) {
        for (int i = 0; i < n; ++i) c[i] += o.c[i];
        return *this;
    }
    Vec& operator-=(const Vec& o) {
        for (int i = 0; i < n; ++i) c[i] -= o.c[i];
        return *this;
    }
    Vec& operator*=(double s) {
        for (int i = 0; i < n; ++i) c[i] *= s;
        return *this;
    }

    friend Vec operator+(Vec a, const Vec& b) { return a += b; }
    friend Vec operator-(Vec a, const Vec& b) { return a -= b; }
    friend Vec operator*(Vec a, double s) { return a *= s; }
    friend Vec operator*(double s, Vec a) { return a *= s; }

    double dot(const Vec& o) const {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += c[i] * o.c[i];
        return s;
    }
    double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }
};

inline double dist(const Vec& a, const Vec& b) { return (a - b).norm(); }

struct Mat {
    int n = 0;
    std::array<double, kMaxDim * kMaxDim> a{};

    Mat() = default;
    explicit Mat(int dim) : n(dim) { a.fill(0.0); }

    static Mat identity(int dim) {
        Mat m(dim);
        for (int i = 0; i < dim; ++i) m.at(i, i) = 1.0;
        return m;
    }

    double& at(int i, int j) { return a[static_cast<size_t>(i * n + j)]; }
    double at(int i, int j) const { return a[static_cast<size_t>(i * n + j)]; }

    Mat& operator+=(const Mat& o) {
        for (int i = 0; i < n * n; ++i) a[i] += o.a[i];
        return *this;
    }
    Mat& operator-=(const Mat& o) {
        for (int i = 0; i < n * n; ++i) a[i] -= o.a[i];
        return *this;
    }
    Mat& operator*=(double s) {
        for (int i = 0; i < n * n; ++i) a[i] *= s;
        return *this;
    }
    friend Mat operator+(Mat x, const Mat& y) { return x += y; }
    friend Mat operator-(Mat x, const Mat& y) { return x -= y; }
    friend Mat operator*(Mat x, double s) { return x *= s; }
    friend Mat operator*(double s, Mat x) { return x *= s; }

    Vec mul(const Vec& v) const {
        Vec r(n);
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += at(i, j) * v[j];
            r[i] = s;
        }
        return r;
    }

    Mat mul(const Mat& o) const {
        Mat r(n);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < n; ++k) {
                const double aik = at(i, k);
                for (int j = 0; j < n; ++j) r.at(i, j) += aik * o.at(k, j);
            }
        return r;
    }

    Mat transposed() const {
        Mat r(n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) r.at(i, j) = at(j, i);
        return r;
    }

    /// Frobenius norm; the matrix-size measure used throughout.
    double frob() const {
        double s = 0.0;
        for (int i = 0; i < n * n; ++i) s += a[i] * a[i];
        return std::sqrt(s);
    }

    double max_abs_entry() const {
        double m = 0.0;
        for (int i = 0; i < n * n; ++i) m = std::max(m, std::abs(a[i]));
        return m;
    }
};

/// Eigendecomposition of a symmetric matrix by the classical cyclic Jacobi
/// rotation method.  Adequate and robust for the tiny dimensions used here
/// (d <= 8; mostly d = 3).  Returns eigenvalues in `evals` (ascending) and
/// the corresponding orthonormal eigenvectors as the columns of `evecs`.
void jacobi_eigensym(const Mat& m, Vec& evals, Mat& evecs);

/// Applies a scalar function to a symmetric matrix through its spectrum:
/// f(M) = Q diag(f(lambda)) Q^T.
Mat spectral_apply(const Mat& m, double (*f)(double));

/// Principal (symmetric positive semi-definite) square root of a symmetric
/// positive semi-definite matrix.  Throws SolverFailure if an eigenvalue is
/// materially negative.
Mat principal_sqrt(const Mat& m);

}  // namespace rehom
