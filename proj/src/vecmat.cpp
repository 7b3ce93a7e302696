#include "rehom/vecmat.hpp"

#include <algorithm>
#include <cmath>

namespace rehom {

void jacobi_eigensym(const Mat& m, Vec& evals, Mat& evecs) {
    const int n = m.n;
    Mat a = m;
    Mat q = Mat::identity(n);

    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += a.at(i, j) * a.at(i, j);
        if (off < 1e-28) break;

        for (int p = 0; p < n - 1; ++p) {
            for (int qi = p + 1; qi < n; ++qi) {
                const double apq = a.at(p, qi);
                if (std::abs(apq) < 1e-300) continue;
                const double app = a.at(p, p);
                const double aqq = a.at(qi, qi);
                const double theta = (aqq - app) / (2.0 * apq);
                // stable tangent of the rotation angle
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (int k = 0; k < n; ++k) {
                    const double akp = a.at(k, p);
                    const double akq = a.at(k, qi);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, qi) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a.at(p, k);
                    const double aqk = a.at(qi, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(qi, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double qkp = q.at(k, p);
                    const double qkq = q.at(k, qi);
                    q.at(k, p) = c * qkp - s * qkq;
                    q.at(k, qi) = s * qkp + c * qkq;
                }
            }
        }
    }

    // sort ascending, carrying eigenvector columns along
    std::array<int, kMaxDim> order{};
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.begin() + n,
              [&](int i, int j) { return a.at(i, i) < a.at(j, j); });

    evals = Vec(n);
    evecs = Mat(n);
    for (int i = 0; i < n; ++i) {
        evals[i] = a.at(order[i], order[i]);
        for (int k = 0; k < n; ++k) evecs.at(k, i) = q.at(k, order[i]);
    }
}

Mat spectral_apply(const Mat& m, double (*f)(double)) {
    Vec evals;
    Mat q;
    jacobi_eigensym(m, evals, q);
    Mat r(m.n);
    for (int i = 0; i < m.n; ++i)
        for (int j = 0; j < m.n; ++j) {
            double s = 0.0;
            for (int k = 0; k < m.n; ++k) s += q.at(i, k) * f(evals[k]) * q.at(j, k);
            r.at(i, j) = s;
        }
    return r;
}

Mat principal_sqrt(const Mat& m) {
    Vec evals;
    Mat q;
    jacobi_eigensym(m, evals, q);
    for (int i = 0; i < m.n; ++i) {
        if (evals[i] < -1e-10)
            throw SolverFailure("principal_sqrt: matrix has a negative eigenvalue");
        if (evals[i] < 0.0) evals[i] = 0.0;
    }
    Mat r(m.n);
    for (int i = 0; i < m.n; ++i)
        for (int j = 0; j < m.n; ++j) {
            double s = 0.0;
            for (int k = 0; k < m.n; ++k)
                s += q.at(i, k) * std::sqrt(evals[k]) * q.at(j, k);
            r.at(i, j) = s;
        }
    return r;
}

}  // namespace rehom
