#include "icl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "icl/errors.hpp"

namespace icl {

SymMatrix::SymMatrix(Mat m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) {
        throw DimensionMismatch("symmetric matrix must be square, got " + std::to_string(m_.rows()) +
                                "x" + std::to_string(m_.cols()));
    }
    for (Eigen::Index i = 0; i < m_.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < m_.cols(); ++j) {
            if (m_(i, j) != m_(j, i)) {
                throw NotSymmetric("entry (" + std::to_string(i) + "," + std::to_string(j) +
                                   ") differs from its transpose");
            }
        }
    }
}

SymMatrix SymMatrix::identity(int d) { return SymMatrix(Mat::Identity(d, d)); }

SymMatrix SymMatrix::diagonal(const Vec& diag) { return SymMatrix(Mat(diag.asDiagonal())); }

SymMatrix SymMatrix::from_upper(const Mat& m) {
    if (m.rows() != m.cols()) throw DimensionMismatch("from_upper needs a square matrix");
    Mat s = m.triangularView<Eigen::Upper>();
    s.triangularView<Eigen::StrictlyLower>() = s.transpose().triangularView<Eigen::StrictlyLower>();
    return SymMatrix(std::move(s));
}

Mat EigenDecomp::reconstruct() const {
    return rotation * eigenvalues.asDiagonal() * rotation.transpose();
}

EigenDecomp sym_eigen(const SymMatrix& m, int max_sweeps) {
    const int d = m.dim();
    Mat a = m.mat();
    Mat u = Mat::Identity(d, d);

    const double scale = std::max(a.norm(), 1e-300);
    auto off_norm = [&] {
        double s = 0.0;
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j) s += 2.0 * a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    bool converged = off_norm() <= 1e-12 * scale;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        for (int p = 0; p < d - 1; ++p) {
            for (int q = p + 1; q < d; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                // Rotation angle that annihilates a(p,q) (Golub & Van Loan 8.5.2).
                const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (int k = 0; k < d; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < d; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                for (int k = 0; k < d; ++k) {
                    const double ukp = u(k, p), ukq = u(k, q);
                    u(k, p) = c * ukp - s * ukq;
                    u(k, q) = s * ukp + c * ukq;
                }
            }
        }
        converged = off_norm() <= 1e-12 * scale;
    }
    if (!converged) throw NotConverged("Jacobi sweep budget exhausted");

    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) > a(j, j); });
    EigenDecomp out{Mat(d, d), Vec(d)};
    for (int k = 0; k < d; ++k) {
        out.eigenvalues(k) = a(order[k], order[k]);
        out.rotation.col(k) = u.col(order[k]);
    }
    return out;
}

double quad_form(const Vec& x, const SymMatrix& m) {
    if (x.size() != m.dim()) throw DimensionMismatch("quad_form: vector/matrix sizes differ");
    return x.dot(m.mat() * x);
}

SymMatrix spd_inverse(const SymMatrix& m) {
    const EigenDecomp e = sym_eigen(m);
    if (e.dim() > 0 && e.eigenvalues.minCoeff() <= 1e-12) {
        throw NotPositiveDefinite("smallest eigenvalue " + std::to_string(e.eigenvalues.minCoeff()));
    }
    const Vec inv = e.eigenvalues.cwiseInverse();
    return SymMatrix::from_upper(e.rotation * inv.asDiagonal() * e.rotation.transpose());
}

double trace_prod(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows() || a.rows() != b.cols()) {
        throw DimensionMismatch("trace_prod: shapes are not compatible");
    }
    return (a.array() * b.transpose().array()).sum();
}

}  // namespace icl
