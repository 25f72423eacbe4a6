#pragma once

#include <Eigen/Dense>

namespace icl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Dense symmetric matrix. Symmetry is checked exactly at construction; the
// constructor never averages M and Mᵀ, so an asymmetric input is an error.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(Mat m);

    static SymMatrix identity(int d);
    static SymMatrix diagonal(const Vec& diag);
    // Builds the matrix from the upper triangle of `m`, mirroring it below the
    // diagonal. Used for results of products that are symmetric in exact
    // arithmetic (e.g. U·diag·Uᵀ) but not bit-symmetric in floating point.
    static SymMatrix from_upper(const Mat& m);

    int dim() const { return static_cast<int>(m_.rows()); }
    const Mat& mat() const { return m_; }
    double operator()(int i, int j) const { return m_(i, j); }

private:
    Mat m_;
};

// Symmetric eigendecomposition M = U·diag(λ)·Uᵀ with λ sorted descending.
struct EigenDecomp {
    Mat rotation;     // U, orthogonal
    Vec eigenvalues;  // λ₁ ≥ … ≥ λ_d

    int dim() const { return static_cast<int>(eigenvalues.size()); }
    Mat reconstruct() const;
    SymMatrix matrix() const { return SymMatrix::from_upper(reconstruct()); }
    double trace() const { return eigenvalues.sum(); }
};

// Cyclic Jacobi eigensolver. Throws NotConverged if the off-diagonal norm does
// not fall below 1e-12 (relative to the Frobenius norm) within `max_sweeps`.
EigenDecomp sym_eigen(const SymMatrix& m, int max_sweeps = 100);

// xᵀMx.
double quad_form(const Vec& x, const SymMatrix& m);

// Inverse of an SPD matrix via its eigendecomposition. Throws
// NotPositiveDefinite if any eigenvalue is ≤ 1e-12.
SymMatrix spd_inverse(const SymMatrix& m);

// tr(AB) without forming the product.
double trace_prod(const Mat& a, const Mat& b);

}  // namespace icl
