#include <doctest.h>

#include "icl/errors.hpp"
#include "icl/linalg.hpp"
#include "icl/rng.hpp"

using namespace icl;

TEST_CASE("SymMatrix rejects asymmetric input") {
    Mat m(2, 2);
    m << 1, 2, 2.0000001, 1;
    CHECK_THROWS_AS(SymMatrix{m}, NotSymmetric);
    CHECK_THROWS_AS(SymMatrix{Mat::Zero(2, 3)}, DimensionMismatch);
    m(1, 0) = 2;
    CHECK_NOTHROW(SymMatrix{m});
}

TEST_CASE("Jacobi eigendecomposition of a known 2x2 matrix") {
    Mat m(2, 2);
    m << 2, 1, 1, 2;
    const EigenDecomp e = sym_eigen(SymMatrix(m));
    CHECK(e.eigenvalues(0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(e.eigenvalues(1) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK((e.reconstruct() - m).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("Jacobi reconstructs random symmetric matrices with orthogonal U") {
    Rng rng(7, 0);
    for (int d : {1, 3, 6, 10}) {
        Mat a(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
        const SymMatrix s = SymMatrix::from_upper(a);
        const EigenDecomp e = sym_eigen(s);
        CHECK((e.reconstruct() - s.mat()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((e.rotation.transpose() * e.rotation - Mat::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-12);
        for (int i = 1; i < d; ++i) CHECK(e.eigenvalues(i - 1) >= e.eigenvalues(i));
        CHECK(e.trace() == doctest::Approx(s.mat().trace()).epsilon(1e-12));
    }
}

TEST_CASE("spd_inverse, quad_form and trace_prod") {
    Mat m(2, 2);
    m << 4, 1, 1, 3;
    const SymMatrix inv = spd_inverse(SymMatrix(m));
    CHECK((inv.mat() * m - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-14);
    Vec x(2);
    x << 1, -2;
    CHECK(quad_form(x, SymMatrix(m)) == doctest::Approx(4 - 4 + 12));
    Mat b(2, 2);
    b << 1, 2, 3, 4;
    CHECK(trace_prod(m, b) == doctest::Approx((m * b).trace()));
    Mat sing(2, 2);
    sing << 1, 1, 1, 1;
    CHECK_THROWS_AS(spd_inverse(SymMatrix(sing)), NotPositiveDefinite);
}
