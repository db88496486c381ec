#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "w2w/linalg.hpp"

using namespace w2w;

TEST_CASE("jacobi_svd oracle on hand-checkable 2x2 cases") {
    // diagonal
    Matrix d(2, 2);
    d(0, 0) = 3.0f;
    d(1, 1) = 1.0f;
    auto r = oracle::jacobi_svd(d);
    REQUIRE_THAT(r.sigma[0], Catch::Matchers::WithinAbs(3.0, 1e-12));
    REQUIRE_THAT(r.sigma[1], Catch::Matchers::WithinAbs(1.0, 1e-12));

    // [[1,1],[0,1]]: singular values are the golden ratio and its inverse
    Matrix g(2, 2);
    g(0, 0) = 1.0f;
    g(0, 1) = 1.0f;
    g(1, 1) = 1.0f;
    auto rg = oracle::jacobi_svd(g);
    double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    REQUIRE_THAT(rg.sigma[0], Catch::Matchers::WithinAbs(phi, 1e-10));
    REQUIRE_THAT(rg.sigma[1], Catch::Matchers::WithinAbs(1.0 / phi, 1e-10));
}

TEST_CASE("top1_svd on a diagonal matrix") {
    Matrix m(2, 2);
    m(0, 0) = 3.0f;
    m(1, 1) = 1.0f;
    SingularTriplet t = top1_svd(m);
    REQUIRE_THAT(t.sigma, Catch::Matchers::WithinAbs(3.0f, 1e-6f));
    REQUIRE_THAT(t.u[0], Catch::Matchers::WithinAbs(1.0f, 1e-6f));
    REQUIRE_THAT(t.u[1], Catch::Matchers::WithinAbs(0.0f, 1e-6f));
    REQUIRE_THAT(t.v[0], Catch::Matchers::WithinAbs(1.0f, 1e-6f));
}

TEST_CASE("top1_svd rejects the zero matrix") {
    REQUIRE_THROWS_AS(top1_svd(Matrix(2, 2)), DegenerateMatrix);
}

TEST_CASE("top1_svd matches the Jacobi oracle on seeded matrices") {
    Rng rng(31);
    Matrix m = oracle::random_matrix(6, 4, rng);
    SingularTriplet t = top1_svd(m, 1e-7, 10000, 31);
    auto full = oracle::jacobi_svd(m);
    double fro = m.frobenius_norm();
    REQUIRE_THAT(double(t.sigma), Catch::Matchers::WithinAbs(full.sigma[0], 1e-6 * fro));
    REQUIRE(oracle::abs_dot(t.u, full.u[0]) >= 1.0 - 1e-6);
    REQUIRE(oracle::abs_dot(t.v, full.v[0]) >= 1.0 - 1e-6);

    // residual contract in double from the returned floats
    auto mv = matvec(m, t.v);
    double r1 = 0.0;
    for (std::size_t i = 0; i < mv.size(); ++i) {
        double e = double(mv[i]) - double(t.sigma) * double(t.u[i]);
        r1 += e * e;
    }
    REQUIRE(std::sqrt(r1) <= 1e-6 * fro);
}

TEST_CASE("top1_svd sigma is a randomized max of ||Mv||") {
    Rng rng(32);
    Matrix m = oracle::random_matrix(8, 5, rng);
    SingularTriplet t = top1_svd(m, 1e-7, 10000, 7);
    double best = 0.0;
    for (int i = 0; i < 200; ++i) {
        auto v = normalized(rng.gaussian_vector(5));
        best = std::max(best, norm2(matvec(m, v)));
    }
    REQUIRE(double(t.sigma) >= best - 1e-3);
}

TEST_CASE("top1_svd is deterministic and stable under negation") {
    Rng rng(33);
    Matrix m = oracle::random_matrix(5, 5, rng);
    SingularTriplet a = top1_svd(m, 1e-7, 10000, 5);
    SingularTriplet b = top1_svd(m, 1e-7, 10000, 5);
    REQUIRE(a.sigma == b.sigma);
    REQUIRE(a.u == b.u);
    REQUIRE(a.v == b.v);

    // sign convention: largest-|u| entry positive
    std::size_t big = 0;
    for (std::size_t i = 1; i < a.u.size(); ++i)
        if (std::abs(a.u[i]) > std::abs(a.u[big])) big = i;
    REQUIRE(a.u[big] > 0.0f);

    Matrix neg = m;
    for (auto& x : neg.data()) x = -x;
    SingularTriplet c = top1_svd(neg, 1e-7, 10000, 5);
    REQUIRE_THAT(c.sigma, Catch::Matchers::WithinAbs(a.sigma, 1e-6f * float(m.frobenius_norm())));
    // σ·u·vᵀ of -M is the negation of σ·u·vᵀ of M
    for (std::size_t i = 0; i < a.u.size(); ++i)
        for (std::size_t j = 0; j < a.v.size(); ++j)
            REQUIRE_THAT(double(c.sigma) * c.u[i] * c.v[j],
                         Catch::Matchers::WithinAbs(-double(a.sigma) * a.u[i] * a.v[j], 1e-5));
}

TEST_CASE("top1_svd near-tie satisfies the residual contract") {
    // σ1 = σ2 = 2: any unit vector in the dominant plane is acceptable
    Matrix m(3, 3);
    m(0, 0) = 2.0f;
    m(1, 1) = 2.0f;
    m(2, 2) = 0.5f;
    SingularTriplet t = top1_svd(m, 1e-7, 10000, 9);
    double fro = m.frobenius_norm();
    auto mv = matvec(m, t.v);
    double r1 = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        double e = double(mv[i]) - double(t.sigma) * double(t.u[i]);
        r1 += e * e;
    }
    REQUIRE(std::sqrt(r1) <= 1e-6 * fro);
    REQUIRE_THAT(t.sigma, Catch::Matchers::WithinAbs(2.0f, 1e-5f));
}

TEST_CASE("sym_eig_desc on identity and diagonal") {
    EigResult r = sym_eig_desc(Matrix::identity(3));
    for (double v : r.values) REQUIRE_THAT(v, Catch::Matchers::WithinAbs(1.0, 1e-10));

    Matrix d(3, 3);
    d(0, 0) = 5.0f;
    d(1, 1) = 2.0f;
    d(2, 2) = 1.0f;
    EigResult rd = sym_eig_desc(d);
    REQUIRE_THAT(rd.values[0], Catch::Matchers::WithinAbs(5.0, 1e-10));
    REQUIRE_THAT(rd.values[1], Catch::Matchers::WithinAbs(2.0, 1e-10));
    REQUIRE_THAT(rd.values[2], Catch::Matchers::WithinAbs(1.0, 1e-10));
    REQUIRE_THAT(std::abs(rd.vectors(0, 0)), Catch::Matchers::WithinAbs(1.0f, 1e-6f));
}

TEST_CASE("sym_eig_desc recovers a planted spectrum") {
    // S = QᵀΛQ from a seeded orthogonal Q
    Rng rng(41);
    std::size_t n = 8;
    std::vector<double> lambda = {9, 7, 5, 3, 2, 1, 0.5, 0.1};
    // random orthogonal via Gram-Schmidt
    std::vector<std::vector<double>> q(n, std::vector<double>(n));
    for (auto& row : q)
        for (auto& x : row) x = rng.gaussian();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < i; ++p) {
            double dp = 0.0;
            for (std::size_t c = 0; c < n; ++c) dp += q[i][c] * q[p][c];
            for (std::size_t c = 0; c < n; ++c) q[i][c] -= dp * q[p][c];
        }
        double nn = 0.0;
        for (double x : q[i]) nn += x * x;
        nn = std::sqrt(nn);
        for (auto& x : q[i]) x /= nn;
    }
    Matrix s(n, n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += q[j][a] * lambda[j] * q[j][b];
            s(a, b) = float(acc);
        }
    EigResult r = sym_eig_desc(s);
    for (std::size_t j = 0; j < n; ++j)
        REQUIRE_THAT(r.values[j], Catch::Matchers::WithinAbs(lambda[j], 1e-5));

    // reconstruction ‖VΛVᵀ − S‖_F ≤ 1e-6·‖S‖_F
    double err = 0.0;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                acc += double(r.vectors(a, j)) * r.values[j] * double(r.vectors(b, j));
            double e = acc - double(s(a, b));
            err += e * e;
        }
    REQUIRE(std::sqrt(err) <= 1e-6 * s.frobenius_norm());

    // VᵀV = I
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < n; ++c) acc += double(r.vectors(c, i)) * double(r.vectors(c, j));
            // vectors are stored float32, so orthonormality holds to ~1e-7
            REQUIRE_THAT(acc, Catch::Matchers::WithinAbs(i == j ? 1.0 : 0.0, 1e-6));
        }
}

TEST_CASE("sym_eig_desc rejects asymmetric input") {
    Matrix s(2, 2);
    s(0, 1) = 1.0f;
    s(1, 0) = 2.0f;
    REQUIRE_THROWS_AS(sym_eig_desc(s), NotSymmetric);
}

TEST_CASE("principal_angles basics") {
    Matrix u(1, 3);
    u(0, 0) = 1.0f;
    Matrix v = u;
    auto same = principal_angles(u, v);
    REQUIRE_THAT(same[0], Catch::Matchers::WithinAbs(0.0, 1e-7));

    Matrix w(1, 3);
    w(0, 1) = 1.0f;
    auto ortho = principal_angles(u, w);
    REQUIRE_THAT(ortho[0], Catch::Matchers::WithinAbs(M_PI / 2.0, 1e-7));

    Matrix bad(1, 3);
    bad(0, 0) = 2.0f;
    REQUIRE_THROWS_AS(principal_angles(bad, v), NotOrthonormal);
}
