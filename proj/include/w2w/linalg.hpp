#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "w2w/errors.hpp"
#include "w2w/matrix.hpp"
#include "w2w/rng.hpp"

namespace w2w {

/// Dominant singular triplet of a matrix. Sign convention: the entry of u
/// with the largest absolute value (lowest index on ties) is positive.
struct SingularTriplet {
    float sigma = 0.0f;
    std::vector<float> u;  // length d, unit
    std::vector<float> v;  // length k, unit
};

/// Thrown when power iteration fails to meet the residual bound; carries the
/// best iterate found.
struct SvdNotConverged : Error {
    SvdNotConverged(const std::string& msg, SingularTriplet best_iterate)
        : Error(msg), best(std::move(best_iterate)) {}
    SingularTriplet best;
};

namespace detail {

/// Applies the triplet sign convention in place: flips (u, v) jointly so the
/// largest-magnitude entry of u is positive. σ·u·vᵀ is invariant.
inline void apply_sign_convention(std::vector<float>& u, std::vector<float>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < u.size(); ++i)
        if (std::abs(u[i]) > std::abs(u[best])) best = i;
    if (u[best] < 0.0f) {
        for (float& x : u) x = -x;
        for (float& x : v) x = -x;
    }
}

inline double norm2_d(const std::vector<double>& a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
}

inline SingularTriplet to_triplet(double sigma, const std::vector<double>& u, const std::vector<double>& v) {
    SingularTriplet t;
    t.sigma = float(sigma);
    t.u.assign(u.begin(), u.end());
    t.v.assign(v.begin(), v.end());
    apply_sign_convention(t.u, t.v);
    return t;
}

/// Power iteration over a generic linear operator given by apply (d←k) and
/// apply_t (k←d). Iterates in double precision; one restart from a shifted
/// seed if the first attempt stalls.
template <typename Apply, typename ApplyT>
SingularTriplet power_top1(std::size_t d, std::size_t k, Apply&& apply, ApplyT&& apply_t,
                           double fro, double tol, std::size_t max_iter, std::uint64_t seed) {
    if (fro == 0.0) throw DegenerateMatrix("matrix has zero Frobenius norm");

    double best_residual = std::numeric_limits<double>::infinity();
    double best_sigma = 0.0;
    std::vector<double> best_u, best_v;

    for (int attempt = 0; attempt < 2; ++attempt) {
        Rng rng(seed + std::uint64_t(attempt));
        std::vector<double> v(k);
        for (auto& x : v) x = rng.gaussian();
        double nv = norm2_d(v);
        for (auto& x : v) x /= nv;
        std::vector<double> u(d, 0.0);
        double sigma = 0.0;

        for (std::size_t iter = 0; iter < max_iter; ++iter) {
            std::vector<double> z = apply(v);  // M v
            double nz = norm2_d(z);
            if (nz == 0.0) {
                // v landed exactly in the null space; redraw within the attempt
                for (auto& x : v) x = rng.gaussian();
                nv = norm2_d(v);
                for (auto& x : v) x /= nv;
                continue;
            }
            u = std::move(z);
            for (auto& x : u) x /= nz;
            std::vector<double> w = apply_t(u);  // Mᵀ u
            sigma = norm2_d(w);
            if (sigma == 0.0) throw DegenerateMatrix("operator collapsed to zero");
            double drift = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                double e = w[i] / sigma - v[i];
                drift += e * e;
            }
            for (std::size_t i = 0; i < k; ++i) v[i] = w[i] / sigma;

            if (std::sqrt(drift) <= 0.01 * tol || iter % 50 == 49 || iter + 1 == max_iter) {
                std::vector<double> mv = apply(v);
                double r1 = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    double e = mv[i] - sigma * u[i];
                    r1 += e * e;
                }
                std::vector<double> mtu = apply_t(u);
                double r2 = 0.0;
                for (std::size_t i = 0; i < k; ++i) {
                    double e = mtu[i] - sigma * v[i];
                    r2 += e * e;
                }
                double residual = std::max(std::sqrt(r1), std::sqrt(r2));
                if (residual <= tol * fro) return to_triplet(sigma, u, v);
                if (residual < best_residual) {
                    best_residual = residual;
                    best_sigma = sigma;
                    best_u = u;
                    best_v = v;
                }
            }
        }
    }
    throw SvdNotConverged("power iteration did not reach residual bound",
                          to_triplet(best_sigma, best_u, best_v));
}

}  // namespace detail

inline SingularTriplet top1_svd(const Matrix& m, double tol = 1e-7, std::size_t max_iter = 10000,
                                std::uint64_t seed = 0) {
    if (m.rows() < 1 || m.cols() < 1) throw ShapeMismatch("empty matrix");
    return detail::power_top1(
        m.rows(), m.cols(),
        [&](const std::vector<double>& x) { return matvec_d(m, x); },
        [&](const std::vector<double>& x) { return matvec_t_d(m, x); },
        m.frobenius_norm(), tol, max_iter, seed);
}

/// Top-1 SVD of ΔW = scale·B·A without materializing the product.
inline SingularTriplet top1_svd_factored(const Matrix& a, const Matrix& b, double scale,
                                         double tol = 1e-7, std::size_t max_iter = 10000,
                                         std::uint64_t seed = 0) {
    if (b.cols() != a.rows()) throw ShapeMismatch("factored operator: inner dimensions disagree");
    // ‖scale·BA‖_F² = scale²·trace((BᵀB)(AAᵀ)), both Gram matrices are r×r
    std::size_t r = a.rows();
    Matrix ga = matmul(a, a.transposed());
    Matrix gb = matmul(b.transposed(), b);
    double fro2 = 0.0;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) fro2 += double(gb(i, j)) * double(ga(j, i));
    double fro = std::abs(scale) * std::sqrt(std::max(fro2, 0.0));

    auto apply = [&](const std::vector<double>& x) {
        auto y = matvec_d(b, matvec_d(a, x));
        for (auto& e : y) e *= scale;
        return y;
    };
    auto apply_t = [&](const std::vector<double>& x) {
        auto y = matvec_t_d(a, matvec_t_d(b, x));
        for (auto& e : y) e *= scale;
        return y;
    };
    return detail::power_top1(b.rows(), a.cols(), apply, apply_t, fro, tol, max_iter, seed);
}

struct EigResult {
    std::vector<double> values;  // descending
    Matrix vectors;              // orthonormal columns, vectors.col(i) ↔ values[i]
};

namespace detail {

/// Cyclic Jacobi eigendecomposition of a symmetric matrix held in a double
/// buffer (row-major n×n). V accumulates rotations.
inline void jacobi_eig(std::vector<double>& s, std::size_t n, std::vector<double>& vecs) {
    vecs.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) vecs[i * n + i] = 1.0;

    auto off_norm = [&] {
        double t = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) t += s[i * n + j] * s[i * n + j];
        return std::sqrt(2.0 * t);
    };
    double fro = 0.0;
    for (double x : s) fro += x * x;
    fro = std::sqrt(fro);
    if (fro == 0.0) return;

    const double eps = 1e-14 * fro;
    for (int sweep = 0; sweep < 100 && off_norm() > eps; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = s[p * n + q];
                if (std::abs(apq) <= 1e-300) continue;
                double app = s[p * n + p], aqq = s[q * n + q];
                double tau = (aqq - app) / (2.0 * apq);
                double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double sn = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    double sip = s[i * n + p], siq = s[i * n + q];
                    s[i * n + p] = c * sip - sn * siq;
                    s[i * n + q] = sn * sip + c * siq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    double spi = s[p * n + i], sqi = s[q * n + i];
                    s[p * n + i] = c * spi - sn * sqi;
                    s[q * n + i] = sn * spi + c * sqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    double vip = vecs[i * n + p], viq = vecs[i * n + q];
                    vecs[i * n + p] = c * vip - sn * viq;
                    vecs[i * n + q] = sn * vip + c * viq;
                }
            }
        }
    }
}

/// Full symmetric eigendecomposition in double precision, eigenvalues descending.
inline std::pair<std::vector<double>, std::vector<double>> sym_eig_desc_d(std::vector<double> s, std::size_t n) {
    std::vector<double> vecs;
    jacobi_eig(s, n, vecs);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = s[i * n + i];
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return diag[a] > diag[b]; });
    std::vector<double> values(n), sorted_vecs(n * n);
    for (std::size_t j = 0; j < n; ++j) {
        values[j] = diag[order[j]];
        for (std::size_t i = 0; i < n; ++i) sorted_vecs[i * n + j] = vecs[i * n + order[j]];
    }
    return {std::move(values), std::move(sorted_vecs)};
}

}  // namespace detail

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
inline EigResult sym_eig_desc(const Matrix& s) {
    std::size_t n = s.rows();
    if (s.cols() != n) throw NotSymmetric("matrix is not square");
    double fro = s.frobenius_norm();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(double(s(i, j)) - double(s(j, i))) > 1e-8 * std::max(fro, 1e-30))
                throw NotSymmetric("asymmetry at (" + std::to_string(i) + "," + std::to_string(j) + ")");

    std::vector<double> buf(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) buf[i * n + j] = 0.5 * (double(s(i, j)) + double(s(j, i)));
    auto [values, vecs] = detail::sym_eig_desc_d(std::move(buf), n);

    EigResult out;
    out.values = std::move(values);
    out.vectors = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out.vectors(i, j) = float(vecs[i * n + j]);
    return out;
}

/// Principal angles (radians, ascending) between the row spaces of two
/// row-orthonormal bases. arccos of the singular values of U·Vᵀ.
inline std::vector<double> principal_angles(const Matrix& u, const Matrix& v) {
    if (u.cols() != v.cols()) throw ShapeMismatch("bases live in different ambient dimensions");
    auto check_orthonormal = [](const Matrix& m, const char* label) {
        for (std::size_t i = 0; i < m.rows(); ++i) {
            for (std::size_t j = i; j < m.rows(); ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < m.cols(); ++c) s += double(m(i, c)) * double(m(j, c));
                double want = (i == j) ? 1.0 : 0.0;
                if (std::abs(s - want) > 1e-6)
                    throw NotOrthonormal(std::string(label) + ": rows are not orthonormal");
            }
        }
    };
    check_orthonormal(u, "U");
    check_orthonormal(v, "V");

    Matrix g = matmul(u, v.transposed());  // p×q
    // singular values via the smaller Gram matrix
    Matrix gram = (g.rows() <= g.cols()) ? matmul(g, g.transposed()) : matmul(g.transposed(), g);
    EigResult eig = sym_eig_desc(gram);
    std::vector<double> angles;
    std::size_t count = std::min(u.rows(), v.rows());
    for (std::size_t i = 0; i < count; ++i) {
        double sv = std::sqrt(std::max(eig.values[i], 0.0));
        sv = std::clamp(sv, 0.0, 1.0);
        angles.push_back(std::acos(sv));
    }
    std::sort(angles.begin(), angles.end());
    return angles;
}

}  // namespace w2w
