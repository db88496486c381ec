#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "w2w/errors.hpp"

namespace w2w {

/// Dense row-major float32 matrix. Accumulations in the kernels below run in
/// float64 so results are deterministic across optimization levels.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    float& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    float operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::vector<float>& data() { return data_; }
    const std::vector<float>& data() const { return data_; }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (float x : data_) s += double(x) * double(x);
        return std::sqrt(s);
    }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

  private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<float> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeMismatch("matmul: " + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += double(a(i, k)) * double(b(k, j));
            c(i, j) = float(s);
        }
    }
    return c;
}

// y = M x, float64 accumulation
inline std::vector<float> matvec(const Matrix& m, const std::vector<float>& x) {
    if (m.cols() != x.size()) throw ShapeMismatch("matvec dimension mismatch");
    std::vector<float> y(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) s += double(m(i, j)) * double(x[j]);
        y[i] = float(s);
    }
    return y;
}

// y = Mᵀ x
inline std::vector<float> matvec_t(const Matrix& m, const std::vector<float>& x) {
    if (m.rows() != x.size()) throw ShapeMismatch("matvec_t dimension mismatch");
    std::vector<float> y(m.cols(), 0.0f);
    std::vector<double> acc(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) acc[j] += double(m(i, j)) * double(x[i]);
    for (std::size_t j = 0; j < m.cols(); ++j) y[j] = float(acc[j]);
    return y;
}

inline std::vector<double> matvec_d(const Matrix& m, const std::vector<double>& x) {
    if (m.cols() != x.size()) throw ShapeMismatch("matvec dimension mismatch");
    std::vector<double> y(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) s += double(m(i, j)) * x[j];
        y[i] = s;
    }
    return y;
}

inline std::vector<double> matvec_t_d(const Matrix& m, const std::vector<double>& x) {
    if (m.rows() != x.size()) throw ShapeMismatch("matvec_t dimension mismatch");
    std::vector<double> y(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) y[j] += double(m(i, j)) * x[i];
    return y;
}

inline double dot(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw ShapeMismatch("dot dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
    return s;
}

inline double norm2(const std::vector<float>& a) {
    double s = 0.0;
    for (float x : a) s += double(x) * double(x);
    return std::sqrt(s);
}

inline void scale_inplace(std::vector<float>& a, double c) {
    for (float& x : a) x = float(double(x) * c);
}

/// a/‖a‖; throws DegenerateMatrix on a zero vector.
inline std::vector<float> normalized(const std::vector<float>& a) {
    double n = norm2(a);
    if (n == 0.0) throw DegenerateMatrix("cannot normalize zero vector");
    std::vector<float> r = a;
    scale_inplace(r, 1.0 / n);
    return r;
}

inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0) throw DegenerateMatrix("cosine of zero vector");
    return dot(a, b) / (na * nb);
}

}  // namespace w2w
