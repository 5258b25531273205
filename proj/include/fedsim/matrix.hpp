#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

// Dense row-major matrix of doubles. Feature sets, batches and classifier
// weights are all small at simulation scale, so a flat vector is enough.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    bool empty() const { return rows == 0 || cols == 0; }

    bool operator==(const Matrix& other) const = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_distance(a, b));
}

inline double l2_norm(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

// In-place row normalization; rows with near-zero norm are left untouched.
inline constexpr double kNormFloor = 1e-12;

inline void l2_normalize_rows(Matrix& m) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        auto r = m.row(i);
        const double n = l2_norm(r);
        if (n > kNormFloor) {
            for (double& x : r) x /= n;
        }
    }
}

} // namespace fedsim
