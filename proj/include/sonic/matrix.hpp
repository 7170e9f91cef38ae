// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace sonic {

// Dense row-major matrix of 64-bit floats.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) {
        assert(r < rows && c < cols);
        return data[r * cols + c];
    }
    double operator()(std::size_t r, std::size_t c) const {
        assert(r < rows && c < cols);
        return data[r * cols + c];
    }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    static Matrix randn(std::size_t r, std::size_t c, double stddev, std::mt19937_64& rng) {
        Matrix m(r, c);
        std::normal_distribution<double> dist(0.0, stddev);
        for (auto& v : m.data) v = dist(rng);
        return m;
    }

    bool operator==(const Matrix&) const = default;
};

}  // namespace sonic
