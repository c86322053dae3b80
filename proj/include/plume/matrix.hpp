#pragma once

#include <cassert>
#include <cstddef>
#include <utility>
#include <vector>

namespace plume {

// Dense row-major matrix of doubles. Scalars are 1x1, column vectors are Nx1.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
    Matrix(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
        assert(data.size() == static_cast<size_t>(r) * c);
    }

    static Matrix scalar(double v) { return Matrix(1, 1, {v}); }
    static Matrix filled(int r, int c, double v) {
        Matrix m(r, c);
        for (auto& x : m.data) x = v;
        return m;
    }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double v) {
        for (auto& x : data) x = v;
    }
};

// out = alpha * op(a) * op(b) + beta * out, row-major, op = optional transpose.
// Shapes of out must already match the product.
void gemm(bool ta, bool tb, double alpha, const Matrix& a, const Matrix& b, double beta,
          Matrix& out);

}  // namespace plume
