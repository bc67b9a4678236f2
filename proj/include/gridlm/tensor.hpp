#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gridlm/errors.hpp"

namespace gridlm {

/// Dense row-major 2-D array of doubles. Vectors are (1, n), scalars (1, 1).
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
    Tensor(int r, int c, double fill) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    static Tensor row_vector(std::vector<double> v) {
        Tensor t;
        t.rows = 1;
        t.cols = static_cast<int>(v.size());
        t.data = std::move(v);
        return t;
    }
    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(rows) * cols; }
    bool empty() const { return data.empty(); }

    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    /// Reshape to (r, c) and zero; reuses the existing allocation when it fits.
    void resize_to(int r, int c) {
        rows = r;
        cols = c;
        data.assign(static_cast<size_t>(r) * c, 0.0);
    }

    /// Reshape in place; element count must match.
    void reshape(int r, int c) {
        if (static_cast<int64_t>(r) * c != numel()) {
            throw ConfigError("tensor reshape: element count mismatch");
        }
        rows = r;
        cols = c;
    }

    bool all_finite() const {
        for (double v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    void add_inplace(const Tensor& o) {
        for (size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    }

    bool operator==(const Tensor& o) const {
        return rows == o.rows && cols == o.cols && data == o.data;
    }
};

inline std::string shape_str(const Tensor& t) {
    return "(" + std::to_string(t.rows) + "," + std::to_string(t.cols) + ")";
}

} // namespace gridlm
