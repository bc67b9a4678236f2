#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "gridlm/errors.hpp"
#include "gridlm/tensor.hpp"

namespace gridlm {
namespace kernels {

/// Dot product over eight fixed accumulator lanes. The explicit reassociation
/// lets the compiler vectorize while keeping a deterministic summation order.
inline double dot(const double* a, const double* b, int n) {
    double s[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    int p = 0;
    for (; p + 8 <= n; p += 8) {
        for (int l = 0; l < 8; ++l) s[l] += a[p + l] * b[p + l];
    }
    double acc = ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]));
    for (; p < n; ++p) acc += a[p] * b[p];
    return acc;
}

/// C (M,N) += op(A) * op(B) where op transposes when the flag is set.
/// A is (M,K) or (K,M), B is (K,N) or (N,K). C must be pre-zeroed by the
/// caller unless accumulation is intended.
inline void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n,
                       bool ta, bool tb) {
    if (!ta && !tb) {
        for (int i = 0; i < m; ++i) {
            const double* arow = a + static_cast<size_t>(i) * k;
            double* crow = c + static_cast<size_t>(i) * n;
            for (int p = 0; p < k; ++p) {
                const double av = arow[p];
                const double* brow = b + static_cast<size_t>(p) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else if (!ta && tb) {
        for (int i = 0; i < m; ++i) {
            const double* arow = a + static_cast<size_t>(i) * k;
            double* crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                crow[j] += dot(arow, b + static_cast<size_t>(j) * k, k);
            }
        }
    } else if (ta && !tb) {
        for (int p = 0; p < k; ++p) {
            const double* arow = a + static_cast<size_t>(p) * m;
            const double* brow = b + static_cast<size_t>(p) * n;
            for (int i = 0; i < m; ++i) {
                const double av = arow[i];
                double* crow = c + static_cast<size_t>(i) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else {
        for (int i = 0; i < m; ++i) {
            double* crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                const double* brow = b + static_cast<size_t>(j) * k;
                double acc = 0.0;
                for (int p = 0; p < k; ++p) acc += a[static_cast<size_t>(p) * m + i] * brow[p];
                crow[j] += acc;
            }
        }
    }
}

/// Row softmax restricted to unmasked entries; masked entries get exact 0.
/// Throws if every entry of the row is masked.
inline void softmax_masked_row(const double* logits, const uint8_t* mask, double* out, int n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
        if (mask[j] && logits[j] > mx) mx = logits[j];
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
        throw ConfigError("softmax: all keys masked in a row");
    }
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
        if (mask[j]) {
            out[j] = std::exp(logits[j] - mx);
            sum += out[j];
        } else {
            out[j] = 0.0;
        }
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < n; ++j) out[j] *= inv;
}

inline void softmax_row(const double* logits, double* out, int n) {
    double mx = logits[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, logits[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
        out[j] = std::exp(logits[j] - mx);
        sum += out[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < n; ++j) out[j] *= inv;
}

/// Normalizes one row to zero mean / unit variance; returns 1/sqrt(var + eps).
inline double layer_norm_row(const double* x, double* y, int n, double eps) {
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += x[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
        const double d = x[j] - mu;
        var += d * d;
    }
    var /= n;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) y[j] = (x[j] - mu) * inv_std;
    return inv_std;
}

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865476));
}

inline double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865476));
    const double pdf = 0.3989422804014327 * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

} // namespace kernels
} // namespace gridlm
