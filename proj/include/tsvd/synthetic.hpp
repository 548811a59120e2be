#pragma once

// Replicated test matrices with prescribed singular values. Built in double on every rank from
// a seed, so they are identical for any rank count; scatter them with DistMatrix::scatter.

#include "tsvd/dense_matrix.hpp"
#include "tsvd/linalg.hpp"
#include "tsvd/random.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace tsvd {

/// U diag(sigma) V^T with U (m x r) and V (n x r) orthonormal, r = sigma.size().
inline DenseMatrix<double> matrix_with_spectrum(index_t m, index_t n, std::span<const double> sigma,
                                                std::uint64_t seed) {
    const auto r = static_cast<index_t>(sigma.size());
    if (r > n || n > m) {
        throw ShapeError("matrix_with_spectrum: need rank <= n <= m");
    }
    const DenseMatrix<double> u = qr_Q(random_matrix<double>(m, r, Distribution::standard_normal, seed));
    const DenseMatrix<double> v = qr_Q(random_matrix<double>(n, r, Distribution::standard_normal, seed + 1));
    DenseMatrix<double> us = u;
    for (index_t i = 0; i < m; ++i) {
        for (index_t j = 0; j < r; ++j) {
            us(i, j) *= sigma[static_cast<std::size_t>(j)];
        }
    }
    return gemm(false, 1.0, us, v.transposed());
}

/// Singular values log-spaced from 1 down to 1/kappa.
inline std::vector<double> geometric_spectrum(index_t n, double kappa) {
    std::vector<double> s(static_cast<std::size_t>(n));
    for (index_t i = 0; i < n; ++i) {
        s[static_cast<std::size_t>(i)] = n == 1 ? 1.0 : std::pow(kappa, -static_cast<double>(i) / static_cast<double>(n - 1));
    }
    return s;
}

inline DenseMatrix<double> conditioned_matrix(index_t m, index_t n, double kappa, std::uint64_t seed) {
    const auto s = geometric_spectrum(n, kappa);
    return matrix_with_spectrum(m, n, s, seed);
}

/// The fixed ill-conditioned instance used to contrast the normal-equations and QR routes.
struct ConditionedInstance {
    static constexpr index_t rows = 2000;
    static constexpr index_t cols = 20;
    static constexpr double kappa = 1e6;
    static constexpr std::uint64_t seed = 0x5eed'c0de;
};

inline DenseMatrix<double> builtin_conditioned_matrix() {
    return conditioned_matrix(ConditionedInstance::rows, ConditionedInstance::cols, ConditionedInstance::kappa,
                              ConditionedInstance::seed);
}

/// Exact low-rank signal plus i.i.d. standard-normal noise scaled by `noise`.
inline DenseMatrix<double> low_rank_plus_noise(index_t m, index_t n, std::span<const double> sigma, double noise,
                                               std::uint64_t seed) {
    DenseMatrix<double> a = matrix_with_spectrum(m, n, sigma, seed);
    const DenseMatrix<double> e = random_matrix<double>(m, n, Distribution::standard_normal, seed + 2);
    for (index_t i = 0; i < a.size(); ++i) {
        a.data()[i] += noise * e.data()[i];
    }
    return a;
}

} // namespace tsvd
