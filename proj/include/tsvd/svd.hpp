#pragma once

// Three SVDs of a tall/skinny row-distributed matrix A (m x n, m > n):
//
//   svd_normal_equations  eigenvalues of the replicated A^T A (one allreduce)
//   svd_tsqr              R of A by a tree of stacked R-factor QRs, then the SVD of R
//   svd_randomized        rank-k approximation from a 2k-column random projection
//
// Left vectors are recovered as U = A V diag(1/sigma) in the first two; the randomized
// version forms U = Q_Y U_B.

#include "tsvd/comm.hpp"
#include "tsvd/dense_matrix.hpp"
#include "tsvd/dist_matrix.hpp"
#include "tsvd/errors.hpp"
#include "tsvd/linalg.hpp"
#include "tsvd/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace tsvd {

template<std::floating_point T>
struct SvdResult {
    std::vector<T> sigma;               ///< descending, nonnegative
    std::optional<DistMatrix<T>> u;     ///< m x r', r' = number of sigma above the rank tolerance
    std::optional<DenseMatrix<T>> v;    ///< n x r, replicated
};

struct RsvdParams {
    index_t k = 2;
    index_t q = 2;
    Distribution projection = Distribution::uniform01;
    std::uint64_t seed = 0;
};

namespace detail {

template<std::floating_point T>
void require_overdetermined(const DistMatrix<T>& a, const char* who) {
    if (a.global_rows() <= a.cols()) {
        throw ShapeError(std::string(who) + ": need more rows than columns, got " + std::to_string(a.global_rows()) +
                         "x" + std::to_string(a.cols()));
    }
}

// R of a local block; blocks with fewer rows than columns are padded with zero rows, which
// leave R^T R = A_local^T A_local unchanged.
template<std::floating_point T>
DenseMatrix<T> local_r_factor(const DenseMatrix<T>& block) {
    if (block.rows() >= block.cols()) {
        return qr_R(block);
    }
    return qr_R(vstack(block, DenseMatrix<T>(block.cols() - block.rows(), block.cols())));
}

// Diagonal-ratio condition estimate above which Q = Y R^-1 gets a second pass.
template<std::floating_point T>
constexpr T reorthogonalize_above() {
    return sizeof(T) == 4 ? T(1) / std::sqrt(std::numeric_limits<T>::epsilon()) : T(1e8);
}

} // namespace detail

/// Pseudo-inverse cutoff: singular values at or below max(m, n) * eps * sigma_1 count as zero.
template<std::floating_point T>
T rank_tolerance(index_t m, index_t n, T sigma1) {
    return static_cast<T>(std::max(m, n)) * std::numeric_limits<T>::epsilon() * sigma1;
}

/// U = A V diag(1/sigma), keeping only the leading columns whose sigma exceeds rank_tolerance.
template<std::floating_point T>
DistMatrix<T> recover_U(const DistMatrix<T>& a, const DenseMatrix<T>& v, const std::vector<T>& sigma) {
    if (v.rows() != a.cols() || v.cols() != static_cast<index_t>(sigma.size())) {
        throw ContractError("recover_U: V is " + v.shape() + " for " + std::to_string(sigma.size()) +
                            " singular values and " + std::to_string(a.cols()) + " columns");
    }
    const T tol = sigma.empty() ? T{0} : rank_tolerance(a.global_rows(), a.cols(), sigma.front());
    index_t keep = 0;
    while (keep < static_cast<index_t>(sigma.size()) && sigma[static_cast<std::size_t>(keep)] > tol) {
        ++keep;
    }
    DenseMatrix<T> scaled(v.rows(), keep);
    for (index_t i = 0; i < v.rows(); ++i) {
        for (index_t j = 0; j < keep; ++j) {
            scaled(i, j) = v(i, j) / sigma[static_cast<std::size_t>(j)];
        }
    }
    return mult_local(a, scaled);
}

/// Singular values from the eigenvalues of A^T A; negative eigenvalues (roundoff) map to zero.
template<std::floating_point T>
SvdResult<T> svd_normal_equations(DistMatrix<T>& a, bool want_u, bool want_v) {
    detail::require_overdetermined(a, "svd_normal_equations");
    const DenseMatrix<T> n = crossprod(a);
    auto eig = sym_eigen(n, want_u || want_v);

    SvdResult<T> out;
    out.sigma.reserve(eig.values.size());
    for (T lambda : eig.values) {
        out.sigma.push_back(std::sqrt(std::max(lambda, T{0})));
    }
    if (want_u) {
        out.u = recover_U(a, *eig.vectors, out.sigma);
    }
    if (want_v) {
        out.v = std::move(eig.vectors);
    }
    return out;
}

/// The QR reducer: stack two R factors and return the R of the stack.
template<std::floating_point T>
ReduceOperator<T> qr_reducer(index_t n) {
    return {n, n, [](const DenseMatrix<T>& lower, const DenseMatrix<T>& higher) { return qr_R(vstack(lower, higher)); }};
}

/// R factor of the row-stack of every rank's r_local (each n x n upper triangular, diagonal >= 0).
template<std::floating_point T>
DenseMatrix<T> qr_allreduce(Communicator& comm, const DenseMatrix<T>& r_local) {
    const index_t n = r_local.rows();
    if (r_local.cols() != n) {
        throw ContractError("qr_allreduce: R factor " + r_local.shape() + " is not square");
    }
    for (index_t i = 0; i < n; ++i) {
        if (r_local(i, i) < T{0}) {
            throw ContractError("qr_allreduce: negative diagonal at " + std::to_string(i));
        }
        for (index_t j = 0; j < i; ++j) {
            if (r_local(i, j) != T{0}) {
                throw ContractError("qr_allreduce: input is not upper triangular");
            }
        }
    }
    return allreduce_custom(comm, r_local, qr_reducer<T>(n));
}

/// Distributed thin Q of a tall matrix: R from the QR tree, then Q = Y R^-1 against the
/// replicated R, with one more pass when R looks ill-conditioned.
template<std::floating_point T>
DistMatrix<T> tsqr_q(DistMatrix<T>& y) {
    auto pass = [](DistMatrix<T>& m) {
        const DenseMatrix<T> r = qr_allreduce(m.comm(), detail::local_r_factor(m.local()));
        T dmax{0};
        T dmin = std::numeric_limits<T>::infinity();
        for (index_t i = 0; i < r.rows(); ++i) {
            dmax = std::max(dmax, r(i, i));
            dmin = std::min(dmin, r(i, i));
        }
        if (!(dmin > T{0})) {
            throw DegenerateProjectionError("random projection lost rank (R factor has a zero pivot); retry with "
                                            "another seed");
        }
        DistMatrix<T> q =
            DistMatrix<T>::from_layout(m.comm(), solve_upper_right(m.local(), r), m.global_rows(), m.row_offset());
        return std::pair{std::move(q), dmax / dmin};
    };
    auto [q, ratio] = pass(y);
    if (ratio > detail::reorthogonalize_above<T>()) {
        q = std::move(pass(q).first);
    }
    return q;
}

/// SVD via the communication-avoiding QR: sigma and V from the SVD of the global R.
template<std::floating_point T>
SvdResult<T> svd_tsqr(DistMatrix<T>& a, bool want_u, bool want_v) {
    detail::require_overdetermined(a, "svd_tsqr");
    const DenseMatrix<T> r = qr_allreduce(a.comm(), detail::local_r_factor(a.local()));
    auto s = small_svd(r, false, want_u || want_v);

    SvdResult<T> out;
    out.sigma = std::move(s.sigma);
    if (want_u || want_v) {
        DenseMatrix<T> v = s.vt->transposed();
        if (want_u) {
            out.u = recover_U(a, v, out.sigma);
        }
        if (want_v) {
            out.v = std::move(v);
        }
    }
    return out;
}

inline void validate(const RsvdParams& p, index_t n) {
    if (p.k < 1 || p.k >= n) {
        throw ParameterError("rsvd: need 1 <= k < n, got k=" + std::to_string(p.k) + " n=" + std::to_string(n));
    }
    if (2 * p.k > n) {
        throw ParameterError("rsvd: projection width 2k=" + std::to_string(2 * p.k) + " exceeds n=" +
                             std::to_string(n));
    }
    if (p.q < 0) {
        throw ParameterError("rsvd: q must be nonnegative, got " + std::to_string(p.q));
    }
}

/// Rank-k truncated SVD from a 2k-column random range finder with q power iterations.
/// Returns exactly k singular values; the oversampled half is discarded.
template<std::floating_point T>
SvdResult<T> svd_randomized(DistMatrix<T>& a, const RsvdParams& params, bool want_u, bool want_v) {
    validate(params, a.cols());
    detail::require_overdetermined(a, "svd_randomized");
    const index_t width = 2 * params.k;

    // Omega is replicated and keyed by its own row index, so every rank count sees the same Omega.
    const DenseMatrix<T> omega = random_matrix<T>(a.cols(), width, params.projection, params.seed);
    DistMatrix<T> y = mult_local(a, omega);
    DistMatrix<T> qy = tsqr_q(y);
    for (index_t it = 0; it < params.q; ++it) {
        const DenseMatrix<T> z = mult_transpose(a, qy);
        const DenseMatrix<T> qz = qr_Q(z);
        y = mult_local(a, qz);
        qy = tsqr_q(y);
    }
    const DenseMatrix<T> b = mult_transpose(qy, a); // 2k x n
    auto s = small_svd(b, want_u, want_v);

    SvdResult<T> out;
    out.sigma.assign(s.sigma.begin(), s.sigma.begin() + params.k);
    if (want_v) {
        out.v = s.vt->row_block(0, params.k).transposed();
    }
    if (want_u) {
        out.u = mult_local(qy, s.u->col_block(0, params.k));
    }
    return out;
}

} // namespace tsvd
