#pragma once

// Local dense kernels: multiply, Householder QR, Jacobi eigensolver and Jacobi SVD.
// Nothing here communicates; every function is a pure function of its arguments.

#include "tsvd/dense_matrix.hpp"
#include "tsvd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace tsvd {

/// alpha * op(a) * b, where op(a) is a or a^T.
template<std::floating_point T>
DenseMatrix<T> gemm(bool transpose_a, T alpha, const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
    const index_t inner = transpose_a ? a.rows() : a.cols();
    if (inner != b.rows()) {
        throw ContractError("gemm: cannot multiply " + std::string(transpose_a ? "transpose of " : "") + a.shape() +
                            " by " + b.shape());
    }
    const index_t out_rows = transpose_a ? a.cols() : a.rows();
    const index_t n = b.cols();
    DenseMatrix<T> c(out_rows, n);

    if (!transpose_a) {
        for (index_t i = 0; i < out_rows; ++i) {
            T* crow = c.row(i).data();
            for (index_t l = 0; l < inner; ++l) {
                const T s = alpha * a(i, l);
                if (s == T{0}) {
                    continue;
                }
                const T* brow = b.row(l).data();
                for (index_t j = 0; j < n; ++j) {
                    crow[j] += s * brow[j];
                }
            }
        }
        return c;
    }

    // a^T b accumulated over row panels so that one row of c stays hot while a panel of b streams by.
    constexpr index_t panel = 32;
    for (index_t r0 = 0; r0 < inner; r0 += panel) {
        const index_t r1 = std::min(inner, r0 + panel);
        for (index_t i = 0; i < out_rows; ++i) {
            T* crow = c.row(i).data();
            for (index_t r = r0; r < r1; ++r) {
                const T s = alpha * a(r, i);
                if (s == T{0}) {
                    continue;
                }
                const T* brow = b.row(r).data();
                for (index_t j = 0; j < n; ++j) {
                    crow[j] += s * brow[j];
                }
            }
        }
    }
    return c;
}

/// (n + n^T) / 2
template<std::floating_point T>
DenseMatrix<T> symmetrized(const DenseMatrix<T>& n) {
    if (n.rows() != n.cols()) {
        throw ContractError("symmetrize: matrix " + n.shape() + " is not square");
    }
    DenseMatrix<T> s(n.rows(), n.cols());
    for (index_t i = 0; i < n.rows(); ++i) {
        s(i, i) = n(i, i);
        for (index_t j = i + 1; j < n.cols(); ++j) {
            const T v = (n(i, j) + n(j, i)) / T{2};
            s(i, j) = v;
            s(j, i) = v;
        }
    }
    return s;
}

namespace detail {

// In-place Householder QR. On return the upper triangle of `a` holds R (diagonal signs not yet
// normalized) and column j below the diagonal holds the reflector tail v[j+1:], with v[j] = 1.
template<std::floating_point T>
std::vector<T> householder_factor(DenseMatrix<T>& a) {
    const index_t m = a.rows();
    const index_t n = a.cols();
    std::vector<T> tau(static_cast<std::size_t>(n), T{0});
    std::vector<T> w(static_cast<std::size_t>(n));

    for (index_t j = 0; j < n; ++j) {
        T scale{0};
        for (index_t i = j; i < m; ++i) {
            scale = std::max(scale, std::abs(a(i, j)));
        }
        if (scale == T{0}) {
            continue; // zero column: H = I
        }
        T tail{0};
        for (index_t i = j + 1; i < m; ++i) {
            const T s = a(i, j) / scale;
            tail += s * s;
        }
        const T x0 = a(j, j);
        if (tail == T{0}) {
            continue; // already triangular in this column
        }
        const T x0s = x0 / scale;
        const T norm = scale * std::sqrt(x0s * x0s + tail);
        const T beta = -std::copysign(norm, x0);
        const T t = (beta - x0) / beta;
        const T inv = T{1} / (x0 - beta);
        for (index_t i = j + 1; i < m; ++i) {
            a(i, j) *= inv;
        }
        a(j, j) = beta;
        tau[static_cast<std::size_t>(j)] = t;

        // trailing update: A[j:, j+1:] -= tau * v * (v^T A[j:, j+1:])
        const index_t width = n - j - 1;
        if (width == 0) {
            continue;
        }
        std::fill(w.begin(), w.begin() + width, T{0});
        {
            const T* row = a.row(j).data() + j + 1;
            for (index_t c = 0; c < width; ++c) {
                w[static_cast<std::size_t>(c)] = row[c];
            }
        }
        for (index_t i = j + 1; i < m; ++i) {
            const T vi = a(i, j);
            if (vi == T{0}) {
                continue;
            }
            const T* row = a.row(i).data() + j + 1;
            for (index_t c = 0; c < width; ++c) {
                w[static_cast<std::size_t>(c)] += vi * row[c];
            }
        }
        for (index_t c = 0; c < width; ++c) {
            w[static_cast<std::size_t>(c)] *= t;
        }
        {
            T* row = a.row(j).data() + j + 1;
            for (index_t c = 0; c < width; ++c) {
                row[c] -= w[static_cast<std::size_t>(c)];
            }
        }
        for (index_t i = j + 1; i < m; ++i) {
            const T vi = a(i, j);
            if (vi == T{0}) {
                continue;
            }
            T* row = a.row(i).data() + j + 1;
            for (index_t c = 0; c < width; ++c) {
                row[c] -= vi * w[static_cast<std::size_t>(c)];
            }
        }
    }
    return tau;
}

template<std::floating_point T>
void require_tall(const DenseMatrix<T>& a, const char* who) {
    if (a.rows() < a.cols()) {
        throw ShapeError(std::string(who) + ": matrix " + a.shape() + " is short/wide; only rows >= cols is supported");
    }
}

} // namespace detail

/// Upper-triangular R (cols x cols) of a = QR with a nonnegative diagonal.
template<std::floating_point T>
DenseMatrix<T> qr_R(const DenseMatrix<T>& a) {
    detail::require_tall(a, "qr_R");
    DenseMatrix<T> work = a;
    detail::householder_factor(work);
    const index_t n = a.cols();
    DenseMatrix<T> r(n, n);
    for (index_t i = 0; i < n; ++i) {
        const T sign = work(i, i) < T{0} ? T{-1} : T{1};
        for (index_t j = i; j < n; ++j) {
            r(i, j) = sign * work(i, j);
        }
    }
    return r;
}

/// Thin orthonormal factor Q (rows x cols) matching the sign convention of qr_R.
template<std::floating_point T>
DenseMatrix<T> qr_Q(const DenseMatrix<T>& a) {
    detail::require_tall(a, "qr_Q");
    DenseMatrix<T> work = a;
    const auto tau = detail::householder_factor(work);
    const index_t m = a.rows();
    const index_t n = a.cols();

    DenseMatrix<T> q(m, n);
    for (index_t i = 0; i < n; ++i) {
        q(i, i) = T{1};
    }
    std::vector<T> w(static_cast<std::size_t>(n));
    for (index_t j = n - 1; j >= 0; --j) {
        const T t = tau[static_cast<std::size_t>(j)];
        if (t == T{0}) {
            continue;
        }
        // Q[j:, :] -= tau * v * (v^T Q[j:, :]), v = (1, work[j+1:, j])
        std::copy(q.row(j).begin(), q.row(j).end(), w.begin());
        for (index_t i = j + 1; i < m; ++i) {
            const T vi = work(i, j);
            if (vi == T{0}) {
                continue;
            }
            const T* row = q.row(i).data();
            for (index_t c = 0; c < n; ++c) {
                w[static_cast<std::size_t>(c)] += vi * row[c];
            }
        }
        for (auto& x : w) {
            x *= t;
        }
        T* qj = q.row(j).data();
        for (index_t c = 0; c < n; ++c) {
            qj[c] -= w[static_cast<std::size_t>(c)];
        }
        for (index_t i = j + 1; i < m; ++i) {
            const T vi = work(i, j);
            if (vi == T{0}) {
                continue;
            }
            T* row = q.row(i).data();
            for (index_t c = 0; c < n; ++c) {
                row[c] -= vi * w[static_cast<std::size_t>(c)];
            }
        }
    }
    for (index_t j = 0; j < n; ++j) {
        if (work(j, j) < T{0}) {
            for (index_t i = 0; i < m; ++i) {
                q(i, j) = -q(i, j);
            }
        }
    }
    return q;
}

/// X with X * r = y for upper-triangular r. Zero pivots raise ContractError.
template<std::floating_point T>
DenseMatrix<T> solve_upper_right(const DenseMatrix<T>& y, const DenseMatrix<T>& r) {
    const index_t n = r.rows();
    if (r.cols() != n || y.cols() != n) {
        throw ContractError("solve_upper_right: " + y.shape() + " against triangle " + r.shape());
    }
    for (index_t j = 0; j < n; ++j) {
        if (r(j, j) == T{0}) {
            throw ContractError("solve_upper_right: zero pivot at " + std::to_string(j));
        }
    }
    DenseMatrix<T> x = y;
    for (index_t i = 0; i < x.rows(); ++i) {
        T* xr = x.row(i).data();
        for (index_t j = 0; j < n; ++j) {
            xr[j] /= r(j, j);
            const T xj = xr[j];
            if (xj == T{0}) {
                continue;
            }
            const T* rr = r.row(j).data();
            for (index_t c = j + 1; c < n; ++c) {
                xr[c] -= xj * rr[c];
            }
        }
    }
    return x;
}

template<std::floating_point T>
struct EigenResult {
    std::vector<T> values;                ///< descending
    std::optional<DenseMatrix<T>> vectors; ///< column i pairs with values[i]
};

template<std::floating_point T>
struct SmallSvd {
    std::vector<T> sigma; ///< descending, nonnegative, length min(rows, cols)
    std::optional<DenseMatrix<T>> u;
    std::optional<DenseMatrix<T>> vt;
};

namespace detail {

// Stable descending order of `keys`.
template<std::floating_point T>
std::vector<index_t> descending_order(const std::vector<T>& keys) {
    std::vector<index_t> order(keys.size());
    std::iota(order.begin(), order.end(), index_t{0});
    std::stable_sort(order.begin(), order.end(), [&](index_t x, index_t y) {
        return keys[static_cast<std::size_t>(x)] > keys[static_cast<std::size_t>(y)];
    });
    return order;
}

// +1 when the largest-magnitude entry (first one on ties) is nonnegative, else -1.
template<std::floating_point T>
T sign_of_dominant(std::span<const T> v) {
    T best{0};
    T sign{1};
    for (T x : v) {
        if (std::abs(x) > best) {
            best = std::abs(x);
            sign = x < T{0} ? T{-1} : T{1};
        }
    }
    return sign;
}

template<std::floating_point T>
constexpr T eigen_tolerance() {
    return sizeof(T) == 4 ? T(1e-6) : T(1e-14);
}

constexpr int kEigenSweepCap = 30;
constexpr int kSvdSweepCap = 60;

} // namespace detail

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvector columns are unit-norm with their largest-magnitude entry positive.
template<std::floating_point T>
EigenResult<T> sym_eigen(const DenseMatrix<T>& n_mat, bool want_vectors) {
    if (n_mat.rows() != n_mat.cols()) {
        throw ContractError("sym_eigen: matrix " + n_mat.shape() + " is not square");
    }
    const index_t n = n_mat.rows();
    const T amax = max_abs(n_mat);
    for (index_t i = 0; i < n; ++i) {
        for (index_t j = i + 1; j < n; ++j) {
            if (std::abs(n_mat(i, j) - n_mat(j, i)) > T(1e-8) * amax) {
                throw ContractError("sym_eigen: matrix is not symmetric at (" + std::to_string(i) + "," +
                                    std::to_string(j) + ")");
            }
        }
    }
    DenseMatrix<T> a = symmetrized(n_mat);
    DenseMatrix<T> v = DenseMatrix<T>::identity(n);

    auto off_norm = [&] {
        T s{0};
        for (index_t i = 0; i < n; ++i) {
            for (index_t j = i + 1; j < n; ++j) {
                s += a(i, j) * a(i, j);
            }
        }
        return std::sqrt(T{2} * s);
    };

    const T threshold = detail::eigen_tolerance<T>() * frobenius_norm(a);
    T off = off_norm();
    int sweep = 0;
    while (!(off <= threshold)) { // NaN never converges
        if (sweep == detail::kEigenSweepCap) {
            throw ConvergenceError("sym_eigen: no convergence after " + std::to_string(sweep) +
                                       " sweeps, off-diagonal norm " + std::to_string(static_cast<double>(off)),
                                   static_cast<double>(off));
        }
        ++sweep;
        for (index_t p = 0; p < n - 1; ++p) {
            for (index_t q = p + 1; q < n; ++q) {
                const T apq = a(p, q);
                if (apq == T{0}) {
                    continue;
                }
                const T theta = (a(q, q) - a(p, p)) / (T{2} * apq);
                T t;
                if (std::abs(theta) > T(1) / std::sqrt(std::numeric_limits<T>::epsilon())) {
                    t = T{1} / (T{2} * theta);
                } else {
                    t = std::copysign(T{1}, theta) / (std::abs(theta) + std::sqrt(theta * theta + T{1}));
                }
                const T c = T{1} / std::sqrt(t * t + T{1});
                const T s = t * c;
                a(p, p) -= t * apq;
                a(q, q) += t * apq;
                a(p, q) = T{0};
                a(q, p) = T{0};
                for (index_t r = 0; r < n; ++r) {
                    if (r == p || r == q) {
                        continue;
                    }
                    const T arp = a(r, p);
                    const T arq = a(r, q);
                    const T np = c * arp - s * arq;
                    const T nq = s * arp + c * arq;
                    a(r, p) = np;
                    a(p, r) = np;
                    a(r, q) = nq;
                    a(q, r) = nq;
                }
                if (want_vectors) {
                    for (index_t r = 0; r < n; ++r) {
                        const T vrp = v(r, p);
                        const T vrq = v(r, q);
                        v(r, p) = c * vrp - s * vrq;
                        v(r, q) = s * vrp + c * vrq;
                    }
                }
            }
        }
        off = off_norm();
    }

    std::vector<T> diag(static_cast<std::size_t>(n));
    for (index_t i = 0; i < n; ++i) {
        diag[static_cast<std::size_t>(i)] = a(i, i);
    }
    const auto order = detail::descending_order(diag);

    EigenResult<T> out;
    out.values.reserve(order.size());
    for (index_t k : order) {
        out.values.push_back(diag[static_cast<std::size_t>(k)]);
    }
    if (want_vectors) {
        DenseMatrix<T> sorted(n, n);
        std::vector<T> col(static_cast<std::size_t>(n));
        for (index_t j = 0; j < n; ++j) {
            const index_t src = order[static_cast<std::size_t>(j)];
            for (index_t i = 0; i < n; ++i) {
                col[static_cast<std::size_t>(i)] = v(i, src);
            }
            const T sign = detail::sign_of_dominant<T>(col);
            for (index_t i = 0; i < n; ++i) {
                sorted(i, j) = sign * col[static_cast<std::size_t>(i)];
            }
        }
        out.vectors = std::move(sorted);
    }
    return out;
}

namespace detail {

// One-sided Jacobi on a tall matrix given as its transpose `wt` (each row is a column of the
// original). Returns sigma (descending), U (m x n) and V^T (n x n).
template<std::floating_point T>
SmallSvd<T> one_sided_jacobi_tall(DenseMatrix<T> wt, bool want_u, bool want_vt) {
    const index_t n = wt.rows();
    const index_t m = wt.cols();
    DenseMatrix<T> vt = DenseMatrix<T>::identity(n);
    const T tol = std::numeric_limits<T>::epsilon() * static_cast<T>(std::max<index_t>(m, 1));

    auto dot = [](std::span<const T> x, std::span<const T> y) {
        T s{0};
        for (std::size_t i = 0; i < x.size(); ++i) {
            s += x[i] * y[i];
        }
        return s;
    };

    int sweep = 0;
    for (;;) {
        T worst{0};
        bool rotated = false;
        for (index_t p = 0; p < n - 1; ++p) {
            for (index_t q = p + 1; q < n; ++q) {
                auto wp = wt.row(p);
                auto wq = wt.row(q);
                const T alpha = dot(wp, wp);
                const T beta = dot(wq, wq);
                if (alpha == T{0} || beta == T{0}) {
                    continue;
                }
                const T gamma = dot(wp, wq);
                const T rel = std::abs(gamma) / std::sqrt(alpha * beta);
                worst = std::max(worst, rel);
                if (rel <= tol) {
                    continue;
                }
                rotated = true;
                const T zeta = (beta - alpha) / (T{2} * gamma);
                T t;
                if (std::abs(zeta) > T(1) / std::sqrt(std::numeric_limits<T>::epsilon())) {
                    t = T{1} / (T{2} * zeta);
                } else {
                    t = std::copysign(T{1}, zeta) / (std::abs(zeta) + std::sqrt(T{1} + zeta * zeta));
                }
                const T c = T{1} / std::sqrt(T{1} + t * t);
                const T s = c * t;
                for (index_t i = 0; i < m; ++i) {
                    const T x = wp[static_cast<std::size_t>(i)];
                    const T y = wq[static_cast<std::size_t>(i)];
                    wp[static_cast<std::size_t>(i)] = c * x - s * y;
                    wq[static_cast<std::size_t>(i)] = s * x + c * y;
                }
                auto vp = vt.row(p);
                auto vq = vt.row(q);
                for (index_t i = 0; i < n; ++i) {
                    const T x = vp[static_cast<std::size_t>(i)];
                    const T y = vq[static_cast<std::size_t>(i)];
                    vp[static_cast<std::size_t>(i)] = c * x - s * y;
                    vq[static_cast<std::size_t>(i)] = s * x + c * y;
                }
            }
        }
        if (!rotated) {
            break;
        }
        if (++sweep == kSvdSweepCap) {
            throw ConvergenceError("small_svd: no convergence after " + std::to_string(sweep) +
                                       " sweeps, worst column cosine " + std::to_string(static_cast<double>(worst)),
                                   static_cast<double>(worst));
        }
    }

    std::vector<T> norms(static_cast<std::size_t>(n));
    for (index_t j = 0; j < n; ++j) {
        T scale{0};
        for (T x : wt.row(j)) {
            scale = std::max(scale, std::abs(x));
        }
        T s{0};
        if (scale > T{0}) {
            for (T x : wt.row(j)) {
                s += (x / scale) * (x / scale);
            }
        }
        norms[static_cast<std::size_t>(j)] = scale * std::sqrt(s);
    }
    const auto order = descending_order(norms);

    SmallSvd<T> out;
    out.sigma.reserve(static_cast<std::size_t>(n));
    for (index_t k : order) {
        out.sigma.push_back(norms[static_cast<std::size_t>(k)]);
    }
    if (!want_u && !want_vt) {
        return out;
    }

    DenseMatrix<T> u(m, n);
    DenseMatrix<T> vt_sorted(n, n);
    std::vector<bool> filled(static_cast<std::size_t>(n), false);
    for (index_t j = 0; j < n; ++j) {
        const index_t src = order[static_cast<std::size_t>(j)];
        const T sign = sign_of_dominant<T>(vt.row(src));
        const T sj = out.sigma[static_cast<std::size_t>(j)];
        for (index_t i = 0; i < n; ++i) {
            vt_sorted(j, i) = sign * vt(src, i);
        }
        if (sj > T{0}) {
            for (index_t i = 0; i < m; ++i) {
                u(i, j) = sign * wt(src, i) / sj;
            }
            filled[static_cast<std::size_t>(j)] = true;
        }
    }
    // Left vectors for zero singular values: orthonormal completion from unit vectors.
    std::vector<T> cand(static_cast<std::size_t>(m));
    index_t next_unit = 0;
    for (index_t j = 0; j < n; ++j) {
        if (filled[static_cast<std::size_t>(j)]) {
            continue;
        }
        for (; next_unit < m; ++next_unit) {
            std::fill(cand.begin(), cand.end(), T{0});
            cand[static_cast<std::size_t>(next_unit)] = T{1};
            for (int pass = 0; pass < 2; ++pass) {
                for (index_t k = 0; k < n; ++k) {
                    if (!filled[static_cast<std::size_t>(k)]) {
                        continue;
                    }
                    T proj{0};
                    for (index_t i = 0; i < m; ++i) {
                        proj += u(i, k) * cand[static_cast<std::size_t>(i)];
                    }
                    for (index_t i = 0; i < m; ++i) {
                        cand[static_cast<std::size_t>(i)] -= proj * u(i, k);
                    }
                }
            }
            T nrm{0};
            for (T x : cand) {
                nrm += x * x;
            }
            nrm = std::sqrt(nrm);
            if (nrm > T(0.5)) {
                for (index_t i = 0; i < m; ++i) {
                    u(i, j) = cand[static_cast<std::size_t>(i)] / nrm;
                }
                filled[static_cast<std::size_t>(j)] = true;
                ++next_unit;
                break;
            }
        }
    }
    if (want_u) {
        out.u = std::move(u);
    }
    if (want_vt) {
        out.vt = std::move(vt_sorted);
    }
    return out;
}

} // namespace detail

/// SVD of a small dense matrix by one-sided Jacobi. Wide inputs are handled through their transpose.
template<std::floating_point T>
SmallSvd<T> small_svd(const DenseMatrix<T>& b, bool want_u, bool want_vt) {
    if (b.rows() < 1 || b.cols() < 1) {
        throw ContractError("small_svd: empty matrix " + b.shape());
    }
    if (b.rows() >= b.cols()) {
        return detail::one_sided_jacobi_tall(b.transposed(), want_u, want_vt);
    }
    // b^T = U' S V'^T, so b = V' S U'^T.
    const bool any = want_u || want_vt;
    auto t = detail::one_sided_jacobi_tall(b, any, any);
    SmallSvd<T> out;
    out.sigma = std::move(t.sigma);
    if (!want_u && !want_vt) {
        return out;
    }
    // v = U' (cols x r); re-apply the sign rule on v's columns.
    DenseMatrix<T> u = t.vt ? t.vt->transposed() : DenseMatrix<T>();
    DenseMatrix<T> vt = t.u ? t.u->transposed() : DenseMatrix<T>();
    for (index_t j = 0; j < vt.rows(); ++j) {
        if (detail::sign_of_dominant<T>(vt.row(j)) < T{0}) {
            for (auto& x : vt.row(j)) {
                x = -x;
            }
            for (index_t i = 0; i < u.rows(); ++i) {
                u(i, j) = -u(i, j);
            }
        }
    }
    if (want_u) {
        out.u = std::move(u);
    }
    if (want_vt) {
        out.vt = std::move(vt);
    }
    return out;
}

} // namespace tsvd
