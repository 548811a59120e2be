#pragma once

#include "tsvd/dist_matrix.hpp"
#include "tsvd/svd.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tsvd {

enum class SvdMethod : std::uint8_t { cpsvd, tssvd, rsvd };

inline std::string_view to_string(SvdMethod m) noexcept {
    switch (m) {
    case SvdMethod::cpsvd: return "cpsvd";
    case SvdMethod::tssvd: return "tssvd";
    case SvdMethod::rsvd: return "rsvd";
    }
    return "unknown";
}

inline std::optional<SvdMethod> parse_method(std::string_view s) noexcept {
    if (s == "cpsvd") {
        return SvdMethod::cpsvd;
    }
    if (s == "tssvd") {
        return SvdMethod::tssvd;
    }
    if (s == "rsvd") {
        return SvdMethod::rsvd;
    }
    return std::nullopt;
}

/// Dispatch to one of the three algorithms. `params` is only read for rsvd.
template<std::floating_point T>
SvdResult<T> compute_svd(DistMatrix<T>& a, SvdMethod method, const RsvdParams& params, bool want_u, bool want_v) {
    switch (method) {
    case SvdMethod::cpsvd: return svd_normal_equations(a, want_u, want_v);
    case SvdMethod::tssvd: return svd_tsqr(a, want_u, want_v);
    case SvdMethod::rsvd: return svd_randomized(a, params, want_u, want_v);
    }
    throw ParameterError("unknown SVD method");
}

template<std::floating_point T>
struct PcaResult {
    std::vector<T> sdev;                ///< sigma_i / sqrt(m - 1), first ncomp
    DenseMatrix<T> rotation;            ///< n x ncomp, right singular vectors
    std::optional<DistMatrix<T>> scores; ///< centered data times rotation
    std::vector<T> means;
};

/// Principal components of the rows of `a`: center each column, take the SVD, and scale.
template<std::floating_point T>
PcaResult<T> pca(DistMatrix<T>& a, SvdMethod method, index_t ncomp, bool want_scores, const RsvdParams& params = {}) {
    if (a.global_rows() < 2) {
        throw ShapeError("pca: need at least two observations");
    }
    if (ncomp < 1 || ncomp > a.cols()) {
        throw ParameterError("pca: ncomp=" + std::to_string(ncomp) + " outside [1, " + std::to_string(a.cols()) + "]");
    }
    if (method == SvdMethod::rsvd && ncomp > params.k) {
        throw ParameterError("pca: ncomp=" + std::to_string(ncomp) + " exceeds rsvd rank k=" + std::to_string(params.k));
    }
    auto [centered, means] = mean_center_columns(a);
    SvdResult<T> svd = compute_svd(centered, method, params, false, true);

    PcaResult<T> out;
    const T scale = std::sqrt(static_cast<T>(a.global_rows() - 1));
    for (index_t i = 0; i < ncomp; ++i) {
        out.sdev.push_back(svd.sigma[static_cast<std::size_t>(i)] / scale);
    }
    out.rotation = svd.v->col_block(0, ncomp);
    if (want_scores) {
        out.scores = mult_local(centered, out.rotation);
    }
    out.means = std::move(means);
    return out;
}

} // namespace tsvd
