#pragma once

#include "tsvd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tsvd {

using index_t = std::int64_t;

enum class Precision : std::uint8_t { f32 = 4, f64 = 8 };

template<std::floating_point T>
constexpr Precision precision_of() noexcept {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8, "only IEEE binary32/binary64 have a wire precision tag");
    return sizeof(T) == 4 ? Precision::f32 : Precision::f64;
}

inline std::string_view to_string(Precision p) noexcept { return p == Precision::f32 ? "f32" : "f64"; }

/// Row-major dense matrix. Every local kernel works on this type.
template<std::floating_point T>
class DenseMatrix {
public:
    using value_type = T;

    DenseMatrix() = default;

    DenseMatrix(index_t rows, index_t cols, T fill = T{0}) : rows_(rows), cols_(cols) {
        if (rows < 0 || cols < 0) {
            throw ContractError("negative matrix dimension " + std::to_string(rows) + "x" + std::to_string(cols));
        }
        data_.assign(static_cast<std::size_t>(rows * cols), fill);
    }

    DenseMatrix(index_t rows, index_t cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (rows < 0 || cols < 0 || data_.size() != static_cast<std::size_t>(rows * cols)) {
            throw ContractError("element count " + std::to_string(data_.size()) + " does not match shape " +
                                std::to_string(rows) + "x" + std::to_string(cols));
        }
    }

    /// Nested-list literal, mostly for tests: DenseMatrix<double>{{1, 2}, {3, 4}}.
    DenseMatrix(std::initializer_list<std::initializer_list<T>> rows) {
        rows_ = static_cast<index_t>(rows.size());
        cols_ = rows_ == 0 ? 0 : static_cast<index_t>(rows.begin()->size());
        data_.reserve(static_cast<std::size_t>(rows_ * cols_));
        for (const auto& r : rows) {
            if (static_cast<index_t>(r.size()) != cols_) {
                throw ContractError("ragged matrix literal");
            }
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static DenseMatrix identity(index_t n) {
        DenseMatrix m(n, n);
        for (index_t i = 0; i < n; ++i) {
            m(i, i) = T{1};
        }
        return m;
    }

    static DenseMatrix diagonal(std::span<const T> d) {
        const auto n = static_cast<index_t>(d.size());
        DenseMatrix m(n, n);
        for (index_t i = 0; i < n; ++i) {
            m(i, i) = d[static_cast<std::size_t>(i)];
        }
        return m;
    }

    [[nodiscard]] index_t rows() const noexcept { return rows_; }
    [[nodiscard]] index_t cols() const noexcept { return cols_; }
    [[nodiscard]] index_t size() const noexcept { return rows_ * cols_; }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
    [[nodiscard]] static constexpr Precision precision() noexcept { return precision_of<T>(); }

    T& operator()(index_t i, index_t j) noexcept { return data_[static_cast<std::size_t>(i * cols_ + j)]; }
    const T& operator()(index_t i, index_t j) const noexcept { return data_[static_cast<std::size_t>(i * cols_ + j)]; }

    std::span<T> row(index_t i) noexcept { return {data_.data() + i * cols_, static_cast<std::size_t>(cols_)}; }
    std::span<const T> row(index_t i) const noexcept {
        return {data_.data() + i * cols_, static_cast<std::size_t>(cols_)};
    }

    std::span<T> elements() noexcept { return data_; }
    std::span<const T> elements() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }

    [[nodiscard]] std::string shape() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

    [[nodiscard]] DenseMatrix transposed() const {
        DenseMatrix t(cols_, rows_);
        for (index_t i = 0; i < rows_; ++i) {
            for (index_t j = 0; j < cols_; ++j) {
                t(j, i) = (*this)(i, j);
            }
        }
        return t;
    }

    /// Rows [first, first + count).
    [[nodiscard]] DenseMatrix row_block(index_t first, index_t count) const {
        if (first < 0 || count < 0 || first + count > rows_) {
            throw ContractError("row block out of range for " + shape());
        }
        DenseMatrix b(count, cols_);
        std::copy_n(data_.begin() + first * cols_, count * cols_, b.data_.begin());
        return b;
    }

    /// Columns [first, first + count).
    [[nodiscard]] DenseMatrix col_block(index_t first, index_t count) const {
        if (first < 0 || count < 0 || first + count > cols_) {
            throw ContractError("column block out of range for " + shape());
        }
        DenseMatrix b(rows_, count);
        for (index_t i = 0; i < rows_; ++i) {
            std::copy_n(data_.begin() + i * cols_ + first, count, b.data_.begin() + i * count);
        }
        return b;
    }

    template<std::floating_point U>
    [[nodiscard]] DenseMatrix<U> cast() const {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        return DenseMatrix<U>(rows_, cols_, std::move(out));
    }

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    index_t rows_ = 0;
    index_t cols_ = 0;
    std::vector<T> data_;
};

/// [top; bottom]
template<std::floating_point T>
DenseMatrix<T> vstack(const DenseMatrix<T>& top, const DenseMatrix<T>& bottom) {
    if (top.cols() != bottom.cols()) {
        throw ContractError("vstack column mismatch: " + top.shape() + " over " + bottom.shape());
    }
    std::vector<T> data;
    data.reserve(static_cast<std::size_t>(top.size() + bottom.size()));
    data.insert(data.end(), top.elements().begin(), top.elements().end());
    data.insert(data.end(), bottom.elements().begin(), bottom.elements().end());
    return DenseMatrix<T>(top.rows() + bottom.rows(), top.cols(), std::move(data));
}

template<std::floating_point T>
T max_abs(const DenseMatrix<T>& a) noexcept {
    T m{0};
    for (T v : a.elements()) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

template<std::floating_point T>
T frobenius_norm(const DenseMatrix<T>& a) noexcept {
    // scaled to stay clear of overflow for large entries
    const T scale = max_abs(a);
    if (scale == T{0}) {
        return T{0};
    }
    T sum{0};
    for (T v : a.elements()) {
        const T s = v / scale;
        sum += s * s;
    }
    return scale * std::sqrt(sum);
}

/// max_ij |a_ij - b_ij|
template<std::floating_point T>
T max_abs_diff(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ContractError("shape mismatch " + a.shape() + " vs " + b.shape());
    }
    T m{0};
    for (index_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    }
    return m;
}

} // namespace tsvd
