#pragma once

// 1-d row-block distributed matrix. Rank i owns a contiguous block of whole rows; blocks are in
// rank order. Products follow two patterns only:
//
//   distributed * replicated  -> distributed   (local, no communication)
//   distributed^T * distributed -> replicated  (local product + allreduce_sum)

#include "tsvd/comm.hpp"
#include "tsvd/dense_matrix.hpp"
#include "tsvd/errors.hpp"
#include "tsvd/linalg.hpp"
#include "tsvd/random.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace tsvd {

struct RowRange {
    index_t offset = 0;
    index_t count = 0;
};

/// Balanced contiguous partition of m rows over p ranks; the first m mod p ranks get one extra row.
inline RowRange balanced_rows(index_t m, int p, int rank) {
    const index_t base = m / p;
    const index_t extra = m % p;
    const index_t r = rank;
    return {r * base + std::min(r, extra), base + (r < extra ? 1 : 0)};
}

template<std::floating_point T>
class DistMatrix {
public:
    using value_type = T;

    /// Assemble from this rank's block. Collective: exchanges row counts to fix offsets and
    /// validates that every rank agrees on the column count.
    static DistMatrix from_local(Communicator comm, DenseMatrix<T> local) {
        // row counts travel as doubles so that f32 blocks beyond 2^24 rows stay exact
        DenseMatrix<double> shape(1, 2);
        shape(0, 0) = static_cast<double>(local.rows());
        shape(0, 1) = static_cast<double>(local.cols());
        const DenseMatrix<double> all = allgather_rows(comm, shape);
        index_t offset = 0;
        index_t total = 0;
        for (int r = 0; r < comm.size(); ++r) {
            const auto rows = static_cast<index_t>(all(r, 0));
            if (static_cast<index_t>(all(r, 1)) != local.cols()) {
                throw ContractError("DistMatrix: rank " + std::to_string(r) + " has " +
                                    std::to_string(static_cast<index_t>(all(r, 1))) + " columns, rank " +
                                    std::to_string(comm.rank()) + " has " + std::to_string(local.cols()));
            }
            if (r < comm.rank()) {
                offset += rows;
            }
            total += rows;
        }
        return DistMatrix(std::move(comm), std::move(local), total, offset);
    }

    /// Build from a block already known to sit at rows [row_offset, row_offset + local.rows()).
    /// No communication; the caller vouches for the global layout.
    static DistMatrix from_layout(Communicator comm, DenseMatrix<T> local, index_t global_rows, index_t row_offset) {
        if (row_offset < 0 || row_offset + local.rows() > global_rows) {
            throw ContractError("DistMatrix: block [" + std::to_string(row_offset) + ", " +
                                std::to_string(row_offset + local.rows()) + ") outside " +
                                std::to_string(global_rows) + " rows");
        }
        return DistMatrix(std::move(comm), std::move(local), global_rows, row_offset);
    }

    /// Split a replicated full matrix by the balanced partition (desk-scale tests and I/O).
    static DistMatrix scatter(Communicator comm, const DenseMatrix<T>& full) {
        const auto range = balanced_rows(full.rows(), comm.size(), comm.rank());
        return DistMatrix(std::move(comm), full.row_block(range.offset, range.count), full.rows(), range.offset);
    }

    [[nodiscard]] index_t global_rows() const noexcept { return global_rows_; }
    [[nodiscard]] index_t cols() const noexcept { return local_.cols(); }
    [[nodiscard]] index_t row_offset() const noexcept { return row_offset_; }
    [[nodiscard]] index_t local_rows() const noexcept { return local_.rows(); }
    [[nodiscard]] const DenseMatrix<T>& local() const noexcept { return local_; }
    DenseMatrix<T>& local() noexcept { return local_; }
    [[nodiscard]] Communicator& comm() noexcept { return comm_; }
    [[nodiscard]] const Communicator& comm() const noexcept { return comm_; }

    /// Same communicator and identical row layout.
    [[nodiscard]] bool conforms_with(const DistMatrix<T>& other) const noexcept {
        return comm_.same_as(other.comm_) && global_rows_ == other.global_rows_ &&
               row_offset_ == other.row_offset_ && local_.rows() == other.local_.rows();
    }

private:
    DistMatrix(Communicator comm, DenseMatrix<T> local, index_t global_rows, index_t row_offset)
        : comm_(std::move(comm)), local_(std::move(local)), global_rows_(global_rows), row_offset_(row_offset) {}

    Communicator comm_;
    DenseMatrix<T> local_;
    index_t global_rows_ = 0;
    index_t row_offset_ = 0;
};

/// m x n matrix of i.i.d. entries; entry values depend only on (seed, global row, column).
template<std::floating_point T>
DistMatrix<T> generate_random(Communicator comm, index_t m, index_t n, Distribution dist, std::uint64_t seed) {
    if (n < 1 || m < n) {
        throw ShapeError("generate_random: " + std::to_string(m) + "x" + std::to_string(n) +
                         " is not tall/skinny (need m >= n >= 1)");
    }
    const auto range = balanced_rows(m, comm.size(), comm.rank());
    DenseMatrix<T> local(range.count, n);
    fill_random_rows(local, range.offset, dist, seed);
    return DistMatrix<T>::from_layout(std::move(comm), std::move(local), m, range.offset);
}

/// Full matrix on every rank, blocks in rank order.
template<std::floating_point T>
DenseMatrix<T> gather(const DistMatrix<T>& a) {
    Communicator comm = a.comm();
    return allgather_rows(comm, a.local());
}

/// A^T A, replicated and exactly symmetric.
template<std::floating_point T>
DenseMatrix<T> crossprod(DistMatrix<T>& a) {
    const DenseMatrix<T> local = gemm(true, T{1}, a.local(), a.local());
    return symmetrized(allreduce_sum(a.comm(), local));
}

/// A * B for replicated B; result keeps A's row layout. No communication.
template<std::floating_point T>
DistMatrix<T> mult_local(const DistMatrix<T>& a, const DenseMatrix<T>& b) {
    if (a.cols() != b.rows()) {
        throw ContractError("mult_local: distributed " + std::to_string(a.global_rows()) + "x" +
                            std::to_string(a.cols()) + " times " + b.shape());
    }
    return DistMatrix<T>::from_layout(a.comm(), gemm(false, T{1}, a.local(), b), a.global_rows(), a.row_offset());
}

/// A^T Y, replicated.
template<std::floating_point T>
DenseMatrix<T> mult_transpose(DistMatrix<T>& a, const DistMatrix<T>& y) {
    if (!a.conforms_with(y)) {
        throw ContractError("mult_transpose: operands do not share communicator and row distribution");
    }
    return allreduce_sum(a.comm(), gemm(true, T{1}, a.local(), y.local()));
}

template<std::floating_point T>
struct Centered {
    DistMatrix<T> centered;
    std::vector<T> means;
};

/// Subtract each column's global mean.
template<std::floating_point T>
Centered<T> mean_center_columns(DistMatrix<T>& a) {
    if (a.global_rows() < 1) {
        throw ShapeError("mean_center_columns: matrix has no rows");
    }
    const index_t n = a.cols();
    DenseMatrix<T> sums(1, n);
    for (index_t i = 0; i < a.local_rows(); ++i) {
        const auto row = a.local().row(i);
        for (index_t j = 0; j < n; ++j) {
            sums(0, j) += row[static_cast<std::size_t>(j)];
        }
    }
    sums = allreduce_sum(a.comm(), sums);
    std::vector<T> means(static_cast<std::size_t>(n));
    for (index_t j = 0; j < n; ++j) {
        means[static_cast<std::size_t>(j)] = sums(0, j) / static_cast<T>(a.global_rows());
    }
    DenseMatrix<T> local = a.local();
    for (index_t i = 0; i < local.rows(); ++i) {
        auto row = local.row(i);
        for (index_t j = 0; j < n; ++j) {
            row[static_cast<std::size_t>(j)] -= means[static_cast<std::size_t>(j)];
        }
    }
    return {DistMatrix<T>::from_layout(a.comm(), std::move(local), a.global_rows(), a.row_offset()),
            std::move(means)};
}

} // namespace tsvd
