#pragma once

// Binary matrix file ("TSKM"), little-endian:
//
//   offset  size  field
//        0     4  magic "TSKM"
//        4     4  version (u32) = 1
//        8     1  precision (u8): 4 = binary32, 8 = binary64
//        9     7  reserved, zero
//       16     8  rows m (u64)
//       24     8  cols n (u64)
//       32   ...  m*n elements, row-major
//
// Reads split the rows by the balanced partition, each rank reading only its own block.

#include "tsvd/comm.hpp"
#include "tsvd/dense_matrix.hpp"
#include "tsvd/dist_matrix.hpp"
#include "tsvd/errors.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace tsvd {

inline constexpr std::array<char, 4> kMatrixMagic{'T', 'S', 'K', 'M'};
inline constexpr std::uint32_t kMatrixFormatVersion = 1;
inline constexpr std::size_t kMatrixHeaderBytes = 32;

struct MatrixFileHeader {
    Precision precision = Precision::f64;
    index_t rows = 0;
    index_t cols = 0;
};

namespace detail {

template<class U>
U to_little(U v) noexcept {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(U)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<U>(bytes);
    }
    return v;
}

template<class U>
void put(std::array<char, kMatrixHeaderBytes>& buf, std::size_t at, U v) {
    v = to_little(v);
    std::memcpy(buf.data() + at, &v, sizeof(U));
}

template<class U>
U get(const std::array<char, kMatrixHeaderBytes>& buf, std::size_t at) {
    U v;
    std::memcpy(&v, buf.data() + at, sizeof(U));
    return to_little(v);
}

inline std::array<char, kMatrixHeaderBytes> encode_header(const MatrixFileHeader& h) {
    std::array<char, kMatrixHeaderBytes> buf{};
    std::memcpy(buf.data(), kMatrixMagic.data(), 4);
    put<std::uint32_t>(buf, 4, kMatrixFormatVersion);
    put<std::uint8_t>(buf, 8, static_cast<std::uint8_t>(h.precision));
    put<std::uint64_t>(buf, 16, static_cast<std::uint64_t>(h.rows));
    put<std::uint64_t>(buf, 24, static_cast<std::uint64_t>(h.cols));
    return buf;
}

template<std::floating_point T>
void swap_to_little(std::span<T> values) {
    if constexpr (std::endian::native == std::endian::big) {
        for (T& x : values) {
            x = to_little(x);
        }
    }
}

} // namespace detail

inline MatrixFileHeader read_matrix_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open matrix file '" + path + "'");
    }
    std::array<char, kMatrixHeaderBytes> buf{};
    if (!in.read(buf.data(), buf.size())) {
        throw FormatError("'" + path + "' is shorter than the 32-byte header");
    }
    if (std::memcmp(buf.data(), kMatrixMagic.data(), 4) != 0) {
        throw FormatError("'" + path + "' does not start with magic TSKM");
    }
    const auto version = detail::get<std::uint32_t>(buf, 4);
    if (version != kMatrixFormatVersion) {
        throw FormatError("'" + path + "' has unsupported version " + std::to_string(version));
    }
    const auto prec = detail::get<std::uint8_t>(buf, 8);
    if (prec != 4 && prec != 8) {
        throw FormatError("'" + path + "' has unknown precision code " + std::to_string(prec));
    }
    MatrixFileHeader h;
    h.precision = static_cast<Precision>(prec);
    h.rows = static_cast<index_t>(detail::get<std::uint64_t>(buf, 16));
    h.cols = static_cast<index_t>(detail::get<std::uint64_t>(buf, 24));
    if (h.rows < 0 || h.cols < 0) {
        throw FormatError("'" + path + "' has a dimension beyond 2^63");
    }
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::uint64_t>(in.tellg());
    const auto expected = kMatrixHeaderBytes + static_cast<std::uint64_t>(h.rows) * static_cast<std::uint64_t>(h.cols) *
                                                   static_cast<std::uint64_t>(prec);
    if (bytes != expected) {
        throw FormatError("'" + path + "' holds " + std::to_string(bytes) + " bytes, header implies " +
                          std::to_string(expected));
    }
    return h;
}

/// Collective read; each rank loads its balanced block.
template<std::floating_point T>
DistMatrix<T> read_matrix_file(Communicator comm, const std::string& path) {
    const MatrixFileHeader h = read_matrix_header(path);
    if (h.precision != precision_of<T>()) {
        throw FormatError("'" + path + "' stores " + std::string(to_string(h.precision)) + ", requested " +
                          std::string(to_string(precision_of<T>())));
    }
    const auto range = balanced_rows(h.rows, comm.size(), comm.rank());
    DenseMatrix<T> local(range.count, h.cols);
    std::ifstream in(path, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(kMatrixHeaderBytes +
                                         static_cast<std::uint64_t>(range.offset * h.cols) * sizeof(T)));
    if (!in.read(reinterpret_cast<char*>(local.data()), static_cast<std::streamsize>(local.size() * sizeof(T)))) {
        throw FormatError("short read in '" + path + "'");
    }
    detail::swap_to_little(local.elements());
    return DistMatrix<T>::from_layout(std::move(comm), std::move(local), h.rows, range.offset);
}

/// Collective write. Rank 0 lays down the header and file size, then every rank writes its
/// block in place.
template<std::floating_point T>
void write_matrix_file(DistMatrix<T>& a, const std::string& path) {
    Communicator& comm = a.comm();
    const index_t n = a.cols();
    const std::uint64_t total = kMatrixHeaderBytes + static_cast<std::uint64_t>(a.global_rows() * n) * sizeof(T);
    int ok = 1;
    if (comm.rank() == 0) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        const auto header = detail::encode_header({precision_of<T>(), a.global_rows(), n});
        out.write(header.data(), header.size());
        if (total > kMatrixHeaderBytes) {
            out.seekp(static_cast<std::streamoff>(total - 1));
            out.put('\0');
        }
        ok = out.good() ? 1 : 0;
    }
    const DenseMatrix<double> status = broadcast(comm, 0, DenseMatrix<double>(1, 1, ok));
    if (status(0, 0) == 0.0) {
        throw FormatError("cannot create matrix file '" + path + "'");
    }
    {
        DenseMatrix<T> block = a.local();
        detail::swap_to_little(block.elements());
        std::fstream out(path, std::ios::binary | std::ios::in | std::ios::out);
        out.seekp(static_cast<std::streamoff>(kMatrixHeaderBytes +
                                              static_cast<std::uint64_t>(a.row_offset() * n) * sizeof(T)));
        out.write(reinterpret_cast<const char*>(block.data()), static_cast<std::streamsize>(block.size() * sizeof(T)));
        ok = out.good() ? 1 : 0;
    }
    const DenseMatrix<double> written = allreduce_sum(comm, DenseMatrix<double>(1, 1, ok));
    if (static_cast<int>(written(0, 0)) != comm.size()) {
        throw FormatError("failed writing blocks of '" + path + "'");
    }
}

} // namespace tsvd
