#pragma once

// Counter-based random streams. Entry (row, col) of a generated matrix depends only on
// (seed, row, col), so data generated across any number of ranks is identical.

#include "tsvd/dense_matrix.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

namespace tsvd {

enum class Distribution : std::uint8_t { standard_normal, uniform01 };

inline std::string_view to_string(Distribution d) noexcept {
    return d == Distribution::standard_normal ? "standard-normal" : "uniform01";
}

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// Stream of 64-bit words for one matrix row: word i is a hash of (seed, row, i).
/// Satisfies UniformRandomBitGenerator.
class RowStream {
public:
    using result_type = std::uint64_t;

    RowStream(std::uint64_t seed, std::uint64_t row) noexcept
        : key_(detail::splitmix64(detail::splitmix64(seed) ^ (row * 0xd1342543de82ef95ULL))) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return detail::splitmix64(key_ + 0x632be59bd9b4e019ULL * counter_++); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Standard normal by Box-Muller; consumes two words per call.
    double normal() noexcept {
        // 1 - u lies in (0, 1], keeping log() finite
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Fill rows [first_row, first_row + out.rows()) of the global matrix defined by (seed, dist).
/// Values are drawn in double and rounded, so f32 data is the rounding of the f64 data.
template<std::floating_point T>
void fill_random_rows(DenseMatrix<T>& out, index_t first_row, Distribution dist, std::uint64_t seed) {
    for (index_t i = 0; i < out.rows(); ++i) {
        RowStream stream(seed, static_cast<std::uint64_t>(first_row + i));
        for (T& x : out.row(i)) {
            double v = dist == Distribution::standard_normal ? stream.normal() : stream.uniform();
            x = static_cast<T>(v);
            if constexpr (sizeof(T) < sizeof(double)) {
                // rounding to a narrower type may land exactly on 1
                if (dist == Distribution::uniform01 && x >= T{1}) {
                    x = std::nextafter(T{1}, T{0});
                }
            }
        }
    }
}

template<std::floating_point T>
DenseMatrix<T> random_matrix(index_t rows, index_t cols, Distribution dist, std::uint64_t seed) {
    DenseMatrix<T> m(rows, cols);
    fill_random_rows(m, 0, dist, seed);
    return m;
}

} // namespace tsvd
