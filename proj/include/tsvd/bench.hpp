#pragma once

// Benchmark and verification harness behind the svdbench tool.

#include "tsvd/comm.hpp"
#include "tsvd/dist_matrix.hpp"
#include "tsvd/matrix_io.hpp"
#include "tsvd/pca.hpp"
#include "tsvd/svd.hpp"
#include "tsvd/synthetic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace tsvd::bench {

inline constexpr std::string_view kCsvHeader = "algo,precision,m,n,p,k,q,rep,seconds,sigma_sum";

struct BenchConfig {
    SvdMethod algo = SvdMethod::tssvd;
    index_t rows = 1'000'000;
    index_t cols = 250;
    Precision precision = Precision::f64;
    int ranks = 1;
    index_t k = 2;
    index_t q = 2;
    std::uint64_t seed = 42;
    int reps = 5;
    bool equal_bytes = false;
    std::string input; ///< matrix file; empty means generate standard-normal data
};

struct BenchRecord {
    SvdMethod algo;
    Precision precision;
    index_t m;
    index_t n;
    int p;
    index_t k; ///< 0 unless rsvd
    index_t q; ///< 0 unless rsvd
    int rep;
    double seconds;
    double sigma_sum;
};

/// Rows actually used: --equal-bytes halves m for f64 so both precisions touch the same bytes.
inline index_t effective_rows(const BenchConfig& c) {
    return c.equal_bytes && c.precision == Precision::f64 ? c.rows / 2 : c.rows;
}

inline void validate(const BenchConfig& c) {
    if (c.input.empty()) {
        const index_t m = effective_rows(c);
        if (c.cols < 1 || m <= c.cols) {
            throw ShapeError("need rows > cols >= 1, got " + std::to_string(m) + "x" + std::to_string(c.cols));
        }
    }
    if (c.reps < 1) {
        throw ParameterError("reps must be >= 1");
    }
    if (c.ranks < 1) {
        throw ParameterError("ranks must be >= 1");
    }
    if (c.algo == SvdMethod::rsvd && (c.k < 1 || 2 * c.k > c.cols || c.q < 0)) {
        throw ParameterError("rsvd needs k >= 1, 2k <= cols and q >= 0");
    }
}

inline RsvdParams rsvd_params(const BenchConfig& c) {
    // projection stream kept apart from the data stream
    return {c.k, c.q, Distribution::uniform01, c.seed ^ 0x9e37'79b9'7f4a'7c15ULL};
}

namespace detail {

template<std::floating_point T>
DistMatrix<T> load_or_generate(Communicator comm, const BenchConfig& c) {
    if (!c.input.empty()) {
        return read_matrix_file<T>(std::move(comm), c.input);
    }
    return generate_random<T>(std::move(comm), effective_rows(c), c.cols, Distribution::standard_normal, c.seed);
}

template<std::floating_point T>
std::vector<BenchRecord> run_typed(const BenchConfig& c) {
    index_t m = effective_rows(c);
    index_t n = c.cols;
    if (!c.input.empty()) {
        const auto h = read_matrix_header(c.input);
        m = h.rows;
        n = h.cols;
        if (m <= n) {
            throw ShapeError("input matrix " + std::to_string(m) + "x" + std::to_string(n) + " is not tall");
        }
        if (c.algo == SvdMethod::rsvd && 2 * c.k > n) {
            throw ParameterError("rsvd needs 2k <= cols");
        }
    }
    const RsvdParams params = rsvd_params(c);
    std::vector<BenchRecord> records;
    for (int rep = 0; rep < c.reps; ++rep) {
        auto per_rank = run_ranks(c.ranks, [&](Communicator& comm) {
            DistMatrix<T> a = load_or_generate<T>(comm, c);
            barrier(comm);
            const auto t0 = std::chrono::steady_clock::now();
            const SvdResult<T> s = compute_svd(a, c.algo, params, false, false);
            barrier(comm);
            const auto t1 = std::chrono::steady_clock::now();
            const double sum = std::accumulate(s.sigma.begin(), s.sigma.end(), 0.0,
                                               [](double acc, T x) { return acc + static_cast<double>(x); });
            return std::pair{std::chrono::duration<double>(t1 - t0).count(), sum};
        });
        const bool rs = c.algo == SvdMethod::rsvd;
        records.push_back({c.algo, precision_of<T>(), m, n, c.ranks, rs ? c.k : 0, rs ? c.q : 0, rep,
                           std::max(per_rank.front().first, 1e-9), per_rank.front().second});
    }
    return records;
}

} // namespace detail

/// Generate (or load), time the singular-values-only computation, one record per rep.
inline std::vector<BenchRecord> run_bench(const BenchConfig& c) {
    validate(c);
    if (!c.input.empty()) {
        const auto h = read_matrix_header(c.input);
        return h.precision == Precision::f32 ? detail::run_typed<float>(c) : detail::run_typed<double>(c);
    }
    return c.precision == Precision::f32 ? detail::run_typed<float>(c) : detail::run_typed<double>(c);
}

inline double median(std::vector<double> xs) {
    if (xs.empty()) {
        return 0.0;
    }
    std::sort(xs.begin(), xs.end());
    const std::size_t h = xs.size() / 2;
    return xs.size() % 2 == 1 ? xs[h] : 0.5 * (xs[h - 1] + xs[h]);
}

inline void write_csv_row(std::ostream& os, const BenchRecord& r) {
    std::ostringstream line;
    line << to_string(r.algo) << ',' << to_string(r.precision) << ',' << r.m << ',' << r.n << ',' << r.p << ','
         << r.k << ',' << r.q << ',' << r.rep << ',' << std::setprecision(9) << r.seconds << ','
         << std::setprecision(17) << r.sigma_sum;
    os << line.str() << '\n';
}

enum class VerifyMatrix : std::uint8_t { random, conditioned };

struct VerifyReport {
    std::vector<double> sigma;
    std::vector<double> oracle;
    std::vector<double> rel_err;
    double max_err = 0.0;
    std::size_t worst = 0;
    double tolerance = 0.0;
    bool pass = false;
};

/// Relative tolerance verify applies for an (algorithm, precision, matrix) triple.
inline double verify_tolerance(SvdMethod algo, Precision prec, VerifyMatrix kind) {
    if (algo == SvdMethod::rsvd) {
        return 1e-2;
    }
    if (kind == VerifyMatrix::conditioned) {
        return algo == SvdMethod::tssvd ? 1e-9 : 1e-4;
    }
    if (prec == Precision::f32) {
        return 1e-4;
    }
    return algo == SvdMethod::tssvd ? 1e-12 : 1e-9;
}

namespace detail {

template<std::floating_point T>
VerifyReport verify_typed(const BenchConfig& c, VerifyMatrix kind) {
    DenseMatrix<double> full;
    if (kind == VerifyMatrix::conditioned) {
        full = builtin_conditioned_matrix();
    } else if (!c.input.empty()) {
        full = run_ranks(1, [&](Communicator& comm) {
                   auto a = read_matrix_file<T>(comm, c.input);
                   return a.local().template cast<double>();
               }).front();
    } else {
        full = random_matrix<T>(effective_rows(c), c.cols, Distribution::standard_normal, c.seed).template cast<double>();
    }
    const DenseMatrix<T> data = full.template cast<T>();
    const RsvdParams params = rsvd_params(c);
    auto sig = run_ranks(c.ranks, [&](Communicator& comm) {
                   auto a = DistMatrix<T>::scatter(comm, data);
                   return compute_svd(a, c.algo, params, false, false).sigma;
               }).front();

    // Oracle: one-sided Jacobi on the gathered matrix; long double for the ill-conditioned instance.
    std::vector<double> oracle;
    if (kind == VerifyMatrix::conditioned) {
        for (long double s : small_svd(data.template cast<long double>(), false, false).sigma) {
            oracle.push_back(static_cast<double>(s));
        }
    } else {
        oracle = small_svd(data.template cast<double>(), false, false).sigma;
    }

    VerifyReport rep;
    rep.tolerance = verify_tolerance(c.algo, precision_of<T>(), kind);
    const double zero = rank_tolerance<double>(data.rows(), data.cols(), oracle.front());
    for (std::size_t i = 0; i < sig.size(); ++i) {
        const double s = static_cast<double>(sig[i]);
        rep.sigma.push_back(s);
        rep.oracle.push_back(oracle[i]);
        const double err = oracle[i] > zero ? std::abs(s - oracle[i]) / oracle[i] : std::abs(s - oracle[i]) / oracle.front();
        rep.rel_err.push_back(err);
        if (err > rep.max_err) {
            rep.max_err = err;
            rep.worst = i;
        }
    }
    rep.pass = rep.max_err <= rep.tolerance;
    return rep;
}

} // namespace detail

/// Run the chosen algorithm and the gathered-matrix oracle, and compare singular values.
inline VerifyReport run_verify(const BenchConfig& c, VerifyMatrix kind) {
    if (kind == VerifyMatrix::conditioned && c.precision == Precision::f32) {
        throw ParameterError("the conditioned instance (kappa = 1e6) is double precision only");
    }
    if (kind == VerifyMatrix::random) {
        validate(c);
    }
    if (kind == VerifyMatrix::conditioned && c.algo == SvdMethod::rsvd && 2 * c.k > ConditionedInstance::cols) {
        throw ParameterError("rsvd needs 2k <= cols");
    }
    if (!c.input.empty() && kind == VerifyMatrix::random) {
        const auto h = read_matrix_header(c.input);
        return h.precision == Precision::f32 ? detail::verify_typed<float>(c, kind)
                                             : detail::verify_typed<double>(c, kind);
    }
    return c.precision == Precision::f32 ? detail::verify_typed<float>(c, kind)
                                         : detail::verify_typed<double>(c, kind);
}

} // namespace tsvd::bench
