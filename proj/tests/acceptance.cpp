// Acceptance suite: one [PASS]/[FAIL] line per criterion, nonzero exit if any fails.

#include "tsvd/bench.hpp"
#include "tsvd/tsvd.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#ifndef SVDBENCH_PATH
#error "SVDBENCH_PATH must name the svdbench executable"
#endif

using namespace tsvd;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << id << ' ' << name << ": " << detail << std::endl;
    if (!ok) {
        ++failures;
    }
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << x;
    return os.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<double> oracle_sigma(const DenseMatrix<double>& full) {
    std::vector<double> out;
    for (long double s : small_svd(full.cast<long double>(), false, false).sigma) {
        out.push_back(static_cast<double>(s));
    }
    return out;
}

template<class A, class B>
double max_rel(const std::vector<A>& got, const std::vector<B>& want) {
    double worst = 0;
    for (std::size_t i = 0; i < std::min(got.size(), want.size()); ++i) {
        const double w = static_cast<double>(want[i]);
        worst = std::max(worst, std::abs(static_cast<double>(got[i]) - w) / std::abs(w));
    }
    return worst;
}

template<std::floating_point T>
std::vector<T> sigma_of(const DenseMatrix<T>& full, int p, SvdMethod method, const RsvdParams& params = {}) {
    return run_ranks(p, [&](Communicator& c) {
               auto a = DistMatrix<T>::scatter(c, full);
               return compute_svd(a, method, params, false, false).sigma;
           })
        .front();
}

template<std::floating_point T>
T orthogonality(const DenseMatrix<T>& x) {
    const auto g = gemm(true, T{1}, x, x);
    T worst{0};
    for (index_t i = 0; i < g.rows(); ++i) {
        for (index_t j = 0; j < g.cols(); ++j) {
            worst = std::max(worst, std::abs(g(i, j) - (i == j ? T{1} : T{0})));
        }
    }
    return worst;
}

void oracle_equivalence() {
    std::mt19937_64 rng(20240101);
    std::uniform_int_distribution<index_t> rows(500, 5000);
    std::uniform_int_distribution<index_t> cols(5, 100);
    std::uniform_real_distribution<double> log_kappa(0.0, 3.0);
    double ts_worst = 0;
    double cp_worst = 0;
    double algo_seconds = 0;
    const auto t0 = Clock::now();
    for (int t = 0; t < 20; ++t) {
        const index_t m = rows(rng);
        const index_t n = cols(rng);
        const int p = 1 + t % 4;
        // even cases: Gaussian entries; odd cases: prescribed spectrum with kappa up to 1e3
        const DenseMatrix<double> full = t % 2 == 0
                                             ? random_matrix<double>(m, n, Distribution::standard_normal, 1000 + t)
                                             : conditioned_matrix(m, n, std::pow(10.0, log_kappa(rng)), 2000 + t);
        const auto want = oracle_sigma(full);
        const auto t1 = Clock::now();
        const auto ts = sigma_of(full, p, SvdMethod::tssvd);
        const auto cp = sigma_of(full, p, SvdMethod::cpsvd);
        algo_seconds += seconds_since(t1);
        ts_worst = std::max(ts_worst, max_rel(ts, want));
        cp_worst = std::max(cp_worst, max_rel(cp, want));
    }
    const double total = seconds_since(t0);
    report(1, "oracle equivalence", ts_worst <= 1e-12 && cp_worst <= 1e-9 && total < 60.0,
           "20 matrices, tssvd max rel err " + fmt(ts_worst) + " (<= 1e-12), cpsvd " + fmt(cp_worst) +
               " (<= 1e-9), algorithms " + fmt(algo_seconds) + " s, total with oracle " + fmt(total) + " s (< 60)");
}

void conditioning_separation() {
    const auto full = builtin_conditioned_matrix();
    const auto want = oracle_sigma(full);
    const double smin = want.back();
    const double ts = std::abs(sigma_of(full, 4, SvdMethod::tssvd).back() - smin) / smin;
    const double cp = std::abs(sigma_of(full, 4, SvdMethod::cpsvd).back() - smin) / smin;
    report(2, "conditioning separation", ts <= 1e-9 && cp >= ts,
           "kappa=1e6, sigma_min rel err tssvd " + fmt(ts) + " (<= 1e-9), cpsvd " + fmt(cp) + " (>= tssvd)");
}

void rank_count_invariance() {
    const auto full = random_matrix<double>(3000, 40, Distribution::standard_normal, 3);
    const auto single = full.cast<float>();
    const RsvdParams params{5, 2, Distribution::uniform01, 17};
    double worst_d = 0;
    double worst_f = 0;
    for (auto method : {SvdMethod::cpsvd, SvdMethod::tssvd, SvdMethod::rsvd}) {
        const auto base_d = sigma_of(full, 1, method, params);
        const auto base_f = sigma_of(single, 1, method, params);
        for (int p : {2, 4, 8}) {
            worst_d = std::max(worst_d, max_rel(sigma_of(full, p, method, params), base_d));
            worst_f = std::max(worst_f, max_rel(sigma_of(single, p, method, params), base_f));
        }
    }
    report(3, "rank-count invariance", worst_d <= 1e-12 && worst_f <= 1e-4,
           "p in {1,2,4,8}, all algorithms, max rel spread f64 " + fmt(worst_d) + " (<= 1e-12), f32 " + fmt(worst_f) +
               " (<= 1e-4)");
}

void caqr_correctness() {
    const auto full = random_matrix<double>(210, 12, Distribution::standard_normal, 210);
    const auto want = qr_R(full);
    const auto gram = gemm(true, 1.0, full, full);
    double r_err = 0;
    double gram_err = 0;
    for (int p : {2, 3, 4, 7}) {
        const auto r = run_ranks(p, [&](Communicator& c) {
                           auto a = DistMatrix<double>::scatter(c, full);
                           return qr_allreduce(c, qr_R(a.local()));
                       }).front();
        r_err = std::max(r_err, max_abs_diff(r, want) / max_abs(want));
        gram_err = std::max(gram_err, max_abs_diff(gemm(true, 1.0, r, r), gram) / max_abs(gram));
    }
    report(4, "CAQR correctness", r_err <= 1e-12 && gram_err <= 1e-12,
           "210x12 over p in {2,3,4,7}, |R - qr_R(A)|/|R|max " + fmt(r_err) + " (<= 1e-12), R^T R vs A^T A " +
               fmt(gram_err) + " (<= 1e-12)");
}

void rsvd_accuracy() {
    const std::vector<double> signal{100, 70, 40, 20, 10};
    double err5 = 0;
    double err2 = 0;
    for (std::uint64_t trial = 0; trial < 3; ++trial) {
        const auto full = low_rank_plus_noise(2000, 100, signal, 1e-6, 50 + trial);
        const auto want = oracle_sigma(full);
        const auto s5 = sigma_of(full, 4, SvdMethod::rsvd, RsvdParams{5, 2, Distribution::uniform01, trial});
        const auto s2 = sigma_of(full, 4, SvdMethod::rsvd, RsvdParams{2, 2, Distribution::uniform01, trial});
        err5 = std::max(err5, max_rel(s5, want));
        err2 = std::max(err2, max_rel(s2, want));
    }
    report(5, "rsvd accuracy", err5 <= 1e-2 && err2 <= 1e-2,
           "rank-5 + 1e-6 noise 2000x100, 3 trials, k=5 q=2 top-5 max rel err " + fmt(err5) + ", k=2 q=2 top-2 " +
               fmt(err2) + " (<= 1e-2)");
}

void factor_quality() {
    const auto full = random_matrix<double>(4000, 60, Distribution::standard_normal, 6);
    const auto [u, sigma, v] = run_ranks(4, [&](Communicator& c) {
                                   auto a = DistMatrix<double>::scatter(c, full);
                                   auto s = svd_tsqr(a, true, true);
                                   return std::tuple{gather(*s.u), s.sigma, *s.v};
                               }).front();
    DenseMatrix<double> us = u;
    for (index_t i = 0; i < us.rows(); ++i) {
        for (index_t j = 0; j < us.cols(); ++j) {
            us(i, j) *= sigma[static_cast<std::size_t>(j)];
        }
    }
    DenseMatrix<double> diff = gemm(false, 1.0, us, v.transposed());
    for (index_t i = 0; i < diff.size(); ++i) {
        diff.data()[i] -= full.data()[i];
    }
    const double vo = orthogonality(v);
    const double uo = orthogonality(u);
    const double rec = frobenius_norm(diff) / frobenius_norm(full);
    report(6, "factor quality", u.cols() == 60 && vo <= 1e-12 && uo <= 1e-10 && rec <= 1e-12,
           "tssvd 4000x60 p=4, |V^T V - I|max " + fmt(vo) + " (<= 1e-12), |U^T U - I|max " + fmt(uo) +
               " (<= 1e-10), reconstruction " + fmt(rec) + " (<= 1e-12)");
}

void pca_properties() {
    const auto full = random_matrix<double>(2500, 30, Distribution::uniform01, 7);
    long double total = 0;
    for (index_t j = 0; j < full.cols(); ++j) {
        long double mean = 0;
        for (index_t i = 0; i < full.rows(); ++i) {
            mean += full(i, j);
        }
        mean /= full.rows();
        for (index_t i = 0; i < full.rows(); ++i) {
            total += (full(i, j) - mean) * (full(i, j) - mean);
        }
    }
    total /= full.rows() - 1;
    double var_err = 0;
    double mean_err = 0;
    for (auto method : {SvdMethod::cpsvd, SvdMethod::tssvd}) {
        const auto [sdev, scores] = run_ranks(4, [&](Communicator& c) {
                                        auto a = DistMatrix<double>::scatter(c, full);
                                        auto r = pca(a, method, 30, true);
                                        return std::pair{r.sdev, gather(*r.scores)};
                                    }).front();
        long double sum = 0;
        for (double s : sdev) {
            sum += static_cast<long double>(s) * s;
        }
        var_err = std::max(var_err, static_cast<double>(std::abs(sum - total) / total));
        for (index_t j = 0; j < scores.cols(); ++j) {
            long double mean = 0;
            for (index_t i = 0; i < scores.rows(); ++i) {
                mean += scores(i, j);
            }
            mean_err = std::max(mean_err, static_cast<double>(std::abs(mean / scores.rows())));
        }
    }
    report(7, "PCA", var_err <= 1e-10 && mean_err <= 1e-12,
           "2500x30 cpsvd+tssvd, variance conservation rel err " + fmt(var_err) + " (<= 1e-10), max score column mean " +
               fmt(mean_err) + " (<= 1e-12)");
}

void determinism() {
    const auto full = random_matrix<double>(1000, 20, Distribution::standard_normal, 8);
    bool identical = true;
    for (auto method : {SvdMethod::cpsvd, SvdMethod::tssvd, SvdMethod::rsvd}) {
        for (int p : {1, 3, 4}) {
            const RsvdParams params{4, 2, Distribution::standard_normal, 99};
            identical = identical && sigma_of(full, p, method, params) == sigma_of(full, p, method, params);
            identical = identical && sigma_of(full.cast<float>(), p, method, params) ==
                                         sigma_of(full.cast<float>(), p, method, params);
        }
    }
    // one rank enters a broadcast while the others enter an allreduce
    auto mismatch = std::async(std::launch::async, [] {
        try {
            run_ranks(4, [](Communicator& c) {
                const DenseMatrix<double> x(2, 2, 1.0);
                if (c.rank() == 2) {
                    (void)broadcast(c, 2, x);
                } else {
                    (void)allreduce_sum(c, x);
                }
            });
        } catch (const CollectiveError& e) {
            return std::string(e.what());
        }
        return std::string();
    });
    if (mismatch.wait_for(std::chrono::seconds(30)) != std::future_status::ready) {
        report(8, "determinism", false, "collective mismatch did not return within 30 s (deadlock)");
        std::cout.flush();
        std::_Exit(1);
    }
    const std::string what = mismatch.get();
    report(8, "determinism", identical && !what.empty(),
           std::string("bitwise-identical sigma across reruns: ") + (identical ? "yes" : "no") +
               "; mismatched collectives reported: " + (what.empty() ? "no" : "\"" + what + "\""));
}

struct Captured {
    int status;
    std::string out;
};

Captured run_tool(const std::string& args) {
    const std::string cmd = std::string(SVDBENCH_PATH) + " " + args + " 2>/dev/null";
    Captured c{-1, {}};
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (pipe == nullptr) {
        return c;
    }
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe) != nullptr) {
        c.out += buf;
    }
    const int raw = ::pclose(pipe);
    c.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return c;
}

bool csv_conforms(const std::string& text, const std::string& algo, const std::string& prec, int reps,
                  std::string& why) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (line != bench::kCsvHeader) {
        why = "bad header '" + line + "'";
        return false;
    }
    const bool rs = algo == "rsvd";
    int rows = 0;
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::istringstream ls(line);
        for (std::string x; std::getline(ls, x, ',');) {
            f.push_back(x);
        }
        const std::vector<std::string> fixed{algo, prec, "100000", "250", "4", rs ? "2" : "0", rs ? "2" : "0",
                                             std::to_string(rows)};
        if (f.size() != 10 || !std::equal(fixed.begin(), fixed.end(), f.begin()) || !(std::stod(f[8]) > 0) ||
            !std::isfinite(std::stod(f[9])) || !(std::stod(f[9]) > 0)) {
            why = "bad row '" + line + "'";
            return false;
        }
        ++rows;
    }
    if (rows != reps) {
        why = std::to_string(rows) + " rows for " + std::to_string(reps) + " reps";
        return false;
    }
    return true;
}

void cli() {
    constexpr int reps = 3;
    const auto t0 = Clock::now();
    bool ok = true;
    std::string detail;
    for (const std::string algo : {"cpsvd", "tssvd", "rsvd"}) {
        for (const std::string prec : {"f32", "f64"}) {
            const auto t1 = Clock::now();
            const auto r = run_tool("run --algo " + algo + " --precision " + prec + " --rows 100000 --cols 250 --ranks 4 --reps " +
                                    std::to_string(reps));
            std::string why;
            const bool good = r.status == 0 && csv_conforms(r.out, algo, prec, reps, why);
            ok = ok && good;
            detail += algo + "/" + prec + " " + (good ? fmt(seconds_since(t1)) + "s" : "FAILED(" + why + ")") + ", ";
        }
    }
    const double run_seconds = seconds_since(t0);
    ok = ok && run_seconds < 300.0;
    for (const std::string algo : {"tssvd", "cpsvd"}) {
        const auto v = run_tool("verify --algo " + algo + " --precision f64 --ranks 4");
        const bool good = v.status == 0 && v.out.find("PASS") != std::string::npos;
        ok = ok && good;
        detail += "verify " + algo + (good ? " PASS" : " FAIL") + ", ";
    }
    report(9, "CLI", ok,
           "m=1e5 n=250 p=4 reps=" + std::to_string(reps) + ": " + detail + "bench total " + fmt(run_seconds) +
               " s (< 300)");
}

} // namespace

int main() {
    const std::vector<void (*)()> criteria{oracle_equivalence, conditioning_separation, rank_count_invariance,
                                           caqr_correctness,   rsvd_accuracy,           factor_quality,
                                           pca_properties,     determinism,             cli};
    int id = 1;
    for (auto* run : criteria) {
        try {
            run();
        } catch (const std::exception& e) {
            report(id, "criterion", false, std::string("threw: ") + e.what());
        }
        ++id;
    }
    std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
