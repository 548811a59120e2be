#pragma once

// svdbench command line. Exit codes: 0 success, 1 algorithm failure or verify tolerance
// breach, 2 usage error.

#include "tsvd/bench.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace tsvd::cli {

namespace detail {

inline void print_summary(std::ostream& os, const std::vector<bench::BenchRecord>& records) {
    std::vector<double> secs;
    for (const auto& r : records) {
        secs.push_back(r.seconds);
    }
    const auto& r = records.front();
    os << std::left << std::setw(7) << "algo" << std::setw(6) << "prec" << std::setw(12) << "m" << std::setw(6) << "n"
       << std::setw(4) << "p" << std::setw(6) << "reps" << std::setw(14) << "median_s" << "sigma_sum\n";
    os << std::left << std::setw(7) << to_string(r.algo) << std::setw(6) << to_string(r.precision) << std::setw(12)
       << r.m << std::setw(6) << r.n << std::setw(4) << r.p << std::setw(6) << records.size() << std::setw(14)
       << std::setprecision(6) << bench::median(secs) << std::setprecision(12) << r.sigma_sum << '\n';
}

} // namespace detail

inline int svdbench_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Distributed tall/skinny SVD benchmark"};
    app.require_subcommand(0, 1);

    bench::BenchConfig cfg;
    std::string algo = "tssvd";
    std::string precision = "f64";
    std::string out_path;
    std::string matrix_kind = "random";

    const std::map<std::string, SvdMethod> algos{
        {"cpsvd", SvdMethod::cpsvd}, {"tssvd", SvdMethod::tssvd}, {"rsvd", SvdMethod::rsvd}};

    auto* rows_opt = app.add_option("--rows,-m", cfg.rows, "global rows (default 1000000; verify: 5000)");
    auto* cols_opt = app.add_option("--cols,-n", cfg.cols, "columns (default 250; verify: 50)");
    app.add_option("--algo", algo, "cpsvd | tssvd | rsvd")->check(CLI::IsMember({"cpsvd", "tssvd", "rsvd"}));
    app.add_option("--precision", precision, "f32 | f64")->check(CLI::IsMember({"f32", "f64"}));
    app.add_option("--ranks,-p", cfg.ranks, "in-process rank count")->check(CLI::PositiveNumber);
    app.add_option("--k", cfg.k, "rsvd truncation rank")->check(CLI::PositiveNumber);
    app.add_option("--q", cfg.q, "rsvd power iterations")->check(CLI::NonNegativeNumber);
    app.add_option("--seed", cfg.seed, "data seed (SVDBENCH_SEED overrides)");
    app.add_option("--reps", cfg.reps, "repetitions")->check(CLI::PositiveNumber);
    app.add_option("--out", out_path, "CSV output file (run) or matrix file (gen); default stdout");
    app.add_option("--input", cfg.input, "read the matrix from a TSKM file instead of generating it")
        ->check(CLI::ExistingFile);
    app.add_flag("--equal-bytes", cfg.equal_bytes, "halve rows for f64 runs");
    app.add_option("--matrix", matrix_kind, "verify input: random | conditioned (built-in kappa=1e6)")
        ->check(CLI::IsMember({"random", "conditioned"}));

    auto* run_cmd = app.add_subcommand("run", "time the singular-values computation (default)");
    auto* verify_cmd = app.add_subcommand("verify", "compare singular values against the gathered oracle");
    auto* gen_cmd = app.add_subcommand("gen", "write a standard-normal matrix to --out as a TSKM file");
    for (auto* sub : {run_cmd, verify_cmd, gen_cmd}) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    }

    cfg.algo = algos.at(algo);
    cfg.precision = precision == "f32" ? Precision::f32 : Precision::f64;
    if (const char* env = std::getenv("SVDBENCH_SEED")) {
        try {
            cfg.seed = std::stoull(env);
        } catch (const std::exception&) {
            err << "error: SVDBENCH_SEED='" << env << "' is not an unsigned integer\n";
            return 2;
        }
    }

    const bool verify = verify_cmd->parsed();
    if (verify) {
        if (rows_opt->count() == 0) {
            cfg.rows = 5000;
        }
        if (cols_opt->count() == 0) {
            cfg.cols = 50;
        }
    }

    try {
        if (gen_cmd->parsed()) {
            if (out_path.empty()) {
                err << "error: gen needs --out FILE\n";
                return 2;
            }
            if (cfg.cols < 1 || cfg.rows < cfg.cols) {
                throw ShapeError("need rows >= cols >= 1");
            }
            run_ranks(cfg.ranks, [&](Communicator& comm) {
                if (cfg.precision == Precision::f32) {
                    auto a = generate_random<float>(comm, cfg.rows, cfg.cols, Distribution::standard_normal, cfg.seed);
                    write_matrix_file(a, out_path);
                } else {
                    auto a = generate_random<double>(comm, cfg.rows, cfg.cols, Distribution::standard_normal, cfg.seed);
                    write_matrix_file(a, out_path);
                }
            });
            return 0;
        }

        if (verify) {
            const auto kind = matrix_kind == "conditioned" ? bench::VerifyMatrix::conditioned : bench::VerifyMatrix::random;
            const auto rep = bench::run_verify(cfg, kind);
            out << "verify " << algo << ' ' << precision << " matrix=" << matrix_kind << " p=" << cfg.ranks << '\n';
            out << "  max relative sigma error " << std::scientific << std::setprecision(3) << rep.max_err
                << " at index " << rep.worst << " (tolerance " << rep.tolerance << ")\n";
            if (rep.pass) {
                out << "PASS\n";
                return 0;
            }
            out << "FAIL: sigma[" << rep.worst << "] = " << std::setprecision(17) << rep.sigma[rep.worst]
                << ", oracle " << rep.oracle[rep.worst] << '\n';
            return 1;
        }

        // run
        try {
            bench::validate(cfg);
        } catch (const Error& e) {
            err << "error: " << e.what() << '\n';
            return 2;
        }
        std::ofstream file;
        if (!out_path.empty()) {
            file.open(out_path);
            if (!file) {
                err << "error: cannot write '" << out_path << "'\n";
                return 2;
            }
        }
        std::ostream& csv = out_path.empty() ? out : file;
        const auto records = bench::run_bench(cfg);
        csv << bench::kCsvHeader << '\n';
        for (const auto& r : records) {
            bench::write_csv_row(csv, r);
        }
        detail::print_summary(err, records);
        return 0;
    } catch (const ShapeError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace tsvd::cli
