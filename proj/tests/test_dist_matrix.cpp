#include "test_support.hpp"

#include "tsvd/dist_matrix.hpp"
#include "tsvd/matrix_io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace tsvd;
using tsvd::testing::naive_matmul;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("tsvd_" + name + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + ".tskm");
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST(Partition, TenRowsOverFourRanks) {
    std::vector<index_t> counts;
    index_t next = 0;
    for (int r = 0; r < 4; ++r) {
        const auto range = balanced_rows(10, 4, r);
        EXPECT_EQ(range.offset, next);
        next += range.count;
        counts.push_back(range.count);
    }
    EXPECT_EQ(counts, (std::vector<index_t>{3, 3, 2, 2}));
    EXPECT_EQ(next, 10);
}

TEST(Partition, CoversRowsForManyShapes) {
    for (index_t m : {1, 7, 64, 1001}) {
        for (int p = 1; p <= 9; ++p) {
            index_t next = 0;
            for (int r = 0; r < p; ++r) {
                const auto range = balanced_rows(m, p, r);
                EXPECT_EQ(range.offset, next);
                EXPECT_LE(range.count, m / p + 1);
                EXPECT_GE(range.count, m / p);
                next += range.count;
            }
            EXPECT_EQ(next, m);
        }
    }
}

TEST(GenerateRandom, IndependentOfRankCount) {
    const auto serial = run_ranks(1, [](Communicator& comm) {
        return generate_random<double>(comm, 10, 2, Distribution::standard_normal, 42).local();
    }).front();
    EXPECT_EQ(serial.rows(), 10);
    const auto blocks = run_ranks(4, [](Communicator& comm) {
        auto a = generate_random<double>(comm, 10, 2, Distribution::standard_normal, 42);
        EXPECT_EQ(a.global_rows(), 10);
        return gather(a);
    });
    for (const auto& g : blocks) {
        EXPECT_EQ(g, serial); // bitwise
    }
}

TEST(GenerateRandom, FloatMatchesRoundedDouble) {
    const auto d = random_matrix<double>(9, 3, Distribution::standard_normal, 11);
    const auto f = run_ranks(3, [](Communicator& comm) {
        auto a = generate_random<float>(comm, 9, 3, Distribution::standard_normal, 11);
        return gather(a);
    }).front();
    EXPECT_EQ(f, d.cast<float>());
}

TEST(GenerateRandom, UniformEntriesInUnitInterval) {
    Communicator comm = Communicator::solo();
    for (auto dist : {Distribution::uniform01}) {
        const auto a = generate_random<float>(comm, 1000, 20, dist, 3);
        for (float x : a.local().elements()) {
            ASSERT_GE(x, 0.0f);
            ASSERT_LT(x, 1.0f);
        }
    }
}

TEST(GenerateRandom, StandardNormalMoments) {
    Communicator comm = Communicator::solo();
    const auto a = generate_random<double>(comm, 20000, 5, Distribution::standard_normal, 8);
    double sum = 0;
    double sq = 0;
    for (double x : a.local().elements()) {
        sum += x;
        sq += x * x;
    }
    const double count = static_cast<double>(a.local().size());
    EXPECT_NEAR(sum / count, 0.0, 0.02);
    EXPECT_NEAR(sq / count, 1.0, 0.03);
}

TEST(GenerateRandom, RejectsWideShape) {
    Communicator comm = Communicator::solo();
    EXPECT_THROW((void)generate_random<double>(comm, 3, 5, Distribution::standard_normal, 1), ShapeError);
    EXPECT_THROW((void)generate_random<double>(comm, 3, 0, Distribution::standard_normal, 1), ShapeError);
}

TEST(Crossprod, SmallCases) {
    Communicator comm = Communicator::solo();
    auto a = DistMatrix<double>::scatter(comm, DenseMatrix<double>{{1, 2}, {3, 4}, {5, 6}});
    EXPECT_EQ(crossprod(a), (DenseMatrix<double>{{35, 44}, {44, 56}}));

    const auto two = run_ranks(2, [](Communicator& c) {
        const DenseMatrix<double> block = c.rank() == 0 ? DenseMatrix<double>{{1, 0}} : DenseMatrix<double>{{0, 1}};
        auto a = DistMatrix<double>::from_local(c, block);
        return crossprod(a);
    });
    for (const auto& g : two) {
        EXPECT_EQ(g, DenseMatrix<double>::identity(2));
    }

    auto e = DistMatrix<double>::scatter(comm, DenseMatrix<double>(4, 3));
    EXPECT_EQ(crossprod(e), DenseMatrix<double>(3, 3));
}

TEST(Crossprod, SymmetricPsdAndPartitionInvariant) {
    const auto full = random_matrix<double>(97, 7, Distribution::standard_normal, 77);
    const auto oracle = naive_matmul(full, full, true);
    for (int p : {1, 2, 4, 8}) {
        const auto g = run_ranks(p, [&](Communicator& c) {
            auto a = DistMatrix<double>::scatter(c, full);
            return crossprod(a);
        }).front();
        EXPECT_EQ(g, g.transposed());
        EXPECT_LE(max_abs_diff(g, oracle), 1e-12 * max_abs(oracle)) << "p=" << p;
        // x^T G x = |A x|^2 >= 0
        for (std::uint64_t s = 0; s < 10; ++s) {
            const auto x = random_matrix<double>(7, 1, Distribution::standard_normal, 500 + s);
            EXPECT_GE(naive_matmul(x, naive_matmul(g, x), true)(0, 0), 0.0);
        }
    }
}

TEST(FromLocal, OffsetsFollowRankOrder) {
    const auto out = run_ranks(3, [](Communicator& c) {
        auto a = DistMatrix<double>::from_local(c, DenseMatrix<double>(c.rank() + 1, 2, c.rank()));
        return std::pair{a.global_rows(), a.row_offset()};
    });
    EXPECT_EQ(out[0], (std::pair<index_t, index_t>{6, 0}));
    EXPECT_EQ(out[1], (std::pair<index_t, index_t>{6, 1}));
    EXPECT_EQ(out[2], (std::pair<index_t, index_t>{6, 3}));
}

TEST(FromLocal, ColumnDisagreementIsContractViolation) {
    EXPECT_THROW(run_ranks(2, [](Communicator& c) {
                     (void)DistMatrix<double>::from_local(c, DenseMatrix<double>(2, c.rank() + 1));
                 }),
                 ContractError);
}

TEST(MultLocal, Cases) {
    Communicator comm = Communicator::solo();
    auto a = DistMatrix<double>::scatter(comm, DenseMatrix<double>{{1, 2}, {3, 4}, {5, 6}});
    auto y = mult_local(a, DenseMatrix<double>{{1}, {1}});
    EXPECT_EQ(y.local(), (DenseMatrix<double>{{3}, {7}, {11}}));
    EXPECT_EQ(mult_local(a, DenseMatrix<double>::identity(2)).local(), a.local());
    EXPECT_THROW((void)mult_local(a, DenseMatrix<double>(3, 1)), ContractError);
}

TEST(MultLocal, UsesNoCollectivesAndKeepsLayout) {
    run_ranks(3, [](Communicator& c) {
        auto a = generate_random<double>(c, 11, 4, Distribution::standard_normal, 1);
        const auto before = c.collective_count();
        auto y = mult_local(a, DenseMatrix<double>(4, 2, 1.0));
        EXPECT_EQ(c.collective_count(), before);
        EXPECT_TRUE(y.conforms_with(a));
        EXPECT_EQ(y.cols(), 2);
    });
}

TEST(MultTranspose, Cases) {
    Communicator comm = Communicator::solo();
    auto a = DistMatrix<double>::scatter(comm, DenseMatrix<double>{{1, 2}, {3, 4}, {5, 6}});
    auto ones = DistMatrix<double>::scatter(comm, DenseMatrix<double>(3, 1, 1.0));
    EXPECT_EQ(mult_transpose(a, ones), (DenseMatrix<double>{{9}, {12}}));
    EXPECT_EQ(mult_transpose(a, a), crossprod(a));
}

TEST(MultTranspose, MatchesOracleAcrossRanks) {
    const auto a_full = random_matrix<double>(50, 6, Distribution::standard_normal, 2);
    const auto y_full = random_matrix<double>(50, 3, Distribution::uniform01, 3);
    const auto want = naive_matmul(a_full, y_full, true);
    const auto got = run_ranks(4, [&](Communicator& c) {
        auto a = DistMatrix<double>::scatter(c, a_full);
        auto y = DistMatrix<double>::scatter(c, y_full);
        return mult_transpose(a, y);
    });
    for (const auto& g : got) {
        EXPECT_LE(max_abs_diff(g, want), 1e-13 * max_abs(want));
    }
}

TEST(MultTranspose, NonConformingOperandsAreRejected) {
    EXPECT_THROW(run_ranks(2,
                           [](Communicator& c) {
                               auto a = generate_random<double>(c, 6, 2, Distribution::uniform01, 1);
                               auto y = DistMatrix<double>::from_layout(c, DenseMatrix<double>(c.rank() == 0 ? 2 : 4, 1),
                                                                       6, c.rank() == 0 ? 0 : 2);
                               (void)mult_transpose(a, y);
                           }),
                 ContractError);
    Communicator comm = Communicator::solo();
    auto a = generate_random<double>(comm, 6, 2, Distribution::uniform01, 1);
    auto y = generate_random<double>(comm, 7, 2, Distribution::uniform01, 1);
    EXPECT_THROW((void)mult_transpose(a, y), ContractError);
}

TEST(MeanCenter, Cases) {
    Communicator comm = Communicator::solo();
    auto a = DistMatrix<double>::scatter(comm, DenseMatrix<double>{{1, 10}, {3, 20}});
    const auto c = mean_center_columns(a);
    EXPECT_EQ(c.means, (std::vector<double>{2, 15}));
    EXPECT_EQ(c.centered.local(), (DenseMatrix<double>{{-1, -5}, {1, 5}}));

    auto k = DistMatrix<double>::scatter(comm, DenseMatrix<double>(5, 3, 4.0));
    const auto kc = mean_center_columns(k);
    EXPECT_EQ(kc.centered.local(), DenseMatrix<double>(5, 3));
}

TEST(MeanCenter, ColumnSumsVanishAcrossRanks) {
    const auto full = random_matrix<double>(33, 4, Distribution::uniform01, 9);
    const auto sums = run_ranks(4, [&](Communicator& c) {
        auto a = DistMatrix<double>::scatter(c, full);
        auto centered = mean_center_columns(a).centered;
        return allreduce_sum(c, naive_matmul(centered.local(), DenseMatrix<double>(centered.local_rows(), 1, 1.0), true));
    });
    for (const auto& s : sums) {
        EXPECT_LE(max_abs(s), 1e-13);
    }
}

TEST(Gather, ScatterGatherRoundTrip) {
    const auto full = random_matrix<float>(13, 3, Distribution::standard_normal, 4);
    for (int p : {1, 2, 5}) {
        const auto out = run_ranks(p, [&](Communicator& c) {
            auto a = DistMatrix<float>::scatter(c, full);
            EXPECT_EQ(a.local_rows(), balanced_rows(13, p, c.rank()).count);
            return gather(a);
        });
        for (const auto& g : out) {
            EXPECT_EQ(g, full);
        }
    }
}

TEST(MatrixFile, RoundTripAcrossRankCounts) {
    const auto path = temp_file("roundtrip");
    const auto full = random_matrix<double>(23, 4, Distribution::standard_normal, 31);
    run_ranks(3, [&](Communicator& c) {
        auto a = DistMatrix<double>::scatter(c, full);
        write_matrix_file(a, path.string());
    });
    EXPECT_EQ(std::filesystem::file_size(path), 32u + 23u * 4u * 8u);
    for (int p : {1, 2, 4, 7}) {
        const auto back = run_ranks(p, [&](Communicator& c) {
            auto a = read_matrix_file<double>(c, path.string());
            EXPECT_EQ(a.row_offset(), balanced_rows(23, p, c.rank()).offset);
            return gather(a);
        });
        EXPECT_EQ(back.front(), full);
    }
    std::filesystem::remove(path);
}

TEST(MatrixFile, HeaderLayout) {
    const auto path = temp_file("header");
    Communicator comm = Communicator::solo();
    auto a = DistMatrix<float>::scatter(comm, DenseMatrix<float>{{1.0f, -2.0f}, {0.5f, 3.0f}, {4.0f, 8.0f}});
    write_matrix_file(a, path.string());
    const auto bytes = file_bytes(path);
    ASSERT_EQ(bytes.size(), 32u + 6u * 4u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "TSKM");
    const std::vector<unsigned char> head(bytes.begin(), bytes.begin() + 32);
    const std::vector<unsigned char> want{'T', 'S', 'K', 'M', 1, 0, 0, 0, 4, 0, 0, 0, 0, 0, 0, 0,
                                          3,   0,   0,   0,   0, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0};
    EXPECT_EQ(head, want);
    // 1.0f little-endian
    const std::vector<unsigned char> first(bytes.begin() + 32, bytes.begin() + 36);
    EXPECT_EQ(first, (std::vector<unsigned char>{0x00, 0x00, 0x80, 0x3f}));

    const auto h = read_matrix_header(path.string());
    EXPECT_EQ(h.precision, Precision::f32);
    EXPECT_EQ(h.rows, 3);
    EXPECT_EQ(h.cols, 2);
    std::filesystem::remove(path);
}

TEST(MatrixFile, RejectsCorruptFiles) {
    const auto path = temp_file("corrupt");
    Communicator comm = Communicator::solo();
    auto a = DistMatrix<double>::scatter(comm, DenseMatrix<double>(4, 2, 1.0));
    write_matrix_file(a, path.string());

    EXPECT_THROW((void)read_matrix_file<float>(comm, path.string()), FormatError);

    auto bytes = file_bytes(path);
    auto rewrite = [&](const std::vector<char>& b) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(b.data(), static_cast<std::streamsize>(b.size()));
    };
    auto bad = bytes;
    bad[0] = 'X';
    rewrite(bad);
    EXPECT_THROW((void)read_matrix_header(path.string()), FormatError);

    bad = bytes;
    bad[8] = 2;
    rewrite(bad);
    EXPECT_THROW((void)read_matrix_header(path.string()), FormatError);

    bad = bytes;
    bad[4] = 9;
    rewrite(bad);
    EXPECT_THROW((void)read_matrix_header(path.string()), FormatError);

    bad = bytes;
    bad.pop_back();
    rewrite(bad);
    EXPECT_THROW((void)read_matrix_file<double>(comm, path.string()), FormatError);

    rewrite(std::vector<char>(10, 0));
    EXPECT_THROW((void)read_matrix_header(path.string()), FormatError);

    std::filesystem::remove(path);
    EXPECT_THROW((void)read_matrix_header(path.string()), FormatError);
}
