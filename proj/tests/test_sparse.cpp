// Copyright 2026 The MSCM Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <filesystem>

#include "mscm/mscm.hpp"
#include "oracles.hpp"
#include "random_inputs.hpp"

using namespace mscm;
using testing_util::Rng;

namespace {

std::uint32_t bits(float f) { return std::bit_cast<std::uint32_t>(f); }

std::vector<Triplet> sorted(std::vector<Triplet> t) {
    std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    return t;
}

}  // namespace

TEST(SparseVector, RejectsBrokenInvariants) {
    EXPECT_THROW(SparseVector(5, {1, 2}, {1.0f}), std::invalid_argument);
    EXPECT_THROW(SparseVector(5, {2, 2}, {1.0f, 1.0f}), std::invalid_argument);
    EXPECT_THROW(SparseVector(5, {3, 1}, {1.0f, 1.0f}), std::invalid_argument);
    EXPECT_THROW(SparseVector(5, {5}, {1.0f}), std::out_of_range);
    EXPECT_NO_THROW(SparseVector(5, {0, 4}, {0.0f, 1.0f}));  // explicit zero allowed
}

TEST(SparseVector, FromPairsSortsAndSums) {
    const auto v = SparseVector::from_pairs(10, {{7, 1.0f}, {2, 2.0f}, {7, 0.5f}});
    EXPECT_EQ(v.indices(), (std::vector<index_t>{2, 7}));
    EXPECT_EQ(v.values(), (std::vector<value_t>{2.0f, 1.5f}));
}

TEST(SparseDot, EmptySupport) {
    const SparseVector x(6, {}, {});
    const SparseVector y(6, {3}, {1.0f});
    EXPECT_EQ(sparse_dot(x, y), 0.0f);
}

TEST(SparseDot, SingleCollision) {
    const SparseVector x(6, {0, 2}, {1.0f, 2.0f});
    const SparseVector y(6, {2, 5}, {3.0f, 1.0f});
    EXPECT_EQ(sparse_dot(x, y), 6.0f);
}

TEST(SparseDot, DimensionMismatchThrows) {
    const SparseVector x(6, {0}, {1.0f});
    const SparseVector y(7, {0}, {1.0f});
    EXPECT_THROW(sparse_dot(x, y), std::invalid_argument);
}

TEST(SparseDot, MatchesDenseOracleBitwise) {
    Rng rng(11);
    for (int t = 0; t < 100; ++t) {
        const auto x = testing_util::random_vector(rng, 50, 0.2);
        const auto y = testing_util::random_vector(rng, 50, 0.2);
        EXPECT_EQ(bits(sparse_dot(x, y)), bits(oracle::dense_dot(oracle::densify(x), oracle::densify(y))));
    }
}

TEST(SparseDot, SymmetricBitwise) {
    Rng rng(12);
    for (int t = 0; t < 500; ++t) {
        const auto d = static_cast<index_t>(testing_util::uniform(rng, 1, 400));
        const auto x = testing_util::random_vector(rng, d, 0.02 + 0.5 * (t % 7) / 7.0);
        const auto y = testing_util::random_vector(rng, d, 0.01 + 0.3 * (t % 5) / 5.0);
        EXPECT_EQ(bits(sparse_dot(x, y)), bits(sparse_dot(y, x)));
    }
}

TEST(SparseDot, GallopingSkipsLongGaps) {
    // Supports interleave only at the ends; the result must still be exact.
    std::vector<index_t> xi{0};
    std::vector<value_t> xv{2.0f};
    for (index_t k = 1; k < 1000; ++k) {
        xi.push_back(2 * k);
        xv.push_back(1.0f);
    }
    xi.push_back(5001);
    xv.push_back(3.0f);
    const SparseVector x(6000, xi, xv);
    const SparseVector y(6000, {0, 2001, 5001}, {1.0f, 1.0f, 2.0f});
    EXPECT_EQ(sparse_dot(x, y), 8.0f);
}

TEST(CsrRow, IdentityOnOneRow) {
    const std::vector<Triplet> t{{0, 1, 2.0f}, {0, 4, -1.0f}};
    const auto X = csr_from_triplets(1, 5, t);
    const auto r = csr_row(X, 0);
    EXPECT_EQ(r.dim, 5u);
    EXPECT_EQ(std::vector<index_t>(r.indices.begin(), r.indices.end()), (std::vector<index_t>{1, 4}));
    EXPECT_EQ(std::vector<value_t>(r.values.begin(), r.values.end()), (std::vector<value_t>{2.0f, -1.0f}));
}

TEST(CsrRow, AllZeroMatrixGivesEmptyRows) {
    const auto X = csr_from_triplets(3, 4, {});
    for (index_t i = 0; i < 3; ++i) EXPECT_TRUE(csr_row(X, i).empty());
    EXPECT_THROW(csr_row(X, 3), std::out_of_range);
}

TEST(CsrRow, RandomRoundTripViaTriplets) {
    Rng rng(13);
    for (int t = 0; t < 20; ++t) {
        const auto trip = testing_util::random_triplets(rng, 15, 12, 0.3);
        const auto X = csr_from_triplets(15, 12, trip);
        std::vector<Triplet> back;
        for (index_t i = 0; i < X.rows(); ++i) {
            const auto r = csr_row(X, i);
            for (std::size_t k = 0; k < r.nnz(); ++k) back.push_back({i, r.indices[k], r.values[k]});
        }
        EXPECT_EQ(sorted(back), sorted(trip));
    }
}

TEST(FromTriplets, EmptyIsAllZero) {
    const auto W = csc_from_triplets(4, 3, {});
    EXPECT_EQ(W.nnz(), 0u);
    EXPECT_EQ(oracle::densify(W), oracle::Dense(4, 3));
}

TEST(FromTriplets, DuplicatesSum) {
    const std::vector<Triplet> t{{1, 2, 1.5f}, {0, 0, 1.0f}, {1, 2, 2.0f}};
    const auto W = csc_from_triplets(2, 3, t);
    EXPECT_EQ(W.nnz(), 2u);
    EXPECT_EQ(oracle::densify(W).at(1, 2), 3.5f);
    const auto X = csr_from_triplets(2, 3, t);
    EXPECT_EQ(oracle::densify(X).at(1, 2), 3.5f);
}

TEST(FromTriplets, OutOfRangeThrows) {
    const std::vector<Triplet> t{{2, 0, 1.0f}};
    EXPECT_THROW(csc_from_triplets(2, 3, t), std::out_of_range);
    EXPECT_THROW(csr_from_triplets(2, 3, t), std::out_of_range);
}

TEST(FromTriplets, RandomEqualsDenseConstruction) {
    Rng rng(14);
    for (int t = 0; t < 30; ++t) {
        auto trip = testing_util::random_triplets(rng, 20, 17, 0.25);
        // Add duplicates of some entries.
        const std::size_t n = trip.size();
        for (std::size_t k = 0; k < n; k += 3) trip.push_back({trip[k].row, trip[k].col, testing_util::value(rng)});
        const auto dense = oracle::from_triplets(20, 17, trip);
        EXPECT_EQ(oracle::densify(csc_from_triplets(20, 17, trip)), dense);
        EXPECT_EQ(oracle::densify(csr_from_triplets(20, 17, trip)), dense);
    }
}

TEST(FromTriplets, ExplicitZerosPreserved) {
    const std::vector<Triplet> t{{0, 0, 0.0f}, {1, 1, 1.0f}};
    EXPECT_EQ(csr_from_triplets(2, 2, t).nnz(), 2u);
}

TEST(CompressedMatrix, ConstructorChecksInvariants) {
    EXPECT_THROW(CsrMatrix(2, 3, {0, 1}, {0}, {1.0f}), std::invalid_argument);           // offsets length
    EXPECT_THROW(CsrMatrix(2, 3, {0, 2, 2}, {1, 0}, {1.0f, 1.0f}), std::invalid_argument);  // not ascending
    EXPECT_THROW(CsrMatrix(2, 3, {0, 1, 1}, {3}, {1.0f}), std::out_of_range);             // column range
    EXPECT_NO_THROW(CsrMatrix(2, 3, {0, 1, 1}, {2}, {1.0f}));
}

TEST(Conversion, CsrCscRoundTrip) {
    Rng rng(15);
    for (int t = 0; t < 30; ++t) {
        const auto X = testing_util::random_csr(rng, 13, 21, 0.2);
        const auto W = to_csc(X);
        EXPECT_EQ(sorted(W.to_triplets()), sorted(X.to_triplets()));
        EXPECT_EQ(to_csr(W), X);
    }
}

TEST(SliceRows, KeepsRowsAndShape) {
    Rng rng(16);
    const auto X = testing_util::random_csr(rng, 10, 8, 0.4);
    const auto S = slice_rows(X, 3, 7);
    EXPECT_EQ(S.rows(), 4u);
    EXPECT_EQ(S.cols(), 8u);
    for (index_t i = 0; i < 4; ++i) {
        const auto a = S.line(i);
        const auto b = X.line(i + 3);
        EXPECT_TRUE(std::equal(a.indices.begin(), a.indices.end(), b.indices.begin(), b.indices.end()));
        EXPECT_TRUE(std::equal(a.values.begin(), a.values.end(), b.values.begin(), b.values.end()));
    }
    EXPECT_THROW(slice_rows(X, 5, 11), std::out_of_range);
}

TEST(XmrSparse, RoundTripIsBitwise) {
    Rng rng(17);
    for (int t = 0; t < 20; ++t) {
        const auto X = testing_util::random_csr(rng, 9, 30, 0.3);
        EXPECT_EQ(from_xmrsparse<MajorAxis::Row>(to_xmrsparse(X)), X);
        const auto W = testing_util::random_csc(rng, 30, 9, 0.3);
        EXPECT_EQ(from_xmrsparse<MajorAxis::Column>(to_xmrsparse(W)), W);
    }
}

TEST(XmrSparse, ExtremeFloatsRoundTrip) {
    const std::vector<Triplet> t{{0, 0, 1e-38f}, {0, 1, -3.4e38f}, {0, 2, 0.1f}, {0, 3, -0.0f}, {0, 4, 1.17549435e-38f}};
    const auto X = csr_from_triplets(1, 5, t);
    const auto Y = from_xmrsparse<MajorAxis::Row>(to_xmrsparse(X));
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(bits(X.line(0).values[k]), bits(Y.line(0).values[k]));
}

TEST(XmrSparse, Format) {
    const std::vector<Triplet> t{{0, 1, 0.5f}, {1, 0, 2.0f}, {1, 2, -1.0f}};
    EXPECT_EQ(to_xmrsparse(csr_from_triplets(2, 3, t)), "XMRSPARSE v1 2 3 3\n1 1:0.5\n2 0:2 2:-1\n");
}

TEST(XmrSparse, RejectsMalformedInput) {
    const auto bad = [](std::string_view s) { return [s] { (void)from_xmrsparse<MajorAxis::Row>(s); }; };
    EXPECT_THROW(bad("")(), FormatError);
    EXPECT_THROW(bad("XMRSPARSE v2 1 2 0\n0\n")(), FormatError);
    EXPECT_THROW(bad("XMRSPARSE v1 1 2 1\n1 2:1\n")(), FormatError);          // index >= cols
    EXPECT_THROW(bad("XMRSPARSE v1 1 3 2\n2 1:1 0:1\n")(), FormatError);      // not ascending
    EXPECT_THROW(bad("XMRSPARSE v1 2 3 1\n1 1:1\n")(), FormatError);          // missing line
    EXPECT_THROW(bad("XMRSPARSE v1 1 3 2\n1 1:1\n")(), FormatError);          // nnz mismatch
    EXPECT_THROW(bad("XMRSPARSE v1 1 3 1\n1 1:x\n")(), FormatError);          // bad value
    EXPECT_THROW(bad("XMRSPARSE v1 1 3 1\n2 1:1\n")(), FormatError);          // line count mismatch
    EXPECT_THROW(bad("XMRSPARSE v1 1 3 1\n1 1:1\n0\n")(), FormatError);       // extra line
    EXPECT_NO_THROW(bad("XMRSPARSE v1 0 3 0\n")());
}

TEST(XmrSparse, FileHelpers) {
    const auto dir = std::filesystem::temp_directory_path() / "mscm_test_sparse";
    std::filesystem::create_directories(dir);
    const auto X = csr_from_triplets(2, 4, std::vector<Triplet>{{0, 3, 1.25f}});
    save_xmrsparse(X, (dir / "x.txt").string());
    EXPECT_EQ(load_csr((dir / "x.txt").string()), X);
    EXPECT_THROW(load_csr((dir / "missing.txt").string()), FormatError);
    std::filesystem::remove_all(dir);
}
