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

#include <bit>
#include <set>

#include "mscm/mscm.hpp"
#include "oracles.hpp"
#include "random_inputs.hpp"

using namespace mscm;
using testing_util::Rng;

namespace {

struct Instance {
    CscMatrix W;
    std::vector<index_t> bounds;
    ChunkedWeightMatrix M;
    ColumnHashIndex colhash;
    CsrMatrix X;
    BlockMask mask;
};

BlockMask random_mask(Rng& rng, index_t n, index_t chunks, double p) {
    std::vector<std::vector<index_t>> lists(n);
    for (auto& l : lists) {
        for (index_t c = 0; c < chunks; ++c) {
            if (testing_util::coin(rng, p)) l.push_back(c);
        }
    }
    return BlockMask::from_lists(chunks, lists);
}

Instance random_instance(Rng& rng, index_t max_n = 16, index_t max_d = 200, index_t max_l = 128) {
    const index_t B = std::vector<index_t>{2, 8, 32}[testing_util::uniform(rng, 0, 2)];
    const auto d = static_cast<index_t>(testing_util::uniform(rng, 1, max_d));
    const auto L = static_cast<index_t>(testing_util::uniform(rng, 1, max_l));
    const auto n = static_cast<index_t>(testing_util::uniform(rng, 1, max_n));
    Instance I{testing_util::random_csc(rng, d, L, 0.03 + 0.1 * testing_util::coin(rng, 0.3)), {}, {}, {}, {}, {}};
    I.bounds = testing_util::random_boundaries(rng, L, B);
    I.M = build_hash_index(chunk_from_csc(I.W, I.bounds));
    I.colhash = ColumnHashIndex(I.W);
    I.X = testing_util::random_csr(rng, n, d, 0.05 + 0.2 * testing_util::coin(rng, 0.5));
    I.mask = random_mask(rng, n, static_cast<index_t>(I.M.num_chunks()), testing_util::coin(rng, 0.2) ? 1.0 : 0.4);
    return I;
}

std::vector<std::uint32_t> bits(std::span<const value_t> v) {
    std::vector<std::uint32_t> b;
    for (auto f : v) b.push_back(std::bit_cast<std::uint32_t>(f));
    return b;
}

std::vector<std::uint32_t> oracle_bits(const Instance& I) {
    const auto rows = oracle::masked_product(I.mask, I.X, oracle::densify(I.W), I.bounds);
    std::vector<value_t> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return bits(flat);
}

}  // namespace

TEST(BlockMask, ValidatesLists) {
    EXPECT_THROW(BlockMask::from_lists(3, {{0, 3}}), std::out_of_range);
    EXPECT_THROW(BlockMask::from_lists(3, {{1, 1}}), std::invalid_argument);
    EXPECT_THROW(BlockMask::from_lists(3, {{2, 0}}), std::invalid_argument);
    EXPECT_THROW(BlockMask(3, {0, 2}, {0}), std::invalid_argument);
    const auto m = BlockMask::from_lists(3, {{0, 2}, {}, {1}});
    EXPECT_EQ(m.num_queries(), 3u);
    EXPECT_EQ(m.num_blocks(), 3u);
    EXPECT_EQ(std::vector<index_t>(m.active(0).begin(), m.active(0).end()), (std::vector<index_t>{0, 2}));
    EXPECT_TRUE(m.active(1).empty());
    EXPECT_EQ(BlockMask::full(2, 3).num_blocks(), 6u);
}

TEST(ActivationMatrix, PatternFollowsExpandedMask) {
    const auto m = BlockMask::from_lists(3, {{0, 2}, {}, {1}});
    const std::vector<index_t> off{0, 2, 3, 6};
    const auto A = ActivationMatrix::allocate(m, off);
    EXPECT_EQ(A.rows(), 3u);
    EXPECT_EQ(A.cols(), 6u);
    EXPECT_EQ(A.nnz(), 6u);
    const auto r0 = A.row(0);
    EXPECT_EQ(std::vector<index_t>(r0.indices.begin(), r0.indices.end()), (std::vector<index_t>{0, 1, 3, 4, 5}));
    EXPECT_TRUE(A.row(1).empty());
    const auto r2 = A.row(2);
    EXPECT_EQ(std::vector<index_t>(r2.indices.begin(), r2.indices.end()), (std::vector<index_t>{2}));
    EXPECT_EQ(A.block_values(1).size(), 3u);
    const std::vector<index_t> wrong{0, 2, 6};
    EXPECT_THROW((void)ActivationMatrix::allocate(m, wrong), std::invalid_argument);
}

TEST(MaskedMultiply, EmptyMaskGivesEmptyResult) {
    Rng rng(41);
    auto I = random_instance(rng);
    I.mask = BlockMask::from_lists(static_cast<index_t>(I.M.num_chunks()),
                                   std::vector<std::vector<index_t>>(I.X.rows()));
    for (auto m : kAllMethods) {
        EXPECT_EQ(masked_multiply_mscm(I.mask, I.X, I.M, m).nnz(), 0u);
        EXPECT_EQ(masked_multiply_baseline(I.mask, I.X, I.W, I.bounds, m, &I.colhash).nnz(), 0u);
    }
}

TEST(MaskedMultiply, FullMaskSingleQueryEqualsDenseProduct) {
    Rng rng(42);
    for (int t = 0; t < 30; ++t) {
        auto I = random_instance(rng, 1);
        I.mask = BlockMask::full(1, static_cast<index_t>(I.M.num_chunks()));
        const auto x = oracle::densify(I.X.line(0));
        const auto expect = bits(oracle::dense_vecmat(x, oracle::densify(I.W)));
        for (auto m : kAllMethods) {
            EXPECT_EQ(bits(masked_multiply_mscm(I.mask, I.X, I.M, m).values()), expect);
            EXPECT_EQ(bits(masked_multiply_baseline(I.mask, I.X, I.W, I.bounds, m, &I.colhash).values()), expect);
        }
    }
}

TEST(MaskedMultiply, RandomMasksMatchMaskedDenseOracle) {
    Rng rng(43);
    for (int t = 0; t < 150; ++t) {
        const auto I = random_instance(rng);
        const auto expect = oracle_bits(I);
        for (auto m : kAllMethods) {
            const auto A = masked_multiply_mscm(I.mask, I.X, I.M, m);
            const auto Bm = masked_multiply_baseline(I.mask, I.X, I.W, I.bounds, m, &I.colhash);
            ASSERT_EQ(bits(A.values()), expect) << to_string(m);
            ASSERT_EQ(A, Bm) << to_string(m);
        }
    }
}

TEST(MaskedMultiply, WorkerCountDoesNotChangeOutput) {
    Rng rng(44);
    for (int t = 0; t < 40; ++t) {
        const auto I = random_instance(rng, 40);
        for (auto m : kAllMethods) {
            const auto ref = masked_multiply_mscm(I.mask, I.X, I.M, m, 1);
            for (std::size_t w : {2u, 4u, 8u}) {
                ASSERT_EQ(masked_multiply_mscm(I.mask, I.X, I.M, m, w), ref);
                ASSERT_EQ(masked_multiply_baseline(I.mask, I.X, I.W, I.bounds, m, &I.colhash, w), ref);
            }
        }
    }
}

TEST(MaskedMultiply, QueryMajorOrderGivesSameOutput) {
    Rng rng(45);
    for (int t = 0; t < 20; ++t) {
        const auto I = random_instance(rng, 20);
        for (auto m : kAllMethods) {
            MaskedMulOptions opt;
            opt.method = m;
            opt.order = ScheduleOrder::QueryMajor;
            EXPECT_EQ(masked_multiply_mscm(I.mask, I.X, I.M, opt), masked_multiply_mscm(I.mask, I.X, I.M, m));
        }
    }
}

TEST(MaskedMultiply, DimensionMismatchThrows) {
    Rng rng(46);
    const auto I = random_instance(rng);
    const auto Xbad = testing_util::random_csr(rng, I.X.rows(), I.X.cols() + 1, 0.1);
    EXPECT_THROW((void)masked_multiply_mscm(I.mask, Xbad, I.M, IterationMethod::MergeJoin), std::invalid_argument);
    EXPECT_THROW((void)masked_multiply_baseline(I.mask, Xbad, I.W, I.bounds, IterationMethod::MergeJoin),
                 std::invalid_argument);
    const auto Xrows = testing_util::random_csr(rng, I.X.rows() + 1, I.X.cols(), 0.1);
    EXPECT_THROW((void)masked_multiply_mscm(I.mask, Xrows, I.M, IterationMethod::MergeJoin), std::invalid_argument);
    EXPECT_THROW((void)masked_multiply_mscm(I.mask, I.X, I.M, IterationMethod::MergeJoin, 0), std::invalid_argument);
    EXPECT_THROW((void)masked_multiply_baseline(I.mask, I.X, I.W, I.bounds, IterationMethod::HashLookup, nullptr),
                 std::invalid_argument);
}

TEST(MaskedMultiply, HashWithoutIndexThrows) {
    Rng rng(47);
    const auto I = random_instance(rng);
    const auto plain = chunk_from_csc(I.W, I.bounds);
    if (I.mask.num_blocks() > 0) {
        EXPECT_THROW((void)masked_multiply_mscm(I.mask, I.X, plain, IterationMethod::HashLookup),
                     std::invalid_argument);
    }
}

TEST(MaskedMultiply, WorkspaceReuseAcrossCalls) {
    Rng rng(48);
    MaskedMulWorkspace ws;
    for (int t = 0; t < 20; ++t) {
        const auto I = random_instance(rng);
        MaskedMulOptions opt;
        opt.method = IterationMethod::DenseLookup;
        opt.workers = 1 + t % 3;
        opt.workspace = &ws;
        EXPECT_EQ(bits(masked_multiply_mscm(I.mask, I.X, I.M, opt).values()), oracle_bits(I));
        BaselineOptions bo;
        bo.method = IterationMethod::DenseLookup;
        bo.workers = 1 + t % 3;
        bo.workspace = &ws;
        EXPECT_EQ(bits(masked_multiply_baseline(I.mask, I.X, I.W, I.bounds, bo).values()), oracle_bits(I));
    }
}

TEST(PartitionBlocks, SingleWorkerGetsChunkSortedList) {
    const auto m = BlockMask::from_lists(4, {{0, 2, 3}, {1, 2}, {0, 3}});
    const auto p = partition_blocks(m, 1);
    ASSERT_EQ(p.workers(), 1u);
    std::vector<std::pair<index_t, index_t>> order;
    for (const auto& b : p.worker(0)) order.push_back({b.chunk, b.query});
    const std::vector<std::pair<index_t, index_t>> expect{{0, 0}, {0, 2}, {1, 1}, {2, 0}, {2, 1}, {3, 0}, {3, 2}};
    EXPECT_EQ(order, expect);
}

TEST(PartitionBlocks, SingleQueryKeepsMaskOrder) {
    const auto m = BlockMask::from_lists(5, {{1, 3, 4}});
    const auto p = partition_blocks(m, 1);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) EXPECT_EQ(p.blocks[i].block, i);
}

TEST(PartitionBlocks, ManyWorkersGetAtMostOneBlockEach) {
    const auto m = BlockMask::from_lists(3, {{0, 1}, {2}});
    const auto p = partition_blocks(m, 8);
    EXPECT_EQ(p.workers(), 8u);
    for (std::size_t w = 0; w < 8; ++w) EXPECT_LE(p.worker(w).size(), 1u);
    EXPECT_EQ(p.blocks.size(), 3u);
}

TEST(PartitionBlocks, RandomMasksAreDisjointCovers) {
    Rng rng(49);
    for (int t = 0; t < 200; ++t) {
        const auto n = static_cast<index_t>(testing_util::uniform(rng, 1, 30));
        const auto c = static_cast<index_t>(testing_util::uniform(rng, 1, 20));
        const auto m = random_mask(rng, n, c, 0.3);
        const auto workers = testing_util::uniform(rng, 1, 9);
        std::vector<std::uint64_t> costs(m.num_blocks());
        for (auto& x : costs) x = testing_util::uniform(rng, 1, 50);
        const auto p = partition_blocks(m, workers, costs);
        ASSERT_EQ(p.workers(), workers);
        std::set<std::size_t> seen;
        for (std::size_t w = 0; w < workers; ++w) {
            const auto mine = p.worker(w);
            for (std::size_t i = 0; i < mine.size(); ++i) {
                ASSERT_TRUE(seen.insert(mine[i].block).second);
                if (i > 0 && n > 1) ASSERT_LE(mine[i - 1].chunk, mine[i].chunk);
                ASSERT_EQ(m.chunk_list()[mine[i].block], mine[i].chunk);
                ASSERT_TRUE(mine[i].block >= m.offsets()[mine[i].query] &&
                            mine[i].block < m.offsets()[mine[i].query + 1]);
            }
        }
        ASSERT_EQ(seen.size(), m.num_blocks());
        EXPECT_EQ(partition_blocks(m, workers, costs).blocks, p.blocks);
        EXPECT_EQ(partition_blocks(m, workers, costs).bounds, p.bounds);
    }
}

TEST(PartitionBlocks, RejectsBadArguments) {
    const auto m = BlockMask::from_lists(2, {{0, 1}});
    EXPECT_THROW((void)partition_blocks(m, 0), std::invalid_argument);
    const std::vector<std::uint64_t> costs{1};
    EXPECT_THROW((void)partition_blocks(m, 1, costs), std::invalid_argument);
}

TEST(PartitionBlocks, ChunkOrderNeverLoadsMoreThanQueryOrder) {
    Rng rng(50);
    for (int t = 0; t < 200; ++t) {
        const auto n = static_cast<index_t>(testing_util::uniform(rng, 2, 40));
        const auto c = static_cast<index_t>(testing_util::uniform(rng, 1, 10));
        const auto m = random_mask(rng, n, c, 0.5);
        for (std::size_t workers : {1u, 3u}) {
            const auto sorted = count_chunk_loads(partition_blocks(m, workers, {}, ScheduleOrder::ChunkMajor));
            const auto query = count_chunk_loads(partition_blocks(m, workers, {}, ScheduleOrder::QueryMajor));
            EXPECT_LE(sorted, query);
        }
    }
}

TEST(PartitionBlocks, KernelCountersSeeFewerLoadsUnderChunkOrder) {
    Rng rng(51);
    auto I = random_instance(rng, 16);
    I.X = testing_util::random_csr(rng, 16, I.W.rows(), 0.2);
    I.mask = BlockMask::full(16, static_cast<index_t>(I.M.num_chunks()));
    KernelCounters chunk_major, query_major;
    MaskedMulOptions opt;
    opt.method = IterationMethod::DenseLookup;
    opt.counters = &chunk_major;
    const auto a = masked_multiply_mscm(I.mask, I.X, I.M, opt);
    opt.order = ScheduleOrder::QueryMajor;
    opt.counters = &query_major;
    const auto b = masked_multiply_mscm(I.mask, I.X, I.M, opt);
    EXPECT_EQ(a, b);
    EXPECT_EQ(chunk_major.index_loads, I.M.num_chunks());
    EXPECT_EQ(query_major.index_loads, 16 * I.M.num_chunks() - (I.M.num_chunks() == 1 ? 15 : 0));
}
