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

// Masked products A = M ⊙ (X W) where the mask M is made of all-ones
// (query, chunk) blocks.
//
// masked_multiply_mscm evaluates each active block with one support
// intersection per chunk, visiting blocks in chunk order so a chunk is pulled
// into cache once for every query that needs it. masked_multiply_baseline
// evaluates the same entries one column at a time. Both write into storage
// sized from the mask up front, so workers write disjoint ranges and the
// result does not depend on the worker count.

#pragma once

#include <algorithm>
#include <deque>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mscm/chunked.hpp"
#include "mscm/kernels.hpp"
#include "mscm/parallel.hpp"
#include "mscm/sparse.hpp"

namespace mscm {

/// Per-query ascending lists of active chunk indices, stored CSR-style.
class BlockMask {
public:
    BlockMask() : offsets_(1, 0) {}

    BlockMask(index_t num_chunks, std::vector<offset_t> offsets, std::vector<index_t> chunks)
        : num_chunks_(num_chunks), offsets_(std::move(offsets)), chunks_(std::move(chunks)) {
        if (offsets_.empty() || offsets_.front() != 0 || offsets_.back() != chunks_.size()) {
            throw std::invalid_argument("BlockMask: offsets do not span the block list");
        }
        for (std::size_t q = 0; q + 1 < offsets_.size(); ++q) {
            if (offsets_[q] > offsets_[q + 1]) throw std::invalid_argument("BlockMask: offsets decrease");
            for (auto k = offsets_[q]; k < offsets_[q + 1]; ++k) {
                if (chunks_[k] >= num_chunks_) {
                    throw std::out_of_range("BlockMask: chunk " + std::to_string(chunks_[k]) + " out of range");
                }
                if (k > offsets_[q] && chunks_[k - 1] >= chunks_[k]) {
                    throw std::invalid_argument("BlockMask: chunk indices not strictly ascending for query " +
                                                std::to_string(q));
                }
            }
        }
    }

    static BlockMask from_lists(index_t num_chunks, const std::vector<std::vector<index_t>>& lists) {
        std::vector<offset_t> offsets{0};
        std::vector<index_t> chunks;
        for (const auto& l : lists) {
            chunks.insert(chunks.end(), l.begin(), l.end());
            offsets.push_back(chunks.size());
        }
        return BlockMask(num_chunks, std::move(offsets), std::move(chunks));
    }

    /// Every chunk active for every query.
    static BlockMask full(index_t num_queries, index_t num_chunks) {
        std::vector<offset_t> offsets(static_cast<std::size_t>(num_queries) + 1);
        std::vector<index_t> chunks;
        chunks.reserve(static_cast<std::size_t>(num_queries) * num_chunks);
        for (index_t q = 0; q < num_queries; ++q) {
            for (index_t c = 0; c < num_chunks; ++c) chunks.push_back(c);
            offsets[q + 1] = chunks.size();
        }
        return BlockMask(num_chunks, std::move(offsets), std::move(chunks));
    }

    index_t num_queries() const noexcept { return static_cast<index_t>(offsets_.size() - 1); }
    index_t num_chunks() const noexcept { return num_chunks_; }
    std::size_t num_blocks() const noexcept { return chunks_.size(); }
    std::span<const offset_t> offsets() const noexcept { return offsets_; }
    std::span<const index_t> chunk_list() const noexcept { return chunks_; }

    std::span<const index_t> active(index_t query) const noexcept {
        return std::span<const index_t>(chunks_).subspan(offsets_[query], offsets_[query + 1] - offsets_[query]);
    }

    friend bool operator==(const BlockMask&, const BlockMask&) = default;

private:
    index_t num_chunks_ = 0;
    std::vector<offset_t> offsets_;
    std::vector<index_t> chunks_;
};

/// Raw (pre-activation) scores with the sparsity pattern of the expanded mask.
/// Rows are queries; each active (query, chunk) block occupies a contiguous
/// run of values, and blocks appear in the same order as in the mask.
class ActivationMatrix {
public:
    ActivationMatrix() : row_offsets_(1, 0), block_offsets_(1, 0) {}

    /// Allocates storage for `mask` over chunks delimited by `col_offsets`,
    /// with every value zero.
    static ActivationMatrix allocate(const BlockMask& mask, std::span<const index_t> col_offsets) {
        if (col_offsets.size() != static_cast<std::size_t>(mask.num_chunks()) + 1) {
            throw std::invalid_argument("ActivationMatrix: mask chunk count disagrees with column offsets");
        }
        ActivationMatrix a;
        a.rows_ = mask.num_queries();
        a.cols_ = col_offsets.back();
        a.row_offsets_.assign(static_cast<std::size_t>(a.rows_) + 1, 0);
        a.block_offsets_.assign(mask.num_blocks() + 1, 0);
        const auto chunks = mask.chunk_list();
        for (std::size_t k = 0; k < chunks.size(); ++k) {
            a.block_offsets_[k + 1] = a.block_offsets_[k] + (col_offsets[chunks[k] + 1] - col_offsets[chunks[k]]);
        }
        for (index_t q = 0; q < a.rows_; ++q) a.row_offsets_[q + 1] = a.block_offsets_[mask.offsets()[q + 1]];
        a.col_indices_.resize(a.block_offsets_.back());
        for (std::size_t k = 0; k < chunks.size(); ++k) {
            std::iota(a.col_indices_.begin() + static_cast<std::ptrdiff_t>(a.block_offsets_[k]),
                      a.col_indices_.begin() + static_cast<std::ptrdiff_t>(a.block_offsets_[k + 1]),
                      col_offsets[chunks[k]]);
        }
        a.values_.assign(a.col_indices_.size(), 0.0f);
        return a;
    }

    index_t rows() const noexcept { return rows_; }
    index_t cols() const noexcept { return cols_; }
    std::size_t nnz() const noexcept { return values_.size(); }
    std::size_t num_blocks() const noexcept { return block_offsets_.size() - 1; }

    std::span<const offset_t> row_offsets() const noexcept { return row_offsets_; }
    std::span<const index_t> col_indices() const noexcept { return col_indices_; }
    std::span<const value_t> values() const noexcept { return values_; }

    SparseVectorView row(index_t q) const noexcept {
        const auto b = row_offsets_[q];
        const auto e = row_offsets_[q + 1];
        return {cols_, std::span<const index_t>(col_indices_).subspan(b, e - b),
                std::span<const value_t>(values_).subspan(b, e - b)};
    }

    std::span<value_t> block_values(std::size_t block) noexcept {
        return std::span<value_t>(values_).subspan(block_offsets_[block], block_offsets_[block + 1] - block_offsets_[block]);
    }
    std::span<const value_t> block_values(std::size_t block) const noexcept {
        return std::span<const value_t>(values_).subspan(block_offsets_[block],
                                                         block_offsets_[block + 1] - block_offsets_[block]);
    }
    offset_t block_offset(std::size_t block) const noexcept { return block_offsets_[block]; }

    value_t* mutable_values() noexcept { return values_.data(); }

    friend bool operator==(const ActivationMatrix&, const ActivationMatrix&) = default;

private:
    index_t rows_ = 0;
    index_t cols_ = 0;
    std::vector<offset_t> row_offsets_;
    std::vector<offset_t> block_offsets_;
    std::vector<index_t> col_indices_;
    std::vector<value_t> values_;
};

enum class ScheduleOrder {
    ChunkMajor,  ///< sort active blocks by (chunk, query) when there is more than one query
    QueryMajor,  ///< mask order; used to measure what chunk ordering buys
};

struct BlockRef {
    index_t query = 0;
    index_t chunk = 0;
    std::size_t block = 0;  ///< position in the mask's block list

    friend bool operator==(const BlockRef&, const BlockRef&) = default;
};

/// Active blocks split into contiguous per-worker ranges.
struct BlockPartition {
    std::vector<BlockRef> blocks;
    std::vector<std::size_t> bounds;  ///< workers + 1 entries

    std::size_t workers() const noexcept { return bounds.size() - 1; }
    std::span<const BlockRef> worker(std::size_t w) const noexcept {
        return std::span<const BlockRef>(blocks).subspan(bounds[w], bounds[w + 1] - bounds[w]);
    }
};

/// Lists active blocks (chunk-sorted unless `order` says otherwise or there is
/// a single query) and cuts the list into `workers` contiguous ranges of
/// roughly equal total cost. `block_costs`, indexed by mask block position,
/// defaults to one per block.
inline BlockPartition partition_blocks(const BlockMask& mask, std::size_t workers,
                                       std::span<const std::uint64_t> block_costs = {},
                                       ScheduleOrder order = ScheduleOrder::ChunkMajor) {
    if (workers == 0) throw std::invalid_argument("partition_blocks: workers must be >= 1");
    if (!block_costs.empty() && block_costs.size() != mask.num_blocks()) {
        throw std::invalid_argument("partition_blocks: one cost per block required");
    }
    BlockPartition p;
    p.blocks.reserve(mask.num_blocks());
    for (index_t q = 0; q < mask.num_queries(); ++q) {
        for (auto k = mask.offsets()[q]; k < mask.offsets()[q + 1]; ++k) {
            p.blocks.push_back({q, mask.chunk_list()[k], static_cast<std::size_t>(k)});
        }
    }
    if (order == ScheduleOrder::ChunkMajor && mask.num_queries() > 1) {
        // Stable: queries stay ascending within a chunk.
        std::stable_sort(p.blocks.begin(), p.blocks.end(),
                         [](const BlockRef& a, const BlockRef& b) { return a.chunk < b.chunk; });
    }

    auto cost = [&](const BlockRef& b) -> std::uint64_t { return block_costs.empty() ? 1 : block_costs[b.block]; };
    std::uint64_t total = 0;
    for (const auto& b : p.blocks) total += cost(b);

    // Worker w starts at the first block whose prefix cost reaches w/workers of
    // the total.
    p.bounds.assign(workers + 1, p.blocks.size());
    p.bounds[0] = 0;
    std::size_t w = 1;
    std::uint64_t prefix = 0;
    for (std::size_t i = 0; i <= p.blocks.size() && w < workers; ++i) {
        while (w < workers && prefix * workers >= total * w) p.bounds[w++] = i;
        if (i < p.blocks.size()) prefix += cost(p.blocks[i]);
    }
    return p;
}

/// Reusable per-worker state (dense scratch arrays). References handed out
/// stay valid while more workers are added.
class MaskedMulWorkspace {
public:
    DenseScratch& scratch(std::size_t worker, index_t dim) {
        if (scratch_.size() <= worker) scratch_.resize(worker + 1);
        if (scratch_[worker].dim() < dim) scratch_[worker] = DenseScratch(dim);
        return scratch_[worker];
    }

private:
    std::deque<DenseScratch> scratch_;
};

struct MaskedMulOptions {
    IterationMethod method = IterationMethod::BinarySearch;
    std::size_t workers = 1;
    ScheduleOrder order = ScheduleOrder::ChunkMajor;
    KernelCounters* counters = nullptr;  ///< summed over workers when set
    MaskedMulWorkspace* workspace = nullptr;
};

namespace detail {

inline void check_masked_shapes(const BlockMask& mask, const CsrMatrix& X, index_t dim,
                                std::span<const index_t> col_offsets) {
    if (X.cols() != dim) {
        throw std::invalid_argument("masked multiply: query dim " + std::to_string(X.cols()) +
                                    " != weight dim " + std::to_string(dim));
    }
    if (mask.num_queries() != X.rows()) {
        throw std::invalid_argument("masked multiply: mask has " + std::to_string(mask.num_queries()) +
                                    " queries, X has " + std::to_string(X.rows()));
    }
    if (static_cast<std::size_t>(mask.num_chunks()) + 1 != col_offsets.size()) {
        throw std::invalid_argument("masked multiply: mask chunk count disagrees with weight chunks");
    }
}

template <class Counters>
void mscm_worker(std::span<const BlockRef> blocks, const CsrMatrix& X, const ChunkedWeightMatrix& W,
                 IterationMethod method, DenseScratch* scratch, ActivationMatrix& A, Counters* counters) {
    const Chunk* loaded = nullptr;
    for (const auto& b : blocks) {
        const Chunk& K = W.chunk(b.chunk);
        if (&K != loaded) {
            if constexpr (kCounting<Counters>) ++counters->index_loads;
            if (method == IterationMethod::DenseLookup) {
                scratch->clear();
                load_scratch(K, *scratch);
            }
            loaded = &K;
        }
        vector_chunk_product<Counters>(X.line_unchecked(b.query), K, method, scratch, A.block_values(b.block),
                                       counters);
    }
    if (scratch) scratch->clear();
}

}  // namespace detail

inline ActivationMatrix masked_multiply_mscm(const BlockMask& mask, const CsrMatrix& X, const ChunkedWeightMatrix& W,
                                             const MaskedMulOptions& opt) {
    detail::check_masked_shapes(mask, X, W.dim(), W.col_offsets());
    if (opt.workers == 0) throw std::invalid_argument("masked multiply: workers must be >= 1");
    if (opt.method == IterationMethod::HashLookup && !W.has_hash_index()) {
        throw std::invalid_argument("HashLookup requires the chunk hash index (build_hash_index)");
    }
    ActivationMatrix A = ActivationMatrix::allocate(mask, W.col_offsets());
    if (mask.num_blocks() == 0) return A;

    std::vector<std::uint64_t> costs(mask.num_blocks());
    for (index_t q = 0; q < mask.num_queries(); ++q) {
        const auto nnz_x = X.line_nnz(q);
        for (auto k = mask.offsets()[q]; k < mask.offsets()[q + 1]; ++k) {
            costs[k] = nnz_x + W.chunk(mask.chunk_list()[k]).nnz_rows() + 1;
        }
    }
    const std::size_t workers = std::min<std::size_t>(opt.workers, mask.num_blocks());
    const auto part = partition_blocks(mask, workers, costs, opt.order);

    MaskedMulWorkspace local;
    MaskedMulWorkspace& ws = opt.workspace ? *opt.workspace : local;
    std::vector<DenseScratch*> scratch(workers, nullptr);
    if (opt.method == IterationMethod::DenseLookup) {
        for (std::size_t w = 0; w < workers; ++w) scratch[w] = &ws.scratch(w, W.dim());
    }
    std::vector<KernelCounters> counts(opt.counters ? workers : 0);

    detail::run_workers(workers, [&](std::size_t w) {
        if (opt.counters) {
            detail::mscm_worker<KernelCounters>(part.worker(w), X, W, opt.method, scratch[w], A, &counts[w]);
        } else {
            detail::mscm_worker<NoCounters>(part.worker(w), X, W, opt.method, scratch[w], A, nullptr);
        }
    });
    for (const auto& c : counts) *opt.counters += c;
    return A;
}

inline ActivationMatrix masked_multiply_mscm(const BlockMask& mask, const CsrMatrix& X, const ChunkedWeightMatrix& W,
                                             IterationMethod method, std::size_t workers = 1) {
    MaskedMulOptions opt;
    opt.method = method;
    opt.workers = workers;
    return masked_multiply_mscm(mask, X, W, opt);
}

namespace detail {

struct ColumnRef {
    index_t query;
    index_t col;
    offset_t out;
};

template <class Counters>
void baseline_worker(std::span<const ColumnRef> entries, const CsrMatrix& X, const CscMatrix& W,
                     IterationMethod method, const ColumnHashIndex* hash, DenseScratch* scratch, value_t* out,
                     Counters* counters) {
    index_t loaded = kInvalidIndex;
    for (const auto& e : entries) {
        if (e.col != loaded) {
            if constexpr (kCounting<Counters>) ++counters->index_loads;
            if (method == IterationMethod::DenseLookup) {
                scratch->clear();
                load_scratch(W, e.col, *scratch);
            }
            loaded = e.col;
        }
        out[e.out] = baseline_column_dot<Counters>(X.line_unchecked(e.query), W, e.col, method, hash, scratch,
                                                   counters);
    }
    if (scratch) scratch->clear();
}

}  // namespace detail

struct BaselineOptions {
    IterationMethod method = IterationMethod::BinarySearch;
    std::size_t workers = 1;
    const ColumnHashIndex* hash = nullptr;  ///< required for HashLookup
    KernelCounters* counters = nullptr;
    MaskedMulWorkspace* workspace = nullptr;
};

/// Same product as masked_multiply_mscm, evaluated as one sparse dot product
/// per unmasked entry. `W` is the CSC form of the layer and `col_offsets` the
/// chunk boundaries the mask refers to. Entries are visited query by query;
/// DenseLookup instead visits them column by column so each per-column dense
/// index is loaded once per batch.
inline ActivationMatrix masked_multiply_baseline(const BlockMask& mask, const CsrMatrix& X, const CscMatrix& W,
                                                 std::span<const index_t> col_offsets, const BaselineOptions& opt) {
    detail::check_masked_shapes(mask, X, W.rows(), col_offsets);
    check_boundaries(col_offsets, W.cols());
    if (opt.workers == 0) throw std::invalid_argument("masked multiply: workers must be >= 1");
    if (opt.method == IterationMethod::HashLookup && (opt.hash == nullptr || opt.hash->num_cols() != W.cols())) {
        throw std::invalid_argument("HashLookup baseline requires a ColumnHashIndex for this matrix");
    }
    ActivationMatrix A = ActivationMatrix::allocate(mask, col_offsets);
    if (A.nnz() == 0) return A;

    std::vector<detail::ColumnRef> entries;
    entries.reserve(A.nnz());
    for (index_t q = 0; q < mask.num_queries(); ++q) {
        for (auto k = mask.offsets()[q]; k < mask.offsets()[q + 1]; ++k) {
            const index_t c = mask.chunk_list()[k];
            offset_t out = A.block_offset(k);
            for (index_t j = col_offsets[c]; j < col_offsets[c + 1]; ++j) entries.push_back({q, j, out++});
        }
    }
    if (opt.method == IterationMethod::DenseLookup && mask.num_queries() > 1) {
        std::stable_sort(entries.begin(), entries.end(),
                         [](const detail::ColumnRef& a, const detail::ColumnRef& b) { return a.col < b.col; });
    }

    const std::size_t workers = std::min<std::size_t>(opt.workers, entries.size());
    std::vector<std::size_t> bounds(workers + 1, entries.size());
    {
        std::uint64_t total = 0;
        for (const auto& e : entries) total += X.line_nnz(e.query) + W.line_nnz(e.col) + 1;
        bounds[0] = 0;
        std::size_t w = 1;
        std::uint64_t prefix = 0;
        for (std::size_t i = 0; i <= entries.size() && w < workers; ++i) {
            while (w < workers && prefix * workers >= total * w) bounds[w++] = i;
            if (i < entries.size()) prefix += X.line_nnz(entries[i].query) + W.line_nnz(entries[i].col) + 1;
        }
    }

    MaskedMulWorkspace local;
    MaskedMulWorkspace& ws = opt.workspace ? *opt.workspace : local;
    std::vector<DenseScratch*> scratch(workers, nullptr);
    if (opt.method == IterationMethod::DenseLookup) {
        for (std::size_t w = 0; w < workers; ++w) scratch[w] = &ws.scratch(w, W.rows());
    }
    std::vector<KernelCounters> counts(opt.counters ? workers : 0);
    value_t* out = A.mutable_values();
    detail::run_workers(workers, [&](std::size_t w) {
        std::span<const detail::ColumnRef> mine(entries.data() + bounds[w], bounds[w + 1] - bounds[w]);
        if (opt.counters) {
            detail::baseline_worker<KernelCounters>(mine, X, W, opt.method, opt.hash, scratch[w], out, &counts[w]);
        } else {
            detail::baseline_worker<NoCounters>(mine, X, W, opt.method, opt.hash, scratch[w], out, nullptr);
        }
    });
    for (const auto& c : counts) *opt.counters += c;
    return A;
}

inline ActivationMatrix masked_multiply_baseline(const BlockMask& mask, const CsrMatrix& X, const CscMatrix& W,
                                                 std::span<const index_t> col_offsets, IterationMethod method,
                                                 const ColumnHashIndex* hash = nullptr, std::size_t workers = 1) {
    BaselineOptions opt;
    opt.method = method;
    opt.hash = hash;
    opt.workers = workers;
    return masked_multiply_baseline(mask, X, W, col_offsets, opt);
}

/// Number of times consecutive blocks in a worker's list switch chunks,
/// summed over workers.
inline std::size_t count_chunk_loads(const BlockPartition& p) {
    std::size_t loads = 0;
    for (std::size_t w = 0; w < p.workers(); ++w) {
        index_t prev = kInvalidIndex;
        for (const auto& b : p.worker(w)) {
            if (b.chunk != prev) ++loads;
            prev = b.chunk;
        }
    }
    return loads;
}

}  // namespace mscm
