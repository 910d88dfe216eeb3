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

// Column-chunked weight matrix.
//
// A layer's d x L weight matrix is split into horizontal chunks, one per parent
// cluster, whose columns are that parent's children. Each chunk is stored as a
// sorted list of its nonzero rows; each row is a short sparse list of
// (local column, value) pairs. Siblings with overlapping supports therefore
// share one row entry, and everything a (query, chunk) product touches lives
// in one contiguous allocation.

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mscm/flat_index_map.hpp"
#include "mscm/sparse.hpp"
#include "mscm/text_io.hpp"

namespace mscm {

using local_col_t = std::uint16_t;

inline constexpr std::size_t kMaxChunkWidth = std::numeric_limits<local_col_t>::max() + std::size_t{1};

struct ChunkEntry {
    local_col_t col = 0;
    value_t value = 0.0f;

    friend bool operator==(const ChunkEntry&, const ChunkEntry&) = default;
};

class Chunk {
public:
    Chunk() : row_offsets_(1, 0) {}

    Chunk(index_t width, std::vector<index_t> row_ids, std::vector<std::uint32_t> row_offsets,
          std::vector<ChunkEntry> entries)
        : width_(width), row_ids_(std::move(row_ids)), row_offsets_(std::move(row_offsets)),
          entries_(std::move(entries)) {
        if (width_ > kMaxChunkWidth) throw std::invalid_argument("Chunk: width exceeds 16-bit local columns");
        if (row_offsets_.size() != row_ids_.size() + 1 || row_offsets_.front() != 0 ||
            row_offsets_.back() != entries_.size()) {
            throw std::invalid_argument("Chunk: row offsets do not span entries");
        }
        for (std::size_t r = 0; r < row_ids_.size(); ++r) {
            if (r > 0 && row_ids_[r - 1] >= row_ids_[r]) {
                throw std::invalid_argument("Chunk: row ids not strictly ascending");
            }
            if (row_offsets_[r + 1] <= row_offsets_[r]) throw std::invalid_argument("Chunk: empty stored row");
            for (auto k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
                if (entries_[k].col >= width_) throw std::invalid_argument("Chunk: local column out of range");
                if (k > row_offsets_[r] && entries_[k - 1].col >= entries_[k].col) {
                    throw std::invalid_argument("Chunk: local columns not ascending");
                }
            }
        }
    }

    index_t width() const noexcept { return width_; }
    std::size_t nnz_rows() const noexcept { return row_ids_.size(); }
    std::size_t nnz() const noexcept { return entries_.size(); }

    std::span<const index_t> row_ids() const noexcept { return row_ids_; }
    std::span<const ChunkEntry> entries() const noexcept { return entries_; }

    std::span<const ChunkEntry> row(std::size_t pos) const noexcept {
        return std::span<const ChunkEntry>(entries_).subspan(row_offsets_[pos], row_offsets_[pos + 1] - row_offsets_[pos]);
    }

    bool has_hash_index() const noexcept { return hash_.has_value(); }

    void build_hash_index() {
        if (!hash_) hash_.emplace(row_ids_);
    }

    const FlatIndexMap& hash_index() const {
        if (!hash_) throw std::logic_error("Chunk: hash index not built");
        return *hash_;
    }

    /// Row position of `feature` via the hash index, or kInvalidIndex.
    index_t find_row_hashed(index_t feature) const noexcept { return hash_->find(feature); }

    /// Row position of `feature` via binary search, or kInvalidIndex.
    index_t find_row(index_t feature) const noexcept {
        auto it = std::lower_bound(row_ids_.begin(), row_ids_.end(), feature);
        if (it == row_ids_.end() || *it != feature) return kInvalidIndex;
        return static_cast<index_t>(it - row_ids_.begin());
    }

    std::size_t hash_index_bytes() const noexcept { return hash_ ? hash_->memory_bytes() : 0; }

    /// Equality of the stored matrix; the optional hash index is ignored.
    friend bool operator==(const Chunk& a, const Chunk& b) {
        return a.width_ == b.width_ && a.row_ids_ == b.row_ids_ && a.row_offsets_ == b.row_offsets_ &&
               a.entries_ == b.entries_;
    }

private:
    index_t width_ = 0;
    std::vector<index_t> row_ids_;
    std::vector<std::uint32_t> row_offsets_;
    std::vector<ChunkEntry> entries_;
    std::optional<FlatIndexMap> hash_;
};

class ChunkedWeightMatrix {
public:
    ChunkedWeightMatrix() : col_offsets_(1, 0) {}

    ChunkedWeightMatrix(index_t dim, std::vector<Chunk> chunks, std::vector<index_t> col_offsets)
        : dim_(dim), chunks_(std::move(chunks)), col_offsets_(std::move(col_offsets)) {
        if (col_offsets_.size() != chunks_.size() + 1 || col_offsets_.front() != 0) {
            throw std::invalid_argument("ChunkedWeightMatrix: column offsets must have one entry per chunk + 1");
        }
        for (std::size_t i = 0; i < chunks_.size(); ++i) {
            if (col_offsets_[i + 1] <= col_offsets_[i] || col_offsets_[i + 1] - col_offsets_[i] != chunks_[i].width()) {
                throw std::invalid_argument("ChunkedWeightMatrix: column offsets disagree with chunk widths");
            }
            if (!chunks_[i].row_ids().empty() && chunks_[i].row_ids().back() >= dim_) {
                throw std::out_of_range("ChunkedWeightMatrix: chunk row beyond dim");
            }
        }
    }

    index_t dim() const noexcept { return dim_; }
    index_t num_cols() const noexcept { return col_offsets_.back(); }
    std::size_t num_chunks() const noexcept { return chunks_.size(); }
    const Chunk& chunk(std::size_t i) const noexcept { return chunks_[i]; }
    std::span<const Chunk> chunks() const noexcept { return chunks_; }
    std::span<const index_t> col_offsets() const noexcept { return col_offsets_; }

    index_t max_chunk_width() const noexcept {
        index_t w = 0;
        for (const auto& c : chunks_) w = std::max(w, c.width());
        return w;
    }

    /// Chunk containing global column `col`.
    std::size_t chunk_of_column(index_t col) const {
        if (col >= num_cols()) throw std::out_of_range("chunk_of_column: column out of range");
        auto it = std::upper_bound(col_offsets_.begin(), col_offsets_.end(), col);
        return static_cast<std::size_t>(it - col_offsets_.begin()) - 1;
    }

    bool has_hash_index() const noexcept {
        return std::all_of(chunks_.begin(), chunks_.end(), [](const Chunk& c) { return c.has_hash_index(); });
    }

    void build_hash_index() {
        for (auto& c : chunks_) c.build_hash_index();
    }

    std::size_t hash_index_bytes() const noexcept {
        std::size_t bytes = 0;
        for (const auto& c : chunks_) bytes += c.hash_index_bytes();
        return bytes;
    }

    std::size_t nnz() const noexcept {
        std::size_t n = 0;
        for (const auto& c : chunks_) n += c.nnz();
        return n;
    }

    /// Reads the matrix back column by column.
    CscMatrix to_csc() const {
        std::vector<Triplet> t;
        t.reserve(nnz());
        for (std::size_t i = 0; i < chunks_.size(); ++i) {
            const auto& c = chunks_[i];
            for (std::size_t r = 0; r < c.nnz_rows(); ++r) {
                for (const auto& e : c.row(r)) {
                    t.push_back({c.row_ids()[r], col_offsets_[i] + e.col, e.value});
                }
            }
        }
        return CscMatrix::from_triplets(dim_, num_cols(), t);
    }

    friend bool operator==(const ChunkedWeightMatrix&, const ChunkedWeightMatrix&) = default;

private:
    index_t dim_ = 0;
    std::vector<Chunk> chunks_;
    std::vector<index_t> col_offsets_;
};

inline void check_boundaries(std::span<const index_t> boundaries, index_t num_cols) {
    if (boundaries.empty() || boundaries.front() != 0 || boundaries.back() != num_cols) {
        throw std::invalid_argument("chunk boundaries must start at 0 and end at the column count");
    }
    for (std::size_t i = 1; i < boundaries.size(); ++i) {
        if (boundaries[i] <= boundaries[i - 1]) {
            throw std::invalid_argument("chunk boundaries must be strictly increasing");
        }
        if (boundaries[i] - boundaries[i - 1] > kMaxChunkWidth) {
            throw std::invalid_argument("chunk width exceeds 16-bit local column range");
        }
    }
}

/// Regroups the columns of `W` into chunks delimited by `boundaries`.
inline ChunkedWeightMatrix chunk_from_csc(const CscMatrix& W, std::span<const index_t> boundaries) {
    check_boundaries(boundaries, W.cols());
    struct Item {
        index_t row;
        local_col_t col;
        value_t value;
    };
    std::vector<Chunk> chunks;
    chunks.reserve(boundaries.size() - 1);
    std::vector<Item> items;
    for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
        items.clear();
        for (index_t j = boundaries[i]; j < boundaries[i + 1]; ++j) {
            const auto col = W.line_unchecked(j);
            for (std::size_t k = 0; k < col.nnz(); ++k) {
                items.push_back({col.indices[k], static_cast<local_col_t>(j - boundaries[i]), col.values[k]});
            }
        }
        // Columns were visited in ascending order, so a stable sort by row
        // leaves local columns ascending within each row.
        std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.row < b.row; });

        std::vector<index_t> row_ids;
        std::vector<std::uint32_t> row_offsets{0};
        std::vector<ChunkEntry> entries;
        entries.reserve(items.size());
        for (const auto& it : items) {
            if (row_ids.empty() || row_ids.back() != it.row) {
                if (!row_ids.empty()) row_offsets.push_back(static_cast<std::uint32_t>(entries.size()));
                row_ids.push_back(it.row);
            }
            entries.push_back({it.col, it.value});
        }
        if (!row_ids.empty()) row_offsets.push_back(static_cast<std::uint32_t>(entries.size()));
        chunks.emplace_back(boundaries[i + 1] - boundaries[i], std::move(row_ids), std::move(row_offsets),
                            std::move(entries));
    }
    return ChunkedWeightMatrix(W.rows(), std::move(chunks), std::vector<index_t>(boundaries.begin(), boundaries.end()));
}

/// Returns a copy of `M` with every chunk's hash index built.
inline ChunkedWeightMatrix build_hash_index(ChunkedWeightMatrix M) {
    M.build_hash_index();
    return M;
}

struct ChunkStats {
    std::vector<std::size_t> nnz_rows;  ///< per chunk
    /// Mean over non-empty chunks of (sum of column nnz) / (width * nnz rows).
    /// 1 when siblings share one support, 1/width when supports are disjoint.
    double mean_overlap = 1.0;
    std::size_t total_entries = 0;
    std::size_t hash_index_bytes = 0;
};

inline ChunkStats chunk_stats(const ChunkedWeightMatrix& M) {
    ChunkStats s;
    s.nnz_rows.reserve(M.num_chunks());
    double sum = 0.0;
    std::size_t counted = 0;
    for (const auto& c : M.chunks()) {
        s.nnz_rows.push_back(c.nnz_rows());
        s.total_entries += c.nnz();
        if (c.nnz_rows() > 0) {
            sum += static_cast<double>(c.nnz()) / (static_cast<double>(c.width()) * static_cast<double>(c.nnz_rows()));
            ++counted;
        }
    }
    if (counted > 0) s.mean_overlap = sum / static_cast<double>(counted);
    s.hash_index_bytes = M.hash_index_bytes();
    return s;
}

// XMRCHUNKS v1 boundary file:
//   XMRCHUNKS v1 <num_chunks>
//   <offset>        (num_chunks + 1 lines)

inline std::string to_xmrchunks(std::span<const index_t> boundaries) {
    if (boundaries.empty()) throw std::invalid_argument("XMRCHUNKS: boundaries must not be empty");
    std::string out = "XMRCHUNKS v1 ";
    detail::append_uint(out, boundaries.size() - 1);
    out += '\n';
    for (auto b : boundaries) {
        detail::append_uint(out, b);
        out += '\n';
    }
    return out;
}

inline std::vector<index_t> from_xmrchunks(std::string_view text) {
    std::vector<std::string_view> toks;
    std::vector<std::string_view> header;
    {
        const auto nl = text.find('\n');
        header = detail::split_ws(text.substr(0, nl));
        if (nl != std::string_view::npos) {
            for (auto line = text.substr(nl + 1); !line.empty();) {
                const auto e = line.find('\n');
                auto parts = detail::split_ws(line.substr(0, e));
                if (parts.size() > 1) throw FormatError("XMRCHUNKS: more than one offset on a line");
                toks.insert(toks.end(), parts.begin(), parts.end());
                if (e == std::string_view::npos) break;
                line = line.substr(e + 1);
            }
        }
    }
    if (header.size() != 3 || header[0] != "XMRCHUNKS") throw FormatError("XMRCHUNKS: bad header line");
    if (header[1] != "v1") throw FormatError("XMRCHUNKS: unsupported version '" + std::string(header[1]) + "'");
    const auto n = detail::parse_number<std::uint64_t>(header[2], "chunk count");
    if (toks.size() != n + 1) {
        throw FormatError("XMRCHUNKS: expected " + std::to_string(n + 1) + " offsets, found " +
                          std::to_string(toks.size()));
    }
    std::vector<index_t> out;
    out.reserve(toks.size());
    for (auto t : toks) out.push_back(detail::parse_number<index_t>(t, "offset"));
    if (out.front() != 0) throw FormatError("XMRCHUNKS: first offset must be 0");
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i] <= out[i - 1]) throw FormatError("XMRCHUNKS: offsets not strictly increasing");
    }
    return out;
}

}  // namespace mscm
