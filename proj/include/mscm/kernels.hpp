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

// Support-intersection kernels.
//
// Every product in this library reduces to walking nz(x) ∩ nz(K) for a sparse
// query x and a sorted key list K (the nonzero rows of a chunk, or the nonzero
// rows of a single CSC column). Four strategies are provided:
//
//   MergeJoin     two cursors advanced one step at a time
//   BinarySearch  two cursors; the one behind jumps forward by lower bound
//   HashLookup    iterate nz(x), probe a hash index over K
//   DenseLookup   iterate nz(x), probe a length-d array preloaded with K
//
// All four emit the same pairs in ascending feature order, so every product
// accumulates in the same order and results are bitwise identical across
// strategies and across the chunked/per-column layouts.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "mscm/chunked.hpp"
#include "mscm/flat_index_map.hpp"
#include "mscm/sparse.hpp"

namespace mscm {

enum class IterationMethod { MergeJoin, BinarySearch, HashLookup, DenseLookup };

inline constexpr std::array<IterationMethod, 4> kAllMethods = {
    IterationMethod::MergeJoin, IterationMethod::BinarySearch, IterationMethod::HashLookup,
    IterationMethod::DenseLookup};

/// Short CLI name: march, bsearch, hash, dense.
inline std::string_view to_string(IterationMethod m) noexcept {
    switch (m) {
        case IterationMethod::MergeJoin: return "march";
        case IterationMethod::BinarySearch: return "bsearch";
        case IterationMethod::HashLookup: return "hash";
        case IterationMethod::DenseLookup: return "dense";
    }
    return "?";
}

inline std::optional<IterationMethod> parse_method(std::string_view s) noexcept {
    for (auto m : kAllMethods) {
        if (s == to_string(m)) return m;
    }
    return std::nullopt;
}

/// Work counters. Kernels instantiated with NoCounters compile the
/// bookkeeping away.
struct KernelCounters {
    std::uint64_t coordinate_visits = 0;  ///< merge-join loop steps
    std::uint64_t hash_probes = 0;
    std::uint64_t dense_probes = 0;
    std::uint64_t emissions = 0;  ///< intersection pairs produced
    std::uint64_t index_loads = 0;  ///< chunk or column switches in a schedule

    KernelCounters& operator+=(const KernelCounters& o) noexcept {
        coordinate_visits += o.coordinate_visits;
        hash_probes += o.hash_probes;
        dense_probes += o.dense_probes;
        emissions += o.emissions;
        index_loads += o.index_loads;
        return *this;
    }
    friend bool operator==(const KernelCounters&, const KernelCounters&) = default;
};

struct NoCounters {};

namespace detail {
template <class C>
inline constexpr bool kCounting = !std::is_same_v<C, NoCounters>;
}

/// Length-d lookup table mapping a feature to its row position in whatever
/// index list is currently loaded. Unloaded slots hold kInvalidIndex, so
/// feature 0 is representable. Clearing costs O(loaded rows), not O(d).
/// One scratch per worker; never shared.
class DenseScratch {
public:
    struct Owner {
        const void* matrix = nullptr;
        std::size_t line = 0;
        friend bool operator==(const Owner&, const Owner&) = default;
    };

    DenseScratch() = default;
    explicit DenseScratch(index_t dim) : slots_(dim, kInvalidIndex) {}

    index_t dim() const noexcept { return static_cast<index_t>(slots_.size()); }

    void load(std::span<const index_t> keys, Owner owner) {
        if (loaded_) {
            if (owner_ == owner) return;
            throw std::logic_error("DenseScratch: load while another index is loaded");
        }
        if (!keys.empty() && keys.back() >= dim()) {
            throw std::invalid_argument("DenseScratch: dimension " + std::to_string(dim()) +
                                        " too small for feature " + std::to_string(keys.back()));
        }
        for (std::size_t i = 0; i < keys.size(); ++i) slots_[keys[i]] = static_cast<index_t>(i);
        touched_ = keys;
        owner_ = owner;
        loaded_ = true;
    }

    void clear() noexcept {
        for (auto k : touched_) slots_[k] = kInvalidIndex;
        touched_ = {};
        loaded_ = false;
        owner_ = {};
    }

    bool loaded() const noexcept { return loaded_; }
    bool loaded_for(Owner owner) const noexcept { return loaded_ && owner_ == owner; }

    index_t lookup(index_t feature) const noexcept { return slots_[feature]; }

    /// Full O(d) scan; for tests and debug assertions.
    bool is_clean() const noexcept {
        if (loaded_) return false;
        for (auto s : slots_) {
            if (s != kInvalidIndex) return false;
        }
        return true;
    }

private:
    std::vector<index_t> slots_;
    std::span<const index_t> touched_;
    Owner owner_{};
    bool loaded_ = false;
};

inline DenseScratch::Owner scratch_owner(const Chunk& K) noexcept { return {&K, 0}; }

inline void load_scratch(const Chunk& K, DenseScratch& scratch) { scratch.load(K.row_ids(), scratch_owner(K)); }

inline void clear_scratch(const Chunk& K, DenseScratch& scratch) {
    if (scratch.loaded_for(scratch_owner(K))) scratch.clear();
}

/// Calls emit(x_position, key_position) for every feature in nz(x) ∩ keys, in
/// ascending feature order. HashLookup needs `hash` built over `keys`;
/// DenseLookup needs `scratch` loaded with `keys`.
template <class Counters = NoCounters, class Emit>
inline void intersect_sorted(SparseVectorView x, std::span<const index_t> keys, IterationMethod method,
                             const FlatIndexMap* hash, const DenseScratch* scratch, Emit&& emit,
                             [[maybe_unused]] Counters* counters = nullptr) {
    const index_t* xb = x.indices.data();
    const index_t* xe = xb + x.indices.size();
    const index_t* kb = keys.data();
    const index_t* ke = kb + keys.size();
    switch (method) {
        case IterationMethod::MergeJoin: {
            const index_t* xi = xb;
            const index_t* ki = kb;
            while (xi < xe && ki < ke) {
                if constexpr (detail::kCounting<Counters>) ++counters->coordinate_visits;
                if (*xi == *ki) {
                    if constexpr (detail::kCounting<Counters>) ++counters->emissions;
                    emit(static_cast<std::size_t>(xi - xb), static_cast<index_t>(ki - kb));
                    ++xi;
                    ++ki;
                } else if (*xi < *ki) {
                    ++xi;
                } else {
                    ++ki;
                }
            }
            break;
        }
        case IterationMethod::BinarySearch: {
            const index_t* xi = xb;
            const index_t* ki = kb;
            while (xi < xe && ki < ke) {
                if constexpr (detail::kCounting<Counters>) ++counters->coordinate_visits;
                if (*xi == *ki) {
                    if constexpr (detail::kCounting<Counters>) ++counters->emissions;
                    emit(static_cast<std::size_t>(xi - xb), static_cast<index_t>(ki - kb));
                    ++xi;
                    ++ki;
                } else if (*xi < *ki) {
                    xi = detail::gallop_lower_bound(xi, xe, *ki);
                } else {
                    ki = detail::gallop_lower_bound(ki, ke, *xi);
                }
            }
            break;
        }
        case IterationMethod::HashLookup: {
            if (hash == nullptr) throw std::invalid_argument("HashLookup requires a hash index");
            for (const index_t* xi = xb; xi < xe; ++xi) {
                if constexpr (detail::kCounting<Counters>) ++counters->hash_probes;
                const index_t pos = hash->find(*xi);
                if (pos != kInvalidIndex) {
                    if constexpr (detail::kCounting<Counters>) ++counters->emissions;
                    emit(static_cast<std::size_t>(xi - xb), pos);
                }
            }
            break;
        }
        case IterationMethod::DenseLookup: {
            if (scratch == nullptr || !scratch->loaded()) {
                throw std::invalid_argument("DenseLookup requires a loaded DenseScratch");
            }
            if (x.dim > scratch->dim()) throw std::invalid_argument("DenseLookup: scratch smaller than query dim");
            for (const index_t* xi = xb; xi < xe; ++xi) {
                if constexpr (detail::kCounting<Counters>) ++counters->dense_probes;
                const index_t pos = scratch->lookup(*xi);
                if (pos != kInvalidIndex) {
                    if constexpr (detail::kCounting<Counters>) ++counters->emissions;
                    emit(static_cast<std::size_t>(xi - xb), pos);
                }
            }
            break;
        }
    }
}

struct Intersection {
    index_t feature = 0;
    value_t x_value = 0.0f;
    index_t row = 0;  ///< position in the chunk's nonzero-row list

    friend bool operator==(const Intersection&, const Intersection&) = default;
};

inline void check_method_ready(const Chunk& K, IterationMethod method, const DenseScratch* scratch) {
    if (method == IterationMethod::HashLookup && !K.has_hash_index()) {
        throw std::invalid_argument("HashLookup requires the chunk hash index (build_hash_index)");
    }
    if (method == IterationMethod::DenseLookup && (scratch == nullptr || !scratch->loaded_for(scratch_owner(K)))) {
        throw std::invalid_argument("DenseLookup requires scratch loaded for this chunk (load_scratch)");
    }
}

/// Materialized intersection stream of x with the nonzero rows of K.
template <class Counters = NoCounters>
std::vector<Intersection> intersect_iter(SparseVectorView x, const Chunk& K, IterationMethod method,
                                         const DenseScratch* scratch = nullptr, Counters* counters = nullptr) {
    check_method_ready(K, method, scratch);
    std::vector<Intersection> out;
    intersect_sorted<Counters>(
        x, K.row_ids(), method, K.has_hash_index() ? &K.hash_index() : nullptr, scratch,
        [&](std::size_t xp, index_t row) { out.push_back({x.indices[xp], x.values[xp], row}); }, counters);
    return out;
}

/// z = x K for one chunk. `out` must hold at least K.width() values and is
/// overwritten.
template <class Counters = NoCounters>
void vector_chunk_product(SparseVectorView x, const Chunk& K, IterationMethod method, const DenseScratch* scratch,
                          std::span<value_t> out, Counters* counters = nullptr) {
    check_method_ready(K, method, scratch);
    if (out.size() < K.width()) throw std::invalid_argument("vector_chunk_product: output too small");
    std::fill_n(out.begin(), K.width(), 0.0f);
    const FlatIndexMap* hash = method == IterationMethod::HashLookup ? &K.hash_index() : nullptr;
    value_t* z = out.data();
    intersect_sorted<Counters>(
        x, K.row_ids(), method, hash, scratch,
        [&](std::size_t xp, index_t row) {
            const value_t xv = x.values[xp];
            for (const auto& e : K.row(row)) z[e.col] += xv * e.value;
        },
        counters);
}

template <class Counters = NoCounters>
std::vector<value_t> vector_chunk_product(SparseVectorView x, const Chunk& K, IterationMethod method,
                                          const DenseScratch* scratch = nullptr, Counters* counters = nullptr) {
    std::vector<value_t> z(K.width());
    vector_chunk_product<Counters>(x, K, method, scratch, std::span<value_t>(z), counters);
    return z;
}

/// Per-column hash indices over a CSC matrix, as used by per-column baselines.
/// One table per column, so the overhead grows with the column count.
class ColumnHashIndex {
public:
    ColumnHashIndex() = default;
    explicit ColumnHashIndex(const CscMatrix& W) {
        maps_.reserve(W.cols());
        for (index_t j = 0; j < W.cols(); ++j) maps_.emplace_back(W.line_unchecked(j).indices);
    }

    const FlatIndexMap& column(index_t j) const noexcept { return maps_[j]; }
    std::size_t num_cols() const noexcept { return maps_.size(); }

    std::size_t memory_bytes() const noexcept {
        std::size_t b = 0;
        for (const auto& m : maps_) b += m.memory_bytes();
        return b;
    }

private:
    std::vector<FlatIndexMap> maps_;
};

inline DenseScratch::Owner scratch_owner(const CscMatrix& W, index_t col) noexcept { return {&W, col}; }

inline void load_scratch(const CscMatrix& W, index_t col, DenseScratch& scratch) {
    scratch.load(W.line(col).indices, scratch_owner(W, col));
}

/// x · W[:, col] with the chosen strategy applied to this one column.
/// HashLookup needs `hash`; DenseLookup needs `scratch` loaded for this column.
template <class Counters = NoCounters>
value_t baseline_column_dot(SparseVectorView x, const CscMatrix& W, index_t col, IterationMethod method,
                            const ColumnHashIndex* hash = nullptr, const DenseScratch* scratch = nullptr,
                            Counters* counters = nullptr) {
    if (x.dim != W.rows()) throw std::invalid_argument("baseline_column_dot: dimension mismatch");
    const auto w = W.line(col);
    if (method == IterationMethod::HashLookup && (hash == nullptr || hash->num_cols() != W.cols())) {
        throw std::invalid_argument("HashLookup baseline requires a ColumnHashIndex for this matrix");
    }
    if (method == IterationMethod::DenseLookup &&
        (scratch == nullptr || !scratch->loaded_for(scratch_owner(W, col)))) {
        throw std::invalid_argument("DenseLookup baseline requires scratch loaded for this column");
    }
    value_t z = 0.0f;
    intersect_sorted<Counters>(
        x, w.indices, method, hash ? &hash->column(col) : nullptr, scratch,
        [&](std::size_t xp, index_t pos) { z += x.values[xp] * w.values[pos]; }, counters);
    return z;
}

}  // namespace mscm
