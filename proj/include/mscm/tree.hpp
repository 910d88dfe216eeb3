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

// Linear XMR tree model and beam-search inference.
//
// Tree level 1 is a single implicit root with score 1 and no weights. Every
// deeper level l has a d x L_l weight matrix whose columns are grouped into
// one chunk per level-(l-1) cluster; the chunk boundaries are the tree
// topology. A label's score is the product of sigmoid(w . x) over the nodes on
// its root path. Inference keeps the best `beam` clusters per query at every
// level and only evaluates children of clusters in the beam.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mscm/chunked.hpp"
#include "mscm/kernels.hpp"
#include "mscm/masked_mul.hpp"
#include "mscm/parallel.hpp"
#include "mscm/sparse.hpp"

namespace mscm {

enum class ActivationKind { Sigmoid };

inline value_t sigmoid(value_t t) noexcept { return 1.0f / (1.0f + std::exp(-t)); }

struct ScoredIndex {
    index_t index = 0;
    value_t score = 0.0f;

    friend bool operator==(const ScoredIndex&, const ScoredIndex&) = default;
};

/// Ranking order: higher score first, ties to the lower index.
inline bool ranks_before(const ScoredIndex& a, const ScoredIndex& b) noexcept {
    return a.score > b.score || (a.score == b.score && a.index < b.index);
}

/// Keeps the `b` best entries of `row` (ties to the lower index) and leaves
/// them sorted by ascending index.
inline void select_top_b_inplace(std::vector<ScoredIndex>& row, std::size_t b) {
    if (b == 0) throw std::invalid_argument("select_top_b: b must be >= 1");
    if (row.size() > b) {
        std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(b) - 1, row.end(), ranks_before);
        row.resize(b);
    }
    std::sort(row.begin(), row.end(), [](const ScoredIndex& x, const ScoredIndex& y) { return x.index < y.index; });
}

inline std::vector<ScoredIndex> select_top_b(std::span<const ScoredIndex> row, std::size_t b) {
    std::vector<ScoredIndex> out(row.begin(), row.end());
    select_top_b_inplace(out, b);
    return out;
}

struct LayerTopology {
    index_t num_clusters = 0;
    std::vector<index_t> parent_offsets;  ///< children of parent p are [offsets[p], offsets[p+1])
    index_t branching = 0;                ///< widest chunk
};

struct Layer {
    CscMatrix csc;                  ///< column form, for per-column baselines
    ChunkedWeightMatrix chunked;    ///< chunked form, for MSCM
    std::optional<ColumnHashIndex> column_hash;

    Layer() = default;
    Layer(CscMatrix w, std::span<const index_t> boundaries) : csc(std::move(w)), chunked(chunk_from_csc(csc, boundaries)) {}

    LayerTopology topology() const {
        const auto off = chunked.col_offsets();
        return {chunked.num_cols(), std::vector<index_t>(off.begin(), off.end()), chunked.max_chunk_width()};
    }
};

class XmrModel {
public:
    XmrModel() = default;

    /// `layers[i]` holds tree level i + 2.
    XmrModel(index_t dim, std::vector<Layer> layers, ActivationKind activation = ActivationKind::Sigmoid)
        : dim_(dim), layers_(std::move(layers)), activation_(activation) {
        validate();
    }

    index_t dim() const noexcept { return dim_; }
    /// Number of tree levels including the root.
    std::size_t depth() const noexcept { return layers_.size() + 1; }
    std::size_t num_layers() const noexcept { return layers_.size(); }
    const Layer& layer(std::size_t i) const noexcept { return layers_[i]; }
    std::span<const Layer> layers() const noexcept { return layers_; }
    ActivationKind activation() const noexcept { return activation_; }

    index_t num_labels() const noexcept { return layers_.empty() ? 1 : layers_.back().csc.cols(); }

    index_t max_layer_width() const noexcept {
        index_t w = 1;
        for (const auto& l : layers_) w = std::max(w, l.csc.cols());
        return w;
    }

    index_t branching_factor() const noexcept {
        index_t b = 1;
        for (const auto& l : layers_) b = std::max(b, l.chunked.max_chunk_width());
        return b;
    }

    /// Builds the indices `method` needs: per-chunk hash tables for MSCM, or
    /// per-column hash tables for the baseline. Call before sharing the model.
    void prepare(IterationMethod method, bool mscm) {
        if (method != IterationMethod::HashLookup) return;
        for (auto& l : layers_) {
            if (mscm) {
                l.chunked.build_hash_index();
            } else if (!l.column_hash) {
                l.column_hash.emplace(l.csc);
            }
        }
    }

    /// Throws std::invalid_argument describing the first broken invariant.
    void validate() const {
        index_t parents = 1;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& l = layers_[i];
            const std::string where = "layer " + std::to_string(i + 2) + ": ";
            if (l.csc.rows() != dim_ || l.chunked.dim() != dim_) {
                throw std::invalid_argument(where + "weight rows do not match model dim");
            }
            if (l.chunked.num_chunks() != parents) {
                throw std::invalid_argument(where + "expected " + std::to_string(parents) + " chunks, found " +
                                            std::to_string(l.chunked.num_chunks()));
            }
            if (l.chunked.num_cols() != l.csc.cols()) {
                throw std::invalid_argument(where + "chunked and column forms disagree on cluster count");
            }
            if (l.chunked.to_csc() != l.csc) {
                throw std::invalid_argument(where + "chunked and column forms hold different weights");
            }
            parents = l.csc.cols();
        }
    }

    /// Structural equality (weights, topology, activation); built indices are ignored.
    friend bool operator==(const XmrModel& a, const XmrModel& b) {
        if (a.dim_ != b.dim_ || a.activation_ != b.activation_ || a.layers_.size() != b.layers_.size()) return false;
        for (std::size_t i = 0; i < a.layers_.size(); ++i) {
            if (!(a.layers_[i].csc == b.layers_[i].csc) || !(a.layers_[i].chunked == b.layers_[i].chunked)) {
                return false;
            }
        }
        return true;
    }

private:
    index_t dim_ = 0;
    std::vector<Layer> layers_;
    ActivationKind activation_ = ActivationKind::Sigmoid;
};

/// Per-query beams, stored CSR-style, each row ascending by cluster index.
struct BeamState {
    std::size_t beam = 0;
    std::vector<offset_t> offsets{0};
    std::vector<ScoredIndex> entries;

    index_t num_queries() const noexcept { return static_cast<index_t>(offsets.size() - 1); }
    std::span<const ScoredIndex> row(index_t q) const noexcept {
        return std::span<const ScoredIndex>(entries).subspan(offsets[q], offsets[q + 1] - offsets[q]);
    }

    static BeamState root(index_t n, std::size_t beam) {
        BeamState s;
        s.beam = beam;
        s.offsets.resize(static_cast<std::size_t>(n) + 1);
        for (index_t q = 0; q <= n; ++q) s.offsets[q] = q;
        s.entries.assign(n, ScoredIndex{0, 1.0f});
        return s;
    }

    /// Mask for the next level: the children of each beamed cluster.
    BlockMask to_mask(index_t num_parents) const {
        std::vector<index_t> chunks;
        chunks.reserve(entries.size());
        for (const auto& e : entries) chunks.push_back(e.index);
        return BlockMask(num_parents, offsets, std::move(chunks));
    }
};

struct Prediction {
    index_t label = 0;
    value_t score = 0.0f;

    friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// Top-k labels per query, best first.
struct PredictionSet {
    std::vector<offset_t> offsets{0};
    std::vector<Prediction> entries;

    index_t num_queries() const noexcept { return static_cast<index_t>(offsets.size() - 1); }
    std::span<const Prediction> query(index_t q) const noexcept {
        return std::span<const Prediction>(entries).subspan(offsets[q], offsets[q + 1] - offsets[q]);
    }

    void append(const PredictionSet& other) {
        const offset_t base = entries.size();
        entries.insert(entries.end(), other.entries.begin(), other.entries.end());
        for (std::size_t q = 1; q < other.offsets.size(); ++q) offsets.push_back(base + other.offsets[q]);
    }

    friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

struct InferenceOptions {
    std::size_t beam = 10;
    std::size_t topk = 10;
    IterationMethod method = IterationMethod::HashLookup;
    bool mscm = true;
    std::size_t workers = 1;
    ScheduleOrder order = ScheduleOrder::ChunkMajor;
    KernelCounters* counters = nullptr;
};

/// Reusable buffers across infer() calls (online serving loops).
struct InferenceWorkspace {
    MaskedMulWorkspace masked;
};

namespace detail {

inline void check_infer_args(const XmrModel& model, const CsrMatrix& X, const InferenceOptions& opt) {
    if (X.cols() != model.dim()) {
        throw std::invalid_argument("infer: query dim " + std::to_string(X.cols()) + " != model dim " +
                                    std::to_string(model.dim()));
    }
    if (opt.topk == 0 || opt.beam == 0) throw std::invalid_argument("infer: beam and topk must be >= 1");
    if (opt.topk > opt.beam) throw std::invalid_argument("infer: topk must not exceed beam");
    if (opt.workers == 0) throw std::invalid_argument("infer: workers must be >= 1");
    if (opt.method == IterationMethod::HashLookup) {
        for (const auto& l : model.layers()) {
            if (opt.mscm ? !l.chunked.has_hash_index() : !l.column_hash) {
                throw std::invalid_argument("infer: hash indices missing; call XmrModel::prepare(method, mscm)");
            }
        }
    }
}

}  // namespace detail

/// Layer-wise beam search. Results are independent of `mscm`, `method` and
/// `workers`, bit for bit.
inline PredictionSet infer(const XmrModel& model, const CsrMatrix& X, const InferenceOptions& opt,
                           InferenceWorkspace* workspace = nullptr) {
    detail::check_infer_args(model, X, opt);
    const index_t n = X.rows();
    InferenceWorkspace local;
    InferenceWorkspace& ws = workspace ? *workspace : local;
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(opt.workers, n));

    BeamState beam = BeamState::root(n, opt.beam);
    index_t parents = 1;
    std::vector<ScoredIndex> next(static_cast<std::size_t>(n) * opt.beam);
    std::vector<std::size_t> next_count(n);

    for (const auto& layer : model.layers()) {
        const BlockMask mask = beam.to_mask(parents);
        ActivationMatrix A;
        if (opt.mscm) {
            MaskedMulOptions mo;
            mo.method = opt.method;
            mo.workers = opt.workers;
            mo.order = opt.order;
            mo.counters = opt.counters;
            mo.workspace = &ws.masked;
            A = masked_multiply_mscm(mask, X, layer.chunked, mo);
        } else {
            BaselineOptions bo;
            bo.method = opt.method;
            bo.workers = opt.workers;
            bo.hash = layer.column_hash ? &*layer.column_hash : nullptr;
            bo.counters = opt.counters;
            bo.workspace = &ws.masked;
            A = masked_multiply_baseline(mask, X, layer.csc, layer.chunked.col_offsets(), bo);
        }

        // Activation, combination with the parent score, and beam selection;
        // independent per query.
        const auto split = detail::even_split(n, workers);
        detail::run_workers(workers, [&](std::size_t w) {
            std::vector<ScoredIndex> cand;
            for (index_t q = static_cast<index_t>(split[w]); q < split[w + 1]; ++q) {
                cand.clear();
                const auto parents_row = beam.row(q);
                const auto base = mask.offsets()[q];
                for (std::size_t k = 0; k < parents_row.size(); ++k) {
                    const value_t parent_score = parents_row[k].score;
                    const auto vals = A.block_values(base + k);
                    const index_t first_col = layer.chunked.col_offsets()[parents_row[k].index];
                    for (std::size_t c = 0; c < vals.size(); ++c) {
                        cand.push_back({static_cast<index_t>(first_col + c), sigmoid(vals[c]) * parent_score});
                    }
                }
                select_top_b_inplace(cand, opt.beam);
                std::copy(cand.begin(), cand.end(), next.begin() + static_cast<std::ptrdiff_t>(q * opt.beam));
                next_count[q] = cand.size();
            }
        });

        BeamState nb;
        nb.beam = opt.beam;
        nb.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
        for (index_t q = 0; q < n; ++q) nb.offsets[q + 1] = nb.offsets[q] + next_count[q];
        nb.entries.resize(nb.offsets.back());
        for (index_t q = 0; q < n; ++q) {
            std::copy_n(next.begin() + static_cast<std::ptrdiff_t>(q * opt.beam), next_count[q],
                        nb.entries.begin() + static_cast<std::ptrdiff_t>(nb.offsets[q]));
        }
        beam = std::move(nb);
        parents = layer.chunked.num_cols();
    }

    PredictionSet out;
    out.offsets.reserve(static_cast<std::size_t>(n) + 1);
    std::vector<ScoredIndex> row;
    for (index_t q = 0; q < n; ++q) {
        const auto b = beam.row(q);
        row.assign(b.begin(), b.end());
        std::sort(row.begin(), row.end(), ranks_before);
        const std::size_t k = std::min(opt.topk, row.size());
        for (std::size_t i = 0; i < k; ++i) out.entries.push_back({row[i].index, row[i].score});
        out.offsets.push_back(out.entries.size());
    }
    return out;
}

/// Serves queries one at a time, as an online endpoint would.
inline PredictionSet infer_online(const XmrModel& model, const CsrMatrix& X, const InferenceOptions& opt,
                                  InferenceWorkspace* workspace = nullptr) {
    InferenceWorkspace local;
    InferenceWorkspace& ws = workspace ? *workspace : local;
    PredictionSet out;
    for (index_t q = 0; q < X.rows(); ++q) out.append(infer(model, slice_rows(X, q, q + 1), opt, &ws));
    return out;
}

/// Score of every label for one query with no beam pruning.
inline std::vector<value_t> exact_inference(const XmrModel& model, SparseVectorView x) {
    if (x.dim != model.dim()) throw std::invalid_argument("exact_inference: dimension mismatch");
    std::vector<value_t> prev{1.0f};
    for (const auto& layer : model.layers()) {
        const auto off = layer.chunked.col_offsets();
        std::vector<value_t> cur(layer.csc.cols());
        for (std::size_t p = 0; p + 1 < off.size(); ++p) {
            for (index_t c = off[p]; c < off[p + 1]; ++c) {
                cur[c] = sigmoid(sparse_dot(x, layer.csc.line_unchecked(c))) * prev[p];
            }
        }
        prev = std::move(cur);
    }
    return prev;
}

/// Top-k of a full score vector under the ranking order.
inline std::vector<Prediction> top_k(std::span<const value_t> scores, std::size_t k) {
    std::vector<ScoredIndex> all(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) all[i] = {static_cast<index_t>(i), scores[i]};
    k = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), ranks_before);
    std::vector<Prediction> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back({all[i].index, all[i].score});
    return out;
}

// ---------------------------------------------------------------------------
// Choosing an iteration method.

struct ModelStats {
    index_t dim = 0;
    std::size_t num_chunks = 0;
    std::size_t total_chunk_rows = 0;
    double avg_chunk_rows = 0.0;
    std::size_t hash_index_bytes = 0;  ///< chunk hash tables, built or estimated
    std::size_t dense_scratch_bytes = 0;  ///< one length-d array
    double avg_query_nnz = 0.0;  ///< 0 when unknown
};

inline ModelStats compute_model_stats(const XmrModel& model, double avg_query_nnz = 0.0) {
    ModelStats s;
    s.dim = model.dim();
    for (const auto& l : model.layers()) {
        for (const auto& c : l.chunked.chunks()) {
            ++s.num_chunks;
            s.total_chunk_rows += c.nnz_rows();
            s.hash_index_bytes += c.has_hash_index() ? c.hash_index_bytes() : FlatIndexMap::estimate_bytes(c.nnz_rows());
        }
    }
    s.avg_chunk_rows = s.num_chunks ? static_cast<double>(s.total_chunk_rows) / static_cast<double>(s.num_chunks) : 0.0;
    s.dense_scratch_bytes = static_cast<std::size_t>(model.dim()) * sizeof(index_t);
    s.avg_query_nnz = avg_query_nnz;
    return s;
}

struct MethodRecommendation {
    IterationMethod method = IterationMethod::BinarySearch;
    bool mscm = true;
    std::string reason;
};

/// Smallest batch for which a dense lookup array pays for its per-chunk load.
inline constexpr std::size_t kDenseLookupMinBatch = 256;

/// Queries count as "much denser" than chunks past this nnz ratio.
inline constexpr double kDenseQueryRatio = 4.0;

/// Order of preference: dense lookup for large batches when a length-d array
/// per worker fits the budget; hash lookup when its tables fit and queries are
/// not much denser than chunks; binary search otherwise. Always chunked.
inline MethodRecommendation recommend_method(const ModelStats& stats, std::size_t batch_size,
                                             std::size_t memory_budget_bytes, std::size_t workers = 1) {
    MethodRecommendation r;
    if (batch_size >= kDenseLookupMinBatch && stats.dense_scratch_bytes * std::max<std::size_t>(1, workers) <= memory_budget_bytes) {
        r.method = IterationMethod::DenseLookup;
        r.reason = "large batch and dense scratch fits the memory budget";
        return r;
    }
    const bool queries_much_denser =
        stats.avg_query_nnz > 0.0 && stats.avg_query_nnz > kDenseQueryRatio * stats.avg_chunk_rows;
    if (stats.hash_index_bytes <= memory_budget_bytes && !queries_much_denser) {
        r.method = IterationMethod::HashLookup;
        r.reason = "chunk hash tables fit the memory budget";
        return r;
    }
    r.method = IterationMethod::BinarySearch;
    r.reason = queries_much_denser ? "queries much denser than chunks" : "hash tables exceed the memory budget";
    return r;
}

}  // namespace mscm
