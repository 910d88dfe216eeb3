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

// Compressed sparse containers (vector, CSR, CSC) and the baseline sparse
// inner product. All containers are immutable after construction.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mscm {

using index_t = std::uint32_t;
using value_t = float;
using offset_t = std::uint64_t;

inline constexpr index_t kInvalidIndex = std::numeric_limits<index_t>::max();

/// Raised when a text file or on-disk model does not match its declared shape.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

/// First position in [first, last) whose value is not less than `key`, found by
/// doubling the probe distance before the final binary search. Cheap when the
/// answer is close to `first`, which is the common case in a merge.
inline const index_t* gallop_lower_bound(const index_t* first, const index_t* last, index_t key) noexcept {
    std::size_t step = 1;
    const index_t* lo = first;
    const index_t* hi = first;
    while (hi < last && *hi < key) {
        lo = hi + 1;
        hi = (static_cast<std::size_t>(last - hi) > step) ? hi + step : last;
        step <<= 1;
    }
    return std::lower_bound(lo, hi, key);
}

}  // namespace detail

/// Non-owning view of a sparse vector. Indices are strictly ascending.
struct SparseVectorView {
    index_t dim = 0;
    std::span<const index_t> indices;
    std::span<const value_t> values;

    std::size_t nnz() const noexcept { return indices.size(); }
    bool empty() const noexcept { return indices.empty(); }
};

/// Owning sparse vector.
class SparseVector {
public:
    SparseVector() = default;

    SparseVector(index_t dim, std::vector<index_t> indices, std::vector<value_t> values)
        : dim_(dim), indices_(std::move(indices)), values_(std::move(values)) {
        if (indices_.size() != values_.size()) {
            throw std::invalid_argument("SparseVector: indices and values differ in length");
        }
        for (std::size_t k = 0; k < indices_.size(); ++k) {
            if (indices_[k] >= dim_) {
                throw std::out_of_range("SparseVector: index " + std::to_string(indices_[k]) +
                                        " out of range for dim " + std::to_string(dim_));
            }
            if (k > 0 && indices_[k - 1] >= indices_[k]) {
                throw std::invalid_argument("SparseVector: indices not strictly ascending");
            }
        }
    }

    /// Builds from unsorted (index, value) pairs. Duplicate indices are summed.
    static SparseVector from_pairs(index_t dim, std::vector<std::pair<index_t, value_t>> pairs) {
        std::stable_sort(pairs.begin(), pairs.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<index_t> idx;
        std::vector<value_t> val;
        for (const auto& [i, v] : pairs) {
            if (!idx.empty() && idx.back() == i) {
                val.back() += v;
            } else {
                idx.push_back(i);
                val.push_back(v);
            }
        }
        return SparseVector(dim, std::move(idx), std::move(val));
    }

    index_t dim() const noexcept { return dim_; }
    std::size_t nnz() const noexcept { return indices_.size(); }
    const std::vector<index_t>& indices() const noexcept { return indices_; }
    const std::vector<value_t>& values() const noexcept { return values_; }

    SparseVectorView view() const noexcept { return {dim_, indices_, values_}; }
    operator SparseVectorView() const noexcept { return view(); }

    friend bool operator==(const SparseVector&, const SparseVector&) = default;

private:
    index_t dim_ = 0;
    std::vector<index_t> indices_;
    std::vector<value_t> values_;
};

/// Sum of products over simultaneous nonzeros, accumulated in ascending
/// coordinate order. The cursor that is behind jumps forward with a lower-bound
/// search, so long runs without collisions are skipped.
inline value_t sparse_dot(SparseVectorView x, SparseVectorView y) {
    if (x.dim != y.dim) {
        throw std::invalid_argument("sparse_dot: dimension mismatch (" + std::to_string(x.dim) + " vs " +
                                    std::to_string(y.dim) + ")");
    }
    value_t z = 0.0f;
    const index_t* xi = x.indices.data();
    const index_t* xe = xi + x.indices.size();
    const index_t* yi = y.indices.data();
    const index_t* ye = yi + y.indices.size();
    while (xi < xe && yi < ye) {
        if (*xi == *yi) {
            z += x.values[xi - x.indices.data()] * y.values[yi - y.indices.data()];
            ++xi;
            ++yi;
        } else if (*xi < *yi) {
            xi = detail::gallop_lower_bound(xi, xe, *yi);
        } else {
            yi = detail::gallop_lower_bound(yi, ye, *xi);
        }
    }
    return z;
}

struct Triplet {
    index_t row = 0;
    index_t col = 0;
    value_t value = 0.0f;

    friend bool operator==(const Triplet&, const Triplet&) = default;
};

enum class MajorAxis { Row, Column };

/// Compressed sparse matrix. With MajorAxis::Row this is CSR (each stored line
/// is a row); with MajorAxis::Column it is CSC (each stored line is a column).
template <MajorAxis Major>
class CompressedMatrix {
public:
    static constexpr MajorAxis major_axis = Major;

    CompressedMatrix() : offsets_(1, 0) {}

    /// Takes ownership of raw compressed arrays and checks every invariant.
    CompressedMatrix(index_t rows, index_t cols, std::vector<offset_t> offsets, std::vector<index_t> minor,
                     std::vector<value_t> values)
        : rows_(rows), cols_(cols), offsets_(std::move(offsets)), minor_(std::move(minor)),
          values_(std::move(values)) {
        check_invariants();
    }

    /// Builds from coordinate triplets in any order; duplicates are summed.
    static CompressedMatrix from_triplets(index_t rows, index_t cols, std::span<const Triplet> triplets) {
        const index_t num_lines = Major == MajorAxis::Row ? rows : cols;
        std::vector<offset_t> offsets(static_cast<std::size_t>(num_lines) + 1, 0);
        for (const auto& t : triplets) {
            if (t.row >= rows || t.col >= cols) {
                throw std::out_of_range("from_triplets: coordinate (" + std::to_string(t.row) + ", " +
                                        std::to_string(t.col) + ") outside " + std::to_string(rows) + "x" +
                                        std::to_string(cols));
            }
            ++offsets[line_of(t) + 1];
        }
        std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());

        // Bucket by major line, keeping input order within a line so that
        // duplicate summation is deterministic.
        std::vector<std::size_t> order(triplets.size());
        {
            std::vector<offset_t> cursor(offsets.begin(), offsets.end() - 1);
            for (std::size_t k = 0; k < triplets.size(); ++k) {
                order[cursor[line_of(triplets[k])]++] = k;
            }
        }

        std::vector<offset_t> out_offsets(offsets.size(), 0);
        std::vector<index_t> minor;
        std::vector<value_t> values;
        minor.reserve(triplets.size());
        values.reserve(triplets.size());
        for (index_t line = 0; line < num_lines; ++line) {
            auto first = order.begin() + static_cast<std::ptrdiff_t>(offsets[line]);
            auto last = order.begin() + static_cast<std::ptrdiff_t>(offsets[line + 1]);
            std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
                return minor_of(triplets[a]) < minor_of(triplets[b]);
            });
            const std::size_t line_begin = minor.size();
            for (auto it = first; it != last; ++it) {
                const auto& t = triplets[*it];
                if (minor.size() > line_begin && minor.back() == minor_of(t)) {
                    values.back() += t.value;
                } else {
                    minor.push_back(minor_of(t));
                    values.push_back(t.value);
                }
            }
            out_offsets[line + 1] = minor.size();
        }
        return CompressedMatrix(rows, cols, std::move(out_offsets), std::move(minor), std::move(values));
    }

    index_t rows() const noexcept { return rows_; }
    index_t cols() const noexcept { return cols_; }
    std::size_t nnz() const noexcept { return values_.size(); }
    index_t num_lines() const noexcept { return Major == MajorAxis::Row ? rows_ : cols_; }
    index_t minor_dim() const noexcept { return Major == MajorAxis::Row ? cols_ : rows_; }

    const std::vector<offset_t>& offsets() const noexcept { return offsets_; }
    const std::vector<index_t>& minor_indices() const noexcept { return minor_; }
    const std::vector<value_t>& values() const noexcept { return values_; }

    /// Zero-copy view of one stored line (a row of CSR, a column of CSC).
    SparseVectorView line(index_t i) const {
        if (i >= num_lines()) {
            throw std::out_of_range("line " + std::to_string(i) + " out of range (" +
                                    std::to_string(num_lines()) + " lines)");
        }
        return line_unchecked(i);
    }

    SparseVectorView line_unchecked(index_t i) const noexcept {
        const auto b = static_cast<std::size_t>(offsets_[i]);
        const auto e = static_cast<std::size_t>(offsets_[i + 1]);
        return {minor_dim(), std::span<const index_t>(minor_).subspan(b, e - b),
                std::span<const value_t>(values_).subspan(b, e - b)};
    }

    std::size_t line_nnz(index_t i) const noexcept {
        return static_cast<std::size_t>(offsets_[i + 1] - offsets_[i]);
    }

    /// Triplets in storage order.
    std::vector<Triplet> to_triplets() const {
        std::vector<Triplet> out;
        out.reserve(nnz());
        for (index_t line = 0; line < num_lines(); ++line) {
            for (auto k = offsets_[line]; k < offsets_[line + 1]; ++k) {
                if constexpr (Major == MajorAxis::Row) {
                    out.push_back({line, minor_[k], values_[k]});
                } else {
                    out.push_back({minor_[k], line, values_[k]});
                }
            }
        }
        return out;
    }

    friend bool operator==(const CompressedMatrix&, const CompressedMatrix&) = default;

private:
    static index_t line_of(const Triplet& t) noexcept { return Major == MajorAxis::Row ? t.row : t.col; }
    static index_t minor_of(const Triplet& t) noexcept { return Major == MajorAxis::Row ? t.col : t.row; }

    void check_invariants() const {
        if (offsets_.size() != static_cast<std::size_t>(num_lines()) + 1) {
            throw std::invalid_argument("compressed matrix: offsets length must be lines + 1");
        }
        if (offsets_.front() != 0 || offsets_.back() != values_.size() || minor_.size() != values_.size()) {
            throw std::invalid_argument("compressed matrix: offsets do not span the stored entries");
        }
        for (index_t line = 0; line < num_lines(); ++line) {
            if (offsets_[line] > offsets_[line + 1]) {
                throw std::invalid_argument("compressed matrix: offsets decrease at line " + std::to_string(line));
            }
            for (auto k = offsets_[line]; k < offsets_[line + 1]; ++k) {
                if (minor_[k] >= minor_dim()) {
                    throw std::out_of_range("compressed matrix: index " + std::to_string(minor_[k]) +
                                            " out of range in line " + std::to_string(line));
                }
                if (k > offsets_[line] && minor_[k - 1] >= minor_[k]) {
                    throw std::invalid_argument("compressed matrix: indices not strictly ascending in line " +
                                                std::to_string(line));
                }
            }
        }
    }

    index_t rows_ = 0;
    index_t cols_ = 0;
    std::vector<offset_t> offsets_;
    std::vector<index_t> minor_;
    std::vector<value_t> values_;
};

using CsrMatrix = CompressedMatrix<MajorAxis::Row>;
using CscMatrix = CompressedMatrix<MajorAxis::Column>;

inline CsrMatrix csr_from_triplets(index_t rows, index_t cols, std::span<const Triplet> triplets) {
    return CsrMatrix::from_triplets(rows, cols, triplets);
}

inline CscMatrix csc_from_triplets(index_t rows, index_t cols, std::span<const Triplet> triplets) {
    return CscMatrix::from_triplets(rows, cols, triplets);
}

inline SparseVectorView csr_row(const CsrMatrix& X, index_t i) { return X.line(i); }

inline SparseVectorView csc_column(const CscMatrix& W, index_t j) { return W.line(j); }

inline CscMatrix to_csc(const CsrMatrix& X) {
    const auto t = X.to_triplets();
    return CscMatrix::from_triplets(X.rows(), X.cols(), t);
}

inline CsrMatrix to_csr(const CscMatrix& W) {
    const auto t = W.to_triplets();
    return CsrMatrix::from_triplets(W.rows(), W.cols(), t);
}

/// Copies rows [begin, end) into a new CSR matrix.
inline CsrMatrix slice_rows(const CsrMatrix& X, index_t begin, index_t end) {
    if (begin > end || end > X.rows()) {
        throw std::out_of_range("slice_rows: bad range");
    }
    const auto first = X.offsets()[begin];
    const auto last = X.offsets()[end];
    std::vector<offset_t> offsets(static_cast<std::size_t>(end - begin) + 1);
    for (index_t i = begin; i <= end; ++i) {
        offsets[i - begin] = X.offsets()[i] - first;
    }
    std::vector<index_t> minor(X.minor_indices().begin() + static_cast<std::ptrdiff_t>(first),
                               X.minor_indices().begin() + static_cast<std::ptrdiff_t>(last));
    std::vector<value_t> values(X.values().begin() + static_cast<std::ptrdiff_t>(first),
                                X.values().begin() + static_cast<std::ptrdiff_t>(last));
    return CsrMatrix(end - begin, X.cols(), std::move(offsets), std::move(minor), std::move(values));
}

}  // namespace mscm
