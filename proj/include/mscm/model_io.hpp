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

// Model persistence, query files, and the synthetic model generator.
//
// A model is a directory:
//
//   meta.txt            XMRMODEL v1 manifest
//   layer_<l>.mat       XMRSPARSE weights of tree level l (CSC; rows = dim)
//   layer_<l>.chunks    XMRCHUNKS boundaries grouping level-l clusters by parent
//
// for l = 2 .. depth. The manifest is line oriented:
//
//   XMRMODEL v1
//   dim <d>
//   depth <D>
//   activation sigmoid
//   branching <B>
//   layer <l> clusters <L_l>            (l = 1 .. D)
//   checksum <l> <fnv1a64 hex>          (of layer_<l>.mat, l = 2 .. D)

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mscm/chunked.hpp"
#include "mscm/sparse.hpp"
#include "mscm/text_io.hpp"
#include "mscm/tree.hpp"

namespace mscm {

struct ModelManifest {
    int version = 1;
    index_t dim = 0;
    std::size_t depth = 1;
    ActivationKind activation = ActivationKind::Sigmoid;
    index_t branching = 1;
    std::vector<index_t> clusters;  ///< clusters[l-1] = L_l, clusters[0] = 1
    std::map<std::size_t, std::uint64_t> checksums;

    friend bool operator==(const ModelManifest&, const ModelManifest&) = default;
};

namespace detail {

inline std::uint64_t fnv1a64(std::string_view data) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

inline std::string layer_mat_name(std::size_t l) { return "layer_" + std::to_string(l) + ".mat"; }
inline std::string layer_chunks_name(std::size_t l) { return "layer_" + std::to_string(l) + ".chunks"; }

}  // namespace detail

inline std::string to_manifest_text(const ModelManifest& m) {
    std::string out = "XMRMODEL v1\n";
    out += "dim " + std::to_string(m.dim) + "\n";
    out += "depth " + std::to_string(m.depth) + "\n";
    out += "activation sigmoid\n";
    out += "branching " + std::to_string(m.branching) + "\n";
    for (std::size_t l = 1; l <= m.clusters.size(); ++l) {
        out += "layer " + std::to_string(l) + " clusters " + std::to_string(m.clusters[l - 1]) + "\n";
    }
    for (const auto& [l, sum] : m.checksums) out += "checksum " + std::to_string(l) + " " + detail::hex64(sum) + "\n";
    return out;
}

inline ModelManifest parse_manifest(std::string_view text) {
    ModelManifest m;
    m.clusters.clear();
    bool seen_header = false, seen_dim = false, seen_depth = false;
    std::map<std::size_t, index_t> layers;
    std::size_t line_no = 0;
    for (std::string_view rest = text; !rest.empty();) {
        const auto nl = rest.find('\n');
        const auto line = rest.substr(0, nl);
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
        ++line_no;
        const auto t = detail::split_ws(line);
        if (t.empty()) continue;
        const std::string where = " (meta.txt line " + std::to_string(line_no) + ")";
        if (!seen_header) {
            if (t.size() != 2 || t[0] != "XMRMODEL") throw FormatError("manifest: missing XMRMODEL header" + where);
            if (t[1] != "v1") throw FormatError("manifest: unsupported version '" + std::string(t[1]) + "'");
            seen_header = true;
        } else if (t[0] == "dim" && t.size() == 2) {
            m.dim = detail::parse_number<index_t>(t[1], "dim");
            seen_dim = true;
        } else if (t[0] == "depth" && t.size() == 2) {
            m.depth = detail::parse_number<std::size_t>(t[1], "depth");
            seen_depth = true;
        } else if (t[0] == "activation" && t.size() == 2) {
            if (t[1] != "sigmoid") throw FormatError("manifest: unsupported activation '" + std::string(t[1]) + "'");
        } else if (t[0] == "branching" && t.size() == 2) {
            m.branching = detail::parse_number<index_t>(t[1], "branching");
        } else if (t[0] == "layer" && t.size() == 4 && t[2] == "clusters") {
            layers[detail::parse_number<std::size_t>(t[1], "layer")] = detail::parse_number<index_t>(t[3], "clusters");
        } else if (t[0] == "checksum" && t.size() == 3) {
            m.checksums[detail::parse_number<std::size_t>(t[1], "layer")] =
                [&] {
                    std::uint64_t v{};
                    auto [p, ec] = std::from_chars(t[2].data(), t[2].data() + t[2].size(), v, 16);
                    if (ec != std::errc() || p != t[2].data() + t[2].size()) throw FormatError("manifest: bad checksum" + where);
                    return v;
                }();
        } else {
            throw FormatError("manifest: unrecognized line '" + std::string(line) + "'" + where);
        }
    }
    if (!seen_header) throw FormatError("manifest: empty");
    if (!seen_dim || !seen_depth) throw FormatError("manifest: dim and depth are required");
    if (m.depth < 1) throw FormatError("manifest: depth must be >= 1");
    if (layers.count(1) && layers[1] != 1) throw FormatError("manifest: layer 1 must have exactly one cluster");
    layers[1] = 1;
    m.clusters.resize(m.depth);
    for (std::size_t l = 1; l <= m.depth; ++l) {
        auto it = layers.find(l);
        if (it == layers.end()) throw FormatError("manifest: missing cluster count for layer " + std::to_string(l));
        m.clusters[l - 1] = it->second;
    }
    if (layers.size() != m.depth) throw FormatError("manifest: layer entries beyond depth");
    return m;
}

inline ModelManifest manifest_of(const XmrModel& model) {
    ModelManifest m;
    m.dim = model.dim();
    m.depth = model.depth();
    m.activation = model.activation();
    m.branching = model.branching_factor();
    m.clusters.push_back(1);
    for (const auto& l : model.layers()) m.clusters.push_back(l.csc.cols());
    return m;
}

inline void save_model(const XmrModel& model, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    ModelManifest m = manifest_of(model);
    for (std::size_t i = 0; i < model.num_layers(); ++i) {
        const std::size_t l = i + 2;
        const auto& layer = model.layer(i);
        const std::string mat = to_xmrsparse(layer.csc);
        m.checksums[l] = detail::fnv1a64(mat);
        detail::write_file((dir / detail::layer_mat_name(l)).string(), mat);
        detail::write_file((dir / detail::layer_chunks_name(l)).string(), to_xmrchunks(layer.chunked.col_offsets()));
    }
    detail::write_file((dir / "meta.txt").string(), to_manifest_text(m));
}

inline XmrModel load_model(const std::filesystem::path& dir) {
    const auto meta_path = dir / "meta.txt";
    if (!std::filesystem::exists(meta_path)) throw FormatError("model: missing " + meta_path.string());
    const ModelManifest m = parse_manifest(detail::read_file(meta_path.string()));
    std::vector<Layer> layers;
    for (std::size_t l = 2; l <= m.depth; ++l) {
        const auto mat_path = dir / detail::layer_mat_name(l);
        const auto chunks_path = dir / detail::layer_chunks_name(l);
        for (const auto& p : {mat_path, chunks_path}) {
            if (!std::filesystem::exists(p)) throw FormatError("model: missing layer file " + p.string());
        }
        const std::string mat = detail::read_file(mat_path.string());
        if (auto it = m.checksums.find(l); it != m.checksums.end() && it->second != detail::fnv1a64(mat)) {
            throw FormatError("model: checksum mismatch for " + mat_path.string());
        }
        CscMatrix W = from_xmrsparse<MajorAxis::Column>(mat);
        const std::string where = "model layer " + std::to_string(l) + ": ";
        if (W.rows() != m.dim) throw FormatError(where + "weight rows " + std::to_string(W.rows()) + " != dim");
        if (W.cols() != m.clusters[l - 1]) {
            throw FormatError(where + "weight columns " + std::to_string(W.cols()) + " != declared clusters " +
                              std::to_string(m.clusters[l - 1]));
        }
        const auto bounds = from_xmrchunks(detail::read_file(chunks_path.string()));
        if (bounds.size() != static_cast<std::size_t>(m.clusters[l - 2]) + 1) {
            throw FormatError(where + "expected " + std::to_string(m.clusters[l - 2]) + " chunks (one per parent)");
        }
        try {
            layers.emplace_back(std::move(W), bounds);
        } catch (const std::invalid_argument& e) {
            throw FormatError(where + e.what());
        }
    }
    try {
        return XmrModel(m.dim, std::move(layers), m.activation);
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("model: ") + e.what());
    }
}

inline void save_queries(const CsrMatrix& X, const std::string& path) { save_xmrsparse(X, path); }
inline CsrMatrix load_queries(const std::string& path) { return load_csr(path); }

// ---------------------------------------------------------------------------
// Synthetic models.

struct GeneratorConfig {
    std::size_t depth = 3;
    index_t branching = 8;
    index_t dim = 1000;
    index_t labels = 64;
    index_t nnz = 10;  ///< nonzeros per weight column
    double overlap = 0.8;  ///< sibling support overlap in [0, 1]
    std::uint64_t seed = 0;
};

namespace detail {

/// Uniform integer in [0, n), portable across standard libraries.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return r % n;
}

/// Uniform float in [-1, 1) with 24 random bits.
inline value_t uniform_weight(std::mt19937_64& rng) {
    return static_cast<value_t>(static_cast<double>(rng() >> 40) * 0x1p-23 - 1.0);
}

/// Uniform float in (0, 1] with 24 random bits.
inline value_t uniform_positive(std::mt19937_64& rng) {
    return static_cast<value_t>(static_cast<double>((rng() >> 40) + 1) * 0x1p-24);
}

/// Moves a uniform random sample of `k` distinct entries of `perm` to its front.
inline void partial_shuffle(std::vector<index_t>& perm, std::size_t k, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + uniform_below(rng, perm.size() - i);
        std::swap(perm[i], perm[j]);
    }
}

}  // namespace detail

/// Cluster counts L_1 .. L_depth for `cfg`, with L_1 = 1 and L_depth = labels.
inline std::vector<index_t> layer_sizes(const GeneratorConfig& cfg) {
    if (cfg.depth < 2) throw std::invalid_argument("generator: depth must be >= 2");
    if (cfg.branching < 1) throw std::invalid_argument("generator: branching must be >= 1");
    if (cfg.labels < cfg.branching) throw std::invalid_argument("generator: labels must be >= branching");
    double capacity = std::pow(static_cast<double>(cfg.branching), static_cast<double>(cfg.depth - 1));
    if (capacity < static_cast<double>(cfg.labels)) {
        throw std::invalid_argument("generator: branching^(depth-1) must be >= labels");
    }
    std::vector<index_t> sizes(cfg.depth);
    sizes[cfg.depth - 1] = cfg.labels;
    for (std::size_t l = cfg.depth - 1; l-- > 1;) {
        sizes[l] = (sizes[l + 1] + cfg.branching - 1) / cfg.branching;
    }
    sizes[0] = 1;
    if (cfg.depth >= 2 && sizes[1] > cfg.branching) throw std::invalid_argument("generator: infeasible tree shape");
    return sizes;
}

/// Deterministic synthetic model.
///
/// Each chunk draws a shared core of ceil(overlap * nnz) features used by all
/// siblings, plus a sibling pool of about nnz / overlap - core features; each
/// column fills its remaining nnz - core entries from a window of that pool.
/// The measured chunk_stats overlap is then close to `overlap` whenever the
/// siblings together cover the pool. overlap = 0 draws the remainder from all
/// features, giving near-disjoint siblings.
inline XmrModel generate_model(const GeneratorConfig& cfg) {
    if (cfg.dim == 0) throw std::invalid_argument("generator: dim must be >= 1");
    if (cfg.nnz > cfg.dim) throw std::invalid_argument("generator: nnz per column exceeds dim");
    if (!(cfg.overlap >= 0.0 && cfg.overlap <= 1.0)) throw std::invalid_argument("generator: overlap must lie in [0, 1]");
    const auto sizes = layer_sizes(cfg);

    std::mt19937_64 rng(cfg.seed);
    std::vector<index_t> perm(cfg.dim);
    std::iota(perm.begin(), perm.end(), index_t{0});

    const index_t nnz = cfg.nnz;
    const index_t core = std::min<index_t>(nnz, static_cast<index_t>(std::ceil(cfg.overlap * nnz - 1e-9)));
    const index_t remainder = nnz - core;
    index_t pool = cfg.dim - core;
    if (cfg.overlap > 0.0) {
        const auto target = static_cast<index_t>(std::llround(static_cast<double>(nnz) / cfg.overlap));
        pool = std::min<index_t>(pool, std::max<index_t>(remainder, target > core ? target - core : 0));
    }

    std::vector<Layer> layers;
    for (std::size_t l = 1; l < cfg.depth; ++l) {
        const index_t parents = sizes[l - 1];
        const index_t children = sizes[l];
        std::vector<index_t> bounds(static_cast<std::size_t>(parents) + 1);
        for (index_t p = 0; p <= parents; ++p) {
            bounds[p] = static_cast<index_t>(static_cast<std::uint64_t>(children) * p / parents);
        }
        std::vector<Triplet> triplets;
        triplets.reserve(static_cast<std::size_t>(children) * nnz);
        std::vector<index_t> support;
        for (index_t p = 0; p < parents; ++p) {
            detail::partial_shuffle(perm, static_cast<std::size_t>(core) + pool, rng);
            for (index_t c = bounds[p]; c < bounds[p + 1]; ++c) {
                support.assign(perm.begin(), perm.begin() + core);
                const std::size_t start = static_cast<std::size_t>(c - bounds[p]) * remainder;
                for (index_t t = 0; t < remainder; ++t) support.push_back(perm[core + (start + t) % pool]);
                std::sort(support.begin(), support.end());
                for (auto f : support) triplets.push_back({f, c, detail::uniform_weight(rng)});
            }
        }
        layers.emplace_back(CscMatrix::from_triplets(cfg.dim, children, triplets), bounds);
    }
    return XmrModel(cfg.dim, std::move(layers));
}

/// n random queries with `nnz` distinct features each and values in (0, 1].
inline CsrMatrix generate_queries(index_t n, index_t dim, index_t nnz, std::uint64_t seed) {
    if (nnz > dim) throw std::invalid_argument("generate_queries: nnz exceeds dim");
    std::mt19937_64 rng(seed);
    std::vector<index_t> perm(dim);
    std::iota(perm.begin(), perm.end(), index_t{0});
    std::vector<offset_t> offsets{0};
    std::vector<index_t> idx;
    std::vector<value_t> val;
    idx.reserve(static_cast<std::size_t>(n) * nnz);
    val.reserve(static_cast<std::size_t>(n) * nnz);
    std::vector<index_t> row;
    for (index_t q = 0; q < n; ++q) {
        detail::partial_shuffle(perm, nnz, rng);
        row.assign(perm.begin(), perm.begin() + nnz);
        std::sort(row.begin(), row.end());
        for (auto f : row) {
            idx.push_back(f);
            val.push_back(detail::uniform_positive(rng));
        }
        offsets.push_back(idx.size());
    }
    return CsrMatrix(n, dim, std::move(offsets), std::move(idx), std::move(val));
}

}  // namespace mscm
