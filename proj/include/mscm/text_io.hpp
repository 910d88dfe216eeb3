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

// XMRSPARSE v1 text format:
//
//   XMRSPARSE v1 <rows> <cols> <nnz>
//   <nnz_line> <idx>:<val> <idx>:<val> ...     (one line per row for CSR,
//   ...                                         one per column for CSC)
//
// Values are written in shortest round-trip form so a save/load cycle is
// bitwise exact.

#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mscm/sparse.hpp"

namespace mscm {

namespace detail {

inline void append_float(std::string& out, value_t v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

inline void append_uint(std::string& out, std::uint64_t v) {
    char buf[24];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

/// Splits on runs of spaces/tabs.
inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

template <class T>
T parse_number(std::string_view tok, std::string_view what) {
    T v{};
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw FormatError("malformed " + std::string(what) + ": '" + std::string(tok) + "'");
    }
    return v;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path);
    out << content;
    if (!out) throw FormatError("write failed for " + path);
}

}  // namespace detail

template <MajorAxis Major>
std::string to_xmrsparse(const CompressedMatrix<Major>& m) {
    std::string out = "XMRSPARSE v1 ";
    detail::append_uint(out, m.rows());
    out += ' ';
    detail::append_uint(out, m.cols());
    out += ' ';
    detail::append_uint(out, m.nnz());
    out += '\n';
    for (index_t line = 0; line < m.num_lines(); ++line) {
        const auto v = m.line_unchecked(line);
        detail::append_uint(out, v.nnz());
        for (std::size_t k = 0; k < v.nnz(); ++k) {
            out += ' ';
            detail::append_uint(out, v.indices[k]);
            out += ':';
            detail::append_float(out, v.values[k]);
        }
        out += '\n';
    }
    return out;
}

/// Parses an XMRSPARSE document. The template argument picks the line
/// interpretation: rows for CsrMatrix, columns for CscMatrix.
template <MajorAxis Major>
CompressedMatrix<Major> from_xmrsparse(std::string_view text) {
    std::vector<std::string_view> lines;
    {
        std::size_t i = 0;
        while (i <= text.size()) {
            std::size_t j = text.find('\n', i);
            if (j == std::string_view::npos) j = text.size();
            lines.push_back(text.substr(i, j - i));
            i = j + 1;
        }
        while (!lines.empty() && detail::split_ws(lines.back()).empty()) lines.pop_back();
    }
    if (lines.empty()) throw FormatError("XMRSPARSE: empty input");
    const auto header = detail::split_ws(lines[0]);
    if (header.size() != 5 || header[0] != "XMRSPARSE") throw FormatError("XMRSPARSE: bad header line");
    if (header[1] != "v1") throw FormatError("XMRSPARSE: unsupported version '" + std::string(header[1]) + "'");
    const auto rows = detail::parse_number<index_t>(header[2], "row count");
    const auto cols = detail::parse_number<index_t>(header[3], "column count");
    const auto nnz = detail::parse_number<std::uint64_t>(header[4], "nnz");
    const index_t num_lines = Major == MajorAxis::Row ? rows : cols;
    const index_t minor_dim = Major == MajorAxis::Row ? cols : rows;
    if (lines.size() - 1 != num_lines) {
        throw FormatError("XMRSPARSE: expected " + std::to_string(num_lines) + " data lines, found " +
                          std::to_string(lines.size() - 1));
    }

    std::vector<offset_t> offsets(static_cast<std::size_t>(num_lines) + 1, 0);
    std::vector<index_t> minor;
    std::vector<value_t> values;
    minor.reserve(nnz);
    values.reserve(nnz);
    for (index_t line = 0; line < num_lines; ++line) {
        const auto toks = detail::split_ws(lines[line + 1]);
        const std::string where = " on data line " + std::to_string(line + 1);
        if (toks.empty()) throw FormatError("XMRSPARSE: missing entry count" + where);
        const auto count = detail::parse_number<std::uint64_t>(toks[0], "entry count");
        if (toks.size() - 1 != count) {
            throw FormatError("XMRSPARSE: declared " + std::to_string(count) + " entries but found " +
                              std::to_string(toks.size() - 1) + where);
        }
        for (std::size_t k = 1; k < toks.size(); ++k) {
            const auto colon = toks[k].find(':');
            if (colon == std::string_view::npos) throw FormatError("XMRSPARSE: expected idx:val" + where);
            const auto idx = detail::parse_number<index_t>(toks[k].substr(0, colon), "index");
            const auto val = detail::parse_number<value_t>(toks[k].substr(colon + 1), "value");
            if (idx >= minor_dim) {
                throw FormatError("XMRSPARSE: index " + std::to_string(idx) + " >= " +
                                  std::to_string(minor_dim) + where);
            }
            if (k > 1 && minor.back() >= idx) throw FormatError("XMRSPARSE: indices not ascending" + where);
            minor.push_back(idx);
            values.push_back(val);
        }
        offsets[line + 1] = minor.size();
    }
    if (minor.size() != nnz) {
        throw FormatError("XMRSPARSE: header declares " + std::to_string(nnz) + " nonzeros, found " +
                          std::to_string(minor.size()));
    }
    return CompressedMatrix<Major>(rows, cols, std::move(offsets), std::move(minor), std::move(values));
}

template <MajorAxis Major>
void save_xmrsparse(const CompressedMatrix<Major>& m, const std::string& path) {
    detail::write_file(path, to_xmrsparse(m));
}

inline CsrMatrix load_csr(const std::string& path) {
    return from_xmrsparse<MajorAxis::Row>(detail::read_file(path));
}

inline CscMatrix load_csc(const std::string& path) {
    return from_xmrsparse<MajorAxis::Column>(detail::read_file(path));
}

}  // namespace mscm
