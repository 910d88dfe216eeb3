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

#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mscm/sparse.hpp"

namespace mscm {

/// Immutable open-addressing map from a feature index to its position in a
/// sorted key list. Linear probing, load factor <= 1/2, storage proportional
/// to the number of keys.
class FlatIndexMap {
public:
    FlatIndexMap() = default;

    /// Maps keys[i] -> i. Keys must be distinct and not equal to kInvalidIndex.
    explicit FlatIndexMap(std::span<const index_t> keys) {
        if (keys.empty()) return;
        const std::size_t capacity = std::bit_ceil(keys.size() * 2);
        bits_ = static_cast<unsigned>(std::countr_zero(capacity));
        mask_ = capacity - 1;
        slots_.assign(capacity, Slot{kInvalidIndex, kInvalidIndex});
        for (std::size_t i = 0; i < keys.size(); ++i) {
            if (keys[i] == kInvalidIndex) throw std::invalid_argument("FlatIndexMap: reserved key");
            std::size_t h = slot_of(keys[i]);
            while (slots_[h].key != kInvalidIndex) {
                if (slots_[h].key == keys[i]) throw std::invalid_argument("FlatIndexMap: duplicate key");
                h = (h + 1) & mask_;
            }
            slots_[h] = Slot{keys[i], static_cast<index_t>(i)};
        }
        size_ = keys.size();
    }

    /// Position of `key`, or kInvalidIndex when absent.
    index_t find(index_t key) const noexcept {
        if (slots_.empty()) return kInvalidIndex;
        std::size_t h = slot_of(key);
        for (;;) {
            const Slot& s = slots_[h];
            if (s.key == key) return s.pos;
            if (s.key == kInvalidIndex) return kInvalidIndex;
            h = (h + 1) & mask_;
        }
    }

    std::size_t size() const noexcept { return size_; }
    std::size_t capacity() const noexcept { return slots_.size(); }
    std::size_t memory_bytes() const noexcept { return slots_.size() * sizeof(Slot); }

    /// Bytes a map over `n` keys would occupy.
    static std::size_t estimate_bytes(std::size_t n) noexcept {
        return n == 0 ? 0 : std::bit_ceil(n * 2) * sizeof(Slot);
    }

private:
    struct Slot {
        index_t key;
        index_t pos;
    };

    std::size_t slot_of(index_t key) const noexcept {
        // Fibonacci hashing; the top bits of the product are the best mixed.
        const std::uint64_t h = static_cast<std::uint64_t>(key) * 0x9E3779B97F4A7C15ull;
        return bits_ == 0 ? 0 : static_cast<std::size_t>(h >> (64 - bits_));
    }

    std::vector<Slot> slots_;
    std::size_t mask_ = 0;
    std::size_t size_ = 0;
    unsigned bits_ = 0;
};

}  // namespace mscm
