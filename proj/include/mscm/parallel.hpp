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

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace mscm::detail {

/// Runs fn(w) for w in [0, workers). Worker 0 runs on the calling thread.
/// The first exception thrown by any worker is rethrown after all join.
template <class Fn>
void run_workers(std::size_t workers, Fn&& fn) {
    if (workers <= 1) {
        fn(std::size_t{0});
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> threads;
        threads.reserve(workers - 1);
        for (std::size_t w = 1; w < workers; ++w) {
            threads.emplace_back([&, w] {
                try {
                    fn(w);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        try {
            fn(std::size_t{0});
        } catch (...) {
            errors[0] = std::current_exception();
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

/// Splits [0, n) into `parts` contiguous ranges of near-equal size; returns
/// parts + 1 boundaries.
inline std::vector<std::size_t> even_split(std::size_t n, std::size_t parts) {
    std::vector<std::size_t> b(parts + 1);
    for (std::size_t p = 0; p <= parts; ++p) b[p] = n * p / parts;
    return b;
}

}  // namespace mscm::detail
