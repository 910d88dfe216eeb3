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

#if __cplusplus < 202002L
#error mscm requires C++20 or newer.
#endif

#include "mscm/sparse.hpp"
#include "mscm/text_io.hpp"
#include "mscm/flat_index_map.hpp"
#include "mscm/chunked.hpp"
#include "mscm/kernels.hpp"
#include "mscm/masked_mul.hpp"
#include "mscm/tree.hpp"
#include "mscm/model_io.hpp"
#include "mscm/bench.hpp"
