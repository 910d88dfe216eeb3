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


#include <gtest/gtest.h>

#include <sstream>

#include "mscm/mscm.hpp"
#include "oracles.hpp"
#include "random_inputs.hpp"

using namespace mscm;
using testing_util::Rng;

namespace {

XmrModel small_model() {
    GeneratorConfig cfg;
    cfg.depth = 3;
    cfg.branching = 8;
    cfg.dim = 500;
    cfg.labels = 64;
    cfg.nnz = 12;
    cfg.seed = 4;
    return generate_model(cfg);
}

BenchSpec spec_of(std::vector<BenchConfig> configs, BenchMode mode = BenchMode::Batch) {
    BenchSpec s;
    s.configs = std::move(configs);
    s.mode = mode;
    s.beam = 4;
    s.topk = 3;
    s.warmup = 1;
    s.measured = 3;
    return s;
}

}  // namespace

TEST(Percentile, SingleSample) {
    EXPECT_EQ(percentile({4.5}, 95.0), 4.5);
    EXPECT_EQ(percentile({4.5}, 1.0), 4.5);
}

TEST(Percentile, OneToHundred) {
    std::vector<double> s;
    for (int i = 100; i >= 1; --i) s.push_back(i);
    EXPECT_EQ(percentile(s, 95.0), 95.0);
    EXPECT_EQ(percentile(s, 99.0), 99.0);
    EXPECT_EQ(percentile(s, 50.0), 50.0);
}

TEST(Percentile, MatchesSortOracle) {
    Rng rng(81);
    for (int t = 0; t < 500; ++t) {
        std::vector<double> s(testing_util::uniform(rng, 1, 300));
        for (auto& v : s) v = testing_util::value(rng);
        const double p = std::uniform_real_distribution<double>(0.5, 99.5)(rng);
        ASSERT_EQ(percentile(s, p), oracle::percentile(s, p));
    }
}

TEST(Percentile, RejectsBadInput) {
    EXPECT_THROW((void)percentile({}, 50.0), std::invalid_argument);
    EXPECT_THROW((void)percentile({1.0}, 0.0), std::invalid_argument);
    EXPECT_THROW((void)percentile({1.0}, 100.0), std::invalid_argument);
}

TEST(RunBench, SingleConfigurationGivesOneRow) {
    auto model = small_model();
    const auto X = generate_queries(20, 500, 10, 1);
    const auto r = run_bench(model, X, spec_of({{IterationMethod::HashLookup, true}}));
    ASSERT_EQ(r.rows.size(), 1u);
    EXPECT_EQ(r.rows[0].method, IterationMethod::HashLookup);
    EXPECT_EQ(r.rows[0].samples, 3u);
    EXPECT_FALSE(r.rows[0].speedup.has_value());
    EXPECT_GT(r.rows[0].mean_ms, 0.0);
    EXPECT_LE(r.rows[0].p95_ms, r.rows[0].p99_ms);
    EXPECT_GT(r.rows[0].counters.emissions, 0u);
    EXPECT_EQ(r.num_queries, 20u);
}

TEST(RunBench, SpeedupIsRatioOfMeans) {
    auto model = small_model();
    const auto X = generate_queries(30, 500, 10, 2);
    auto spec = spec_of({{IterationMethod::BinarySearch, true}, {IterationMethod::BinarySearch, false}});
    spec.threads = {1, 2};
    const auto r = run_bench(model, X, spec);
    ASSERT_EQ(r.rows.size(), 4u);
    for (const auto& row : r.rows) {
        if (!row.mscm) {
            EXPECT_FALSE(row.speedup.has_value());
            continue;
        }
        ASSERT_TRUE(row.speedup.has_value());
        for (const auto& b : r.rows) {
            if (!b.mscm && b.threads == row.threads) EXPECT_DOUBLE_EQ(*row.speedup, b.mean_ms / row.mean_ms);
        }
    }
}

TEST(RunBench, OnlineModeSamplesEveryQuery) {
    auto model = small_model();
    const auto X = generate_queries(7, 500, 10, 3);
    const auto r = run_bench(model, X, spec_of({{IterationMethod::DenseLookup, true}}, BenchMode::Online));
    ASSERT_EQ(r.rows.size(), 1u);
    EXPECT_EQ(r.rows[0].samples, 21u);
    EXPECT_EQ(r.mode, BenchMode::Online);
}

TEST(RunBench, RejectsTooFewIterations) {
    auto model = small_model();
    const auto X = generate_queries(5, 500, 10, 3);
    auto spec = spec_of({{IterationMethod::MergeJoin, true}});
    spec.measured = 2;
    EXPECT_THROW((void)run_bench(model, X, spec), std::invalid_argument);
    spec.measured = 3;
    spec.configs.clear();
    EXPECT_THROW((void)run_bench(model, X, spec), std::invalid_argument);
    EXPECT_THROW((void)run_bench(model, csr_from_triplets(0, 500, {}), spec_of({{IterationMethod::MergeJoin, true}})),
                 std::invalid_argument);
}

TEST(RunBench, ReportsSerialise) {
    auto model = small_model();
    const auto X = generate_queries(10, 500, 10, 5);
    const auto r = run_bench(model, X, spec_of({{IterationMethod::MergeJoin, true}, {IterationMethod::MergeJoin, false}}));

    const auto j = nlohmann::json::parse(report_to_json(r).dump());
    EXPECT_EQ(j["mode"], "batch");
    EXPECT_EQ(j["num_queries"], 10);
    ASSERT_EQ(j["rows"].size(), 2u);
    EXPECT_EQ(j["rows"][0]["method"], "march");
    EXPECT_TRUE(j["rows"][0]["speedup"].is_number());
    EXPECT_TRUE(j["rows"][1]["speedup"].is_null());
    EXPECT_TRUE(j["rows"][0]["counters"].contains("index_loads"));

    std::istringstream tsv(report_to_tsv(r));
    std::string line;
    std::getline(tsv, line);
    EXPECT_EQ(line, "method\tmscm\tthreads\tmode\tmean_ms\tp95_ms\tp99_ms\tspeedup\tindex_loads\temissions");
    int rows = 0;
    while (std::getline(tsv, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 9);
    }
    EXPECT_EQ(rows, 2);
    EXPECT_NE(report_to_table(r).find("march"), std::string::npos);
}
