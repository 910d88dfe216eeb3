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

// Latency harness: per-query mean / P95 / P99 for every (method, chunked or
// per-column, threads) configuration, and chunked-over-per-column speedups.
// Every configuration's predictions are checked against the per-column
// binary-search reference before any timing is reported.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mscm/kernels.hpp"
#include "mscm/tree.hpp"

namespace mscm {

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample.
inline double percentile(std::vector<double> samples, double p) {
    if (samples.empty()) throw std::invalid_argument("percentile: no samples");
    if (!(p > 0.0 && p < 100.0)) throw std::invalid_argument("percentile: p must lie in (0, 100)");
    const auto n = samples.size();
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(rank - 1), samples.end());
    return samples[rank - 1];
}

enum class BenchMode { Batch, Online };

inline std::string_view to_string(BenchMode m) noexcept { return m == BenchMode::Batch ? "batch" : "online"; }

struct BenchConfig {
    IterationMethod method = IterationMethod::BinarySearch;
    bool mscm = true;
};

struct BenchSpec {
    std::vector<BenchConfig> configs;
    BenchMode mode = BenchMode::Batch;
    std::size_t beam = 10;
    std::size_t topk = 10;
    std::vector<std::size_t> threads{1};
    std::size_t warmup = 2;
    std::size_t measured = 3;
    std::uint64_t seed = 0;
};

struct BenchRow {
    IterationMethod method = IterationMethod::BinarySearch;
    bool mscm = true;
    std::size_t threads = 1;
    double mean_ms = 0.0;  ///< per query
    double p95_ms = 0.0;
    double p99_ms = 0.0;
    std::size_t samples = 0;
    std::optional<double> speedup;  ///< per-column mean / chunked mean, same method and threads
    KernelCounters counters;        ///< one instrumented pass
};

struct BenchReport {
    BenchMode mode = BenchMode::Batch;
    std::size_t num_queries = 0;
    std::size_t beam = 0;
    std::size_t topk = 0;
    std::vector<BenchRow> rows;
};

/// Raised when a configuration's predictions differ from the reference.
class PredictionMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Times every configuration in `spec` on `X`. Indices each configuration
/// needs are built before timing; model loading is never timed. In batch mode
/// one sample is one pass over the batch divided by its size; in online mode
/// one sample is one query's latency.
inline BenchReport run_bench(XmrModel& model, const CsrMatrix& X, const BenchSpec& spec) {
    if (spec.measured < 3) throw std::invalid_argument("bench: at least 3 measured iterations required");
    if (spec.configs.empty() || spec.threads.empty()) throw std::invalid_argument("bench: nothing to run");
    if (X.rows() == 0) throw std::invalid_argument("bench: query batch is empty");

    auto run = [&](const InferenceOptions& opt, InferenceWorkspace& ws) {
        return spec.mode == BenchMode::Batch ? infer(model, X, opt, &ws) : infer_online(model, X, opt, &ws);
    };

    InferenceOptions ref_opt;
    ref_opt.beam = spec.beam;
    ref_opt.topk = spec.topk;
    ref_opt.method = IterationMethod::BinarySearch;
    ref_opt.mscm = false;
    InferenceWorkspace ref_ws;
    const PredictionSet reference = run(ref_opt, ref_ws);

    BenchReport report;
    report.mode = spec.mode;
    report.num_queries = X.rows();
    report.beam = spec.beam;
    report.topk = spec.topk;

    using clock = std::chrono::steady_clock;
    for (const auto& cfg : spec.configs) {
        model.prepare(cfg.method, cfg.mscm);
        for (std::size_t threads : spec.threads) {
            InferenceOptions opt = ref_opt;
            opt.method = cfg.method;
            opt.mscm = cfg.mscm;
            opt.workers = threads;
            InferenceWorkspace ws;

            BenchRow row;
            row.method = cfg.method;
            row.mscm = cfg.mscm;
            row.threads = threads;
            {
                InferenceOptions counted = opt;
                counted.counters = &row.counters;
                if (run(counted, ws) != reference) {
                    throw PredictionMismatch("bench: " + std::string(to_string(cfg.method)) +
                                             (cfg.mscm ? " chunked" : " per-column") + " with " +
                                             std::to_string(threads) + " threads disagrees with the reference");
                }
            }
            for (std::size_t i = 0; i < spec.warmup; ++i) run(opt, ws);

            std::vector<double> samples;
            for (std::size_t i = 0; i < spec.measured; ++i) {
                if (spec.mode == BenchMode::Batch) {
                    const auto t0 = clock::now();
                    const auto out = infer(model, X, opt, &ws);
                    const auto t1 = clock::now();
                    if (out != reference) throw PredictionMismatch("bench: predictions changed between passes");
                    samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() /
                                      static_cast<double>(X.rows()));
                } else {
                    for (index_t q = 0; q < X.rows(); ++q) {
                        const auto t0 = clock::now();
                        const auto out = infer(model, slice_rows(X, q, q + 1), opt, &ws);
                        const auto t1 = clock::now();
                        const auto expect = reference.query(q);
                        if (!std::equal(out.entries.begin(), out.entries.end(), expect.begin(), expect.end())) {
                            throw PredictionMismatch("bench: predictions changed between passes");
                        }
                        samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
                    }
                }
            }
            double sum = 0.0;
            for (double s : samples) sum += s;
            row.samples = samples.size();
            row.mean_ms = sum / static_cast<double>(samples.size());
            row.p95_ms = percentile(samples, 95.0);
            row.p99_ms = percentile(samples, 99.0);
            report.rows.push_back(row);
        }
    }
    for (auto& r : report.rows) {
        if (!r.mscm) continue;
        for (const auto& b : report.rows) {
            if (!b.mscm && b.method == r.method && b.threads == r.threads && r.mean_ms > 0.0) {
                r.speedup = b.mean_ms / r.mean_ms;
            }
        }
    }
    return report;
}

inline std::string report_to_tsv(const BenchReport& r) {
    std::string out = "method\tmscm\tthreads\tmode\tmean_ms\tp95_ms\tp99_ms\tspeedup\tindex_loads\temissions\n";
    char buf[256];
    for (const auto& row : r.rows) {
        std::snprintf(buf, sizeof(buf), "%s\t%s\t%zu\t%s\t%.6f\t%.6f\t%.6f\t", std::string(to_string(row.method)).c_str(),
                      row.mscm ? "on" : "off", row.threads, std::string(to_string(r.mode)).c_str(), row.mean_ms,
                      row.p95_ms, row.p99_ms);
        out += buf;
        if (row.speedup) {
            std::snprintf(buf, sizeof(buf), "%.3f", *row.speedup);
            out += buf;
        } else {
            out += "-";
        }
        std::snprintf(buf, sizeof(buf), "\t%llu\t%llu\n", static_cast<unsigned long long>(row.counters.index_loads),
                      static_cast<unsigned long long>(row.counters.emissions));
        out += buf;
    }
    return out;
}

inline std::string report_to_table(const BenchReport& r) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-8s %-4s %7s %12s %12s %12s %8s\n", "method", "mscm", "threads", "mean ms/q",
                  "p95 ms/q", "p99 ms/q", "speedup");
    out += buf;
    for (const auto& row : r.rows) {
        char sp[32] = "-";
        if (row.speedup) std::snprintf(sp, sizeof(sp), "%.2fx", *row.speedup);
        std::snprintf(buf, sizeof(buf), "%-8s %-4s %7zu %12.5f %12.5f %12.5f %8s\n",
                      std::string(to_string(row.method)).c_str(), row.mscm ? "on" : "off", row.threads, row.mean_ms,
                      row.p95_ms, row.p99_ms, sp);
        out += buf;
    }
    return out;
}

inline nlohmann::json report_to_json(const BenchReport& r) {
    nlohmann::json j;
    j["mode"] = std::string(to_string(r.mode));
    j["num_queries"] = r.num_queries;
    j["beam"] = r.beam;
    j["topk"] = r.topk;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : r.rows) {
        nlohmann::json jr;
        jr["method"] = std::string(to_string(row.method));
        jr["mscm"] = row.mscm;
        jr["threads"] = row.threads;
        jr["mean_ms"] = row.mean_ms;
        jr["p95_ms"] = row.p95_ms;
        jr["p99_ms"] = row.p99_ms;
        jr["samples"] = row.samples;
        jr["speedup"] = row.speedup ? nlohmann::json(*row.speedup) : nlohmann::json(nullptr);
        jr["counters"] = {{"index_loads", row.counters.index_loads},
                          {"emissions", row.counters.emissions},
                          {"coordinate_visits", row.counters.coordinate_visits},
                          {"hash_probes", row.counters.hash_probes},
                          {"dense_probes", row.counters.dense_probes}};
        j["rows"].push_back(std::move(jr));
    }
    return j;
}

}  // namespace mscm
