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

// `xmr` command line: gen, validate, infer, bench, stats.
//
// Exit codes: 0 success, 1 usage error, 2 data or validation error.

#pragma once

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mscm/mscm.hpp"

namespace mscm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string predictions_to_tsv(const PredictionSet& p) {
    std::string out;
    char buf[64];
    for (index_t q = 0; q < p.num_queries(); ++q) {
        for (const auto& e : p.query(q)) {
            std::snprintf(buf, sizeof(buf), "%u\t%u\t%.9g\n", q, e.label, static_cast<double>(e.score));
            out += buf;
        }
    }
    return out;
}

namespace detail {

inline bool parse_on_off(const std::string& s) {
    if (s == "on") return true;
    if (s == "off") return false;
    throw UsageError("expected on|off, got '" + s + "'");
}

inline BenchMode parse_mode(const std::string& s) {
    if (s == "batch") return BenchMode::Batch;
    if (s == "online") return BenchMode::Online;
    throw UsageError("--mode must be batch or online, got '" + s + "'");
}

inline std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline void write_output(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
    } else {
        mscm::detail::write_file(path, text);
    }
}

inline double mean_row_nnz(const CsrMatrix& X) {
    return X.rows() ? static_cast<double>(X.nnz()) / static_cast<double>(X.rows()) : 0.0;
}

}  // namespace detail

/// Runs the tool with `args` (without the program name).
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Masked sparse chunk multiplication for linear XMR tree inference", "xmr"};
    app.require_subcommand(1);

    // gen
    GeneratorConfig gen_cfg;
    std::string gen_out, gen_queries_out;
    index_t gen_num_queries = 0, gen_query_nnz = 10;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic model (and optionally a query file)");
    gen->add_option("--depth", gen_cfg.depth, "Tree depth including the root")->capture_default_str();
    gen->add_option("--branch", gen_cfg.branching, "Branching factor")->capture_default_str();
    gen->add_option("--dim", gen_cfg.dim, "Feature dimension")->capture_default_str();
    gen->add_option("--labels", gen_cfg.labels, "Number of labels (leaves)")->capture_default_str();
    gen->add_option("--nnz", gen_cfg.nnz, "Nonzeros per weight column")->capture_default_str();
    gen->add_option("--overlap", gen_cfg.overlap, "Sibling support overlap in [0,1]")->capture_default_str();
    gen->add_option("--seed", gen_cfg.seed, "Random seed")->capture_default_str();
    gen->add_option("--out", gen_out, "Model directory")->required();
    gen->add_option("--num-queries", gen_num_queries, "Also generate this many queries")->capture_default_str();
    gen->add_option("--query-nnz", gen_query_nnz, "Nonzeros per generated query")->capture_default_str();
    gen->add_option("--queries-out", gen_queries_out, "Query file path (default <out>/queries.txt)");

    // validate
    std::string validate_model;
    auto* validate = app.add_subcommand("validate", "Check a model directory against every invariant");
    validate->add_option("model,--model", validate_model, "Model directory")->required();

    // infer
    std::string model_dir, query_path, method_name = "auto", mscm_flag = "on", mode_name = "batch", out_path;
    std::size_t beam = 10, topk = 10, threads = 1;
    std::uint64_t seed = 0;
    double budget_mb = 1024.0;
    auto* inf = app.add_subcommand("infer", "Beam-search inference; writes query_id<TAB>label_id<TAB>score");
    inf->add_option("--model", model_dir, "Model directory")->required();
    inf->add_option("--queries", query_path, "XMRSPARSE query file")->required();
    inf->add_option("--beam", beam, "Beam width")->capture_default_str();
    inf->add_option("--topk", topk, "Labels returned per query")->capture_default_str();
    inf->add_option("--method", method_name, "march|bsearch|hash|dense|auto")->capture_default_str();
    inf->add_option("--mscm", mscm_flag, "on|off")->capture_default_str();
    inf->add_option("--mode", mode_name, "batch|online")->capture_default_str();
    inf->add_option("--threads", threads, "Worker threads")->capture_default_str();
    inf->add_option("--seed", seed, "Random seed (inference is deterministic)");
    inf->add_option("--out", out_path, "Output file (default stdout)");
    inf->add_option("--memory-budget-mb", budget_mb, "Memory budget for --method auto")->capture_default_str();

    // bench
    std::string bench_methods = "march,bsearch,hash,dense", bench_mscm = "both", bench_threads = "1";
    std::size_t warmup = 2, iters = 3;
    bool json = false;
    auto* bench = app.add_subcommand("bench", "Time chunked vs per-column inference");
    bench->add_option("--model", model_dir, "Model directory")->required();
    bench->add_option("--queries", query_path, "XMRSPARSE query file")->required();
    bench->add_option("--beam", beam, "Beam width")->capture_default_str();
    bench->add_option("--topk", topk, "Labels returned per query")->capture_default_str();
    bench->add_option("--method", bench_methods, "Comma-separated methods, or auto")->capture_default_str();
    bench->add_option("--mscm", bench_mscm, "on|off|both")->capture_default_str();
    bench->add_option("--mode", mode_name, "batch|online")->capture_default_str();
    bench->add_option("--threads", bench_threads, "Comma-separated thread counts")->capture_default_str();
    bench->add_option("--warmup", warmup, "Warmup passes")->capture_default_str();
    bench->add_option("--iters", iters, "Measured passes (>= 3)")->capture_default_str();
    bench->add_option("--seed", seed, "Random seed");
    bench->add_option("--out", out_path, "Also write the TSV report here");
    bench->add_option("--memory-budget-mb", budget_mb, "Memory budget for --method auto")->capture_default_str();
    bench->add_flag("--json", json, "Emit a JSON report instead of the table");

    // stats
    std::size_t stats_batch = 1;
    auto* stats = app.add_subcommand("stats", "Chunk statistics and a method recommendation");
    stats->add_option("--model", model_dir, "Model directory")->required();
    stats->add_option("--queries", query_path, "Optional query file (for query sparsity)");
    stats->add_option("--batch", stats_batch, "Batch size to recommend for")->capture_default_str();
    stats->add_option("--threads", threads, "Worker threads")->capture_default_str();
    stats->add_option("--memory-budget-mb", budget_mb, "Memory budget in MiB")->capture_default_str();
    stats->add_flag("--json", json, "Emit JSON");

    std::vector<std::string> argv_store{"xmr"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "xmr: " << e.what() << "\n" << "Run 'xmr --help' for usage.\n";
        return kExitUsage;
    }

    const auto budget_bytes = static_cast<std::size_t>(budget_mb * 1024.0 * 1024.0);

    try {
        if (*gen) {
            const XmrModel model = generate_model(gen_cfg);
            save_model(model, gen_out);
            if (gen_num_queries > 0) {
                const auto path = gen_queries_out.empty() ? (std::filesystem::path(gen_out) / "queries.txt").string()
                                                          : gen_queries_out;
                save_queries(generate_queries(gen_num_queries, gen_cfg.dim, gen_query_nnz, gen_cfg.seed + 1), path);
            }
            err << "wrote model with " << model.num_labels() << " labels, depth " << model.depth() << " to "
                << gen_out << "\n";
            return kExitOk;
        }

        if (*validate) {
            const XmrModel model = load_model(validate_model);
            model.validate();
            out << "ok: dim " << model.dim() << ", depth " << model.depth() << ", labels " << model.num_labels()
                << ", branching " << model.branching_factor() << "\n";
            return kExitOk;
        }

        if (*inf) {
            const bool mscm = detail::parse_on_off(mscm_flag);
            const BenchMode mode = detail::parse_mode(mode_name);
            if (topk == 0 || beam == 0 || topk > beam) throw UsageError("need 1 <= --topk <= --beam");
            if (threads == 0) throw UsageError("--threads must be >= 1");
            XmrModel model = load_model(model_dir);
            const CsrMatrix X = load_queries(query_path);
            IterationMethod method;
            if (method_name == "auto") {
                const auto rec = recommend_method(compute_model_stats(model, detail::mean_row_nnz(X)),
                                                  mode == BenchMode::Online ? 1 : X.rows(), budget_bytes, threads);
                method = rec.method;
                err << "xmr: --method auto chose " << to_string(method) << " (" << rec.reason << ")\n";
            } else if (auto m = parse_method(method_name)) {
                method = *m;
            } else {
                throw UsageError("--method must be march|bsearch|hash|dense|auto, got '" + method_name + "'");
            }
            model.prepare(method, mscm);
            InferenceOptions opt;
            opt.beam = beam;
            opt.topk = topk;
            opt.method = method;
            opt.mscm = mscm;
            opt.workers = threads;
            const PredictionSet p = mode == BenchMode::Batch ? infer(model, X, opt) : infer_online(model, X, opt);
            detail::write_output(out_path, predictions_to_tsv(p), out);
            return kExitOk;
        }

        if (*bench) {
            BenchSpec spec;
            spec.mode = detail::parse_mode(mode_name);
            spec.beam = beam;
            spec.topk = topk;
            spec.warmup = warmup;
            spec.measured = iters;
            spec.seed = seed;
            if (topk == 0 || beam == 0 || topk > beam) throw UsageError("need 1 <= --topk <= --beam");
            if (iters < 3) throw UsageError("--iters must be >= 3");
            spec.threads.clear();
            for (const auto& t : detail::split_commas(bench_threads)) {
                const auto n = std::stoul(t);
                if (n == 0) throw UsageError("--threads entries must be >= 1");
                spec.threads.push_back(n);
            }
            if (spec.threads.empty()) throw UsageError("--threads is empty");
            std::vector<bool> flags;
            if (bench_mscm == "both") {
                flags = {false, true};
            } else {
                flags = {detail::parse_on_off(bench_mscm)};
            }
            XmrModel model = load_model(model_dir);
            const CsrMatrix X = load_queries(query_path);
            std::vector<IterationMethod> methods;
            for (const auto& name : detail::split_commas(bench_methods)) {
                if (name == "auto") {
                    const auto rec = recommend_method(compute_model_stats(model, detail::mean_row_nnz(X)),
                                                      spec.mode == BenchMode::Online ? 1 : X.rows(), budget_bytes,
                                                      spec.threads.front());
                    err << "xmr: --method auto chose " << to_string(rec.method) << " (" << rec.reason << ")\n";
                    methods.push_back(rec.method);
                } else if (auto m = parse_method(name)) {
                    methods.push_back(*m);
                } else {
                    throw UsageError("unknown method '" + name + "'");
                }
            }
            if (methods.empty()) throw UsageError("--method is empty");
            for (auto m : methods) {
                for (bool f : flags) spec.configs.push_back({m, f});
            }
            const BenchReport report = run_bench(model, X, spec);
            if (!out_path.empty()) mscm::detail::write_file(out_path, report_to_tsv(report));
            if (json) {
                out << report_to_json(report).dump(2) << "\n";
            } else {
                out << report_to_table(report);
            }
            return kExitOk;
        }

        if (*stats) {
            const XmrModel model = load_model(model_dir);
            double q_nnz = 0.0;
            if (!query_path.empty()) q_nnz = detail::mean_row_nnz(load_queries(query_path));
            const ModelStats ms = compute_model_stats(model, q_nnz);
            const auto rec = recommend_method(ms, stats_batch, budget_bytes, threads);
            nlohmann::json j;
            j["dim"] = model.dim();
            j["depth"] = model.depth();
            j["labels"] = model.num_labels();
            j["branching"] = model.branching_factor();
            j["layers"] = nlohmann::json::array();
            for (std::size_t i = 0; i < model.num_layers(); ++i) {
                const auto cs = chunk_stats(model.layer(i).chunked);
                std::size_t rows = 0;
                for (auto r : cs.nnz_rows) rows += r;
                j["layers"].push_back({{"layer", i + 2},
                                       {"clusters", model.layer(i).csc.cols()},
                                       {"chunks", cs.nnz_rows.size()},
                                       {"nnz", cs.total_entries},
                                       {"chunk_rows", rows},
                                       {"mean_overlap", cs.mean_overlap}});
            }
            j["hash_index_bytes"] = ms.hash_index_bytes;
            j["dense_scratch_bytes"] = ms.dense_scratch_bytes;
            j["recommendation"] = {{"method", std::string(to_string(rec.method))},
                                   {"mscm", rec.mscm},
                                   {"reason", rec.reason}};
            if (json) {
                out << j.dump(2) << "\n";
            } else {
                char buf[160];
                out << "dim " << model.dim() << "  depth " << model.depth() << "  labels " << model.num_labels()
                    << "  branching " << model.branching_factor() << "\n";
                std::snprintf(buf, sizeof(buf), "%-6s %9s %8s %10s %11s %8s\n", "layer", "clusters", "chunks", "nnz",
                              "chunk_rows", "overlap");
                out << buf;
                for (const auto& l : j["layers"]) {
                    std::snprintf(buf, sizeof(buf), "%-6zu %9u %8zu %10zu %11zu %8.4f\n", l["layer"].get<std::size_t>(),
                                  l["clusters"].get<unsigned>(), l["chunks"].get<std::size_t>(),
                                  l["nnz"].get<std::size_t>(), l["chunk_rows"].get<std::size_t>(),
                                  l["mean_overlap"].get<double>());
                    out << buf;
                }
                out << "hash index bytes " << ms.hash_index_bytes << ", dense scratch bytes " << ms.dense_scratch_bytes
                    << "\n";
                out << "recommended: " << to_string(rec.method) << " mscm=on (" << rec.reason << ")\n";
            }
            return kExitOk;
        }
    } catch (const UsageError& e) {
        err << "xmr: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::logic_error& e) {
        // invalid_argument / out_of_range from the library: bad data or config.
        err << "xmr: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "xmr: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace mscm::cli
