#include "dtr/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "dtr/config.hpp"
#include "dtr/error.hpp"
#include "dtr/eval.hpp"
#include "dtr/snapshot.hpp"
#include "dtr/util.hpp"

namespace dtr::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string corpus;
    std::string out;
    std::string config;
    std::string queries;
    std::string mode;
    std::string traces;
    std::string thresholds;
    std::string index;
    std::string csv;
    std::optional<double> threshold;
    std::optional<std::size_t> n_per_path;
    std::optional<std::size_t> k_final;
    std::optional<std::size_t> width;
    bool dry_run = false;
};

void require_file(const std::string& path, const char* what) {
    if (path.empty()) {
        fail(ErrorCategory::usage, std::string("--") + what + " is required");
    }
    if (!fs::exists(path)) {
        fail(ErrorCategory::io, std::string(what) + " file not found: " + path);
    }
}

// Config file, then environment, then flags.
AppConfig resolve_config(const Options& o) {
    AppConfig cfg;
    if (!o.config.empty()) {
        require_file(o.config, "config");
        cfg = load_config(o.config);
    }
    apply_environment(cfg);
    if (!o.mode.empty()) cfg.run.mode = PipelineMode::parse(o.mode);
    if (o.threshold) cfg.run.u_threshold = *o.threshold;
    if (o.n_per_path) cfg.run.n_per_path = *o.n_per_path;
    if (o.k_final) cfg.run.k_final = *o.k_final;
    if (o.width) cfg.run.width = *o.width;
    if (!o.index.empty()) cfg.index_dir = fs::path(o.index);
    return cfg;
}

void check_backend_files(const AppConfig& cfg) {
    if (cfg.generator.kind == "mock" && !fs::exists(cfg.generator.script)) {
        fail(ErrorCategory::config, "mock script not found: " + cfg.generator.script.string());
    }
    if (cfg.embedder.kind == "scripted" && !fs::exists(cfg.embedder.script)) {
        fail(ErrorCategory::config, "embedder script not found: " + cfg.embedder.script.string());
    }
    if (cfg.index_dir && !fs::is_directory(*cfg.index_dir)) {
        fail(ErrorCategory::io, "index directory not found: " + cfg.index_dir->string());
    }
    if (cfg.corpus && !fs::exists(*cfg.corpus)) {
        fail(ErrorCategory::io, "corpus file not found: " + cfg.corpus->string());
    }
    if (!cfg.index_dir && !cfg.corpus) {
        fail(ErrorCategory::config, "config needs an index directory or a corpus");
    }
}

std::vector<double> parse_thresholds(const std::string& list) {
    std::vector<double> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            double v = std::stod(item, &used);
            if (used != item.size() || !(v >= 0.0)) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            fail(ErrorCategory::usage, "bad threshold '" + item + "'");
        }
    }
    if (out.empty()) {
        fail(ErrorCategory::usage, "--thresholds needs at least one value");
    }
    return out;
}

// Backends plus the index, built once per invocation.
struct Runtime {
    AppConfig cfg;
    std::unique_ptr<Embedder> embedder;
    std::unique_ptr<Generator> backend;
    std::unique_ptr<EmbeddingCache> embed_cache;
    std::unique_ptr<GenerationCache> gen_cache;
    std::unique_ptr<CachingGenerator> generator;
    std::optional<Snapshot> snapshot;
    std::optional<ChunkStore> store;

    explicit Runtime(AppConfig c) : cfg(std::move(c)) {
        embedder = make_embedder(cfg.embedder);
        backend = make_generator(cfg.generator);
        embed_cache = cfg.embedding_cache ? std::make_unique<EmbeddingCache>(*cfg.embedding_cache)
                                          : std::make_unique<EmbeddingCache>();
        gen_cache = cfg.generation_cache ? std::make_unique<GenerationCache>(*cfg.generation_cache)
                                         : std::make_unique<GenerationCache>();
        generator = std::make_unique<CachingGenerator>(*backend, *gen_cache);
    }

    // Loads the snapshot, or embeds the configured corpus when there is none.
    void load_index(bool dry_run) {
        if (cfg.index_dir) {
            snapshot.emplace(load_snapshot(*cfg.index_dir));
            if (snapshot->embedder_id != embedder->id()) {
                fail(ErrorCategory::integrity, "index was built with embedder '" +
                                                       snapshot->embedder_id +
                                                       "' but config uses '" + embedder->id() + "'");
            }
        } else {
            auto chunks = load_corpus(*cfg.corpus);
            if (dry_run) {
                store.emplace(std::move(chunks));
                return;
            }
            std::vector<std::string> texts;
            for (const auto& c : chunks) texts.push_back(c.text);
            auto vecs = embed_texts(texts, *embedder, embed_cache.get(), cfg.run.embed);
            auto index = FlatIndex::build(chunks, vecs);
            snapshot.emplace(Snapshot{std::move(chunks), std::move(index), embedder->id()});
        }
        store.emplace(snapshot->chunks);
    }

    Pipeline pipeline() const {
        return Pipeline(cfg.run, PipelineContext{snapshot->index, *store, *embedder,
                                                 embed_cache.get(), *generator});
    }

    void print_counters(std::ostream& out) const {
        out << "backend_calls generator=" << backend->call_count()
            << " embedder=" << embedder->call_count() << "\n";
    }
};

std::size_t corpus_size(const Runtime& rt) {
    return rt.store ? rt.store->size() : 0;
}

int cmd_index(const Options& o, std::ostream& out) {
    require_file(o.corpus, "corpus");
    if (o.out.empty()) fail(ErrorCategory::usage, "--out is required");
    AppConfig cfg;
    if (!o.config.empty()) {
        require_file(o.config, "config");
        cfg = load_config(o.config);
    }
    apply_environment(cfg);
    if (cfg.embedder.kind == "http" &&
        (cfg.embedder.endpoint.base_url.empty() || cfg.embedder.model.empty())) {
        fail(ErrorCategory::config, "http embedder needs embedder.url and embedder.model");
    }
    auto chunks = load_corpus(o.corpus);
    auto embedder = make_embedder(cfg.embedder);
    if (o.dry_run) {
        out << "plan: index " << chunks.size() << " chunks from " << o.corpus << " with embedder "
            << embedder->id() << " into " << o.out << "\n";
        out << "backend_calls embedder=" << embedder->call_count() << "\n";
        return 0;
    }
    EmbeddingCache cache_mem;
    std::unique_ptr<EmbeddingCache> cache_file;
    if (cfg.embedding_cache) cache_file = std::make_unique<EmbeddingCache>(*cfg.embedding_cache);
    std::vector<std::string> texts;
    for (const auto& c : chunks) texts.push_back(c.text);
    auto vecs = embed_texts(texts, *embedder, cache_file ? cache_file.get() : &cache_mem,
                            cfg.run.embed);
    auto index = FlatIndex::build(chunks, vecs);
    // Build into a sibling directory, then swap it in.
    fs::path target(o.out);
    fs::path staging = target;
    staging += ".partial";
    fs::remove_all(staging);
    write_snapshot(staging, chunks, index, embedder->id());
    fs::remove_all(target);
    fs::rename(staging, target);
    out << "indexed " << index.size() << " chunks (dim " << index.dimension() << ") into "
        << o.out << "\n";
    return 0;
}

void validate_mode_queries(const std::vector<QueryItem>& queries, const Runtime& rt) {
    validate_queries(queries, *rt.store);
}

int cmd_run(const Options& o, std::ostream& out) {
    require_file(o.queries, "queries");
    if (o.out.empty()) fail(ErrorCategory::usage, "--out is required");
    if (o.config.empty()) fail(ErrorCategory::usage, "--config is required");
    auto cfg = resolve_config(o);
    require_endpoints(cfg);
    check_backend_files(cfg);
    cfg.run.validate();
    auto queries = load_queries(o.queries);
    Runtime rt(std::move(cfg));
    rt.load_index(o.dry_run);
    validate_mode_queries(queries, rt);
    if (o.dry_run) {
        out << "plan: run mode=" << rt.cfg.run.mode.name() << " queries=" << queries.size()
            << " corpus=" << corpus_size(rt) << " u_threshold=" << rt.cfg.run.u_threshold
            << " n_per_path=" << rt.cfg.run.n_per_path << " k_final=" << rt.cfg.run.k_final
            << " generator=" << rt.backend->id() << " embedder=" << rt.embedder->id()
            << " out=" << o.out << "\n";
        rt.print_counters(out);
        return 0;
    }
    auto traces = rt.pipeline().run_batch(queries);
    write_file_atomic(o.out, serialize_traces(traces));
    std::size_t errors = 0;
    std::size_t triggered = 0;
    for (const auto& t : traces) {
        errors += t.error ? 1 : 0;
        triggered += t.triggered ? 1 : 0;
    }
    out << "wrote " << traces.size() << " traces to " << o.out << " (triggered " << triggered
        << ", errors " << errors << ")\n";
    return 0;
}

std::string report_file(const EvalReport& report, const std::vector<EvalRecord>& records) {
    std::string body = to_json(report).dump() + "\n";
    for (const auto& r : records) {
        body += to_json(r).dump() + "\n";
    }
    return body;
}

int cmd_eval(const Options& o, std::ostream& out) {
    require_file(o.traces, "traces");
    require_file(o.queries, "queries");
    if (o.out.empty()) fail(ErrorCategory::usage, "--out is required");
    auto traces = load_traces(o.traces);
    auto queries = load_queries(o.queries);
    if (o.dry_run) {
        out << "plan: eval traces=" << traces.size() << " queries=" << queries.size()
            << " out=" << o.out << "\n";
        out << "backend_calls generator=0 embedder=0\n";
        return 0;
    }
    auto records = score_traces(traces, queries);
    auto report = summarize(traces.empty() ? PipelineMode{} : traces.front().mode, records);
    write_file_atomic(o.out, report_file(report, records));
    if (!o.csv.empty()) write_file_atomic(o.csv, records_csv(records));
    out << to_json(report).dump() << "\n";
    return 0;
}

int cmd_sweep(const Options& o, std::ostream& out) {
    require_file(o.queries, "queries");
    if (o.out.empty()) fail(ErrorCategory::usage, "--out is required");
    if (o.config.empty()) fail(ErrorCategory::usage, "--config is required");
    const auto thresholds = parse_thresholds(o.thresholds);
    auto cfg = resolve_config(o);
    if (o.mode.empty() && !cfg.run.mode.uses_gate()) {
        cfg.run.mode = PipelineMode{PipelineMode::Kind::dtr};
    }
    if (!cfg.run.mode.uses_gate()) {
        fail(ErrorCategory::usage, "sweep needs a gated mode (dtr, dtr_no_dpr, fixed_mix)");
    }
    require_endpoints(cfg);
    check_backend_files(cfg);
    cfg.run.validate();
    auto queries = load_queries(o.queries);
    Runtime rt(std::move(cfg));
    rt.load_index(o.dry_run);
    validate_mode_queries(queries, rt);
    if (o.dry_run) {
        out << "plan: sweep mode=" << rt.cfg.run.mode.name() << " thresholds=" << o.thresholds
            << " queries=" << queries.size() << " baseline=no_retrieval out=" << o.out << "\n";
        rt.print_counters(out);
        return 0;
    }
    auto base_pipeline = rt.pipeline();
    const auto baseline_traces =
            base_pipeline.run_batch(queries, PipelineMode{PipelineMode::Kind::no_retrieval});
    const auto baseline = score_traces(baseline_traces, queries);

    std::map<double, std::vector<QueryTrace>> by_threshold;
    for (double t : thresholds) {
        RunConfig run = rt.cfg.run;
        run.u_threshold = t;
        Pipeline p(run, PipelineContext{rt.snapshot->index, *rt.store, *rt.embedder,
                                        rt.embed_cache.get(), *rt.generator});
        by_threshold[t] = p.run_batch(queries);
    }
    EvalReport report = summarize(PipelineMode{PipelineMode::Kind::no_retrieval}, baseline);
    report.per_threshold = sweep_report(by_threshold, queries, baseline);
    report.mode = rt.cfg.run.mode;

    nlohmann::json j = to_json(report);
    j["baseline_avg_em"] = format_pct(summarize(PipelineMode{}, baseline).avg_em);
    for (const char* k : {"avg_em", "avg_f1", "trigger_ratio", "recall_at_k",
                          "doc_coverage_at_k", "recall_denominator", "errors", "count"}) {
        j.erase(k);
    }
    j["count"] = queries.size();
    write_file_atomic(o.out, j.dump() + "\n");
    if (!o.csv.empty()) write_file_atomic(o.csv, sweep_csv(report.per_threshold));
    for (const auto& row : report.per_threshold) {
        out << "threshold=" << row.threshold << " em=" << format_pct(row.avg_em)
            << " f1=" << format_pct(row.avg_f1) << " trigger_ratio=" << format_pct(row.trigger_ratio)
            << " query_ratio=" << format_pct(row.query_ratio)
            << " improvement=" << format_pct(row.improvement) << "\n";
    }
    return 0;
}

int cmd_gold_rank(const Options& o, std::ostream& out) {
    require_file(o.queries, "queries");
    if (o.index.empty()) fail(ErrorCategory::usage, "--index is required");
    if (o.out.empty()) fail(ErrorCategory::usage, "--out is required");
    if (!fs::is_directory(o.index)) {
        fail(ErrorCategory::io, "index directory not found: " + o.index);
    }
    AppConfig cfg;
    if (!o.config.empty()) {
        require_file(o.config, "config");
        cfg = load_config(o.config);
    }
    apply_environment(cfg);
    if (cfg.embedder.kind == "http" &&
        (cfg.embedder.endpoint.base_url.empty() || cfg.embedder.model.empty())) {
        fail(ErrorCategory::config, "http embedder needs embedder.url and embedder.model");
    }
    auto queries = load_queries(o.queries);
    auto snap = load_snapshot(o.index);
    ChunkStore store(snap.chunks);
    validate_queries(queries, store);
    auto embedder = make_embedder(cfg.embedder);
    if (snap.embedder_id != embedder->id()) {
        fail(ErrorCategory::integrity, "index was built with embedder '" + snap.embedder_id +
                                               "' but config uses '" + embedder->id() + "'");
    }
    if (o.dry_run) {
        out << "plan: gold-rank queries=" << queries.size() << " corpus=" << snap.index.size()
            << " out=" << o.out << "\n";
        out << "backend_calls embedder=" << embedder->call_count() << "\n";
        return 0;
    }
    std::vector<std::string> texts;
    for (const auto& q : queries) texts.push_back(q.question);
    std::unique_ptr<EmbeddingCache> cache = cfg.embedding_cache
                                                    ? std::make_unique<EmbeddingCache>(*cfg.embedding_cache)
                                                    : std::make_unique<EmbeddingCache>();
    auto vecs = embed_texts(texts, *embedder, cache.get(), cfg.run.embed);
    auto report = gold_rank_report(snap.index, queries, vecs);
    write_file_atomic(o.out, to_json(report).dump() + "\n");
    for (std::size_t b = 0; b < report.histogram.size(); ++b) {
        out << GoldRankReport::kBuckets[b] << ": " << report.histogram[b] << "\n";
    }
    return 0;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Uncertainty-gated dual-path retrieval engine", "dtr"};
    app.require_subcommand(1);
    Options o;

    auto* index = app.add_subcommand("index", "embed a corpus and write an index snapshot");
    index->add_option("--corpus", o.corpus, "corpus JSONL")->required();
    index->add_option("--out", o.out, "snapshot directory")->required();
    index->add_option("--config", o.config, "configuration file (embedder)");

    auto* run_cmd = app.add_subcommand("run", "answer a query set in one mode");
    run_cmd->add_option("--queries", o.queries, "query JSONL")->required();
    run_cmd->add_option("--mode", o.mode, "pipeline mode: " + valid_mode_names());
    run_cmd->add_option("--config", o.config, "configuration file")->required();
    run_cmd->add_option("--out", o.out, "trace JSONL")->required();

    auto* eval = app.add_subcommand("eval", "score a trace file");
    eval->add_option("--traces", o.traces, "trace JSONL")->required();
    eval->add_option("--queries", o.queries, "query JSONL")->required();
    eval->add_option("--out", o.out, "report file")->required();
    eval->add_option("--csv", o.csv, "per-record CSV");

    auto* sweep = app.add_subcommand("sweep", "evaluate a gated mode across thresholds");
    sweep->add_option("--queries", o.queries, "query JSONL")->required();
    sweep->add_option("--thresholds", o.thresholds, "comma-separated thresholds")->required();
    sweep->add_option("--config", o.config, "configuration file")->required();
    sweep->add_option("--out", o.out, "report file")->required();
    sweep->add_option("--mode", o.mode, "gated mode (default dtr)");
    sweep->add_option("--csv", o.csv, "per-threshold CSV");

    auto* gold = app.add_subcommand("gold-rank", "histogram of gold-document ranks");
    gold->add_option("--queries", o.queries, "query JSONL")->required();
    gold->add_option("--index", o.index, "snapshot directory")->required();
    gold->add_option("--out", o.out, "report file")->required();
    gold->add_option("--config", o.config, "configuration file (embedder)");

    for (auto* sub : {run_cmd, sweep}) {
        sub->add_option("--threshold", o.threshold, "uncertainty threshold");
        sub->add_option("--n", o.n_per_path, "hits per retrieval path");
        sub->add_option("--k", o.k_final, "passages in the final prompt");
        sub->add_option("--width", o.width, "concurrent queries");
    }
    run_cmd->add_option("--index", o.index, "snapshot directory (overrides config)");
    sweep->add_option("--index", o.index, "snapshot directory (overrides config)");
    for (auto* sub : {index, run_cmd, eval, sweep, gold}) {
        sub->add_flag("--dry-run", o.dry_run, "validate inputs and print the plan only");
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error[usage]: " << e.what() << "\n";
        return 2;
    }

    try {
        if (index->parsed()) return cmd_index(o, out);
        if (run_cmd->parsed()) return cmd_run(o, out);
        if (eval->parsed()) return cmd_eval(o, out);
        if (sweep->parsed()) return cmd_sweep(o, out);
        if (gold->parsed()) return cmd_gold_rank(o, out);
    } catch (const Error& e) {
        err << "error[" << category_name(e.category()) << "]: " << e.what() << "\n";
        return exit_code(e.category());
    } catch (const std::exception& e) {
        err << "error[io]: " << e.what() << "\n";
        return 4;
    }
    return 2;
}

} // namespace dtr::cli
