#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtr/corpus.hpp"
#include "dtr/dpr_ais.hpp"
#include "dtr/embedding.hpp"
#include "dtr/error.hpp"
#include "dtr/generator.hpp"
#include "dtr/uncertainty.hpp"
#include "dtr/vector_index.hpp"

namespace dtr {

struct PipelineMode {
    enum class Kind {
        no_retrieval,
        standard_rag,
        llm_judge,
        hyde,
        q2d,
        cot,
        dtr,
        dtr_no_ugt,
        dtr_no_dpr,
        fixed_mix,
    };

    Kind kind = Kind::dtr;
    std::size_t q_count = 0;  // fixed_mix only
    std::size_t p_count = 0;

    static PipelineMode fixed_mix(std::size_t q, std::size_t p) { return {Kind::fixed_mix, q, p}; }

    // "dtr", "fixed_mix(2,1)", ... Unknown names raise Error(usage) listing
    // the valid modes.
    static PipelineMode parse(std::string_view name);
    std::string name() const;

    bool uses_gate() const noexcept;

    friend bool operator==(const PipelineMode&, const PipelineMode&) = default;
};

std::string valid_mode_names();

struct RunConfig {
    PipelineMode mode;
    double u_threshold = 0.001;  // -infinity forces retrieval
    std::size_t n_per_path = 5;
    std::size_t k_final = 3;
    std::size_t width = 1;       // concurrent queries in run_batch
    double temperature = 0.0;
    std::map<PromptKind, int> max_tokens{
            {PromptKind::answer_no_retrieval, 32},
            {PromptKind::answer_with_retrieval, 32},
            {PromptKind::pseudo_context, 256},
            {PromptKind::cot, 256},
            {PromptKind::judge, 8},
    };
    EmbedOptions embed;

    // Error(config) on inconsistent settings, e.g. fixed_mix counts != k.
    void validate() const;
};

// Everything the pipeline reads or calls. Non-owning.
struct PipelineContext {
    const FlatIndex& index;
    const ChunkStore& chunks;
    Embedder& embedder;
    EmbeddingCache* embed_cache = nullptr;
    Generator& generator;
};

// Logical component invocations made while answering one query. Cache hits
// still count, so traces do not depend on cache warmth.
class CallLog {
public:
    enum Component : std::size_t {
        answer_no_retrieval,
        answer_with_retrieval,
        pseudo_context,
        cot,
        judge,
        embed,
        search,
        kCount,
    };

    static std::string_view component_name(Component c) noexcept;

    void add(Component c, std::size_t n = 1) noexcept { counts_[c] += n; }
    std::size_t count(Component c) const noexcept { return counts_[c]; }
    std::size_t retrievals() const noexcept { return counts_[search]; }

    std::vector<std::pair<std::string, std::size_t>> entries() const;

    friend bool operator==(const CallLog&, const CallLog&) = default;

private:
    std::array<std::size_t, kCount> counts_{};
};

struct TraceError {
    ErrorCategory category;
    std::string message;

    friend bool operator==(const TraceError&, const TraceError&) = default;
};

// Full audit record for one query.
struct QueryTrace {
    std::string query_id;
    PipelineMode mode;
    std::optional<std::string> parametric_answer;
    std::optional<UncertaintyScore> u;
    bool triggered = false;
    std::optional<std::string> judge_output;
    std::optional<std::string> pseudo_context;   // pseudo-document, or rationale for cot
    std::optional<std::string> retrieval_text;   // q2d / cot concatenated probe text
    std::vector<Hit> hits_q;                     // query-side path (or the single path)
    std::vector<Hit> hits_p;                     // pseudo-context path
    std::optional<SelectionResult> selection;    // AIS modes only
    std::vector<std::string> passage_ids;        // final prompt passages, in order
    std::string final_answer;
    CallLog call_log;
    std::vector<std::string> flags;
    std::optional<TraceError> error;
};

nlohmann::json to_json(const QueryTrace& trace);
QueryTrace trace_from_json(const nlohmann::json& j);

std::string serialize_traces(const std::vector<QueryTrace>& traces);
std::vector<QueryTrace> load_traces(const std::filesystem::path& path);

// top-a of the query path, then top-b of the pseudo path skipping docs already
// taken; any shortfall is backfilled from the query path past a, then from the
// pseudo path past b.
std::vector<std::string> fixed_mix_select(const std::vector<Hit>& hits_q,
                                          const std::vector<Hit>& hits_p, std::size_t q_count,
                                          std::size_t p_count);

// Leading "yes"/"no" token, case-insensitive. nullopt when neither.
std::optional<bool> parse_judge(std::string_view output);

class Pipeline {
public:
    Pipeline(RunConfig config, PipelineContext context);

    const RunConfig& config() const noexcept { return config_; }

    // Never throws for component failures: they land in trace.error.
    QueryTrace run_query(const QueryItem& query) const;
    QueryTrace run_query(const QueryItem& query, const PipelineMode& mode) const;

    // Traces in input order; up to config.width queries run concurrently.
    std::vector<QueryTrace> run_batch(const std::vector<QueryItem>& queries) const;
    std::vector<QueryTrace> run_batch(const std::vector<QueryItem>& queries,
                                      const PipelineMode& mode) const;

private:
    RunConfig config_;
    PipelineContext ctx_;
};

} // namespace dtr
