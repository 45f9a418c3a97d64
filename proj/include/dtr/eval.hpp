#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtr/corpus.hpp"
#include "dtr/pipeline.hpp"
#include "dtr/vector_index.hpp"

namespace dtr {

// Lowercase, strip ASCII punctuation, drop the articles a/an/the, collapse
// whitespace. Bytes >= 0x80 are kept as word characters.
std::string normalize_answer(std::string_view text);

struct EmF1 {
    int em = 0;
    double f1 = 0.0;
};

// Max over golds. Error(contract) when golds is empty.
EmF1 em_f1(std::string_view prediction, const std::vector<std::string>& golds);

// Any gold doc among the final passages. nullopt when the query did not
// retrieve (excluded from the recall denominator) or has no gold docs.
std::optional<bool> recall_at_k(const QueryTrace& trace, const std::vector<std::string>& gold_doc_ids);

// Fraction of gold docs found among the final passages.
std::optional<double> doc_coverage_at_k(const QueryTrace& trace,
                                        const std::vector<std::string>& gold_doc_ids);

struct EvalRecord {
    std::string query_id;
    int em = 0;
    double f1 = 0.0;
    bool triggered = false;
    std::optional<double> u_value;
    std::optional<bool> gold_hit_at_k;
    std::optional<double> gold_coverage_at_k;
    bool errored = false;
};

struct ThresholdRow {
    double threshold = 0.0;
    double avg_em = 0.0;          // percentages
    double avg_f1 = 0.0;
    double trigger_ratio = 0.0;
    double query_ratio = 0.0;     // share of queries with u <= threshold
    double improvement = 0.0;     // avg_em - baseline avg_em, percentage points
};

struct EvalReport {
    PipelineMode mode;
    std::size_t count = 0;
    double avg_em = 0.0;
    double avg_f1 = 0.0;
    double trigger_ratio = 0.0;
    std::optional<double> recall_at_k;
    std::optional<double> doc_coverage_at_k;
    std::size_t recall_denominator = 0;
    std::size_t errors = 0;
    std::vector<ThresholdRow> per_threshold;
};

// Matches traces to queries by id. Error(integrity) when a trace names an
// unknown query.
std::vector<EvalRecord> score_traces(const std::vector<QueryTrace>& traces,
                                     const std::vector<QueryItem>& queries);

EvalReport summarize(const PipelineMode& mode, const std::vector<EvalRecord>& records);

// One row per threshold. Every threshold must cover the same query ids
// (Error(contract) otherwise).
std::vector<ThresholdRow> sweep_report(const std::map<double, std::vector<QueryTrace>>& traces_by_threshold,
                                       const std::vector<QueryItem>& queries,
                                       const std::vector<EvalRecord>& baseline_no_retrieval);

// Share of traces whose uncertainty is <= threshold. Traces without a score
// count as above every threshold.
double query_ratio(const std::vector<QueryTrace>& traces, double threshold);

struct GoldRankReport {
    static constexpr std::array<std::string_view, 4> kBuckets{"1-3", "4-10", "11-20", "20+"};
    std::array<std::size_t, 4> histogram{};
    std::vector<std::pair<std::string, std::size_t>> best_rank;  // query id -> 1-based rank
    std::size_t skipped = 0;
};

std::size_t gold_rank_bucket(std::size_t rank) noexcept;

// Best rank of any gold doc in a full-corpus ranking by the query vector.
// Queries without gold ids are skipped.
GoldRankReport gold_rank_report(const FlatIndex& index, const std::vector<QueryItem>& queries,
                                const std::vector<UnitVector>& q_vecs);

// Two-decimal rendering used by every report.
std::string format_pct(double value);

nlohmann::json to_json(const EvalRecord& r);
nlohmann::json to_json(const EvalReport& r);
nlohmann::json to_json(const GoldRankReport& r);
std::string records_csv(const std::vector<EvalRecord>& records);
std::string sweep_csv(const std::vector<ThresholdRow>& rows);

} // namespace dtr
