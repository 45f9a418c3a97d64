#include "dtr/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "dtr/error.hpp"

namespace dtr {

using nlohmann::json;

namespace {

bool is_ascii_punct(unsigned char c) noexcept {
    return c < 0x80 && std::ispunct(c);
}

bool is_space(unsigned char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

std::vector<std::string> tokens(std::string_view normalized) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : normalized) {
        if (c == ' ') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

double token_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
    if (pred.empty() || gold.empty()) {
        return pred.empty() && gold.empty() ? 1.0 : 0.0;
    }
    std::unordered_map<std::string, long> counts;
    for (const auto& t : gold) ++counts[t];
    long same = 0;
    for (const auto& t : pred) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++same;
        }
    }
    if (same == 0) {
        return 0.0;
    }
    const double precision = static_cast<double>(same) / static_cast<double>(pred.size());
    const double recall = static_cast<double>(same) / static_cast<double>(gold.size());
    return 2.0 * precision * recall / (precision + recall);
}

double pct(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

std::vector<std::string> sorted_ids(const std::vector<QueryTrace>& traces) {
    std::vector<std::string> ids;
    for (const auto& t : traces) ids.push_back(t.query_id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

} // namespace

std::string normalize_answer(std::string_view text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (unsigned char c : text) {
        if (is_ascii_punct(c)) {
            continue;
        }
        cleaned.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
    std::string out;
    std::string word;
    auto flush = [&] {
        if (!word.empty() && word != "a" && word != "an" && word != "the") {
            if (!out.empty()) out.push_back(' ');
            out += word;
        }
        word.clear();
    };
    for (unsigned char c : cleaned) {
        if (is_space(c)) {
            flush();
        } else {
            word.push_back(static_cast<char>(c));
        }
    }
    flush();
    return out;
}

EmF1 em_f1(std::string_view prediction, const std::vector<std::string>& golds) {
    if (golds.empty()) {
        fail(ErrorCategory::contract, "em_f1 needs at least one gold answer");
    }
    const auto pred = normalize_answer(prediction);
    const auto pred_tokens = tokens(pred);
    EmF1 best;
    for (const auto& g : golds) {
        const auto gold = normalize_answer(g);
        if (gold == pred) {
            best.em = 1;
        }
        best.f1 = std::max(best.f1, token_f1(pred_tokens, tokens(gold)));
    }
    return best;
}

std::optional<bool> recall_at_k(const QueryTrace& trace, const std::vector<std::string>& gold_doc_ids) {
    if (!trace.triggered || gold_doc_ids.empty() || trace.passage_ids.empty()) {
        return std::nullopt;
    }
    for (const auto& id : trace.passage_ids) {
        if (std::find(gold_doc_ids.begin(), gold_doc_ids.end(), id) != gold_doc_ids.end()) {
            return true;
        }
    }
    return false;
}

std::optional<double> doc_coverage_at_k(const QueryTrace& trace,
                                        const std::vector<std::string>& gold_doc_ids) {
    if (!trace.triggered || gold_doc_ids.empty() || trace.passage_ids.empty()) {
        return std::nullopt;
    }
    const std::unordered_set<std::string> got(trace.passage_ids.begin(), trace.passage_ids.end());
    const std::set<std::string> golds(gold_doc_ids.begin(), gold_doc_ids.end());
    std::size_t found = 0;
    for (const auto& g : golds) {
        found += got.count(g);
    }
    return static_cast<double>(found) / static_cast<double>(golds.size());
}

std::vector<EvalRecord> score_traces(const std::vector<QueryTrace>& traces,
                                     const std::vector<QueryItem>& queries) {
    std::unordered_map<std::string, const QueryItem*> by_id;
    for (const auto& q : queries) by_id.emplace(q.id, &q);
    std::vector<EvalRecord> records;
    records.reserve(traces.size());
    for (const auto& t : traces) {
        auto it = by_id.find(t.query_id);
        if (it == by_id.end()) {
            fail(ErrorCategory::integrity, "trace for unknown query '" + t.query_id + "'");
        }
        const QueryItem& q = *it->second;
        EvalRecord r;
        r.query_id = t.query_id;
        const auto scores = em_f1(t.final_answer, q.gold_answers);
        r.em = scores.em;
        r.f1 = scores.f1;
        r.triggered = t.triggered;
        if (t.u) r.u_value = t.u->value;
        if (q.gold_doc_ids) {
            r.gold_hit_at_k = recall_at_k(t, *q.gold_doc_ids);
            r.gold_coverage_at_k = doc_coverage_at_k(t, *q.gold_doc_ids);
        }
        r.errored = t.error.has_value();
        records.push_back(std::move(r));
    }
    return records;
}

EvalReport summarize(const PipelineMode& mode, const std::vector<EvalRecord>& records) {
    EvalReport rep;
    rep.mode = mode;
    rep.count = records.size();
    double em = 0.0;
    double f1 = 0.0;
    std::size_t triggered = 0;
    std::size_t hits = 0;
    double coverage = 0.0;
    for (const auto& r : records) {
        em += r.em;
        f1 += r.f1;
        triggered += r.triggered ? 1 : 0;
        rep.errors += r.errored ? 1 : 0;
        if (r.gold_hit_at_k) {
            ++rep.recall_denominator;
            hits += *r.gold_hit_at_k ? 1 : 0;
            coverage += r.gold_coverage_at_k.value_or(0.0);
        }
    }
    if (!records.empty()) {
        const auto n = static_cast<double>(records.size());
        rep.avg_em = 100.0 * em / n;
        rep.avg_f1 = 100.0 * f1 / n;
    }
    rep.trigger_ratio = pct(triggered, records.size());
    if (rep.recall_denominator > 0) {
        rep.recall_at_k = pct(hits, rep.recall_denominator);
        rep.doc_coverage_at_k = 100.0 * coverage / static_cast<double>(rep.recall_denominator);
    }
    return rep;
}

double query_ratio(const std::vector<QueryTrace>& traces, double threshold) {
    std::size_t below = 0;
    for (const auto& t : traces) {
        if (t.u && t.u->value <= threshold) {
            ++below;
        }
    }
    return traces.empty() ? 0.0 : static_cast<double>(below) / static_cast<double>(traces.size());
}

std::vector<ThresholdRow> sweep_report(const std::map<double, std::vector<QueryTrace>>& traces_by_threshold,
                                       const std::vector<QueryItem>& queries,
                                       const std::vector<EvalRecord>& baseline_no_retrieval) {
    const auto baseline = summarize(PipelineMode{PipelineMode::Kind::no_retrieval},
                                    baseline_no_retrieval);
    std::optional<std::vector<std::string>> reference_ids;
    std::vector<ThresholdRow> rows;
    for (const auto& [threshold, traces] : traces_by_threshold) {
        auto ids = sorted_ids(traces);
        if (!reference_ids) {
            reference_ids = ids;
        } else if (ids != *reference_ids) {
            fail(ErrorCategory::contract, "sweep thresholds cover different query sets");
        }
        const auto rep = summarize(traces.empty() ? PipelineMode{} : traces.front().mode,
                                   score_traces(traces, queries));
        ThresholdRow row;
        row.threshold = threshold;
        row.avg_em = rep.avg_em;
        row.avg_f1 = rep.avg_f1;
        row.trigger_ratio = rep.trigger_ratio;
        row.query_ratio = 100.0 * query_ratio(traces, threshold);
        row.improvement = rep.avg_em - baseline.avg_em;
        rows.push_back(row);
    }
    return rows;
}

std::size_t gold_rank_bucket(std::size_t rank) noexcept {
    if (rank <= 3) return 0;
    if (rank <= 10) return 1;
    if (rank <= 20) return 2;
    return 3;
}

GoldRankReport gold_rank_report(const FlatIndex& index, const std::vector<QueryItem>& queries,
                                const std::vector<UnitVector>& q_vecs) {
    if (queries.size() != q_vecs.size()) {
        fail(ErrorCategory::contract, "one query vector per query is required");
    }
    GoldRankReport rep;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto& q = queries[i];
        if (!q.gold_doc_ids || q.gold_doc_ids->empty()) {
            ++rep.skipped;
            continue;
        }
        const std::unordered_set<std::string> golds(q.gold_doc_ids->begin(), q.gold_doc_ids->end());
        const auto ranking = index.rank_all(q_vecs[i]);
        std::optional<std::size_t> best;
        for (std::size_t r = 0; r < ranking.size(); ++r) {
            if (golds.count(ranking[r].doc_id)) {
                best = r + 1;
                break;
            }
        }
        if (!best) {
            ++rep.skipped;
            continue;
        }
        ++rep.histogram[gold_rank_bucket(*best)];
        rep.best_rank.emplace_back(q.id, *best);
    }
    return rep;
}

std::string format_pct(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", value);
    return buf;
}

json to_json(const EvalRecord& r) {
    return json{{"query_id", r.query_id},
                {"em", r.em},
                {"f1", r.f1},
                {"triggered", r.triggered},
                {"u_value", r.u_value ? json(*r.u_value) : json(nullptr)},
                {"gold_hit_at_k", r.gold_hit_at_k ? json(*r.gold_hit_at_k) : json(nullptr)},
                {"gold_coverage_at_k",
                 r.gold_coverage_at_k ? json(*r.gold_coverage_at_k) : json(nullptr)},
                {"error", r.errored}};
}

json to_json(const EvalReport& r) {
    json j{{"mode", r.mode.name()},
           {"count", r.count},
           {"avg_em", format_pct(r.avg_em)},
           {"avg_f1", format_pct(r.avg_f1)},
           {"trigger_ratio", format_pct(r.trigger_ratio)},
           {"recall_at_k", r.recall_at_k ? json(format_pct(*r.recall_at_k)) : json(nullptr)},
           {"doc_coverage_at_k",
            r.doc_coverage_at_k ? json(format_pct(*r.doc_coverage_at_k)) : json(nullptr)},
           {"recall_denominator", r.recall_denominator},
           {"errors", r.errors}};
    if (!r.per_threshold.empty()) {
        json rows = json::array();
        for (const auto& row : r.per_threshold) {
            rows.push_back({{"threshold", row.threshold},
                            {"avg_em", format_pct(row.avg_em)},
                            {"avg_f1", format_pct(row.avg_f1)},
                            {"trigger_ratio", format_pct(row.trigger_ratio)},
                            {"query_ratio", format_pct(row.query_ratio)},
                            {"improvement_vs_no_retrieval", format_pct(row.improvement)}});
        }
        j["per_threshold"] = rows;
    }
    return j;
}

json to_json(const GoldRankReport& r) {
    json hist = json::object();
    for (std::size_t b = 0; b < r.histogram.size(); ++b) {
        hist[std::string(GoldRankReport::kBuckets[b])] = r.histogram[b];
    }
    json ranks = json::array();
    for (const auto& [id, rank] : r.best_rank) {
        ranks.push_back({{"query_id", id}, {"best_rank", rank}});
    }
    return json{{"histogram", hist}, {"ranks", ranks}, {"skipped", r.skipped}};
}

std::string records_csv(const std::vector<EvalRecord>& records) {
    std::ostringstream out;
    out << "query_id,em,f1,triggered,u_value,gold_hit_at_k\n";
    for (const auto& r : records) {
        out << r.query_id << ',' << r.em << ',' << format_pct(100.0 * r.f1) << ','
            << (r.triggered ? 1 : 0) << ',';
        if (r.u_value) out << *r.u_value;
        out << ',';
        if (r.gold_hit_at_k) out << (*r.gold_hit_at_k ? 1 : 0);
        out << '\n';
    }
    return out.str();
}

std::string sweep_csv(const std::vector<ThresholdRow>& rows) {
    std::ostringstream out;
    out << "threshold,avg_em,avg_f1,trigger_ratio,query_ratio,improvement_vs_no_retrieval\n";
    for (const auto& r : rows) {
        out << r.threshold << ',' << format_pct(r.avg_em) << ',' << format_pct(r.avg_f1) << ','
            << format_pct(r.trigger_ratio) << ',' << format_pct(r.query_ratio) << ','
            << format_pct(r.improvement) << '\n';
    }
    return out.str();
}

} // namespace dtr
