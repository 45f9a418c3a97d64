#include "dtr/pipeline.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_set>

#include "dtr/util.hpp"

namespace dtr {

using nlohmann::json;
using Kind = PipelineMode::Kind;

namespace {

constexpr std::pair<Kind, std::string_view> kModeNames[] = {
        {Kind::no_retrieval, "no_retrieval"}, {Kind::standard_rag, "standard_rag"},
        {Kind::llm_judge, "llm_judge"},       {Kind::hyde, "hyde"},
        {Kind::q2d, "q2d"},                   {Kind::cot, "cot"},
        {Kind::dtr, "dtr"},                   {Kind::dtr_no_ugt, "dtr_no_ugt"},
        {Kind::dtr_no_dpr, "dtr_no_dpr"},
};

std::size_t parse_count(std::string_view s, std::string_view whole) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    if (s.empty() || s.size() > 6) {
        fail(ErrorCategory::usage, "bad fixed_mix counts in '" + std::string(whole) + "'");
    }
    std::size_t v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') {
            fail(ErrorCategory::usage, "bad fixed_mix counts in '" + std::string(whole) + "'");
        }
        v = v * 10 + static_cast<std::size_t>(c - '0');
    }
    return v;
}

std::vector<Hit> hits_from_json(const json& j) {
    std::vector<Hit> out;
    for (const auto& h : j) {
        out.push_back({h.at("doc_id").get<std::string>(), h.at("score").get<double>()});
    }
    return out;
}

json hits_to_json(const std::vector<Hit>& hits) {
    json arr = json::array();
    for (const auto& h : hits) {
        arr.push_back({{"doc_id", h.doc_id}, {"score", h.score}});
    }
    return arr;
}

template <typename T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

ErrorCategory category_from_name(std::string_view name) {
    for (int c = 0; c <= static_cast<int>(ErrorCategory::scripted_miss); ++c) {
        if (category_name(static_cast<ErrorCategory>(c)) == name) {
            return static_cast<ErrorCategory>(c);
        }
    }
    return ErrorCategory::io;
}

} // namespace

// ---------------------------------------------------------------------------
// PipelineMode / RunConfig
// ---------------------------------------------------------------------------

PipelineMode PipelineMode::parse(std::string_view name) {
    for (const auto& [kind, n] : kModeNames) {
        if (n == name) {
            return {kind, 0, 0};
        }
    }
    constexpr std::string_view prefix = "fixed_mix(";
    if (name.starts_with(prefix) && name.ends_with(")")) {
        const auto inner = name.substr(prefix.size(), name.size() - prefix.size() - 1);
        const auto comma = inner.find(',');
        if (comma != std::string_view::npos) {
            return fixed_mix(parse_count(inner.substr(0, comma), name),
                             parse_count(inner.substr(comma + 1), name));
        }
    }
    fail(ErrorCategory::usage,
         "unknown mode '" + std::string(name) + "'; valid modes: " + valid_mode_names());
}

std::string PipelineMode::name() const {
    if (kind == Kind::fixed_mix) {
        return "fixed_mix(" + std::to_string(q_count) + "," + std::to_string(p_count) + ")";
    }
    for (const auto& [k, n] : kModeNames) {
        if (k == kind) {
            return std::string(n);
        }
    }
    return "unknown";
}

bool PipelineMode::uses_gate() const noexcept {
    return kind == Kind::dtr || kind == Kind::dtr_no_dpr || kind == Kind::fixed_mix;
}

std::string valid_mode_names() {
    std::string out;
    for (const auto& [k, n] : kModeNames) {
        out += n;
        out += ", ";
    }
    out += "fixed_mix(a,b)";
    return out;
}

void RunConfig::validate() const {
    if (n_per_path == 0 || k_final == 0) {
        fail(ErrorCategory::config, "n_per_path and k_final must be positive");
    }
    if (mode.kind == Kind::fixed_mix) {
        if (mode.q_count + mode.p_count != k_final) {
            fail(ErrorCategory::config, "fixed_mix(" + std::to_string(mode.q_count) + "," +
                                                std::to_string(mode.p_count) +
                                                ") must sum to k_final=" +
                                                std::to_string(k_final));
        }
        if (mode.q_count > n_per_path || mode.p_count > n_per_path) {
            fail(ErrorCategory::config, "fixed_mix counts cannot exceed n_per_path");
        }
    }
    const bool force = u_threshold == -std::numeric_limits<double>::infinity();
    if (!force && !(u_threshold >= 0.0)) {
        fail(ErrorCategory::config, "u_threshold must be >= 0");
    }
    if (!(temperature >= 0.0)) {
        fail(ErrorCategory::config, "temperature must be >= 0");
    }
    for (auto kind : kAllPromptKinds) {
        auto it = max_tokens.find(kind);
        if (it == max_tokens.end() || it->second <= 0) {
            fail(ErrorCategory::config, "max_tokens for " +
                                                std::string(prompt_kind_name(kind)) +
                                                " must be positive");
        }
    }
}

// ---------------------------------------------------------------------------
// CallLog / trace serialization
// ---------------------------------------------------------------------------

std::string_view CallLog::component_name(Component c) noexcept {
    switch (c) {
        case answer_no_retrieval: return "generate.answer_no_retrieval";
        case answer_with_retrieval: return "generate.answer_with_retrieval";
        case pseudo_context: return "generate.pseudo_context";
        case cot: return "generate.cot";
        case judge: return "generate.judge";
        case embed: return "embed";
        case search: return "search";
        case kCount: break;
    }
    return "unknown";
}

std::vector<std::pair<std::string, std::size_t>> CallLog::entries() const {
    std::vector<std::pair<std::string, std::size_t>> out;
    for (std::size_t c = 0; c < kCount; ++c) {
        out.emplace_back(component_name(static_cast<Component>(c)), counts_[c]);
    }
    return out;
}

json to_json(const QueryTrace& t) {
    json j;
    j["query_id"] = t.query_id;
    j["mode"] = t.mode.name();
    j["parametric_answer"] = opt(t.parametric_answer);
    j["u"] = t.u ? json{{"value", t.u->value}, {"token_count", t.u->token_count}} : json(nullptr);
    j["triggered"] = t.triggered;
    j["judge_output"] = opt(t.judge_output);
    j["pseudo_context"] = opt(t.pseudo_context);
    j["retrieval_text"] = opt(t.retrieval_text);
    j["hits_q"] = hits_to_json(t.hits_q);
    j["hits_p"] = hits_to_json(t.hits_p);
    if (t.selection) {
        json cands = json::array();
        for (const auto& c : t.selection->candidates) {
            cands.push_back({{"doc_id", c.doc_id}, {"s1", c.s1}, {"s2", c.s2}, {"joint", c.joint}});
        }
        json selected = json::array();
        for (const auto& c : t.selection->selected) {
            selected.push_back(c.id);
        }
        j["selection"] = {{"candidates", cands},
                          {"selected", selected},
                          {"theta0", t.selection->theta0}};
    } else {
        j["selection"] = nullptr;
    }
    j["passage_ids"] = t.passage_ids;
    j["final_answer"] = t.final_answer;
    json log = json::array();
    for (const auto& [name, count] : t.call_log.entries()) {
        log.push_back(json::array({name, count}));
    }
    j["call_log"] = log;
    j["flags"] = t.flags;
    j["error"] = t.error ? json{{"category", category_name(t.error->category)},
                                {"message", t.error->message}}
                         : json(nullptr);
    return j;
}

QueryTrace trace_from_json(const json& j) {
    auto opt_string = [&](const char* key) -> std::optional<std::string> {
        if (!j.contains(key) || j[key].is_null()) {
            return std::nullopt;
        }
        return j[key].get<std::string>();
    };
    QueryTrace t;
    try {
        t.query_id = j.at("query_id").get<std::string>();
        t.mode = PipelineMode::parse(j.at("mode").get<std::string>());
        t.parametric_answer = opt_string("parametric_answer");
        if (j.contains("u") && !j["u"].is_null()) {
            t.u = UncertaintyScore{j["u"].at("value").get<double>(),
                                   j["u"].at("token_count").get<std::size_t>()};
        }
        t.triggered = j.at("triggered").get<bool>();
        t.judge_output = opt_string("judge_output");
        t.pseudo_context = opt_string("pseudo_context");
        t.retrieval_text = opt_string("retrieval_text");
        t.hits_q = hits_from_json(j.value("hits_q", json::array()));
        t.hits_p = hits_from_json(j.value("hits_p", json::array()));
        if (j.contains("selection") && !j["selection"].is_null()) {
            SelectionResult sel;
            for (const auto& c : j["selection"].at("candidates")) {
                sel.candidates.push_back({c.at("doc_id").get<std::string>(), c.at("s1").get<double>(),
                                          c.at("s2").get<double>(), c.at("joint").get<double>()});
            }
            for (const auto& id : j["selection"].at("selected")) {
                sel.selected.push_back({id.get<std::string>(), "", ""});
            }
            sel.theta0 = j["selection"].value("theta0", 0.0);
            sel.hits_q = t.hits_q;
            sel.hits_p = t.hits_p;
            t.selection = std::move(sel);
        }
        t.passage_ids = j.value("passage_ids", std::vector<std::string>{});
        t.final_answer = j.at("final_answer").get<std::string>();
        for (const auto& e : j.value("call_log", json::array())) {
            const auto name = e.at(0).get<std::string>();
            for (std::size_t c = 0; c < CallLog::kCount; ++c) {
                if (CallLog::component_name(static_cast<CallLog::Component>(c)) == name) {
                    t.call_log.add(static_cast<CallLog::Component>(c), e.at(1).get<std::size_t>());
                }
            }
        }
        t.flags = j.value("flags", std::vector<std::string>{});
        if (j.contains("error") && !j["error"].is_null()) {
            t.error = TraceError{category_from_name(j["error"].at("category").get<std::string>()),
                                 j["error"].at("message").get<std::string>()};
        }
    } catch (const json::exception& e) {
        fail(ErrorCategory::parse, std::string("malformed trace record: ") + e.what());
    }
    return t;
}

std::string serialize_traces(const std::vector<QueryTrace>& traces) {
    std::string out;
    for (const auto& t : traces) {
        out += to_json(t).dump();
        out += '\n';
    }
    return out;
}

std::vector<QueryTrace> load_traces(const std::filesystem::path& path) {
    std::vector<QueryTrace> traces;
    const auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (is_blank(lines[i])) {
            continue;
        }
        try {
            traces.push_back(trace_from_json(json::parse(lines[i])));
        } catch (const json::parse_error& e) {
            fail(ErrorCategory::parse, path.string() + " line " + std::to_string(i + 1) + ": " +
                                               e.what());
        }
    }
    return traces;
}

// ---------------------------------------------------------------------------
// Selection helpers
// ---------------------------------------------------------------------------

std::vector<std::string> fixed_mix_select(const std::vector<Hit>& hits_q,
                                          const std::vector<Hit>& hits_p, std::size_t q_count,
                                          std::size_t p_count) {
    const std::size_t k = q_count + p_count;
    std::vector<std::string> out;
    std::unordered_set<std::string> taken;
    auto take = [&](const Hit& h) {
        if (out.size() < k && taken.insert(h.doc_id).second) {
            out.push_back(h.doc_id);
        }
    };
    const std::size_t qa = std::min(q_count, hits_q.size());
    const std::size_t pb = std::min(p_count, hits_p.size());
    for (std::size_t i = 0; i < qa; ++i) take(hits_q[i]);
    for (std::size_t i = 0; i < pb; ++i) take(hits_p[i]);
    for (std::size_t i = qa; i < hits_q.size(); ++i) take(hits_q[i]);
    for (std::size_t i = pb; i < hits_p.size(); ++i) take(hits_p[i]);
    return out;
}

std::optional<bool> parse_judge(std::string_view output) {
    std::size_t i = 0;
    while (i < output.size() && !std::isalpha(static_cast<unsigned char>(output[i]))) {
        ++i;
    }
    std::string word;
    while (i < output.size() && std::isalpha(static_cast<unsigned char>(output[i]))) {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(output[i]))));
        ++i;
    }
    if (word == "yes") return true;
    if (word == "no") return false;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace {

// State for answering one query. Owned by a single worker.
class QueryRun {
public:
    QueryRun(const RunConfig& cfg, const PipelineContext& ctx, const QueryItem& query,
             const PipelineMode& mode)
            : cfg_(cfg), ctx_(ctx), query_(query) {
        trace_.query_id = query.id;
        trace_.mode = mode;
    }

    QueryTrace run() {
        try {
            dispatch();
        } catch (const Error& e) {
            trace_.error = TraceError{e.category(), e.what()};
            trace_.final_answer.clear();
        } catch (const std::exception& e) {
            trace_.error = TraceError{ErrorCategory::io, e.what()};
            trace_.final_answer.clear();
        }
        return std::move(trace_);
    }

private:
    void dispatch() {
        switch (trace_.mode.kind) {
            case Kind::no_retrieval: parametric(); return;
            case Kind::standard_rag: standard_rag(); return;
            case Kind::llm_judge: llm_judge(); return;
            case Kind::hyde: hyde(); return;
            case Kind::q2d: expanded(PromptKind::pseudo_context, CallLog::pseudo_context); return;
            case Kind::cot: expanded(PromptKind::cot, CallLog::cot); return;
            case Kind::dtr:
            case Kind::dtr_no_ugt:
            case Kind::dtr_no_dpr:
            case Kind::fixed_mix: gated(); return;
        }
    }

    GenerationResult generate(PromptKind kind, CallLog::Component component, std::string prompt,
                              bool want_logprobs) {
        trace_.call_log.add(component);
        GenerationRequest req;
        req.prompt = std::move(prompt);
        req.max_tokens = cfg_.max_tokens.at(kind);
        req.temperature = cfg_.temperature;
        req.want_logprobs = want_logprobs;
        return ctx_.generator.generate(req);
    }

    std::vector<UnitVector> embed(std::vector<std::string> texts) {
        trace_.call_log.add(CallLog::embed, texts.size());
        return embed_texts(texts, ctx_.embedder, ctx_.embed_cache, cfg_.embed);
    }

    std::vector<Hit> search(const UnitVector& v, std::size_t n) {
        trace_.call_log.add(CallLog::search);
        return ctx_.index.search(v, n);
    }

    // Parametric answer plus its uncertainty; returns false when logprobs are
    // missing (the query is then treated as maximally uncertain).
    bool parametric() {
        auto result = generate(PromptKind::answer_no_retrieval, CallLog::answer_no_retrieval,
                               render_prompt(PromptKind::answer_no_retrieval, query_.question),
                               true);
        trace_.parametric_answer = result.text;
        trace_.final_answer = result.text;
        trace_.triggered = false;
        if (result.token_logprobs.empty()) {
            trace_.flags.emplace_back("no_logprobs");
            return false;
        }
        trace_.u = uncertainty(result);
        return true;
    }

    void answer_with(const std::vector<std::string>& ids) {
        std::vector<DocChunk> passages;
        passages.reserve(ids.size());
        for (const auto& id : ids) {
            passages.push_back(ctx_.chunks.at(id));
        }
        trace_.passage_ids = ids;
        auto result = generate(PromptKind::answer_with_retrieval, CallLog::answer_with_retrieval,
                               render_prompt(PromptKind::answer_with_retrieval, query_.question,
                                             std::span<const DocChunk>(passages)),
                               false);
        trace_.final_answer = result.text;
    }

    static std::vector<std::string> ids_of(const std::vector<Hit>& hits) {
        std::vector<std::string> ids;
        ids.reserve(hits.size());
        for (const auto& h : hits) ids.push_back(h.doc_id);
        return ids;
    }

    void query_only(std::size_t k) {
        trace_.triggered = true;
        auto qv = embed({query_.question});
        trace_.hits_q = search(qv[0], k);
        answer_with(ids_of(trace_.hits_q));
    }

    void standard_rag() { query_only(cfg_.k_final); }

    void llm_judge() {
        auto out = generate(PromptKind::judge, CallLog::judge,
                            render_prompt(PromptKind::judge, query_.question), false);
        trace_.judge_output = out.text;
        auto verdict = parse_judge(out.text);
        if (!verdict) {
            trace_.flags.emplace_back("judge_unparsed");
        }
        if (verdict.value_or(true)) {
            standard_rag();
        } else {
            parametric();
        }
    }

    std::string pseudo_context() {
        auto out = generate(PromptKind::pseudo_context, CallLog::pseudo_context,
                            render_prompt(PromptKind::pseudo_context, query_.question), false);
        trace_.pseudo_context = out.text;
        return out.text;
    }

    void hyde() {
        trace_.triggered = true;
        auto p = pseudo_context();
        if (is_blank(p)) {
            trace_.flags.emplace_back("empty_pseudo_context");
            query_only(cfg_.k_final);
            return;
        }
        auto pv = embed({p});
        trace_.hits_p = search(pv[0], cfg_.k_final);
        answer_with(ids_of(trace_.hits_p));
    }

    void expanded(PromptKind kind, CallLog::Component component) {
        trace_.triggered = true;
        auto out = generate(kind, component, render_prompt(kind, query_.question), false);
        trace_.pseudo_context = out.text;
        trace_.retrieval_text = query_.question + "\n" + out.text;
        auto v = embed({*trace_.retrieval_text});
        trace_.hits_q = search(v[0], cfg_.k_final);
        answer_with(ids_of(trace_.hits_q));
    }

    void gated() {
        const bool scored = parametric();
        const auto kind = trace_.mode.kind;
        bool retrieve = true;
        if (kind != Kind::dtr_no_ugt && scored) {
            retrieve = decide(*trace_.u, cfg_.u_threshold).retrieve;
        }
        if (!retrieve) {
            return;
        }
        trace_.triggered = true;
        if (kind == Kind::dtr_no_dpr) {
            query_only(cfg_.k_final);
            return;
        }
        auto p = pseudo_context();
        if (is_blank(p)) {
            trace_.flags.emplace_back("empty_pseudo_context");
            query_only(cfg_.k_final);
            return;
        }
        auto vecs = embed({query_.question, p});
        trace_.hits_q = search(vecs[0], cfg_.n_per_path);
        trace_.hits_p = search(vecs[1], cfg_.n_per_path);
        if (kind == Kind::fixed_mix) {
            answer_with(fixed_mix_select(trace_.hits_q, trace_.hits_p, trace_.mode.q_count,
                                         trace_.mode.p_count));
            return;
        }
        auto sel = select(ctx_.chunks, trace_.hits_q, trace_.hits_p, vecs[0], vecs[1],
                          cfg_.k_final, ctx_.index);
        std::vector<std::string> ids;
        for (const auto& c : sel.selected) ids.push_back(c.id);
        trace_.selection = std::move(sel);
        answer_with(ids);
    }

    const RunConfig& cfg_;
    const PipelineContext& ctx_;
    const QueryItem& query_;
    QueryTrace trace_;
};

} // namespace

Pipeline::Pipeline(RunConfig config, PipelineContext context)
        : config_(std::move(config)), ctx_(context) {
    config_.validate();
}

QueryTrace Pipeline::run_query(const QueryItem& query) const {
    return run_query(query, config_.mode);
}

QueryTrace Pipeline::run_query(const QueryItem& query, const PipelineMode& mode) const {
    if (mode != config_.mode) {
        RunConfig cfg = config_;
        cfg.mode = mode;
        cfg.validate();
    }
    return QueryRun(config_, ctx_, query, mode).run();
}

std::vector<QueryTrace> Pipeline::run_batch(const std::vector<QueryItem>& queries) const {
    return run_batch(queries, config_.mode);
}

std::vector<QueryTrace> Pipeline::run_batch(const std::vector<QueryItem>& queries,
                                            const PipelineMode& mode) const {
    if (mode != config_.mode) {
        RunConfig cfg = config_;
        cfg.mode = mode;
        cfg.validate();
    }
    std::vector<QueryTrace> traces(queries.size());
    const auto n = static_cast<std::int64_t>(queries.size());
    const int width = static_cast<int>(config_.width == 0 ? 1 : config_.width);
#pragma omp parallel for schedule(dynamic, 1) num_threads(width) if (width > 1)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        traces[idx] = QueryRun(config_, ctx_, queries[idx], mode).run();
    }
    return traces;
}

} // namespace dtr
