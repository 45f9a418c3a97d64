#include "dtr/generator.hpp"

#include <array>
#include <cmath>
#include <mutex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dtr/error.hpp"
#include "dtr/util.hpp"

namespace dtr {

using nlohmann::json;

namespace {

constexpr std::array<PromptTemplate, 5> kTemplates{{
        {PromptKind::answer_no_retrieval,
         "{question}\nAnswer the question using a single word or phrase."},
        {PromptKind::answer_with_retrieval,
         "{question}\n{passages}\nAnswer the question based on the above context using a "
         "single word or phrase."},
        {PromptKind::pseudo_context, "{question}\nWrite a passage to answer this question."},
        {PromptKind::cot,
         "Answer the following question:\n{question}\nGive the rationale before answering"},
        {PromptKind::judge,
         "{question}\nDetermine whether external information is needed to answer the "
         "question accurately.\nRespond with \"Yes\" if additional information is required, "
         "or \"No\" if the question can be answered without it."},
}};

std::string render_passage(const DocChunk& chunk) {
    if (chunk.title.empty()) {
        return chunk.text;
    }
    return chunk.title + "\n" + chunk.text;
}

// Single pass over the template body; substituted text is never rescanned.
std::string substitute(std::string_view body, std::string_view question,
                       const std::string* passages) {
    std::string out;
    std::size_t pos = 0;
    while (pos < body.size()) {
        const auto open = body.find('{', pos);
        if (open == std::string_view::npos) {
            out.append(body.substr(pos));
            break;
        }
        out.append(body.substr(pos, open - pos));
        const auto close = body.find('}', open);
        if (close == std::string_view::npos) {
            fail(ErrorCategory::template_error, "unterminated placeholder in template");
        }
        const auto name = body.substr(open + 1, close - open - 1);
        if (name == "question") {
            out.append(question);
        } else if (name == "passages" && passages) {
            out.append(*passages);
        } else {
            fail(ErrorCategory::template_error,
                 "unresolved placeholder {" + std::string(name) + "}");
        }
        pos = close + 1;
    }
    return out;
}

constexpr std::array<std::string_view, 7> kEndOfSequence{
        "<|endoftext|>", "<|im_end|>", "</s>", "<|eot_id|>", "<|end|>", "<eos>", "<|end_of_text|>"};

bool is_eos_token(std::string_view t) {
    for (auto e : kEndOfSequence) {
        if (t == e) {
            return true;
        }
    }
    return false;
}

double checked_logprob(const json& v, bool base10) {
    if (!v.is_number()) {
        fail(ErrorCategory::generation, "missing or non-numeric token logprob");
    }
    double lp = v.get<double>();
    if (base10) {
        lp *= std::log(10.0);
    }
    if (!(lp <= 0.0)) {
        fail(ErrorCategory::generation, "backend returned a positive or NaN logprob");
    }
    return lp;
}

} // namespace

std::string_view prompt_kind_name(PromptKind kind) noexcept {
    switch (kind) {
        case PromptKind::answer_no_retrieval: return "answer_no_retrieval";
        case PromptKind::answer_with_retrieval: return "answer_with_retrieval";
        case PromptKind::pseudo_context: return "pseudo_context";
        case PromptKind::cot: return "cot";
        case PromptKind::judge: return "judge";
    }
    return "unknown";
}

PromptKind parse_prompt_kind(std::string_view name) {
    for (auto k : kAllPromptKinds) {
        if (prompt_kind_name(k) == name) {
            return k;
        }
    }
    fail(ErrorCategory::config, "unknown prompt kind '" + std::string(name) + "'");
}

const PromptTemplate& prompt_template(PromptKind kind) noexcept {
    return kTemplates[static_cast<std::size_t>(kind)];
}

std::string render_prompt(PromptKind kind, std::string_view question,
                          std::optional<std::span<const DocChunk>> passages) {
    if (is_blank(question)) {
        fail(ErrorCategory::template_error, "question is empty");
    }
    const bool needs_passages = kind == PromptKind::answer_with_retrieval;
    if (needs_passages && (!passages || passages->empty())) {
        fail(ErrorCategory::template_error, "answer_with_retrieval requires at least one passage");
    }
    if (!needs_passages && passages) {
        fail(ErrorCategory::template_error,
             std::string(prompt_kind_name(kind)) + " does not take passages");
    }
    std::optional<std::string> block;
    if (passages) {
        block.emplace();
        for (std::size_t i = 0; i < passages->size(); ++i) {
            if (i > 0) {
                block->push_back('\n');
            }
            block->append(render_passage((*passages)[i]));
        }
    }
    return substitute(prompt_template(kind).body, question, block ? &*block : nullptr);
}

std::string_view finish_reason_name(FinishReason r) noexcept {
    switch (r) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::error: return "error";
    }
    return "error";
}

FinishReason parse_finish_reason(std::string_view name) {
    if (name == "stop" || name == "eos" || name == "stop_sequence") return FinishReason::stop;
    if (name == "length" || name == "max_tokens") return FinishReason::length;
    return FinishReason::error;
}

json to_json(const GenerationResult& r) {
    json tokens = json::array();
    json logprobs = json::array();
    for (const auto& t : r.token_logprobs) {
        tokens.push_back(t.token);
        logprobs.push_back(t.logprob);
    }
    return json{{"text", r.text},
                {"tokens", tokens},
                {"logprobs", logprobs},
                {"finish_reason", finish_reason_name(r.finish_reason)}};
}

GenerationResult generation_result_from_json(const json& j) {
    GenerationResult r;
    r.text = j.at("text").get<std::string>();
    const auto logprobs = j.value("logprobs", std::vector<double>{});
    auto tokens = j.value("tokens", std::vector<std::string>{});
    if (tokens.empty() && logprobs.size() == 1) {
        tokens.push_back(r.text);
    }
    tokens.resize(logprobs.size());
    for (std::size_t i = 0; i < logprobs.size(); ++i) {
        if (!(logprobs[i] <= 0.0)) {
            fail(ErrorCategory::parse, "scripted logprob must be <= 0");
        }
        r.token_logprobs.push_back({tokens[i], logprobs[i]});
    }
    r.finish_reason = parse_finish_reason(j.value("finish_reason", std::string("stop")));
    return r;
}

GenerationResult Generator::generate(const GenerationRequest& request) {
    if (request.prompt.empty()) {
        fail(ErrorCategory::contract, "generation prompt is empty");
    }
    if (!(request.temperature >= 0.0)) {
        fail(ErrorCategory::contract, "temperature must be >= 0");
    }
    if (request.max_tokens <= 0) {
        fail(ErrorCategory::contract, "max_tokens must be positive");
    }
    calls_.fetch_add(1, std::memory_order_relaxed);
    return do_generate(request);
}

GenerationResult scripted(std::string text, std::vector<double> logprobs) {
    GenerationResult r;
    for (std::size_t i = 0; i < logprobs.size(); ++i) {
        r.token_logprobs.push_back({i == 0 ? text : std::string(), logprobs[i]});
    }
    r.text = std::move(text);
    return r;
}

std::unique_ptr<MockGenerator> MockGenerator::load(const std::filesystem::path& path,
                                                   std::string id) {
    auto gen = std::make_unique<MockGenerator>(std::move(id));
    const auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (is_blank(lines[i])) {
            continue;
        }
        const std::string where = path.string() + " line " + std::to_string(i + 1);
        try {
            auto j = json::parse(lines[i]);
            auto result = generation_result_from_json(j);
            if (j.contains("prompt")) {
                gen->script_exact(j["prompt"].get<std::string>(), std::move(result));
            } else if (j.contains("prompt_sha256")) {
                gen->script_hash(j["prompt_sha256"].get<std::string>(), std::move(result));
            } else if (j.contains("contains")) {
                auto needles = j["contains"].is_string()
                                       ? std::vector<std::string>{j["contains"].get<std::string>()}
                                       : j["contains"].get<std::vector<std::string>>();
                gen->script_contains(std::move(needles), std::move(result));
            } else {
                fail(ErrorCategory::parse, where + ": record needs prompt, prompt_sha256 or contains");
            }
        } catch (const json::exception& e) {
            fail(ErrorCategory::parse, where + ": " + e.what());
        } catch (const Error& e) {
            fail(ErrorCategory::parse, where + ": " + e.what());
        }
    }
    return gen;
}

void MockGenerator::script_exact(std::string prompt, GenerationResult result) {
    exact_.insert_or_assign(std::move(prompt), std::move(result));
}

void MockGenerator::script_hash(std::string sha256_hex, GenerationResult result) {
    by_hash_.insert_or_assign(std::move(sha256_hex), std::move(result));
}

void MockGenerator::script_contains(std::vector<std::string> needles, GenerationResult result) {
    contains_.emplace_back(std::move(needles), std::move(result));
}

GenerationResult MockGenerator::do_generate(const GenerationRequest& request) {
    const auto& prompt = request.prompt;
    if (auto it = exact_.find(prompt); it != exact_.end()) {
        return it->second;
    }
    const auto hash = sha256_hex(prompt);
    if (auto it = by_hash_.find(hash); it != by_hash_.end()) {
        return it->second;
    }
    for (const auto& [needles, result] : contains_) {
        bool all = true;
        for (const auto& n : needles) {
            if (prompt.find(n) == std::string::npos) {
                all = false;
                break;
            }
        }
        if (all) {
            return result;
        }
    }
    if (fallback_) {
        if (auto r = fallback_(prompt)) {
            return *r;
        }
    }
    fail(ErrorCategory::scripted_miss, "no scripted response for prompt sha256:" + hash);
}

OpenAiGenerator::OpenAiGenerator(OpenAiGeneratorConfig config)
        : config_(std::move(config)), client_(config_.endpoint, ErrorCategory::generation) {
    if (config_.model.empty()) {
        fail(ErrorCategory::config, "generator model name is empty");
    }
}

std::string OpenAiGenerator::id() const {
    return std::string(config_.api == OpenAiApi::chat ? "openai-chat:" : "openai:") +
           config_.model;
}

GenerationResult parse_openai_response(const json& body, OpenAiApi api, bool logprobs_base10) {
    GenerationResult r;
    try {
        const auto& choice = body.at("choices").at(0);
        if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
            r.finish_reason = parse_finish_reason(choice["finish_reason"].get<std::string>());
        }
        const json* lp = choice.contains("logprobs") && !choice["logprobs"].is_null()
                                 ? &choice["logprobs"]
                                 : nullptr;
        if (api == OpenAiApi::chat) {
            const auto& content = choice.at("message").at("content");
            r.text = content.is_null() ? std::string() : content.get<std::string>();
            if (lp && lp->contains("content") && (*lp)["content"].is_array()) {
                for (const auto& t : (*lp)["content"]) {
                    r.token_logprobs.push_back({t.at("token").get<std::string>(),
                                                checked_logprob(t.at("logprob"), logprobs_base10)});
                }
            }
        } else {
            r.text = choice.at("text").get<std::string>();
            if (lp && lp->contains("token_logprobs")) {
                const auto& tokens = lp->at("tokens");
                const auto& values = (*lp)["token_logprobs"];
                if (tokens.size() != values.size()) {
                    fail(ErrorCategory::generation, "tokens/token_logprobs length mismatch");
                }
                for (std::size_t i = 0; i < values.size(); ++i) {
                    r.token_logprobs.push_back({tokens[i].get<std::string>(),
                                                checked_logprob(values[i], logprobs_base10)});
                }
            }
        }
    } catch (const json::exception& e) {
        fail(ErrorCategory::generation, std::string("malformed completion response: ") + e.what());
    }
    if (!r.token_logprobs.empty() && is_eos_token(r.token_logprobs.back().token)) {
        r.token_logprobs.pop_back();
    }
    return r;
}

GenerationResult OpenAiGenerator::do_generate(const GenerationRequest& request) {
    json body{{"model", config_.model},
              {"max_tokens", request.max_tokens},
              {"temperature", request.temperature}};
    if (config_.api == OpenAiApi::chat) {
        body["messages"] = json::array({json{{"role", "user"}, {"content", request.prompt}}});
        if (request.want_logprobs) {
            body["logprobs"] = true;
        }
        return parse_openai_response(client_.post("/chat/completions", body), config_.api,
                                     config_.logprobs_base10);
    }
    body["prompt"] = request.prompt;
    if (request.want_logprobs) {
        body["logprobs"] = 1;
    }
    return parse_openai_response(client_.post("/completions", body), config_.api,
                                 config_.logprobs_base10);
}

GenerationCache::GenerationCache(const std::filesystem::path& file) {
    if (file.has_parent_path()) {
        std::filesystem::create_directories(file.parent_path());
    }
    if (std::filesystem::exists(file)) {
        for (const auto& line : read_lines(file)) {
            if (is_blank(line)) {
                continue;
            }
            try {
                auto j = json::parse(line);
                entries_.insert_or_assign(j.at("key").get<std::string>(),
                                          generation_result_from_json(j.at("result")));
            } catch (const json::exception&) {
                // torn final line from an interrupted run
            }
        }
    }
    out_.emplace(file, std::ios::binary | std::ios::app);
    if (!*out_) {
        fail(ErrorCategory::io, "cannot open generation cache " + file.string());
    }
}

std::string GenerationCache::key_for(std::string_view backend_id, const GenerationRequest& request) {
    std::ostringstream payload;
    payload.precision(17);
    payload << request.prompt << '\0' << request.max_tokens << '\0' << request.temperature
            << '\0' << (request.want_logprobs ? 1 : 0);
    return content_key(backend_id, payload.str());
}

std::optional<GenerationResult> GenerationCache::get(const std::string& key) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void GenerationCache::put(const std::string& key, const GenerationResult& result) {
    std::unique_lock lock(mu_);
    if (!entries_.insert_or_assign(key, result).second) {
        return;
    }
    if (out_) {
        *out_ << json{{"key", key}, {"result", to_json(result)}}.dump() << '\n';
        out_->flush();
    }
}

std::size_t GenerationCache::size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
}

GenerationResult CachingGenerator::do_generate(const GenerationRequest& request) {
    const auto key = GenerationCache::key_for(inner_.id(), request);
    if (auto hit = cache_.get(key)) {
        return *hit;
    }
    auto result = inner_.generate(request);
    if (result.finish_reason != FinishReason::error) {
        cache_.put(key, result);
    }
    return result;
}

} // namespace dtr
