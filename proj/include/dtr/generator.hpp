#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dtr/corpus.hpp"
#include "dtr/http.hpp"

namespace dtr {

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

enum class PromptKind {
    answer_no_retrieval,
    answer_with_retrieval,
    pseudo_context,
    cot,
    judge,
};

std::string_view prompt_kind_name(PromptKind kind) noexcept;
PromptKind parse_prompt_kind(std::string_view name);
inline constexpr PromptKind kAllPromptKinds[] = {
        PromptKind::answer_no_retrieval, PromptKind::answer_with_retrieval,
        PromptKind::pseudo_context, PromptKind::cot, PromptKind::judge};

struct PromptTemplate {
    PromptKind kind;
    std::string_view body;  // placeholders: {question}, {passages}
};

const PromptTemplate& prompt_template(PromptKind kind) noexcept;

// Passages are required for answer_with_retrieval and rejected for every other
// kind (Error(template_error)). Passages render in the given order, one block
// each, separated by newlines.
std::string render_prompt(PromptKind kind, std::string_view question,
                          std::optional<std::span<const DocChunk>> passages = std::nullopt);

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct GenerationRequest {
    std::string prompt;
    int max_tokens = 64;
    double temperature = 0.0;
    bool want_logprobs = true;
};

struct TokenLogprob {
    std::string token;
    double logprob = 0.0;  // natural log, <= 0

    friend bool operator==(const TokenLogprob&, const TokenLogprob&) = default;
};

enum class FinishReason { stop, length, error };

std::string_view finish_reason_name(FinishReason r) noexcept;
FinishReason parse_finish_reason(std::string_view name);

struct GenerationResult {
    std::string text;
    std::vector<TokenLogprob> token_logprobs;
    FinishReason finish_reason = FinishReason::stop;

    friend bool operator==(const GenerationResult&, const GenerationResult&) = default;
};

nlohmann::json to_json(const GenerationResult& r);
GenerationResult generation_result_from_json(const nlohmann::json& j);

// Text generation backend.
class Generator {
public:
    virtual ~Generator() = default;

    virtual std::string id() const = 0;

    // Validates the request, then forwards to the backend.
    GenerationResult generate(const GenerationRequest& request);

    // generate() invocations on this object.
    std::size_t call_count() const noexcept { return calls_.load(); }

protected:
    virtual GenerationResult do_generate(const GenerationRequest& request) = 0;

private:
    std::atomic<std::size_t> calls_{0};
};

// Deterministic offline backend. Lookup order: exact prompt, prompt SHA-256,
// then "contains all" rules in insertion order, then the fallback hook.
// Anything else is Error(scripted_miss) naming the prompt hash.
class MockGenerator final : public Generator {
public:
    using Fallback = std::function<std::optional<GenerationResult>(const std::string& prompt)>;

    explicit MockGenerator(std::string id = "mock") : id_(std::move(id)) {}

    // JSONL: one of "prompt" | "prompt_sha256" | "contains" (list), plus
    // "text", optional "tokens", "logprobs", "finish_reason".
    static std::unique_ptr<MockGenerator> load(const std::filesystem::path& path,
                                               std::string id = "mock");

    void script_exact(std::string prompt, GenerationResult result);
    void script_hash(std::string sha256_hex, GenerationResult result);
    void script_contains(std::vector<std::string> needles, GenerationResult result);
    void set_fallback(Fallback fallback) { fallback_ = std::move(fallback); }

    std::string id() const override { return id_; }

protected:
    GenerationResult do_generate(const GenerationRequest& request) override;

private:
    std::string id_;
    std::unordered_map<std::string, GenerationResult> exact_;
    std::unordered_map<std::string, GenerationResult> by_hash_;
    std::vector<std::pair<std::vector<std::string>, GenerationResult>> contains_;
    Fallback fallback_;
};

// Convenience for scripting: one token carrying the whole text.
GenerationResult scripted(std::string text, std::vector<double> logprobs);

enum class OpenAiApi { completions, chat };

struct OpenAiGeneratorConfig {
    HttpEndpoint endpoint;
    std::string model;
    OpenAiApi api = OpenAiApi::completions;
    bool logprobs_base10 = false;  // convert to natural log at the gateway
};

// OpenAI-compatible completions / chat-completions with logprobs.
// A trailing end-of-sequence token reported by the backend is dropped.
class OpenAiGenerator final : public Generator {
public:
    explicit OpenAiGenerator(OpenAiGeneratorConfig config);

    std::string id() const override;

protected:
    GenerationResult do_generate(const GenerationRequest& request) override;

private:
    OpenAiGeneratorConfig config_;
    JsonHttpClient client_;
};

// Parses an OpenAI-style response body; exposed for fixture replay tests.
GenerationResult parse_openai_response(const nlohmann::json& body, OpenAiApi api,
                                       bool logprobs_base10 = false);

// (backend id, prompt, max_tokens, temperature) -> result. Optionally
// persisted as append-only JSONL.
class GenerationCache {
public:
    GenerationCache() = default;
    explicit GenerationCache(const std::filesystem::path& file);

    GenerationCache(const GenerationCache&) = delete;
    GenerationCache& operator=(const GenerationCache&) = delete;

    static std::string key_for(std::string_view backend_id, const GenerationRequest& request);

    std::optional<GenerationResult> get(const std::string& key) const;
    void put(const std::string& key, const GenerationResult& result);
    std::size_t size() const;

private:
    mutable std::shared_mutex mu_;
    std::unordered_map<std::string, GenerationResult> entries_;
    std::optional<std::ofstream> out_;
};

// Cache-fronted generator. Reports the inner backend's id so cache keys and
// traces are stable whether or not caching is on.
class CachingGenerator final : public Generator {
public:
    CachingGenerator(Generator& inner, GenerationCache& cache) : inner_(inner), cache_(cache) {}

    std::string id() const override { return inner_.id(); }

protected:
    GenerationResult do_generate(const GenerationRequest& request) override;

private:
    Generator& inner_;
    GenerationCache& cache_;
};

} // namespace dtr
