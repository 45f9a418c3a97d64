#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dtr/http.hpp"
#include "dtr/unit_vector.hpp"

namespace dtr {

// The encoder f(.). Implementations return raw vectors; callers renormalize.
class Embedder {
public:
    virtual ~Embedder() = default;

    virtual std::string id() const = 0;

    std::vector<std::vector<float>> embed(std::span<const std::string> texts) {
        calls_.fetch_add(1, std::memory_order_relaxed);
        return do_embed(texts);
    }

    // Number of embed() invocations (batches), not texts.
    std::size_t call_count() const noexcept { return calls_.load(); }

protected:
    virtual std::vector<std::vector<float>> do_embed(std::span<const std::string> texts) = 0;

private:
    std::atomic<std::size_t> calls_{0};
};

// Offline bag-of-words feature hashing. Deterministic across runs and
// platforms; good enough for smoke tests and mock pipelines.
class HashingEmbedder final : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dimension = 256);
    std::string id() const override;

protected:
    std::vector<std::vector<float>> do_embed(std::span<const std::string> texts) override;

private:
    std::size_t dimension_;
};

// Exact text -> vector table. Unknown text is an embedding error.
class ScriptedEmbedder final : public Embedder {
public:
    explicit ScriptedEmbedder(std::string id = "scripted") : id_(std::move(id)) {}

    // JSONL records {"text": ..., "vector": [...]}.
    static std::unique_ptr<ScriptedEmbedder> load(const std::filesystem::path& path,
                                                  std::string id = "scripted");

    void add(std::string text, std::vector<float> vector);
    std::string id() const override { return id_; }

protected:
    std::vector<std::vector<float>> do_embed(std::span<const std::string> texts) override;

private:
    std::string id_;
    std::unordered_map<std::string, std::vector<float>> table_;
};

// OpenAI-compatible /embeddings: {model, input:[...]} -> {data:[{embedding}]}.
class HttpEmbedder final : public Embedder {
public:
    HttpEmbedder(HttpEndpoint endpoint, std::string model);
    std::string id() const override { return "http:" + model_; }

protected:
    std::vector<std::vector<float>> do_embed(std::span<const std::string> texts) override;

private:
    JsonHttpClient client_;
    std::string model_;
};

// Content-addressed vector cache. With a backing file, entries are appended as
// [u32 key_len][key][u32 dim][dim x f32 little-endian] and the in-memory index
// is rebuilt on open. A truncated trailing record is ignored.
class EmbeddingCache {
public:
    EmbeddingCache() = default;
    explicit EmbeddingCache(const std::filesystem::path& file);

    EmbeddingCache(const EmbeddingCache&) = delete;
    EmbeddingCache& operator=(const EmbeddingCache&) = delete;

    static std::string key_for(std::string_view embedder_id, std::string_view text);

    std::optional<UnitVector> get(const std::string& key) const;
    void put(const std::string& key, const UnitVector& vector);
    std::size_t size() const;

private:
    mutable std::shared_mutex mu_;
    std::unordered_map<std::string, UnitVector> entries_;
    std::optional<std::ofstream> out_;
};

struct EmbedOptions {
    std::size_t batch_size = 32;
    std::size_t max_in_flight = 4;
    int retries = 2;
};

// f(text) for each text, renormalized locally. Cached texts never reach the
// embedder; identical texts in one call are embedded once.
std::vector<UnitVector> embed_texts(std::span<const std::string> texts,
                                    Embedder& embedder,
                                    EmbeddingCache* cache,
                                    const EmbedOptions& options = {});

} // namespace dtr
