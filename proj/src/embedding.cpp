#include "dtr/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <future>
#include <mutex>

#include <nlohmann/json.hpp>

#include "dtr/error.hpp"
#include "dtr/util.hpp"

namespace dtr {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace {

std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

bool is_word_byte(unsigned char c) noexcept {
    return std::isalnum(c) || c >= 0x80;
}

} // namespace

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dimension_(dimension) {
    if (dimension_ == 0) {
        fail(ErrorCategory::config, "hashing embedder dimension must be positive");
    }
}

std::string HashingEmbedder::id() const {
    return "hashing-v1-d" + std::to_string(dimension_);
}

std::vector<std::vector<float>> HashingEmbedder::do_embed(std::span<const std::string> texts) {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        std::vector<float> v(dimension_, 0.0f);
        std::string token;
        auto flush = [&] {
            if (token.empty()) {
                return;
            }
            const auto h = fnv1a(token);
            v[h % dimension_] += (h >> 63) ? -1.0f : 1.0f;
            token.clear();
        };
        for (unsigned char c : text) {
            if (is_word_byte(c)) {
                token.push_back(static_cast<char>(std::tolower(c)));
            } else {
                flush();
            }
        }
        flush();
        // no word tokens, or signed buckets cancelled out
        if (std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; })) {
            v[fnv1a(text) % dimension_] = 1.0f;
        }
        out.push_back(std::move(v));
    }
    return out;
}

std::unique_ptr<ScriptedEmbedder> ScriptedEmbedder::load(const std::filesystem::path& path,
                                                         std::string id) {
    auto emb = std::make_unique<ScriptedEmbedder>(std::move(id));
    const auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (is_blank(lines[i])) {
            continue;
        }
        try {
            auto j = nlohmann::json::parse(lines[i]);
            emb->add(j.at("text").get<std::string>(), j.at("vector").get<std::vector<float>>());
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCategory::parse, path.string() + " line " + std::to_string(i + 1) +
                                               ": " + e.what());
        }
    }
    return emb;
}

void ScriptedEmbedder::add(std::string text, std::vector<float> vector) {
    table_[std::move(text)] = std::move(vector);
}

std::vector<std::vector<float>> ScriptedEmbedder::do_embed(std::span<const std::string> texts) {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        auto it = table_.find(t);
        if (it == table_.end()) {
            fail(ErrorCategory::embedding,
                 "no scripted vector for text sha256:" + sha256_hex(t).substr(0, 16));
        }
        out.push_back(it->second);
    }
    return out;
}

HttpEmbedder::HttpEmbedder(HttpEndpoint endpoint, std::string model)
        : client_(std::move(endpoint), ErrorCategory::embedding), model_(std::move(model)) {}

std::vector<std::vector<float>> HttpEmbedder::do_embed(std::span<const std::string> texts) {
    nlohmann::json body{{"model", model_},
                        {"input", std::vector<std::string>(texts.begin(), texts.end())}};
    auto resp = client_.post("/embeddings", body);
    std::vector<std::vector<float>> out(texts.size());
    try {
        const auto& data = resp.at("data");
        if (data.size() != texts.size()) {
            fail(ErrorCategory::embedding, "embedder returned " + std::to_string(data.size()) +
                                                   " vectors for " +
                                                   std::to_string(texts.size()) + " texts");
        }
        for (std::size_t i = 0; i < data.size(); ++i) {
            const std::size_t slot =
                    data[i].contains("index") ? data[i]["index"].get<std::size_t>() : i;
            if (slot >= out.size()) {
                fail(ErrorCategory::embedding, "embedding index out of range");
            }
            out[slot] = data[i].at("embedding").get<std::vector<float>>();
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCategory::embedding, std::string("malformed embeddings response: ") + e.what());
    }
    return out;
}

EmbeddingCache::EmbeddingCache(const std::filesystem::path& file) {
    if (file.has_parent_path()) {
        std::filesystem::create_directories(file.parent_path());
    }
    std::uintmax_t valid_bytes = 0;
    if (std::filesystem::exists(file)) {
        std::ifstream in(file, std::ios::binary);
        for (;;) {
            std::uint32_t key_len = 0;
            std::uint32_t dim = 0;
            if (!in.read(reinterpret_cast<char*>(&key_len), sizeof key_len)) {
                break;
            }
            std::string key(key_len, '\0');
            if (!in.read(key.data(), key_len) ||
                !in.read(reinterpret_cast<char*>(&dim), sizeof dim)) {
                break;
            }
            std::vector<float> values(dim);
            if (!in.read(reinterpret_cast<char*>(values.data()),
                         static_cast<std::streamsize>(dim * sizeof(float)))) {
                break;
            }
            entries_.insert_or_assign(std::move(key),
                                      UnitVector::from_normalized(std::move(values)));
            valid_bytes += sizeof key_len + key_len + sizeof dim + dim * sizeof(float);
        }
        if (valid_bytes != std::filesystem::file_size(file)) {
            std::filesystem::resize_file(file, valid_bytes);
        }
    }
    out_.emplace(file, std::ios::binary | std::ios::app);
    if (!*out_) {
        fail(ErrorCategory::io, "cannot open embedding cache " + file.string());
    }
}

std::string EmbeddingCache::key_for(std::string_view embedder_id, std::string_view text) {
    return content_key(embedder_id, text);
}

std::optional<UnitVector> EmbeddingCache::get(const std::string& key) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void EmbeddingCache::put(const std::string& key, const UnitVector& vector) {
    std::unique_lock lock(mu_);
    if (!entries_.insert_or_assign(key, vector).second) {
        return;  // overwrite of an existing key; the file already has a record
    }
    if (out_) {
        const auto key_len = static_cast<std::uint32_t>(key.size());
        const auto dim = static_cast<std::uint32_t>(vector.dimension());
        out_->write(reinterpret_cast<const char*>(&key_len), sizeof key_len);
        out_->write(key.data(), key_len);
        out_->write(reinterpret_cast<const char*>(&dim), sizeof dim);
        out_->write(reinterpret_cast<const char*>(vector.values().data()),
                    static_cast<std::streamsize>(dim * sizeof(float)));
        out_->flush();
    }
}

std::size_t EmbeddingCache::size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
}

std::vector<UnitVector> embed_texts(std::span<const std::string> texts,
                                    Embedder& embedder,
                                    EmbeddingCache* cache,
                                    const EmbedOptions& options) {
    std::vector<std::optional<UnitVector>> result(texts.size());
    std::vector<std::string> keys(texts.size());
    const std::string embedder_id = embedder.id();

    // Unique uncached texts, each with the input positions it fills.
    std::vector<std::string> pending;
    std::vector<std::vector<std::size_t>> pending_slots;
    std::unordered_map<std::string, std::size_t> pending_index;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        keys[i] = EmbeddingCache::key_for(embedder_id, texts[i]);
        if (cache) {
            if (auto hit = cache->get(keys[i])) {
                result[i] = std::move(*hit);
                continue;
            }
        }
        auto [it, inserted] = pending_index.emplace(keys[i], pending.size());
        if (inserted) {
            pending.push_back(texts[i]);
            pending_slots.emplace_back();
        }
        pending_slots[it->second].push_back(i);
    }

    const std::size_t batch = options.batch_size == 0 ? 1 : options.batch_size;
    const std::size_t width = options.max_in_flight == 0 ? 1 : options.max_in_flight;
    const std::size_t n_batches = (pending.size() + batch - 1) / batch;

    struct BatchOutcome {
        std::vector<std::vector<float>> raw;
        std::string error;
    };
    auto run_batch = [&](std::size_t b) {
        const std::size_t lo = b * batch;
        const std::size_t hi = std::min(pending.size(), lo + batch);
        std::span<const std::string> slice(pending.data() + lo, hi - lo);
        BatchOutcome outcome;
        for (int attempt = 0; attempt <= options.retries; ++attempt) {
            try {
                outcome.raw = embedder.embed(slice);
                if (outcome.raw.size() != slice.size()) {
                    fail(ErrorCategory::embedding, "embedder returned wrong vector count");
                }
                outcome.error.clear();
                return outcome;
            } catch (const std::exception& e) {
                outcome.error = e.what();
            }
        }
        outcome.raw.clear();
        return outcome;
    };

    std::vector<std::size_t> failed;
    std::string first_error;
    for (std::size_t wave = 0; wave < n_batches; wave += width) {
        std::vector<std::future<BatchOutcome>> futures;
        const std::size_t wave_end = std::min(n_batches, wave + width);
        for (std::size_t b = wave; b < wave_end; ++b) {
            futures.push_back(std::async(width == 1 ? std::launch::deferred : std::launch::async,
                                         run_batch, b));
        }
        for (std::size_t b = wave; b < wave_end; ++b) {
            auto outcome = futures[b - wave].get();
            const std::size_t lo = b * batch;
            if (!outcome.error.empty()) {
                if (first_error.empty()) {
                    first_error = outcome.error;
                }
                const std::size_t hi = std::min(pending.size(), lo + batch);
                for (std::size_t u = lo; u < hi; ++u) {
                    failed.insert(failed.end(), pending_slots[u].begin(), pending_slots[u].end());
                }
                continue;
            }
            for (std::size_t j = 0; j < outcome.raw.size(); ++j) {
                const std::size_t u = lo + j;
                auto vec = UnitVector::normalize(std::span<const float>(outcome.raw[j]));
                if (cache) {
                    cache->put(keys[pending_slots[u].front()], vec);
                }
                for (auto slot : pending_slots[u]) {
                    result[slot] = vec;
                }
            }
        }
    }
    if (!failed.empty()) {
        std::sort(failed.begin(), failed.end());
        throw EmbeddingError("embedding failed for " + std::to_string(failed.size()) +
                                     " text(s): " + first_error,
                             std::move(failed));
    }

    std::vector<UnitVector> out;
    out.reserve(result.size());
    for (auto& r : result) {
        out.push_back(std::move(*r));
    }
    return out;
}

} // namespace dtr
