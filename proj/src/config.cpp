#include "dtr/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "dtr/error.hpp"

namespace dtr {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) {
            fail(ErrorCategory::config, "unknown key '" + key + "' in " + where);
        }
    }
}

HttpEndpoint endpoint_from(const json& j) {
    HttpEndpoint ep;
    ep.base_url = j.value("url", std::string());
    if (j.contains("api_key_env")) {
        if (const char* v = std::getenv(j["api_key_env"].get<std::string>().c_str())) {
            ep.api_key = v;
        }
    }
    ep.api_key = j.value("api_key", ep.api_key);
    ep.timeout_seconds = j.value("timeout_seconds", ep.timeout_seconds);
    ep.retries = j.value("retries", ep.retries);
    ep.backoff_ms = j.value("backoff_ms", ep.backoff_ms);
    ep.max_in_flight = j.value("max_in_flight", ep.max_in_flight);
    return ep;
}

const std::set<std::string> kEndpointKeys{"url", "api_key", "api_key_env", "timeout_seconds",
                                          "retries", "backoff_ms", "max_in_flight", "model"};

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

double env_double(const char* name, const std::string& v) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        fail(ErrorCategory::config, std::string(name) + " is not a number: '" + v + "'");
    }
}

} // namespace

AppConfig config_from_json(const json& j, const std::filesystem::path& base) {
    if (!j.is_object()) {
        fail(ErrorCategory::config, "configuration must be a JSON object");
    }
    check_keys(j, {"mode", "u_threshold", "n_per_path", "k_final", "width", "temperature",
                   "max_tokens", "index", "corpus", "embedder", "generator", "cache", "embed"},
               "config");
    AppConfig cfg;
    try {
        if (j.contains("mode")) cfg.run.mode = PipelineMode::parse(j["mode"].get<std::string>());
        cfg.run.u_threshold = j.value("u_threshold", cfg.run.u_threshold);
        cfg.run.n_per_path = j.value("n_per_path", cfg.run.n_per_path);
        cfg.run.k_final = j.value("k_final", cfg.run.k_final);
        cfg.run.width = j.value("width", cfg.run.width);
        cfg.run.temperature = j.value("temperature", cfg.run.temperature);
        if (j.contains("max_tokens")) {
            for (const auto& [kind, value] : j["max_tokens"].items()) {
                cfg.run.max_tokens[parse_prompt_kind(kind)] = value.get<int>();
            }
        }
        if (j.contains("embed")) {
            const auto& e = j["embed"];
            check_keys(e, {"batch_size", "max_in_flight", "retries"}, "embed");
            cfg.run.embed.batch_size = e.value("batch_size", cfg.run.embed.batch_size);
            cfg.run.embed.max_in_flight = e.value("max_in_flight", cfg.run.embed.max_in_flight);
            cfg.run.embed.retries = e.value("retries", cfg.run.embed.retries);
        }
        if (j.contains("index")) cfg.index_dir = resolve(base, j["index"].get<std::string>());
        if (j.contains("corpus")) cfg.corpus = resolve(base, j["corpus"].get<std::string>());
        if (j.contains("cache")) {
            const auto& c = j["cache"];
            check_keys(c, {"embeddings", "generations"}, "cache");
            if (c.contains("embeddings"))
                cfg.embedding_cache = resolve(base, c["embeddings"].get<std::string>());
            if (c.contains("generations"))
                cfg.generation_cache = resolve(base, c["generations"].get<std::string>());
        }
        if (j.contains("embedder")) {
            const auto& e = j["embedder"];
            auto allowed = kEndpointKeys;
            allowed.insert({"kind", "dimension", "script", "id"});
            check_keys(e, allowed, "embedder");
            cfg.embedder.kind = e.value("kind", cfg.embedder.kind);
            cfg.embedder.dimension = e.value("dimension", cfg.embedder.dimension);
            if (e.contains("script")) cfg.embedder.script = resolve(base, e["script"].get<std::string>());
            cfg.embedder.id = e.value("id", cfg.embedder.id);
            cfg.embedder.endpoint = endpoint_from(e);
            cfg.embedder.model = e.value("model", cfg.embedder.model);
        }
        if (j.contains("generator")) {
            const auto& g = j["generator"];
            auto allowed = kEndpointKeys;
            allowed.insert({"kind", "script", "id", "api", "logprob_base"});
            check_keys(g, allowed, "generator");
            cfg.generator.kind = g.value("kind", cfg.generator.kind);
            if (g.contains("script")) cfg.generator.script = resolve(base, g["script"].get<std::string>());
            cfg.generator.id = g.value("id", cfg.generator.id);
            cfg.generator.endpoint = endpoint_from(g);
            cfg.generator.model = g.value("model", cfg.generator.model);
            const auto api = g.value("api", std::string("completions"));
            if (api == "chat") {
                cfg.generator.api = OpenAiApi::chat;
            } else if (api != "completions") {
                fail(ErrorCategory::config, "generator.api must be 'completions' or 'chat'");
            }
            const auto base10 = g.value("logprob_base", std::string("e"));
            if (base10 != "e" && base10 != "10") {
                fail(ErrorCategory::config, "generator.logprob_base must be 'e' or '10'");
            }
            cfg.generator.logprobs_base10 = base10 == "10";
        }
    } catch (const json::exception& e) {
        fail(ErrorCategory::config, std::string("bad configuration value: ") + e.what());
    } catch (const Error& e) {
        if (e.category() == ErrorCategory::config) throw;
        fail(ErrorCategory::config, e.what());
    }
    return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCategory::config, "cannot read config " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorCategory::config, path.string() + ": " + e.what());
    }
    return config_from_json(j, path.parent_path());
}

void apply_environment(AppConfig& cfg) {
    if (auto v = env("DTR_U_THRESHOLD")) cfg.run.u_threshold = env_double("DTR_U_THRESHOLD", *v);
    if (auto v = env("DTR_N_PER_PATH"))
        cfg.run.n_per_path = static_cast<std::size_t>(env_double("DTR_N_PER_PATH", *v));
    if (auto v = env("DTR_K_FINAL"))
        cfg.run.k_final = static_cast<std::size_t>(env_double("DTR_K_FINAL", *v));
    if (auto v = env("DTR_WIDTH")) cfg.run.width = static_cast<std::size_t>(env_double("DTR_WIDTH", *v));
    if (auto v = env("DTR_GENERATOR_URL")) {
        cfg.generator.kind = "http";
        cfg.generator.endpoint.base_url = *v;
    }
    if (auto v = env("DTR_GENERATOR_MODEL")) cfg.generator.model = *v;
    if (auto v = env("DTR_EMBEDDER_URL")) {
        cfg.embedder.kind = "http";
        cfg.embedder.endpoint.base_url = *v;
    }
    if (auto v = env("DTR_EMBEDDER_MODEL")) cfg.embedder.model = *v;
    if (auto v = env("DTR_API_KEY")) {
        cfg.generator.endpoint.api_key = *v;
        cfg.embedder.endpoint.api_key = *v;
    }
}

void require_endpoints(const AppConfig& cfg) {
    if (cfg.generator.kind == "http" &&
        (cfg.generator.endpoint.base_url.empty() || cfg.generator.model.empty())) {
        fail(ErrorCategory::config, "http generator needs generator.url and generator.model");
    }
    if (cfg.embedder.kind == "http" &&
        (cfg.embedder.endpoint.base_url.empty() || cfg.embedder.model.empty())) {
        fail(ErrorCategory::config, "http embedder needs embedder.url and embedder.model");
    }
    if (cfg.generator.kind == "mock" && cfg.generator.script.empty()) {
        fail(ErrorCategory::config, "mock generator needs generator.script");
    }
    if (cfg.embedder.kind == "scripted" && cfg.embedder.script.empty()) {
        fail(ErrorCategory::config, "scripted embedder needs embedder.script");
    }
}

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec) {
    if (spec.kind == "hashing") return std::make_unique<HashingEmbedder>(spec.dimension);
    if (spec.kind == "scripted") return ScriptedEmbedder::load(spec.script, spec.id);
    if (spec.kind == "http") return std::make_unique<HttpEmbedder>(spec.endpoint, spec.model);
    fail(ErrorCategory::config, "unknown embedder kind '" + spec.kind + "'");
}

std::unique_ptr<Generator> make_generator(const GeneratorSpec& spec) {
    if (spec.kind == "mock") return MockGenerator::load(spec.script, spec.id);
    if (spec.kind == "http") {
        return std::make_unique<OpenAiGenerator>(
                OpenAiGeneratorConfig{spec.endpoint, spec.model, spec.api, spec.logprobs_base10});
    }
    fail(ErrorCategory::config, "unknown generator kind '" + spec.kind + "'");
}

} // namespace dtr
