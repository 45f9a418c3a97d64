#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "dtr/embedding.hpp"
#include "dtr/generator.hpp"
#include "dtr/pipeline.hpp"

namespace dtr {

struct EmbedderSpec {
    std::string kind = "hashing";  // hashing | scripted | http
    std::size_t dimension = 256;
    std::filesystem::path script;
    std::string id = "scripted";
    HttpEndpoint endpoint;
    std::string model;
};

struct GeneratorSpec {
    std::string kind = "mock";  // mock | http
    std::filesystem::path script;
    std::string id = "mock";
    HttpEndpoint endpoint;
    std::string model;
    OpenAiApi api = OpenAiApi::completions;
    bool logprobs_base10 = false;
};

// Settings for one CLI invocation, assembled with precedence
// flag > environment > config file > built-in default.
struct AppConfig {
    RunConfig run;
    EmbedderSpec embedder;
    GeneratorSpec generator;
    std::optional<std::filesystem::path> index_dir;
    std::optional<std::filesystem::path> corpus;
    std::optional<std::filesystem::path> embedding_cache;
    std::optional<std::filesystem::path> generation_cache;
};

// Relative paths in the file resolve against the file's directory.
// Error(config) on unknown keys or wrong types.
AppConfig load_config(const std::filesystem::path& path);
AppConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

// DTR_U_THRESHOLD, DTR_N_PER_PATH, DTR_K_FINAL, DTR_WIDTH, DTR_GENERATOR_URL,
// DTR_GENERATOR_MODEL, DTR_EMBEDDER_URL, DTR_EMBEDDER_MODEL, DTR_API_KEY.
void apply_environment(AppConfig& config);

// Error(config) when a networked backend lacks its endpoint or model.
void require_endpoints(const AppConfig& config);

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec);
std::unique_ptr<Generator> make_generator(const GeneratorSpec& spec);

} // namespace dtr
