#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "selfportrait/metrics.hpp"
#include "selfportrait/semantic.hpp"
#include "selfportrait/summarize.hpp"

namespace selfportrait {

struct ProviderConfig {
    std::string kind = "mock";  // mock | http
    std::string base_url;       // e.g. https://api.openai.com/v1
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";
    std::size_t dimension = 64;  // mock embeddings only
    double timeout_seconds = 30.0;
    int retries = 2;
};

struct Config {
    std::filesystem::path data_dir = "data";    // ingest output
    std::filesystem::path store_dir = "store";  // server logs and snapshot
    std::optional<std::filesystem::path> prompts_dir;
    ProviderConfig embedding;
    ProviderConfig summary;
    RegenerationPolicy regeneration;
    ClusterOptions clustering;
    MetricsOptions metrics;
    std::size_t min_ratings = 20;
    std::uint64_t seed = 42;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string token_env;  // optional static bearer token, read from this variable
    std::size_t snapshot_every = 200;  // portrait versions between snapshots
};

// Unknown keys are rejected so typos surface. Throws SchemaViolation or MissingFile.
Config load_config(const std::filesystem::path& path);
void from_json(const nlohmann::json& j, Config& c);

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const ProviderConfig& config, std::uint64_t seed);
std::unique_ptr<SummaryProvider> make_summary_provider(const ProviderConfig& config);

}  // namespace selfportrait
