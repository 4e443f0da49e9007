#include "selfportrait/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "selfportrait/http_providers.hpp"

namespace selfportrait {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw Error(ErrorCode::SchemaViolation, where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.contains(key)) throw Error(ErrorCode::SchemaViolation, "unknown key '" + key + "' in " + where);
    }
}

ProviderConfig provider_from_json(const nlohmann::json& j, const std::string& where) {
    reject_unknown(j, {"kind", "base_url", "model", "api_key_env", "dimension", "timeout_seconds", "retries"}, where);
    ProviderConfig p;
    p.kind = j.value("kind", p.kind);
    p.base_url = j.value("base_url", p.base_url);
    p.model = j.value("model", p.model);
    p.api_key_env = j.value("api_key_env", p.api_key_env);
    p.dimension = j.value("dimension", p.dimension);
    p.timeout_seconds = j.value("timeout_seconds", p.timeout_seconds);
    p.retries = j.value("retries", p.retries);
    if (p.kind != "mock" && p.kind != "http") throw Error(ErrorCode::SchemaViolation, where + ".kind must be mock or http");
    if (p.kind == "http" && p.base_url.empty()) throw Error(ErrorCode::SchemaViolation, where + ".base_url required for http");
    if (p.dimension < 2) throw Error(ErrorCode::SchemaViolation, where + ".dimension must be >= 2");
    return p;
}

HttpEndpoint endpoint_for(const ProviderConfig& config) {
    HttpEndpoint e;
    e.base_url = config.base_url;
    e.model = config.model;
    e.timeout_seconds = config.timeout_seconds;
    e.retries = config.retries;
    if (!config.api_key_env.empty()) {
        if (const char* key = std::getenv(config.api_key_env.c_str())) e.api_key = key;
    }
    return e;
}

}  // namespace

void from_json(const nlohmann::json& j, Config& c) {
    reject_unknown(j,
                   {"data_dir", "store_dir", "prompts_dir", "embedding", "summary", "regeneration", "clustering",
                    "session_gap_minutes", "unique_views", "min_ratings", "seed", "host", "port", "token_env",
                    "snapshot_every"},
                   "config");
    try {
        if (j.contains("data_dir")) c.data_dir = j.at("data_dir").get<std::string>();
        if (j.contains("store_dir")) c.store_dir = j.at("store_dir").get<std::string>();
        if (j.contains("prompts_dir")) c.prompts_dir = j.at("prompts_dir").get<std::string>();
        if (j.contains("embedding")) c.embedding = provider_from_json(j.at("embedding"), "embedding");
        if (j.contains("summary")) c.summary = provider_from_json(j.at("summary"), "summary");
        if (j.contains("regeneration")) {
            const auto& r = j.at("regeneration");
            reject_unknown(r, {"fraction_threshold", "absolute_threshold", "cadence_hours"}, "regeneration");
            c.regeneration.fraction_threshold = r.value("fraction_threshold", c.regeneration.fraction_threshold);
            c.regeneration.absolute_threshold = r.value("absolute_threshold", c.regeneration.absolute_threshold);
            if (r.contains("cadence_hours")) {
                c.regeneration.cadence = std::chrono::seconds(
                    static_cast<std::int64_t>(r.at("cadence_hours").get<double>() * 3600.0));
            }
        }
        if (j.contains("clustering")) {
            const auto& k = j.at("clustering");
            reject_unknown(k, {"max_clusters", "max_merge_distance", "top_terms"}, "clustering");
            c.clustering.max_clusters = k.value("max_clusters", c.clustering.max_clusters);
            c.clustering.max_merge_distance = k.value("max_merge_distance", c.clustering.max_merge_distance);
            c.clustering.top_terms = k.value("top_terms", c.clustering.top_terms);
        }
        if (j.contains("session_gap_minutes")) {
            c.metrics.session_gap =
                std::chrono::seconds(static_cast<std::int64_t>(j.at("session_gap_minutes").get<double>() * 60.0));
        }
        c.metrics.unique_views = j.value("unique_views", c.metrics.unique_views);
        c.min_ratings = j.value("min_ratings", c.min_ratings);
        c.seed = j.value("seed", c.seed);
        c.host = j.value("host", c.host);
        c.port = j.value("port", c.port);
        c.token_env = j.value("token_env", c.token_env);
        c.snapshot_every = j.value("snapshot_every", c.snapshot_every);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("config: ") + e.what());
    }
    if (c.regeneration.fraction_threshold <= 0.0 || c.regeneration.absolute_threshold < 1) {
        throw Error(ErrorCode::SchemaViolation, "regeneration thresholds out of range");
    }
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingFile, "cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }
    Config c;
    from_json(j, c);
    // Relative paths are taken relative to the config file.
    const auto base = path.parent_path();
    auto anchor = [&](std::filesystem::path& p) {
        if (p.is_relative() && !base.empty()) p = base / p;
    };
    if (j.contains("data_dir")) anchor(c.data_dir);
    if (j.contains("store_dir")) anchor(c.store_dir);
    if (c.prompts_dir) anchor(*c.prompts_dir);
    return c;
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const ProviderConfig& config, std::uint64_t seed) {
    if (config.kind == "http") return std::make_unique<HttpEmbeddingProvider>(endpoint_for(config));
    return mock_provider(config.dimension, seed);
}

std::unique_ptr<SummaryProvider> make_summary_provider(const ProviderConfig& config) {
    if (config.kind == "http") return std::make_unique<HttpSummaryProvider>(endpoint_for(config));
    return std::make_unique<MockSummaryProvider>();
}

}  // namespace selfportrait
