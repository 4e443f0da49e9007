#pragma once

#include <atomic>
#include <memory>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "selfportrait/semantic.hpp"
#include "selfportrait/summarize.hpp"

namespace selfportrait {

struct HttpEndpoint {
    std::string base_url;  // scheme://host[:port][/path-prefix]
    std::string model;
    std::string api_key;   // empty: no Authorization header
    double timeout_seconds = 30.0;
    int retries = 2;       // extra attempts after transport errors and 429/5xx
};

// OpenAI-compatible POST {base}/embeddings.
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(HttpEndpoint endpoint, std::size_t dimension_hint = 0);
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
    std::size_t dimension() const override;

private:
    HttpEndpoint endpoint_;
    mutable std::atomic<std::size_t> dimension_;
};

// OpenAI-compatible POST {base}/chat/completions with temperature 0.
class HttpSummaryProvider final : public SummaryProvider {
public:
    explicit HttpSummaryProvider(HttpEndpoint endpoint);
    std::string complete(const std::string& prompt) override;

private:
    HttpEndpoint endpoint_;
};

// POSTs a JSON body and returns the parsed response. Throws ProviderFailure.
nlohmann::json post_json(const HttpEndpoint& endpoint, const std::string& path, const nlohmann::json& body);

}  // namespace selfportrait
