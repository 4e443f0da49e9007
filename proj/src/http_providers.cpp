#include "selfportrait/http_providers.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace selfportrait {

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // "" or "/v1"
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "base_url needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    SplitUrl out;
    out.origin = url.substr(0, path_start);
    if (path_start != std::string::npos) out.prefix = url.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
    return out;
}

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

nlohmann::json post_json(const HttpEndpoint& endpoint, const std::string& path, const nlohmann::json& body) {
    const auto url = split_url(endpoint.base_url);
    httplib::Client client(url.origin);
    const auto timeout = std::chrono::duration<double>(endpoint.timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    httplib::Headers headers;
    if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

    const std::string payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= endpoint.retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100 << std::min(attempt, 6)));
        auto res = client.Post(url.prefix + path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) {
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorCode::ProviderFailure, std::string("unparsable response: ") + e.what());
            }
        }
        last_error = "HTTP " + std::to_string(res->status);
        if (!retryable(res->status)) break;
    }
    throw Error(ErrorCode::ProviderFailure, path + ": " + last_error);
}

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEndpoint endpoint, std::size_t dimension_hint)
    : endpoint_(std::move(endpoint)), dimension_(dimension_hint) {}

std::size_t HttpEmbeddingProvider::dimension() const { return dimension_.load(); }

std::vector<EmbeddingVector> HttpEmbeddingProvider::embed(std::span<const std::string> texts) {
    if (texts.empty()) return {};
    const auto response = post_json(endpoint_, "/embeddings",
                                    {{"model", endpoint_.model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}});
    std::vector<EmbeddingVector> out(texts.size());
    try {
        const auto& data = response.at("data");
        if (data.size() != texts.size()) throw Error(ErrorCode::ProviderFailure, "embedding count mismatch");
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto index = data[i].value("index", i);
            if (index >= out.size()) throw Error(ErrorCode::ProviderFailure, "embedding index out of range");
            out[index] = EmbeddingVector(data[i].at("embedding").get<std::vector<double>>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ProviderFailure, std::string("malformed embeddings response: ") + e.what());
    }
    for (const auto& v : out) {
        if (v.dimension() == 0) throw Error(ErrorCode::ProviderFailure, "missing embedding in response");
        std::size_t expected = 0;
        if (!dimension_.compare_exchange_strong(expected, v.dimension()) && expected != v.dimension()) {
            throw Error(ErrorCode::DimensionMismatch, "provider changed embedding dimension");
        }
    }
    return out;
}

HttpSummaryProvider::HttpSummaryProvider(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

std::string HttpSummaryProvider::complete(const std::string& prompt) {
    const nlohmann::json body{{"model", endpoint_.model},
                              {"temperature", 0},
                              {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
    const auto response = post_json(endpoint_, "/chat/completions", body);
    try {
        return response.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ProviderFailure, std::string("malformed completion response: ") + e.what());
    }
}

}  // namespace selfportrait
