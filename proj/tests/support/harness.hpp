#pragma once

// In-process service and HTTP server scaffolding shared by the test binaries.
// Include project headers before this one (httplib drags in <resolv.h>).

#include <atomic>
#include <memory>
#include <thread>

#include "httplib.h"
#include "oracles.hpp"
#include "selfportrait/ingest.hpp"
#include "selfportrait/server.hpp"
#include "selfportrait/service.hpp"

namespace testutil {

inline selfportrait::Dataset fixture_dataset() {
    using namespace selfportrait;
    const auto dir = fixture_dir();
    Dataset d{load_catalog(dir / "movies.csv", dir / "tags.csv"),
              keep_latest_per_movie(load_ratings(dir / "ratings.csv")).ratings};
    assign_popularity(d.catalog, d.ratings);
    return d;
}

// Mock summaries that can be switched into an outage.
class SwitchableSummary final : public selfportrait::SummaryProvider {
public:
    std::string complete(const std::string& prompt) override {
        if (down) throw selfportrait::Error(selfportrait::ErrorCode::ProviderFailure, "provider outage");
        return mock_.complete(prompt);
    }
    std::atomic<bool> down{false};

private:
    selfportrait::MockSummaryProvider mock_;
};

// Routes registered on an ephemeral localhost port, served from a background thread.
class LiveServer {
public:
    explicit LiveServer(selfportrait::PortraitService& service, std::string token = {}) {
        selfportrait::register_routes(server_, service, std::move(token));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LiveServer() {
        server_.stop();
        thread_.join();
    }
    LiveServer(const LiveServer&) = delete;
    LiveServer& operator=(const LiveServer&) = delete;

    int port() const { return port_; }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(60, 0);
        return c;
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace testutil
