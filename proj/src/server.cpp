#include "selfportrait/server.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace selfportrait {

int http_status(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::UnknownUser: return 404;
        case ErrorCode::NotYetGenerated:
        case ErrorCode::StaleVersion:
        case ErrorCode::InsufficientData:
        case ErrorCode::DegenerateGroup:
        case ErrorCode::EmptyHistory:
        case ErrorCode::NoLikedClusters: return 409;
        case ErrorCode::EmptySection: return 422;
        case ErrorCode::ProviderFailure: return 502;
        case ErrorCode::BadCategory:
        case ErrorCode::SchemaViolation:
        case ErrorCode::InvalidArgument:
        case ErrorCode::BadTimestamp:
        case ErrorCode::ScoreOffGrid:
        case ErrorCode::MalformedRow: return 400;
        default: return 500;
    }
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    send_json(res, status, {{"error", code}, {"message", message}});
}

// Runs a handler and maps exceptions to JSON error bodies.
template <class F>
httplib::Server::Handler guarded(const std::string& token, F f) {
    return [token, f](const httplib::Request& req, httplib::Response& res) {
        if (!token.empty() && req.get_header_value("Authorization") != "Bearer " + token) {
            send_error(res, 401, "Unauthorized", "missing or wrong bearer token");
            return;
        }
        try {
            f(req, res);
        } catch (const Error& e) {
            send_error(res, http_status(e.code()), to_string(e.code()), e.what());
        } catch (const nlohmann::json::exception& e) {
            send_error(res, 400, "SchemaViolation", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "Internal", e.what());
        }
    };
}

nlohmann::json parse_body(const httplib::Request& req) {
    auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded()) throw Error(ErrorCode::SchemaViolation, "request body is not valid JSON");
    return body;
}

bool truthy(const std::string& v) { return v == "1" || v == "true" || v == "yes"; }

}  // namespace

void register_routes(httplib::Server& server, PortraitService& service, std::string token) {
    const std::string user = R"(/api/v1/users/([^/]+))";

    server.Get(user + "/portrait", guarded(token, [&](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, *service.portrait(req.matches[1]));
    }));

    server.Put(user + "/portrait/([a-z]+)", guarded(token, [&](const httplib::Request& req, httplib::Response& res) {
        const Section section = parse_section(req.matches[2].str());
        const auto body = parse_body(req);
        if (!body.is_object() || !body.contains("text") || !body.contains("base_version")) {
            throw Error(ErrorCode::SchemaViolation, "body needs text and base_version");
        }
        auto result = service.edit_section(req.matches[1], section, body.at("text").get<std::string>(),
                                           body.at("base_version").get<std::int64_t>());
        send_json(res, 200, {{"portrait", result.portrait}, {"edit", result.edit}});
    }));

    server.Post(user + "/regenerate", guarded(token, [&](const httplib::Request& req, httplib::Response& res) {
        const bool force = req.has_param("force") && truthy(req.get_param_value("force"));
        if (auto p = service.regenerate(req.matches[1], force)) {
            send_json(res, 200, *p);
        } else {
            res.status = 204;
        }
    }));

    server.Get(user + "/treemap", guarded(token, [&](const httplib::Request& req, httplib::Response& res) {
        const auto category = parse_treemap_category(req.get_param_value("category"));
        send_json(res, 200, service.treemap(req.matches[1], category));
    }));

    server.Post("/api/v1/events", guarded(token, [&](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        std::vector<InteractionEvent> events;
        if (body.is_array()) {
            for (const auto& e : body) events.push_back(e.get<InteractionEvent>());
        } else {
            events.push_back(body.get<InteractionEvent>());
        }
        for (const auto& e : events) validate_event(e);
        for (const auto& e : events) service.record_event(e);
        send_json(res, 202, {{"accepted", events.size()}});
    }));

    server.Get("/api/v1/analysis/report", guarded(token, [&](const httplib::Request& req, httplib::Response& res) {
        if (!req.has_param("window") || !req.has_param("baseline")) {
            throw Error(ErrorCode::InvalidArgument, "window and baseline are required");
        }
        const auto window = parse_window(req.get_param_value("window"));
        const auto baseline = parse_window(req.get_param_value("baseline"));
        const auto kind = req.has_param("kind") ? req.get_param_value("kind") : "both";
        std::vector<ReportKind> kinds;
        if (kind == "both") {
            kinds = {ReportKind::ancova, ReportKind::anova};
        } else {
            kinds = {parse_report_kind(kind)};
        }
        const auto format = req.has_param("format") ? req.get_param_value("format") : "csv";
        if (format != "csv" && format != "json") throw Error(ErrorCode::InvalidArgument, "format must be csv or json");
        // Same kinds and same concatenated CSV as the analyze command prints.
        std::string csv;
        nlohmann::json reports = nlohmann::json::array();
        for (auto k : kinds) {
            const auto report = service.analysis(window, baseline, k);
            if (format == "csv") {
                csv += report_csv(report);
            } else {
                reports.push_back(report_json(report));
            }
        }
        if (format == "csv") {
            res.status = 200;
            res.set_content(csv, "text/csv");
        } else {
            send_json(res, 200, reports.size() == 1 ? reports[0] : reports);
        }
    }));

    server.Get("/api/v1/health", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}});
    });
}

}  // namespace selfportrait
