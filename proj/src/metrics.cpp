#include "selfportrait/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include <nlohmann/json.hpp>

#include "selfportrait/csv.hpp"

namespace selfportrait {

std::string_view to_string(EventKind k) {
    switch (k) {
        case EventKind::movie_view: return "movie_view";
        case EventKind::rating: return "rating";
        case EventKind::login: return "login";
        case EventKind::page_event: return "page_event";
    }
    return "page_event";
}

EventKind parse_event_kind(std::string_view text) {
    for (EventKind k : {EventKind::movie_view, EventKind::rating, EventKind::login, EventKind::page_event}) {
        if (to_string(k) == text) return k;
    }
    throw Error(ErrorCode::SchemaViolation, "unknown event kind '" + std::string(text) + "'");
}

void validate_event(const InteractionEvent& e) {
    if (e.user_id.empty()) throw Error(ErrorCode::SchemaViolation, "event without user_id");
    if (e.kind == EventKind::rating) {
        if (!e.movie_id || !e.score) {
            throw Error(ErrorCode::SchemaViolation, "rating event needs movie_id and score");
        }
        if (!on_half_point_grid(*e.score)) {
            throw Error(ErrorCode::ScoreOffGrid, "rating event score off the half-point grid");
        }
    }
    if (e.kind == EventKind::movie_view && !e.movie_id) {
        throw Error(ErrorCode::SchemaViolation, "view event needs movie_id");
    }
}

InteractionEvent to_event(const RatingEvent& r) {
    return {r.user_id, EventKind::rating, r.movie_id, r.score, r.timestamp};
}

void to_json(nlohmann::json& j, const InteractionEvent& e) {
    j = nlohmann::json{{"user_id", e.user_id},
                       {"kind", to_string(e.kind)},
                       {"timestamp", format_timestamp(e.timestamp)}};
    if (e.movie_id) j["movie_id"] = *e.movie_id;
    if (e.score) j["score"] = *e.score;
}

void from_json(const nlohmann::json& j, InteractionEvent& e) {
    j.at("user_id").get_to(e.user_id);
    e.kind = parse_event_kind(j.at("kind").get<std::string>());
    const auto& ts = j.at("timestamp");
    e.timestamp = ts.is_number_integer() ? Timestamp{std::chrono::seconds{ts.get<long long>()}}
                                         : parse_timestamp(ts.get<std::string>());
    e.movie_id = j.contains("movie_id") && !j.at("movie_id").is_null()
                     ? std::optional(j.at("movie_id").get<std::string>())
                     : std::nullopt;
    e.score = j.contains("score") && !j.at("score").is_null()
                  ? std::optional(j.at("score").get<double>())
                  : std::nullopt;
}

EmbeddingIndex movie_embeddings(const Catalog& catalog, EmbeddingProvider& provider) {
    // Embed each distinct tag text once.
    std::vector<std::string> texts;
    std::unordered_map<std::string, std::size_t> index;
    for (const auto& [id, tagged] : catalog.tags) {
        for (const auto& t : tagged.top_tags) {
            if (index.emplace(t.tag, texts.size()).second) texts.push_back(t.tag);
        }
    }
    EmbeddingIndex out;
    if (texts.empty()) return out;
    const auto emb = provider.embed(texts);
    if (emb.size() != texts.size()) throw Error(ErrorCode::ProviderFailure, "wrong embedding count");
    for (const auto& [id, tagged] : catalog.tags) {
        if (tagged.top_tags.empty()) continue;
        std::vector<EmbeddingVector> vs;
        vs.reserve(tagged.top_tags.size());
        for (const auto& t : tagged.top_tags) vs.push_back(emb[index.at(t.tag)]);
        out.emplace(id, mean_vector(vs));
    }
    return out;
}

double compute_ils(std::span<const MovieId> movies, const EmbeddingIndex& embeddings) {
    const std::size_t n = movies.size();
    if (n < 2) throw Error(ErrorCode::TooFewItems, "ILS needs at least two items");
    std::vector<const EmbeddingVector*> vs;
    vs.reserve(n);
    for (const auto& id : movies) {
        auto it = embeddings.find(id);
        if (it == embeddings.end()) throw Error(ErrorCode::MissingEmbedding, "no embedding for movie " + id);
        vs.push_back(&it->second);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) sum += std::max(0.0, cosine(*vs[i], *vs[j]));
    }
    const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
    return std::clamp(sum / pairs, 0.0, 1.0);
}

std::vector<Session> derive_sessions(std::span<const InteractionEvent> events, std::chrono::seconds gap) {
    std::vector<Session> out;
    for (const auto& e : events) {
        if (!out.empty() && e.timestamp - out.back().end <= gap) {
            out.back().end = std::max(out.back().end, e.timestamp);
        } else {
            out.push_back({e.timestamp, e.timestamp});
        }
    }
    return out;
}

Window parse_window(std::string_view text) {
    const auto comma = text.find(',');
    if (comma == std::string_view::npos) {
        throw Error(ErrorCode::InvalidArgument, "window must be 'start,end'");
    }
    Window w{parse_timestamp(text.substr(0, comma)), parse_timestamp(text.substr(comma + 1))};
    if (w.end < w.start) throw Error(ErrorCode::InvalidArgument, "window end precedes start");
    return w;
}

std::optional<double> metric_value(const UserMetrics& m, std::string_view name) {
    if (name == "movie_view_count") return static_cast<double>(m.movie_view_count);
    if (name == "rating_count") return static_cast<double>(m.rating_count);
    if (name == "login_count") return static_cast<double>(m.login_count);
    if (name == "session_length") return m.session_length_hours;
    if (name == "rated_movie_div") return m.rated_movie_div;
    if (name == "viewed_movie_div") return m.viewed_movie_div;
    if (name == "rerate_total") return static_cast<double>(m.rerate_total);
    if (name == "avg_rating") return m.avg_rating;
    throw Error(ErrorCode::InvalidArgument, "unknown metric '" + std::string(name) + "'");
}

namespace {

std::optional<double> diversity(const std::vector<MovieId>& distinct, const EmbeddingIndex* embeddings) {
    if (!embeddings) return std::nullopt;
    std::vector<MovieId> known;
    for (const auto& id : distinct) {
        if (embeddings->contains(id)) known.push_back(id);
    }
    if (known.size() < 2) return std::nullopt;
    return compute_ils(known, *embeddings);
}

}  // namespace

UserMetrics compute_user_metrics(const UserId& user, std::span<const InteractionEvent> events,
                                 const Window& window, const std::map<MovieId, double>& prior_ratings,
                                 const EmbeddingIndex* embeddings, const MetricsOptions& options) {
    if (window.end < window.start) throw Error(ErrorCode::InvalidArgument, "window end precedes start");
    UserMetrics m;
    m.user_id = user;

    std::vector<InteractionEvent> in_window;
    for (const auto& e : events) {
        if (e.user_id == user && window.contains(e.timestamp)) in_window.push_back(e);
    }
    std::stable_sort(in_window.begin(), in_window.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });

    std::set<MovieId> viewed, rated;
    double score_sum = 0.0;
    for (const auto& e : in_window) {
        if (e.kind == EventKind::movie_view && e.movie_id) {
            ++m.movie_view_count;
            viewed.insert(*e.movie_id);
        } else if (e.kind == EventKind::rating && e.movie_id && e.score) {
            ++m.rating_count;
            rated.insert(*e.movie_id);
            score_sum += *e.score;
            auto prior = prior_ratings.find(*e.movie_id);
            if (prior != prior_ratings.end() && prior->second != *e.score) ++m.rerate_total;
        }
    }
    if (options.unique_views) m.movie_view_count = viewed.size();

    const auto sessions = derive_sessions(in_window, options.session_gap);
    m.login_count = sessions.size();
    std::chrono::seconds total{0};
    for (const auto& s : sessions) total += s.end - s.start;
    m.session_length_hours = static_cast<double>(total.count()) / 3600.0;

    if (m.rating_count > 0) m.avg_rating = score_sum / static_cast<double>(m.rating_count);
    m.rated_movie_div = diversity({rated.begin(), rated.end()}, embeddings);
    m.viewed_movie_div = diversity({viewed.begin(), viewed.end()}, embeddings);
    return m;
}

std::map<MovieId, double> prior_ratings_before(std::span<const InteractionEvent> user_events,
                                               Timestamp before) {
    std::map<MovieId, std::pair<Timestamp, double>> latest;
    for (const auto& e : user_events) {
        if (e.kind != EventKind::rating || !e.movie_id || !e.score || e.timestamp >= before) continue;
        auto [it, inserted] = latest.emplace(*e.movie_id, std::make_pair(e.timestamp, *e.score));
        if (!inserted && e.timestamp >= it->second.first) it->second = {e.timestamp, *e.score};
    }
    std::map<MovieId, double> out;
    for (const auto& [id, ts_score] : latest) out.emplace(id, ts_score.second);
    return out;
}

std::vector<UserMetrics> compute_all_metrics(std::span<const InteractionEvent> events,
                                             const Window& window, const EmbeddingIndex* embeddings,
                                             const MetricsOptions& options,
                                             const std::vector<UserId>* users) {
    std::map<UserId, std::vector<InteractionEvent>> by_user;
    for (const auto& e : events) by_user[e.user_id].push_back(e);

    std::vector<UserId> ids;
    if (users) {
        ids = *users;
    } else {
        for (const auto& [id, evs] : by_user) {
            if (std::any_of(evs.begin(), evs.end(), [&](const auto& e) { return window.contains(e.timestamp); })) {
                ids.push_back(id);
            }
        }
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

    std::vector<UserMetrics> out;
    out.reserve(ids.size());
    static const std::vector<InteractionEvent> kNone;
    for (const auto& id : ids) {
        auto it = by_user.find(id);
        const auto& evs = it == by_user.end() ? kNone : it->second;
        out.push_back(compute_user_metrics(id, evs, window, prior_ratings_before(evs, window.start),
                                           embeddings, options));
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

std::string metrics_csv(std::span<const UserMetrics> rows) {
    std::string out = "user_id";
    for (auto name : kMetricNames) {
        out += ',';
        out += name;
    }
    out += '\n';
    for (const auto& m : rows) {
        out += csv::escape(m.user_id);
        for (auto name : kMetricNames) {
            out += ',';
            if (const auto v = metric_value(m, name)) out += format_double(*v);
        }
        out += '\n';
    }
    return out;
}

}  // namespace selfportrait
