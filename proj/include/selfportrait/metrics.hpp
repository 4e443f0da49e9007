#pragma once

#include <array>
#include <chrono>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "selfportrait/core.hpp"
#include "selfportrait/ingest.hpp"
#include "selfportrait/semantic.hpp"

namespace selfportrait {

enum class EventKind { movie_view, rating, login, page_event };
std::string_view to_string(EventKind k);
EventKind parse_event_kind(std::string_view text);

struct InteractionEvent {
    UserId user_id;
    EventKind kind = EventKind::page_event;
    std::optional<MovieId> movie_id;
    std::optional<double> score;
    Timestamp timestamp{};

    bool operator==(const InteractionEvent&) const = default;
};

// Rating events need movie_id and an on-grid score; view events need movie_id.
// Throws SchemaViolation or ScoreOffGrid.
void validate_event(const InteractionEvent& e);

InteractionEvent to_event(const RatingEvent& r);

void to_json(nlohmann::json& j, const InteractionEvent& e);
void from_json(const nlohmann::json& j, InteractionEvent& e);

using EmbeddingIndex = std::unordered_map<MovieId, EmbeddingVector>;

// Per-movie embedding = mean of its top-tag embeddings. Untagged movies are absent.
EmbeddingIndex movie_embeddings(const Catalog& catalog, EmbeddingProvider& provider);

// Mean pairwise cosine with negatives clamped to 0: 2/(N(N-1)) * sum_{i<j} max(0, cos).
// Throws TooFewItems (N < 2) or MissingEmbedding.
double compute_ils(std::span<const MovieId> movies, const EmbeddingIndex& embeddings);

struct Session {
    Timestamp start{};
    Timestamp end{};

    bool operator==(const Session&) const = default;
};

inline constexpr std::chrono::seconds kDefaultSessionGap = std::chrono::minutes{30};

// Events must be sorted by timestamp; consecutive events at most `gap` apart share a session.
std::vector<Session> derive_sessions(std::span<const InteractionEvent> events,
                                     std::chrono::seconds gap = kDefaultSessionGap);

// Half-open [start, end).
struct Window {
    Timestamp start{};
    Timestamp end{};

    bool contains(Timestamp t) const { return t >= start && t < end; }
};

Window parse_window(std::string_view text);  // "start,end"

struct UserMetrics {
    UserId user_id;
    std::size_t movie_view_count = 0;
    std::size_t rating_count = 0;
    std::size_t login_count = 0;
    double session_length_hours = 0.0;
    std::optional<double> rated_movie_div;
    std::optional<double> viewed_movie_div;
    std::size_t rerate_total = 0;
    std::optional<double> avg_rating;

    bool operator==(const UserMetrics&) const = default;
};

inline constexpr std::array<std::string_view, 8> kMetricNames{
    "movie_view_count", "rating_count",     "login_count",  "session_length",
    "rated_movie_div",  "viewed_movie_div", "rerate_total", "avg_rating"};

std::optional<double> metric_value(const UserMetrics& m, std::string_view name);

struct MetricsOptions {
    std::chrono::seconds session_gap = kDefaultSessionGap;
    bool unique_views = false;  // count distinct viewed movies instead of view events
};

// Counts restricted to the window. rerate_total counts in-window rating events for movies
// in `prior_ratings` whose score differs from the prior one. Diversities use distinct
// movies that have an embedding and are absent with fewer than two.
UserMetrics compute_user_metrics(const UserId& user, std::span<const InteractionEvent> events,
                                 const Window& window,
                                 const std::map<MovieId, double>& prior_ratings,
                                 const EmbeddingIndex* embeddings = nullptr,
                                 const MetricsOptions& options = {});

// Latest score per movie from rating events strictly before `before`.
std::map<MovieId, double> prior_ratings_before(std::span<const InteractionEvent> user_events,
                                               Timestamp before);

// One row per user with any event in the window, or in `users` when given.
std::vector<UserMetrics> compute_all_metrics(std::span<const InteractionEvent> events,
                                             const Window& window,
                                             const EmbeddingIndex* embeddings,
                                             const MetricsOptions& options,
                                             const std::vector<UserId>* users = nullptr);

// Header: user_id followed by the Table 1 metric names; absent values are empty fields.
std::string metrics_csv(std::span<const UserMetrics> rows);

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace selfportrait
