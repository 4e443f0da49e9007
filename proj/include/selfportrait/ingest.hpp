#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selfportrait/core.hpp"

namespace selfportrait {

struct Catalog {
    std::map<MovieId, MovieRecord> movies;
    std::map<MovieId, TaggedMovie> tags;  // one entry per movie, possibly with no tags

    const MovieRecord* find_movie(const MovieId& id) const;
    const TaggedMovie* find_tags(const MovieId& id) const;
};

// movies.csv: movieId,title,genres[,actors,directors,language,year]
//   list-valued columns are '|'-separated; year falls back to "(YYYY)" in the title.
// tags.csv:   movieId,tag,relevance   (relevance in [0,1])
// Throws MissingFile, MalformedRow or DanglingTagReference.
Catalog load_catalog(const std::filesystem::path& movies_path,
                     const std::filesystem::path& tags_path);

// ratings.csv: userId,movieId,rating,timestamp (epoch seconds). Rows are validated.
std::vector<RatingEvent> load_ratings(const std::filesystem::path& ratings_path);

struct DedupResult {
    std::vector<RatingEvent> ratings;  // sorted by (timestamp, user_id, movie_id)
    std::size_t duplicates_removed = 0;
};

// Keeps only the latest rating per (user, movie); the later row wins exact timestamp ties.
DedupResult keep_latest_per_movie(std::vector<RatingEvent> ratings);

// popularity := number of ratings in `ratings` for each movie.
void assign_popularity(Catalog& catalog, std::span<const RatingEvent> ratings);

std::map<UserId, std::vector<RatingEvent>> group_by_user(std::span<const RatingEvent> ratings);

struct QuartileSets {
    UserId user_id;
    std::vector<MovieId> liked_longterm;     // rank order, best first
    std::vector<MovieId> disliked_longterm;  // rank order, worst first
    std::vector<MovieId> liked_recent;       // rank order, best first; may be empty
    double top_cutoff = 0.0;                 // min score in liked_longterm
    double bottom_cutoff = 0.0;              // max score in disliked_longterm
    std::size_t rated_count = 0;             // distinct movies considered

    bool degenerate() const noexcept { return top_cutoff <= bottom_cutoff; }
};

inline constexpr auto kRecentWindow = std::chrono::days{365};

std::size_t quartile_size(std::size_t n) noexcept;

// Quartile sets over the latest rating per movie. Ties at a cutoff prefer the more recent
// rating, then the lexicographically smaller movie id. Throws EmptyHistory.
QuartileSets extract_quartiles(std::span<const RatingEvent> ratings, Timestamp reference_date);

struct QuartileGapRow {
    UserId user_id;
    double top_cutoff = 0.0;
    double bottom_cutoff = 0.0;
    double gap = 0.0;
    bool degenerate = false;
};

std::vector<QuartileGapRow> quartile_gap_report(std::span<const QuartileSets> all_users);
// Header "user_id,top_cutoff,bottom_cutoff,gap,degenerate"; rows sorted by user_id.
std::string quartile_gap_csv(std::span<const QuartileGapRow> rows);

// Normalized dataset written by the ingest command.
struct Dataset {
    Catalog catalog;
    std::vector<RatingEvent> ratings;
};

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

std::optional<Timestamp> max_timestamp(std::span<const RatingEvent> ratings);

}  // namespace selfportrait
