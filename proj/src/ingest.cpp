#include "selfportrait/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "selfportrait/csv.hpp"
#include "selfportrait/jsonl.hpp"

namespace selfportrait {

namespace fs = std::filesystem;
using nlohmann::json;

const MovieRecord* Catalog::find_movie(const MovieId& id) const {
    auto it = movies.find(id);
    return it == movies.end() ? nullptr : &it->second;
}

const TaggedMovie* Catalog::find_tags(const MovieId& id) const {
    auto it = tags.find(id);
    return it == tags.end() ? nullptr : &it->second;
}

namespace {

[[noreturn]] void malformed(const fs::path& path, std::size_t line, const std::string& why) {
    throw Error(ErrorCode::MalformedRow,
                path.filename().string() + " line " + std::to_string(line) + ": " + why);
}

std::vector<std::string> split_list(const std::string& s, char sep = '|') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto end = s.find(sep, start);
        std::string item = s.substr(start, end == std::string::npos ? std::string::npos : end - start);
        if (!item.empty()) out.push_back(std::move(item));
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_int(const std::string& s, int& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

// "Heat (1995)" -> 1995
int year_from_title(const std::string& title) {
    const auto close = title.find_last_of(')');
    if (close == std::string::npos || close < 5 || title[close - 5] != '(') return 0;
    int year = 0;
    return parse_int(title.substr(close - 4, 4), year) ? year : 0;
}

int column_index(const std::vector<std::string>& header, const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
}

constexpr int kMinReleaseYear = 1870;
constexpr int kMaxReleaseYear = 2100;

}  // namespace

Catalog load_catalog(const fs::path& movies_path, const fs::path& tags_path) {
    if (!fs::exists(movies_path)) throw Error(ErrorCode::MissingFile, movies_path.string());
    if (!fs::exists(tags_path)) throw Error(ErrorCode::MissingFile, tags_path.string());

    Catalog catalog;
    const auto movie_rows = csv::read_file(movies_path);
    if (movie_rows.empty()) malformed(movies_path, 1, "missing header row");
    const auto& header = movie_rows.front().fields;
    const int id_col = column_index(header, "movieId");
    const int title_col = column_index(header, "title");
    const int genres_col = column_index(header, "genres");
    if (id_col < 0 || title_col < 0 || genres_col < 0) {
        malformed(movies_path, 1, "header must contain movieId,title,genres");
    }
    const int actors_col = column_index(header, "actors");
    const int directors_col = column_index(header, "directors");
    const int language_col = column_index(header, "language");
    const int year_col = column_index(header, "year");

    for (std::size_t r = 1; r < movie_rows.size(); ++r) {
        const auto& row = movie_rows[r];
        if (row.fields.size() != header.size()) {
            malformed(movies_path, row.line,
                      "expected " + std::to_string(header.size()) + " fields, got " +
                          std::to_string(row.fields.size()));
        }
        auto field = [&](int col) -> const std::string& {
            static const std::string empty;
            return col < 0 ? empty : row.fields[static_cast<std::size_t>(col)];
        };
        MovieRecord movie;
        movie.movie_id = field(id_col);
        if (movie.movie_id.empty()) malformed(movies_path, row.line, "empty movieId");
        movie.title = field(title_col);
        movie.genres = split_list(field(genres_col));
        if (movie.genres.empty()) movie.genres = {"(no genres listed)"};
        movie.actors = split_list(field(actors_col));
        movie.directors = split_list(field(directors_col));
        movie.language = field(language_col);
        if (year_col >= 0 && !field(year_col).empty()) {
            if (!parse_int(field(year_col), movie.release_year)) {
                malformed(movies_path, row.line, "bad year '" + field(year_col) + "'");
            }
        } else {
            movie.release_year = year_from_title(movie.title);
        }
        if (movie.release_year != 0 &&
            (movie.release_year < kMinReleaseYear || movie.release_year > kMaxReleaseYear)) {
            malformed(movies_path, row.line,
                      "release year " + std::to_string(movie.release_year) + " out of range");
        }
        if (!catalog.movies.emplace(movie.movie_id, movie).second) {
            malformed(movies_path, row.line, "duplicate movieId " + movie.movie_id);
        }
        catalog.tags.emplace(movie.movie_id, TaggedMovie{movie.movie_id, {}});
    }

    const auto tag_rows = csv::read_file(tags_path);
    if (tag_rows.empty()) malformed(tags_path, 1, "missing header row");
    const auto& tag_header = tag_rows.front().fields;
    const int tag_movie_col = column_index(tag_header, "movieId");
    const int tag_col = column_index(tag_header, "tag");
    const int relevance_col = column_index(tag_header, "relevance");
    if (tag_movie_col < 0 || tag_col < 0 || relevance_col < 0) {
        malformed(tags_path, 1, "header must contain movieId,tag,relevance");
    }
    // Per movie: tag text -> best relevance.
    std::map<MovieId, std::map<std::string, double>> collected;
    for (std::size_t r = 1; r < tag_rows.size(); ++r) {
        const auto& row = tag_rows[r];
        if (row.fields.size() != tag_header.size()) {
            malformed(tags_path, row.line, "wrong field count");
        }
        const auto& movie_id = row.fields[static_cast<std::size_t>(tag_movie_col)];
        const auto& tag = row.fields[static_cast<std::size_t>(tag_col)];
        double relevance = 0.0;
        if (!parse_double(row.fields[static_cast<std::size_t>(relevance_col)], relevance) ||
            relevance < 0.0 || relevance > 1.0) {
            malformed(tags_path, row.line, "relevance must be a number in [0,1]");
        }
        if (tag.empty()) malformed(tags_path, row.line, "empty tag");
        if (!catalog.movies.contains(movie_id)) {
            throw Error(ErrorCode::DanglingTagReference,
                        tags_path.filename().string() + " line " + std::to_string(row.line) +
                            ": unknown movieId " + movie_id);
        }
        auto& best = collected[movie_id][tag];
        best = std::max(best, relevance);
    }
    for (auto& [movie_id, tag_map] : collected) {
        std::vector<TagScore> tags;
        tags.reserve(tag_map.size());
        for (auto& [tag, relevance] : tag_map) tags.push_back({tag, relevance});
        std::stable_sort(tags.begin(), tags.end(), [](const TagScore& a, const TagScore& b) {
            return a.relevance > b.relevance;
        });
        if (tags.size() > kMaxTagsPerMovie) tags.resize(kMaxTagsPerMovie);
        catalog.tags[movie_id].top_tags = std::move(tags);
    }
    return catalog;
}

std::vector<RatingEvent> load_ratings(const fs::path& ratings_path) {
    const auto rows = csv::read_file(ratings_path);
    if (rows.empty()) malformed(ratings_path, 1, "missing header row");
    const auto& header = rows.front().fields;
    const int user_col = column_index(header, "userId");
    const int movie_col = column_index(header, "movieId");
    const int rating_col = column_index(header, "rating");
    const int ts_col = column_index(header, "timestamp");
    if (user_col < 0 || movie_col < 0 || rating_col < 0 || ts_col < 0) {
        malformed(ratings_path, 1, "header must contain userId,movieId,rating,timestamp");
    }
    std::vector<RatingEvent> out;
    out.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.fields.size() != header.size()) malformed(ratings_path, row.line, "wrong field count");
        RawRating raw;
        raw.user_id = row.fields[static_cast<std::size_t>(user_col)];
        raw.movie_id = row.fields[static_cast<std::size_t>(movie_col)];
        raw.timestamp = row.fields[static_cast<std::size_t>(ts_col)];
        if (!parse_double(row.fields[static_cast<std::size_t>(rating_col)], raw.score)) {
            malformed(ratings_path, row.line, "bad rating value");
        }
        try {
            out.push_back(validate_rating(raw));
        } catch (const Error& e) {
            malformed(ratings_path, row.line, e.what());
        }
    }
    return out;
}

DedupResult keep_latest_per_movie(std::vector<RatingEvent> ratings) {
    DedupResult result;
    std::map<std::pair<UserId, MovieId>, RatingEvent> latest;
    for (auto& r : ratings) {
        auto key = std::make_pair(r.user_id, r.movie_id);
        auto it = latest.find(key);
        if (it == latest.end()) {
            latest.emplace(std::move(key), std::move(r));
            continue;
        }
        ++result.duplicates_removed;
        if (r.timestamp >= it->second.timestamp) it->second = std::move(r);
    }
    result.ratings.reserve(latest.size());
    for (auto& [key, r] : latest) result.ratings.push_back(std::move(r));
    std::sort(result.ratings.begin(), result.ratings.end(),
              [](const RatingEvent& a, const RatingEvent& b) {
                  return std::tie(a.timestamp, a.user_id, a.movie_id) <
                         std::tie(b.timestamp, b.user_id, b.movie_id);
              });
    return result;
}

void assign_popularity(Catalog& catalog, std::span<const RatingEvent> ratings) {
    std::unordered_map<MovieId, double> counts;
    for (const auto& r : ratings) counts[r.movie_id] += 1.0;
    for (auto& [id, movie] : catalog.movies) {
        auto it = counts.find(id);
        movie.popularity = it == counts.end() ? 0.0 : it->second;
    }
}

std::map<UserId, std::vector<RatingEvent>> group_by_user(std::span<const RatingEvent> ratings) {
    std::map<UserId, std::vector<RatingEvent>> out;
    for (const auto& r : ratings) out[r.user_id].push_back(r);
    return out;
}

std::size_t quartile_size(std::size_t n) noexcept { return (n + 3) / 4; }

namespace {

// Highest score first, then most recent, then smallest id.
bool liked_before(const RatingEvent& a, const RatingEvent& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.timestamp != b.timestamp) return a.timestamp > b.timestamp;
    return a.movie_id < b.movie_id;
}

// Lowest score first, then most recent, then smallest id.
bool disliked_before(const RatingEvent& a, const RatingEvent& b) {
    if (a.score != b.score) return a.score < b.score;
    if (a.timestamp != b.timestamp) return a.timestamp > b.timestamp;
    return a.movie_id < b.movie_id;
}

std::vector<RatingEvent> latest_only(std::span<const RatingEvent> ratings) {
    std::map<MovieId, const RatingEvent*> latest;
    for (const auto& r : ratings) {
        auto [it, inserted] = latest.emplace(r.movie_id, &r);
        if (inserted) continue;
        const RatingEvent& cur = *it->second;
        // Deterministic under permutation: later timestamp wins, then higher score.
        if (r.timestamp > cur.timestamp || (r.timestamp == cur.timestamp && r.score > cur.score)) {
            it->second = &r;
        }
    }
    std::vector<RatingEvent> out;
    out.reserve(latest.size());
    for (auto& [id, r] : latest) out.push_back(*r);
    return out;
}

template <class Less>
std::vector<RatingEvent> top_k(std::vector<RatingEvent> v, std::size_t k, Less less) {
    k = std::min(k, v.size());
    std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end(), less);
    v.resize(k);
    return v;
}

std::vector<MovieId> ids(const std::vector<RatingEvent>& v) {
    std::vector<MovieId> out;
    out.reserve(v.size());
    for (const auto& r : v) out.push_back(r.movie_id);
    return out;
}

}  // namespace

QuartileSets extract_quartiles(std::span<const RatingEvent> ratings, Timestamp reference_date) {
    if (ratings.empty()) throw Error(ErrorCode::EmptyHistory, "user has no ratings");
    const auto history = latest_only(ratings);
    const std::size_t k = quartile_size(history.size());

    QuartileSets sets;
    sets.user_id = ratings.front().user_id;
    sets.rated_count = history.size();

    const auto liked = top_k(history, k, liked_before);
    const auto disliked = top_k(history, k, disliked_before);
    sets.liked_longterm = ids(liked);
    sets.disliked_longterm = ids(disliked);
    sets.top_cutoff = liked.back().score;
    sets.bottom_cutoff = disliked.back().score;

    std::vector<RatingEvent> recent;
    const Timestamp window_start = reference_date - kRecentWindow;
    for (const auto& r : history) {
        if (r.timestamp > window_start && r.timestamp <= reference_date) recent.push_back(r);
    }
    if (!recent.empty()) {
        const std::size_t recent_k = quartile_size(recent.size());
        sets.liked_recent = ids(top_k(std::move(recent), recent_k, liked_before));
    }
    return sets;
}

std::vector<QuartileGapRow> quartile_gap_report(std::span<const QuartileSets> all_users) {
    std::vector<QuartileGapRow> rows;
    rows.reserve(all_users.size());
    for (const auto& q : all_users) {
        QuartileGapRow row{q.user_id, q.top_cutoff, q.bottom_cutoff, 0.0, q.degenerate()};
        row.gap = row.degenerate ? 0.0 : q.top_cutoff - q.bottom_cutoff;
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(),
              [](const QuartileGapRow& a, const QuartileGapRow& b) { return a.user_id < b.user_id; });
    return rows;
}

std::string quartile_gap_csv(std::span<const QuartileGapRow> rows) {
    std::string out = "user_id,top_cutoff,bottom_cutoff,gap,degenerate\n";
    char buf[96];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, ",%.1f,%.1f,%.1f,%d\n", row.top_cutoff, row.bottom_cutoff,
                      row.gap, row.degenerate ? 1 : 0);
        out += csv::escape(row.user_id);
        out += buf;
    }
    return out;
}

void write_dataset(const fs::path& dir, const Dataset& dataset) {
    fs::create_directories(dir);
    std::vector<json> movies;
    for (const auto& [id, movie] : dataset.catalog.movies) {
        json j = movie;
        if (const auto* tags = dataset.catalog.find_tags(id)) j["top_tags"] = tags->top_tags;
        movies.push_back(std::move(j));
    }
    jsonl::write_all(dir / "catalog.jsonl", movies);
    std::vector<json> ratings(dataset.ratings.begin(), dataset.ratings.end());
    jsonl::write_all(dir / "ratings.jsonl", ratings);
}

Dataset read_dataset(const fs::path& dir) {
    Dataset dataset;
    for (const auto& j : jsonl::read_all(dir / "catalog.jsonl")) {
        auto movie = j.get<MovieRecord>();
        TaggedMovie tags{movie.movie_id, j.value("top_tags", std::vector<TagScore>{})};
        dataset.catalog.tags.emplace(movie.movie_id, std::move(tags));
        dataset.catalog.movies.emplace(movie.movie_id, std::move(movie));
    }
    for (const auto& j : jsonl::read_all(dir / "ratings.jsonl")) {
        dataset.ratings.push_back(validate_rating(j.get<RatingEvent>()));
    }
    return dataset;
}

std::optional<Timestamp> max_timestamp(std::span<const RatingEvent> ratings) {
    if (ratings.empty()) return std::nullopt;
    return std::max_element(ratings.begin(), ratings.end(),
                            [](const RatingEvent& a, const RatingEvent& b) {
                                return a.timestamp < b.timestamp;
                            })
        ->timestamp;
}

}  // namespace selfportrait
