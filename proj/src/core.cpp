#include "selfportrait/core.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

namespace selfportrait {

using nlohmann::json;

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::ScoreOffGrid: return "ScoreOffGrid";
        case ErrorCode::BadTimestamp: return "BadTimestamp";
        case ErrorCode::MissingFile: return "MissingFile";
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::DanglingTagReference: return "DanglingTagReference";
        case ErrorCode::EmptyHistory: return "EmptyHistory";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::ZeroVector: return "ZeroVector";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::ProviderFailure: return "ProviderFailure";
        case ErrorCode::NoLikedClusters: return "NoLikedClusters";
        case ErrorCode::EmptyRecentSet: return "EmptyRecentSet";
        case ErrorCode::ClockSkew: return "ClockSkew";
        case ErrorCode::TooFewItems: return "TooFewItems";
        case ErrorCode::MissingEmbedding: return "MissingEmbedding";
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::DegenerateGroup: return "DegenerateGroup";
        case ErrorCode::NonPositiveMSE: return "NonPositiveMSE";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::UnknownUser: return "UnknownUser";
        case ErrorCode::NotYetGenerated: return "NotYetGenerated";
        case ErrorCode::StaleVersion: return "StaleVersion";
        case ErrorCode::EmptySection: return "EmptySection";
        case ErrorCode::BadCategory: return "BadCategory";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

namespace {

bool parse_int(std::string_view s, long long& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

[[noreturn]] void bad_timestamp(std::string_view text) {
    throw Error(ErrorCode::BadTimestamp, "cannot parse '" + std::string(text) + "'");
}

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
    using namespace std::chrono;
    const std::string_view s = trim(text);
    long long epoch = 0;
    if (parse_int(s, epoch)) return Timestamp{seconds{epoch}};

    // YYYY-MM-DD[THH:MM:SS[Z]]
    if (s.size() < 10 || s[4] != '-' || s[7] != '-') bad_timestamp(text);
    long long y = 0, mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
    if (!parse_int(s.substr(0, 4), y) || !parse_int(s.substr(5, 2), mo) ||
        !parse_int(s.substr(8, 2), d)) {
        bad_timestamp(text);
    }
    std::string_view rest = s.substr(10);
    if (!rest.empty()) {
        if (rest.back() == 'Z') rest.remove_suffix(1);
        if (rest.size() != 9 || (rest[0] != 'T' && rest[0] != ' ') || rest[3] != ':' ||
            rest[6] != ':') {
            bad_timestamp(text);
        }
        if (!parse_int(rest.substr(1, 2), hh) || !parse_int(rest.substr(4, 2), mm) ||
            !parse_int(rest.substr(7, 2), ss)) {
            bad_timestamp(text);
        }
        if (hh > 23 || mm > 59 || ss > 60) bad_timestamp(text);
    }
    const year_month_day ymd{year{static_cast<int>(y)}, month{static_cast<unsigned>(mo)},
                             day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) bad_timestamp(text);
    return sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss};
}

std::string format_timestamp(Timestamp t) {
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{t - day_point};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

int year_of(Timestamp t) {
    using namespace std::chrono;
    return static_cast<int>(year_month_day{floor<days>(t)}.year());
}

bool on_half_point_grid(double score) noexcept {
    if (!std::isfinite(score) || score < 0.5 || score > 5.0) return false;
    const double doubled = score * 2.0;
    return doubled == std::round(doubled);
}

RatingEvent validate_rating(const RatingEvent& event) {
    if (!on_half_point_grid(event.score)) {
        throw Error(ErrorCode::ScoreOffGrid, "score " + std::to_string(event.score) +
                                                 " is not on the half-point scale [0.5, 5.0]");
    }
    return event;
}

RatingEvent validate_rating(const RawRating& raw) {
    RatingEvent event{raw.user_id, raw.movie_id, raw.score, Timestamp{}};
    validate_rating(event);
    event.timestamp = parse_timestamp(raw.timestamp);
    return event;
}

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) {
        throw Error(ErrorCode::DimensionMismatch, "embedding dimension must be at least 2");
    }
    if (!std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); })) {
        throw Error(ErrorCode::InvalidArgument, "embedding contains non-finite values");
    }
}

bool EmbeddingVector::is_zero() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
}

std::string_view to_string(Section s) {
    switch (s) {
        case Section::recent: return "recent";
        case Section::liked: return "liked";
        case Section::disliked: return "disliked";
    }
    return "recent";
}

std::string_view to_string(Author a) {
    switch (a) {
        case Author::ai: return "ai";
        case Author::user: return "user";
        case Author::merged: return "merged";
    }
    return "ai";
}

Section parse_section(std::string_view text) {
    for (Section s : kAllSections) {
        if (to_string(s) == text) return s;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown section '" + std::string(text) + "'");
}

Author parse_author(std::string_view text) {
    for (Author a : {Author::ai, Author::user, Author::merged}) {
        if (to_string(a) == text) return a;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown author '" + std::string(text) + "'");
}

const std::string& Portrait::text(Section s) const {
    switch (s) {
        case Section::recent: return recent_summary;
        case Section::liked: return liked_summary;
        case Section::disliked: return disliked_summary;
    }
    return recent_summary;
}

std::string& Portrait::text(Section s) {
    return const_cast<std::string&>(std::as_const(*this).text(s));
}

void Portrait::set_section_author(Section s, Author a) {
    section_authors[static_cast<std::size_t>(s)] = a;
    author = combined_author(section_authors);
}

Author combined_author(const std::array<Author, 3>& section_authors) {
    const Author first = section_authors[0];
    if (first != Author::merged &&
        std::all_of(section_authors.begin(), section_authors.end(),
                    [first](Author a) { return a == first; })) {
        return first;
    }
    return Author::merged;
}

bool is_gap_free_chain(std::span<const Portrait> chain) {
    for (std::size_t i = 0; i < chain.size(); ++i) {
        if (chain[i].version != static_cast<std::int64_t>(i + 1)) return false;
    }
    return true;
}

// JSON

void to_json(json& j, const MovieRecord& m) {
    j = json{{"movie_id", m.movie_id},   {"title", m.title},       {"genres", m.genres},
             {"actors", m.actors},       {"directors", m.directors}, {"language", m.language},
             {"release_year", m.release_year}, {"popularity", m.popularity}};
}

void from_json(const json& j, MovieRecord& m) {
    j.at("movie_id").get_to(m.movie_id);
    m.title = j.value("title", "");
    m.genres = j.value("genres", std::vector<std::string>{});
    m.actors = j.value("actors", std::vector<std::string>{});
    m.directors = j.value("directors", std::vector<std::string>{});
    m.language = j.value("language", "");
    m.release_year = j.value("release_year", 0);
    m.popularity = j.value("popularity", 0.0);
}

void to_json(json& j, const RatingEvent& r) {
    j = json{{"user_id", r.user_id},
             {"movie_id", r.movie_id},
             {"score", r.score},
             {"timestamp", format_timestamp(r.timestamp)}};
}

void from_json(const json& j, RatingEvent& r) {
    j.at("user_id").get_to(r.user_id);
    j.at("movie_id").get_to(r.movie_id);
    j.at("score").get_to(r.score);
    const auto& ts = j.at("timestamp");
    r.timestamp = ts.is_number_integer() ? Timestamp{std::chrono::seconds{ts.get<long long>()}}
                                         : parse_timestamp(ts.get<std::string>());
}

void to_json(json& j, const TagScore& t) { j = json{{"tag", t.tag}, {"relevance", t.relevance}}; }

void from_json(const json& j, TagScore& t) {
    j.at("tag").get_to(t.tag);
    j.at("relevance").get_to(t.relevance);
}

void to_json(json& j, const TaggedMovie& t) {
    j = json{{"movie_id", t.movie_id}, {"top_tags", t.top_tags}};
}

void from_json(const json& j, TaggedMovie& t) {
    j.at("movie_id").get_to(t.movie_id);
    t.top_tags = j.value("top_tags", std::vector<TagScore>{});
}

void to_json(json& j, const EmbeddingVector& v) {
    j = std::vector<double>(v.values().begin(), v.values().end());
}

void from_json(const json& j, EmbeddingVector& v) { v = EmbeddingVector(j.get<std::vector<double>>()); }

void to_json(json& j, const Portrait& p) {
    j = json{{"user_id", p.user_id},
             {"version", p.version},
             {"generated_at", format_timestamp(p.generated_at)},
             {"author", to_string(p.author)},
             {"sections",
              {{"recent", {{"text", p.recent_summary}, {"author", to_string(p.section_authors[0])}}},
               {"liked", {{"text", p.liked_summary}, {"author", to_string(p.section_authors[1])}}},
               {"disliked",
                {{"text", p.disliked_summary}, {"author", to_string(p.section_authors[2])}}}}}};
}

void from_json(const json& j, Portrait& p) {
    j.at("user_id").get_to(p.user_id);
    j.at("version").get_to(p.version);
    p.generated_at = parse_timestamp(j.at("generated_at").get<std::string>());
    p.author = parse_author(j.at("author").get<std::string>());
    const auto& sections = j.at("sections");
    for (Section s : kAllSections) {
        const auto& entry = sections.at(std::string(to_string(s)));
        p.text(s) = entry.at("text").get<std::string>();
        p.section_authors[static_cast<std::size_t>(s)] =
            parse_author(entry.at("author").get<std::string>());
    }
}

}  // namespace selfportrait
