#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace selfportrait {

using Timestamp = std::chrono::sys_seconds;
using UserId = std::string;
using MovieId = std::string;

enum class ErrorCode {
    ScoreOffGrid,
    BadTimestamp,
    MissingFile,
    MalformedRow,
    DanglingTagReference,
    EmptyHistory,
    DimensionMismatch,
    ZeroVector,
    EmptyInput,
    ProviderFailure,
    NoLikedClusters,
    EmptyRecentSet,
    ClockSkew,
    TooFewItems,
    MissingEmbedding,
    RankDeficient,
    DegenerateGroup,
    NonPositiveMSE,
    InvalidArgument,
    UnknownUser,
    NotYetGenerated,
    StaleVersion,
    EmptySection,
    BadCategory,
    InsufficientData,
    SchemaViolation,
    IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Accepts epoch seconds ("1711670400"), "YYYY-MM-DD" or "YYYY-MM-DDTHH:MM:SS[Z]".
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp t);
int year_of(Timestamp t);

struct MovieRecord {
    MovieId movie_id;
    std::string title;
    std::vector<std::string> genres;
    std::vector<std::string> actors;
    std::vector<std::string> directors;
    std::string language;
    int release_year = 0;
    double popularity = 0.0;

    bool operator==(const MovieRecord&) const = default;
};

struct RatingEvent {
    UserId user_id;
    MovieId movie_id;
    double score = 0.0;
    Timestamp timestamp{};

    bool operator==(const RatingEvent&) const = default;
};

// Unvalidated rating as read from an external source.
struct RawRating {
    UserId user_id;
    MovieId movie_id;
    double score = 0.0;
    std::string timestamp;
};

bool on_half_point_grid(double score) noexcept;

// Throws ScoreOffGrid or BadTimestamp.
RatingEvent validate_rating(const RawRating& raw);
RatingEvent validate_rating(const RatingEvent& event);

struct TagScore {
    std::string tag;
    double relevance = 0.0;

    bool operator==(const TagScore&) const = default;
};

inline constexpr std::size_t kMaxTagsPerMovie = 10;

struct TaggedMovie {
    MovieId movie_id;
    std::vector<TagScore> top_tags;  // descending relevance, at most 10

    bool operator==(const TaggedMovie&) const = default;
};

class EmbeddingVector {
public:
    EmbeddingVector() = default;
    explicit EmbeddingVector(std::vector<double> values);

    std::size_t dimension() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    bool is_zero() const noexcept;

    bool operator==(const EmbeddingVector&) const = default;

private:
    std::vector<double> values_;
};

enum class Section { recent, liked, disliked };
enum class Author { ai, user, merged };

inline constexpr std::array<Section, 3> kAllSections{Section::recent, Section::liked,
                                                      Section::disliked};

std::string_view to_string(Section s);
std::string_view to_string(Author a);
Section parse_section(std::string_view text);
Author parse_author(std::string_view text);

struct Portrait {
    UserId user_id;
    std::string recent_summary;
    std::string liked_summary;
    std::string disliked_summary;
    std::int64_t version = 0;
    Timestamp generated_at{};
    Author author = Author::ai;
    // Per-section provenance, indexed by Section.
    std::array<Author, 3> section_authors{Author::ai, Author::ai, Author::ai};

    const std::string& text(Section s) const;
    std::string& text(Section s);
    Author section_author(Section s) const { return section_authors[static_cast<std::size_t>(s)]; }
    void set_section_author(Section s, Author a);

    bool operator==(const Portrait&) const = default;
};

// Overall author derived from the per-section authors.
Author combined_author(const std::array<Author, 3>& section_authors);

// True when versions are 1..n with no gaps or duplicates.
bool is_gap_free_chain(std::span<const Portrait> chain);

void to_json(nlohmann::json& j, const MovieRecord& m);
void from_json(const nlohmann::json& j, MovieRecord& m);
void to_json(nlohmann::json& j, const RatingEvent& r);
void from_json(const nlohmann::json& j, RatingEvent& r);
void to_json(nlohmann::json& j, const TagScore& t);
void from_json(const nlohmann::json& j, TagScore& t);
void to_json(nlohmann::json& j, const TaggedMovie& t);
void from_json(const nlohmann::json& j, TaggedMovie& t);
void to_json(nlohmann::json& j, const EmbeddingVector& v);
void from_json(const nlohmann::json& j, EmbeddingVector& v);
void to_json(nlohmann::json& j, const Portrait& p);
void from_json(const nlohmann::json& j, Portrait& p);

}  // namespace selfportrait
