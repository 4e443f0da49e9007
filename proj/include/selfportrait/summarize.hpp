#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selfportrait/core.hpp"
#include "selfportrait/ingest.hpp"
#include "selfportrait/semantic.hpp"

namespace selfportrait {

class SummaryProvider {
public:
    virtual ~SummaryProvider() = default;
    // Throws Error(ProviderFailure) on transport or API errors.
    virtual std::string complete(const std::string& prompt) = 0;
};

// Deterministic offline provider. Reads the TASK/TAGS/facet lines that the prompt
// templates always render and answers with fixed sentence templates.
class MockSummaryProvider final : public SummaryProvider {
public:
    std::string complete(const std::string& prompt) override;
};

inline constexpr std::string_view kNoDislikesPlaceholder = "No strong dislikes detected yet.";
inline constexpr std::string_view kNoRecentPlaceholder =
    "No highly rated movies in the past year yet.";

// Template text with {{placeholder}} slots. The loaded directory may override any of
// longterm.txt, recent.txt and context.txt; missing files keep the built-in text.
struct PromptTemplates {
    std::string longterm;
    std::string recent;
    std::string context;

    static PromptTemplates defaults();
    static PromptTemplates load(const std::filesystem::path& dir);
};

// Replaces each {{key}} with its value; unknown placeholders are left as-is.
std::string render_template(std::string_view tmpl,
                            std::span<const std::pair<std::string, std::string>> values);

// Per-section user-authored text fed back as prompt context on regeneration.
struct UserContext {
    std::optional<std::string> recent;
    std::optional<std::string> liked;
    std::optional<std::string> disliked;

    const std::optional<std::string>& for_section(Section s) const;
    bool empty() const { return !recent && !liked && !disliked; }
};

struct SentenceSource {
    std::string sentence;
    std::string cluster_id;
};

struct LongtermSummary {
    std::string liked_summary;
    std::string disliked_summary;
    std::vector<SentenceSource> liked_sentences;
    std::vector<SentenceSource> disliked_sentences;
    std::vector<std::string> prompts;
};

// Disliked clusters whose centroid has cosine < threshold with every liked centroid.
std::vector<InterestCluster> contrastive_filter(std::span<const InterestCluster> liked,
                                                std::span<const InterestCluster> disliked,
                                                double threshold = 0.8);

// One provider call per cluster; the first sentence of each answer is kept.
// Throws NoLikedClusters, ProviderFailure, DimensionMismatch.
LongtermSummary generate_longterm(std::span<const InterestCluster> liked,
                                  std::span<const InterestCluster> disliked,
                                  SummaryProvider& provider, const PromptTemplates& templates,
                                  const UserContext& context = {}, double contrastive_threshold = 0.8);

struct FacetCount {
    std::string value;
    std::size_t count = 0;

    bool operator==(const FacetCount&) const = default;
};

enum class Facet { genre, actor, director, release_year, language };
inline constexpr std::array<Facet, 5> kAllFacets{Facet::genre, Facet::actor, Facet::director,
                                                 Facet::release_year, Facet::language};
std::string_view to_string(Facet f);

struct FacetTable {
    std::array<std::vector<FacetCount>, 5> top;  // indexed by Facet, top-3 each

    const std::vector<FacetCount>& operator[](Facet f) const {
        return top[static_cast<std::size_t>(f)];
    }
};

// Top-k most frequent values per facet; ties by ascending value.
FacetTable facet_table(std::span<const MovieRecord> movies, std::size_t k = 3);

struct RecentSummary {
    std::string text;
    FacetTable facets;
    std::string prompt;
};

// Throws EmptyRecentSet, ProviderFailure.
RecentSummary generate_recent(std::span<const MovieRecord> recent_movies, SummaryProvider& provider,
                              const PromptTemplates& templates,
                              const std::optional<std::string>& user_context = std::nullopt);

struct RegenerationPolicy {
    double fraction_threshold = 0.10;
    std::int64_t absolute_threshold = 10;
    std::chrono::seconds cadence = std::chrono::hours{24};
};

struct GenerationRecord {
    UserId user_id;
    std::int64_t portrait_version = 0;
    std::vector<std::string> input_cluster_ids;
    std::int64_t ratings_count_at_generation = 0;
    std::optional<std::string> user_context;
    std::string prompt_hash;
    Timestamp generated_at{};
    std::string trigger = "initial";  // initial | scheduled | forced

    bool operator==(const GenerationRecord&) const = default;
};

void to_json(nlohmann::json& j, const GenerationRecord& r);
void from_json(const nlohmann::json& j, GenerationRecord& r);

// Throws ClockSkew when now < last_check and InvalidArgument when the current count is
// below the count at generation.
bool should_regenerate(const GenerationRecord& record, std::int64_t current_rating_count,
                       const RegenerationPolicy& policy, Timestamp now, Timestamp last_check);

// Case-insensitive, whitespace-normalized substring match against any top term.
bool faithfulness_check(std::string_view summary_sentence, const InterestCluster& cluster);

// First sentence of a provider answer, trimmed and terminated with punctuation.
std::string first_sentence(std::string_view text);

std::string stable_hash_hex(std::string_view text);

struct GenerationResult {
    Portrait portrait;
    GenerationRecord record;
    QuartileSets quartiles;
    std::vector<InterestCluster> liked_clusters;
    std::vector<InterestCluster> disliked_clusters;
    LongtermSummary longterm;
};

struct GenerationRequest {
    UserId user_id;
    std::span<const RatingEvent> ratings;
    Timestamp reference_date{};
    UserContext context;
    std::int64_t version = 1;
    Timestamp generated_at{};
    std::string trigger = "initial";
};

// Full pipeline for one user: quartiles, tag clustering, contrastive filtering and the
// three section summaries. Movies without community tags contribute their genres.
GenerationResult generate_portrait(const GenerationRequest& request, const Catalog& catalog,
                                   EmbeddingProvider& embedder, SummaryProvider& summarizer,
                                   const PromptTemplates& templates,
                                   const ClusterOptions& cluster_options = {});

}  // namespace selfportrait
