#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "selfportrait/core.hpp"

namespace selfportrait {

// Implementations must be deterministic per instance and safe for concurrent use.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
    virtual std::size_t dimension() const = 0;

    EmbeddingVector embed_one(const std::string& text);
};

// Lowercases, trims and collapses internal whitespace runs to one space.
std::string normalize_text(std::string_view text);

// Offline provider. Each token of the normalized text is hashed (with the seed) to a
// Gaussian direction; the text embedding is the normalized sum of its token directions.
// Identical normalized texts therefore collide, unrelated texts are near-orthogonal, and
// texts sharing words have proportionally higher cosine.
class MockEmbeddingProvider final : public EmbeddingProvider {
public:
    MockEmbeddingProvider(std::size_t dimension, std::uint64_t seed);

    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
    std::size_t dimension() const override { return dimension_; }

private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

std::unique_ptr<EmbeddingProvider> mock_provider(std::size_t dimension, std::uint64_t seed);

// Throws DimensionMismatch or ZeroVector.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

EmbeddingVector mean_vector(std::span<const EmbeddingVector> vectors);

enum class Polarity { liked, disliked };
std::string_view to_string(Polarity p);

struct TagOccurrence {
    std::string tag;
    MovieId movie_id;

    bool operator==(const TagOccurrence&) const = default;
};

struct InterestCluster {
    std::string id;
    std::vector<TagOccurrence> member_tags;
    EmbeddingVector centroid;
    std::vector<std::string> top_terms;
    Polarity polarity = Polarity::liked;
};

struct ClusterOptions {
    std::size_t max_clusters = 5;
    double max_merge_distance = 0.6;  // cosine distance
    std::size_t top_terms = 5;
};

// Average-linkage agglomerative clustering over cosine distance. Merges continue while
// more than `max_clusters` remain, then only while the next merge distance is at most
// `max_merge_distance`.
// Clusters come back ordered by descending member count. Throws EmptyInput;
// provider errors propagate unchanged.
std::vector<InterestCluster> cluster_tags(std::span<const TagOccurrence> tags,
                                          EmbeddingProvider& provider,
                                          Polarity polarity = Polarity::liked,
                                          const ClusterOptions& options = {});

}  // namespace selfportrait
