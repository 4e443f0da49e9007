#include "selfportrait/semantic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <unordered_map>

namespace selfportrait {

EmbeddingVector EmbeddingProvider::embed_one(const std::string& text) {
    auto out = embed(std::span<const std::string>(&text, 1));
    if (out.size() != 1) throw Error(ErrorCode::ProviderFailure, "provider returned wrong count");
    return std::move(out.front());
}

std::string normalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Uniform in (0, 1).
double unit_open(std::uint64_t& state) {
    return (static_cast<double>(splitmix64(state) >> 11) + 0.5) * 0x1.0p-53;
}

std::vector<std::string> tokens_of(const std::string& normalized) {
    std::vector<std::string> tokens;
    std::size_t pos = 0;
    while (pos < normalized.size()) {
        auto end = normalized.find(' ', pos);
        if (end == std::string::npos) end = normalized.size();
        std::string_view tok(normalized.data() + pos, end - pos);
        while (!tok.empty() && !std::isalnum(static_cast<unsigned char>(tok.front()))) {
            tok.remove_prefix(1);
        }
        while (!tok.empty() && !std::isalnum(static_cast<unsigned char>(tok.back()))) {
            tok.remove_suffix(1);
        }
        if (!tok.empty()) tokens.emplace_back(tok);
        pos = end + 1;
    }
    if (tokens.empty()) tokens.push_back(normalized);
    return tokens;
}

}  // namespace

MockEmbeddingProvider::MockEmbeddingProvider(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
    if (dimension_ < 2) throw Error(ErrorCode::InvalidArgument, "dimension must be >= 2");
}

std::vector<EmbeddingVector> MockEmbeddingProvider::embed(std::span<const std::string> texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        std::vector<double> sum(dimension_, 0.0);
        for (const auto& token : tokens_of(normalize_text(text))) {
            std::uint64_t state = fnv1a(token) ^ (seed_ * 0xD1B54A32D192ED03ULL);
            // Box-Muller, two normals per draw.
            for (std::size_t i = 0; i < dimension_; i += 2) {
                const double r = std::sqrt(-2.0 * std::log(unit_open(state)));
                const double theta = 2.0 * 3.14159265358979323846 * unit_open(state);
                sum[i] += r * std::cos(theta);
                if (i + 1 < dimension_) sum[i + 1] += r * std::sin(theta);
            }
        }
        double norm = 0.0;
        for (double v : sum) norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            sum[0] = 1.0;
            norm = 1.0;
        }
        for (double& v : sum) v /= norm;
        out.emplace_back(std::move(sum));
    }
    return out;
}

std::unique_ptr<EmbeddingProvider> mock_provider(std::size_t dimension, std::uint64_t seed) {
    return std::make_unique<MockEmbeddingProvider>(dimension, seed);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension()) {
        throw Error(ErrorCode::DimensionMismatch, std::to_string(a.dimension()) + " vs " +
                                                      std::to_string(b.dimension()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.dimension(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

EmbeddingVector mean_vector(std::span<const EmbeddingVector> vectors) {
    if (vectors.empty()) throw Error(ErrorCode::EmptyInput, "mean of no vectors");
    const std::size_t dim = vectors.front().dimension();
    std::vector<double> sum(dim, 0.0);
    for (const auto& v : vectors) {
        if (v.dimension() != dim) throw Error(ErrorCode::DimensionMismatch, "mixed dimensions");
        for (std::size_t i = 0; i < dim; ++i) sum[i] += v[i];
    }
    for (double& s : sum) s /= static_cast<double>(vectors.size());
    return EmbeddingVector(std::move(sum));
}

std::string_view to_string(Polarity p) { return p == Polarity::liked ? "liked" : "disliked"; }

namespace {

// Condensed upper-triangular distance storage.
class DistanceMatrix {
public:
    explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * (n - 1) / 2, 0.0) {}

    double& at(std::size_t i, std::size_t j) {
        if (i > j) std::swap(i, j);
        return d_[i * n_ - i * (i + 1) / 2 + (j - i - 1)];
    }

private:
    std::size_t n_;
    std::vector<double> d_;
};

struct Merge {
    double distance;
    std::size_t a;
    std::size_t b;
};

// Nearest-neighbour chain for average linkage over weighted points. Returns n-1 merges
// whose `a`/`b` are representative point indices of the merged clusters.
std::vector<Merge> average_linkage(DistanceMatrix& dist, std::vector<double> weight) {
    const std::size_t n = weight.size();
    std::vector<bool> active(n, true);
    std::vector<std::size_t> chain;
    std::vector<Merge> merges;
    merges.reserve(n > 0 ? n - 1 : 0);
    std::size_t remaining = n;

    while (remaining > 1) {
        if (chain.empty()) {
            for (std::size_t i = 0; i < n; ++i) {
                if (active[i]) {
                    chain.push_back(i);
                    break;
                }
            }
        }
        const std::size_t a = chain.back();
        const std::size_t prev = chain.size() >= 2 ? chain[chain.size() - 2] : n;
        std::size_t best = n;
        double best_d = std::numeric_limits<double>::infinity();
        if (prev != n) {
            best = prev;
            best_d = dist.at(a, prev);
        }
        for (std::size_t c = 0; c < n; ++c) {
            if (!active[c] || c == a) continue;
            const double d = dist.at(a, c);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (best != prev) {
            chain.push_back(best);
            continue;
        }
        chain.pop_back();
        chain.pop_back();
        const std::size_t keep = std::min(a, best);
        const std::size_t drop = std::max(a, best);
        merges.push_back({best_d, keep, drop});
        const double wk = weight[keep];
        const double wd = weight[drop];
        for (std::size_t c = 0; c < n; ++c) {
            if (!active[c] || c == keep || c == drop) continue;
            dist.at(keep, c) = (wk * dist.at(keep, c) + wd * dist.at(drop, c)) / (wk + wd);
        }
        weight[keep] = wk + wd;
        active[drop] = false;
        --remaining;
    }
    return merges;
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
    while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    return x;
}

}  // namespace

std::vector<InterestCluster> cluster_tags(std::span<const TagOccurrence> tags,
                                          EmbeddingProvider& provider, Polarity polarity,
                                          const ClusterOptions& options) {
    if (tags.empty()) throw Error(ErrorCode::EmptyInput, "no tags to cluster");
    if (options.max_clusters == 0) throw Error(ErrorCode::InvalidArgument, "max_clusters == 0");

    // Distinct normalized texts; occurrences of one text share an embedding.
    std::unordered_map<std::string, std::size_t> index_of;
    std::vector<std::string> representative;  // first original spelling
    std::vector<std::size_t> point_of(tags.size());
    std::vector<double> count;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        auto key = normalize_text(tags[i].tag);
        auto [it, inserted] = index_of.emplace(std::move(key), representative.size());
        if (inserted) {
            representative.push_back(tags[i].tag);
            count.push_back(0.0);
        }
        point_of[i] = it->second;
        count[it->second] += 1.0;
    }
    const std::size_t n = representative.size();
    const auto embeddings = provider.embed(representative);
    if (embeddings.size() != n) {
        throw Error(ErrorCode::ProviderFailure, "provider returned wrong number of embeddings");
    }

    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    if (n > 1) {
        DistanceMatrix dist(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                dist.at(i, j) = 1.0 - cosine(embeddings[i], embeddings[j]);
            }
        }
        auto merges = average_linkage(dist, count);
        std::stable_sort(merges.begin(), merges.end(),
                         [](const Merge& x, const Merge& y) { return x.distance < y.distance; });
        std::size_t clusters = n;
        for (const auto& m : merges) {
            if (clusters <= options.max_clusters && m.distance > options.max_merge_distance) break;
            const auto ra = find_root(parent, m.a);
            const auto rb = find_root(parent, m.b);
            if (ra == rb) continue;
            parent[std::max(ra, rb)] = std::min(ra, rb);
            --clusters;
        }
    }

    std::map<std::size_t, std::size_t> slot_of_root;  // root -> output position
    std::vector<InterestCluster> out;
    std::vector<std::vector<std::size_t>> points_in;  // distinct points per cluster
    for (std::size_t i = 0; i < tags.size(); ++i) {
        const std::size_t p = point_of[i];
        const std::size_t root = find_root(parent, p);
        auto [it, inserted] = slot_of_root.emplace(root, out.size());
        if (inserted) {
            out.emplace_back();
            out.back().polarity = polarity;
            points_in.emplace_back();
        }
        auto& cluster = out[it->second];
        cluster.member_tags.push_back(tags[i]);
        auto& pts = points_in[it->second];
        if (std::find(pts.begin(), pts.end(), p) == pts.end()) pts.push_back(p);
    }

    const std::size_t dim = embeddings.front().dimension();
    for (std::size_t c = 0; c < out.size(); ++c) {
        auto& cluster = out[c];
        std::vector<double> sum(dim, 0.0);
        double total = 0.0;
        for (std::size_t p : points_in[c]) {
            for (std::size_t k = 0; k < dim; ++k) sum[k] += count[p] * embeddings[p][k];
            total += count[p];
        }
        for (double& v : sum) v /= total;
        cluster.centroid = EmbeddingVector(std::move(sum));

        std::vector<std::pair<double, std::size_t>> ranked;
        const bool zero_centroid = cluster.centroid.is_zero();
        for (std::size_t p : points_in[c]) {
            const double score = zero_centroid ? count[p] : cosine(embeddings[p], cluster.centroid);
            ranked.emplace_back(score, p);
        }
        std::sort(ranked.begin(), ranked.end(), [&](const auto& x, const auto& y) {
            if (x.first != y.first) return x.first > y.first;
            return representative[x.second] < representative[y.second];
        });
        for (std::size_t k = 0; k < ranked.size() && k < options.top_terms; ++k) {
            cluster.top_terms.push_back(representative[ranked[k].second]);
        }
    }

    std::vector<std::size_t> order(out.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return out[x].member_tags.size() > out[y].member_tags.size();
    });
    std::vector<InterestCluster> sorted;
    sorted.reserve(out.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        sorted.push_back(std::move(out[order[k]]));
        sorted.back().id = std::string(to_string(polarity)) + "-" + std::to_string(k);
    }
    return sorted;
}

}  // namespace selfportrait
