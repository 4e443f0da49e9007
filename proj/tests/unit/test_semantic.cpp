#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "selfportrait/semantic.hpp"

using namespace selfportrait;

namespace {

// Maps each listed text to its own basis vector.
class BasisProvider final : public EmbeddingProvider {
public:
    explicit BasisProvider(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {}
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
        std::vector<EmbeddingVector> out;
        for (const auto& t : texts) {
            std::vector<double> v(vocab_.size(), 0.0);
            const auto it = std::find(vocab_.begin(), vocab_.end(), normalize_text(t));
            REQUIRE(it != vocab_.end());
            v[static_cast<std::size_t>(it - vocab_.begin())] = 1.0;
            out.emplace_back(std::move(v));
        }
        return out;
    }
    std::size_t dimension() const override { return vocab_.size(); }

private:
    std::vector<std::string> vocab_;
};

class FailingProvider final : public EmbeddingProvider {
public:
    std::vector<EmbeddingVector> embed(std::span<const std::string>) override {
        throw Error(ErrorCode::ProviderFailure, "down");
    }
    std::size_t dimension() const override { return 4; }
};

std::string random_word(std::mt19937_64& rng) {
    std::string w;
    const int len = 3 + static_cast<int>(rng() % 8);
    for (int i = 0; i < len; ++i) w += static_cast<char>('a' + rng() % 26);
    return w;
}

void check_partition(std::span<const TagOccurrence> input, const std::vector<InterestCluster>& clusters) {
    std::multiset<std::pair<std::string, std::string>> in, out;
    for (const auto& t : input) in.emplace(t.tag, t.movie_id);
    for (const auto& c : clusters) {
        CHECK_FALSE(c.member_tags.empty());
        for (const auto& t : c.member_tags) out.emplace(t.tag, t.movie_id);
    }
    CHECK(in == out);
    for (std::size_t i = 1; i < clusters.size(); ++i)
        CHECK(clusters[i - 1].member_tags.size() >= clusters[i].member_tags.size());
}

}  // namespace

TEST_CASE("cosine examples and errors") {
    EmbeddingVector x({1, 0}), y({0, 1}), d({1, 1});
    CHECK(cosine(x, x) == doctest::Approx(1.0));
    CHECK(cosine(x, y) == doctest::Approx(0.0));
    CHECK(cosine(d, x) == doctest::Approx(0.70710678118654752));
    CHECK_THROWS_AS(cosine(x, EmbeddingVector({1, 0, 0})), Error);
    CHECK_THROWS_AS(cosine(x, EmbeddingVector({0, 0})), Error);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (int i = 0; i < 500; ++i) {
        std::vector<double> a(16), b(16);
        for (auto& v : a) v = g(rng);
        for (auto& v : b) v = g(rng);
        EmbeddingVector ea(a), eb(b);
        CHECK(std::abs(cosine(ea, ea) - 1.0) < 1e-12);
        CHECK(std::abs(cosine(ea, eb) - cosine(eb, ea)) < 1e-12);
        CHECK(std::abs(cosine(ea, eb) - oracle::cosine(a, b)) < 1e-12);
    }
}

TEST_CASE("mock provider determinism and normalization") {
    MockEmbeddingProvider p(64, 42);
    CHECK(p.embed_one("Noir") == p.embed_one("Noir"));
    CHECK(p.embed_one("noir") == p.embed_one(" NOIR "));
    CHECK(p.embed_one("dark   comedy") == p.embed_one("Dark Comedy"));
    CHECK(p.embed_one("x").dimension() == 64);
    double norm = 0;
    const auto e = p.embed_one("space opera");
    for (double v : e.values()) norm += v * v;
    CHECK(norm == doctest::Approx(1.0));
    CHECK(normalize_text("  Hello \t World ") == "hello world");
}

TEST_CASE("mock provider keeps unrelated texts apart") {
    std::mt19937_64 rng(11);
    int close = 0;
    const int pairs = 1000;
    for (int i = 0; i < pairs; ++i) {
        MockEmbeddingProvider p(64, rng());
        const auto a = random_word(rng) + " " + random_word(rng);
        const auto b = random_word(rng) + " " + random_word(rng);
        if (std::abs(cosine(p.embed_one(a), p.embed_one(b))) >= 0.5) ++close;
    }
    CHECK(close <= pairs / 100);
}

TEST_CASE("singleton tag yields one cluster") {
    MockEmbeddingProvider p(64, 1);
    std::vector<TagOccurrence> tags{{"noir", "m1"}, {"Noir", "m2"}};
    auto c = cluster_tags(tags, p);
    REQUIRE(c.size() == 1);
    CHECK(c[0].member_tags.size() == 2);
    CHECK(c[0].top_terms.size() == 1);
    CHECK_THROWS_AS(cluster_tags(std::vector<TagOccurrence>{}, p), Error);
}

TEST_CASE("two orthogonal families split by text") {
    BasisProvider p({"dark comedy", "space opera"});
    std::vector<TagOccurrence> tags;
    for (int i = 0; i < 5; ++i) tags.push_back({"dark comedy", "a" + std::to_string(i)});
    for (int i = 0; i < 5; ++i) tags.push_back({"space opera", "b" + std::to_string(i)});
    auto c = cluster_tags(tags, p);
    REQUIRE(c.size() == 2);
    check_partition(tags, c);
    for (const auto& cl : c) {
        std::set<std::string> texts;
        for (const auto& t : cl.member_tags) texts.insert(t.tag);
        CHECK(texts.size() == 1);
    }
}

TEST_CASE("failing provider passes through") {
    FailingProvider p;
    std::vector<TagOccurrence> tags{{"a", "1"}, {"b", "2"}};
    try {
        cluster_tags(tags, p);
        FAIL("expected ProviderFailure");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ProviderFailure);
    }
}

TEST_CASE("cluster partition, cap and centroids on random inputs") {
    MockEmbeddingProvider p(64, 5);
    std::mt19937_64 rng(99);
    std::vector<std::string> families{"noir", "space", "romance", "heist", "zombie", "musical", "western"};
    for (std::size_t n : {1u, 2u, 5u, 6u, 40u, 300u, 2000u, 10000u}) {
        CAPTURE(n);
        std::vector<TagOccurrence> tags;
        const std::size_t distinct = std::min<std::size_t>(n, 1500);
        std::vector<std::string> vocab;
        for (std::size_t i = 0; i < distinct; ++i)
            vocab.push_back(families[rng() % families.size()] + " " + random_word(rng));
        for (std::size_t i = 0; i < n; ++i) tags.push_back({vocab[rng() % vocab.size()], "m" + std::to_string(i % 97)});
        for (std::size_t max_clusters : {1u, 3u, 5u}) {
            ClusterOptions opt;
            opt.max_clusters = max_clusters;
            auto clusters = cluster_tags(tags, p, Polarity::liked, opt);
            CHECK(clusters.size() >= 1);
            CHECK(clusters.size() <= max_clusters);
            check_partition(tags, clusters);
            for (const auto& c : clusters) {
                CHECK(c.top_terms.size() <= 5);
                std::set<std::string> member_texts;
                std::vector<double> mean(64, 0.0);
                for (const auto& t : c.member_tags) {
                    member_texts.insert(t.tag);
                    const auto e = p.embed_one(t.tag);
                    for (std::size_t k = 0; k < 64; ++k) mean[k] += e[k] / static_cast<double>(c.member_tags.size());
                }
                for (const auto& term : c.top_terms) CHECK(member_texts.contains(term));
                for (std::size_t k = 0; k < 64; ++k) CHECK(std::abs(mean[k] - c.centroid[k]) < 1e-9);
            }
        }
    }
}

TEST_CASE("seven families of forty tags") {
    MockEmbeddingProvider p(64, 42);
    std::vector<std::string> families{"noir", "space", "romance", "heist", "zombie", "musical", "western"};
    std::vector<TagOccurrence> tags;
    for (int i = 0; i < 40; ++i) tags.push_back({families[i % 7] + " film " + std::to_string(i / 7), "m" + std::to_string(i)});
    auto c = cluster_tags(tags, p);
    CHECK(c.size() <= 5);
    check_partition(tags, c);
}
