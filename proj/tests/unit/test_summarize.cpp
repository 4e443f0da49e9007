#include <fstream>
#include <map>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "selfportrait/edits.hpp"
#include "selfportrait/summarize.hpp"

using namespace selfportrait;

namespace {

InterestCluster cluster_at(std::vector<double> centroid, std::string id = "c",
                           std::vector<std::string> terms = {"noir"}) {
    InterestCluster c;
    c.id = std::move(id);
    c.centroid = EmbeddingVector(std::move(centroid));
    c.top_terms = terms;
    for (const auto& t : terms) c.member_tags.push_back({t, "m1"});
    return c;
}

std::vector<InterestCluster> oracle_filter(const std::vector<InterestCluster>& liked,
                                           const std::vector<InterestCluster>& disliked) {
    std::vector<InterestCluster> out;
    for (const auto& d : disliked) {
        double best = -2;
        for (const auto& l : liked) {
            best = std::max(best, oracle::cosine({d.centroid.values().begin(), d.centroid.values().end()},
                                                 {l.centroid.values().begin(), l.centroid.values().end()}));
        }
        if (best < 0.8) out.push_back(d);
    }
    return out;
}

GenerationRecord record_at(std::int64_t count) {
    GenerationRecord r;
    r.ratings_count_at_generation = count;
    return r;
}

const Timestamp t0 = parse_timestamp("2024-04-01");

}  // namespace

TEST_CASE("contrastive filter examples") {
    auto liked = std::vector{cluster_at({1, 0, 0}, "l")};
    CHECK(contrastive_filter(liked, std::vector{cluster_at({1, 0, 0}, "d")}).empty());
    CHECK(contrastive_filter(liked, std::vector{cluster_at({0, 1, 0}, "d")}).size() == 1);
    CHECK(contrastive_filter(liked, std::vector{cluster_at({0.8, 0.6, 0}, "d")}).empty());
    CHECK(contrastive_filter(liked, std::vector{cluster_at({0.95, std::sqrt(1 - 0.95 * 0.95), 0}, "d")}).empty());
    CHECK_THROWS_AS(contrastive_filter(liked, std::vector{cluster_at({1, 0}, "d")}), Error);
}

TEST_CASE("contrastive filter matches the definition and is monotone") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t dim = 2 + rng() % 4;
        auto l = oracle::random_unit_vectors(rng, 1 + rng() % 5, dim);
        auto d = oracle::random_unit_vectors(rng, rng() % 6, dim);
        std::vector<InterestCluster> liked, disliked;
        for (std::size_t i = 0; i < l.size(); ++i) liked.push_back(cluster_at(l[i], "l" + std::to_string(i)));
        for (std::size_t i = 0; i < d.size(); ++i) disliked.push_back(cluster_at(d[i], "d" + std::to_string(i)));
        auto got = contrastive_filter(liked, disliked);
        auto want = oracle_filter(liked, disliked);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].id == want[i].id);

        liked.push_back(cluster_at(oracle::random_unit_vectors(rng, 1, dim)[0], "extra"));
        CHECK(contrastive_filter(liked, disliked).size() <= got.size());
    }
}

TEST_CASE("longterm summaries from the mock") {
    MockSummaryProvider mock;
    auto templates = PromptTemplates::defaults();
    std::vector<InterestCluster> liked{cluster_at({1, 0, 0}, "a", {"noir", "detective"}),
                                       cluster_at({0, 1, 0}, "b", {"space opera"}),
                                       cluster_at({0, 0, 1}, "c", {"heist"})};
    auto s = generate_longterm(liked, {}, mock, templates);
    CHECK(split_sentences(s.liked_summary).size() == 3);
    CHECK(s.disliked_summary == kNoDislikesPlaceholder);
    CHECK(s.liked_sentences[0].sentence.find("noir") != std::string::npos);
    CHECK(s.liked_sentences[0].sentence.find("detective") != std::string::npos);

    std::vector<InterestCluster> disliked{cluster_at({0.95, std::sqrt(1 - 0.9025), 0}, "x", {"romance"}),
                                          cluster_at({-1, 0, 0}, "y", {"reality tv"})};
    for (auto& c : disliked) c.polarity = Polarity::disliked;
    auto s2 = generate_longterm(liked, disliked, mock, templates);
    REQUIRE(s2.disliked_sentences.size() == 1);
    CHECK(s2.disliked_sentences[0].cluster_id == "y");
    CHECK(s2.disliked_summary.find("not favored") != std::string::npos);

    CHECK_THROWS_AS(generate_longterm({}, disliked, mock, templates), Error);

    UserContext ctx;
    ctx.liked = "I adore hardboiled detectives.";
    auto s3 = generate_longterm(liked, {}, mock, templates, ctx);
    CHECK(s3.prompts[0].find("I adore hardboiled detectives.") != std::string::npos);
    CHECK(s3.liked_summary == s.liked_summary);
}

TEST_CASE("mock faithfulness over random clusters") {
    MockSummaryProvider mock;
    auto templates = PromptTemplates::defaults();
    std::mt19937_64 rng(5);
    for (int i = 0; i < 100; ++i) {
        std::vector<std::string> terms;
        for (std::size_t k = 0; k < 1 + rng() % 5; ++k) {
            std::string w;
            for (int c = 0; c < 4 + static_cast<int>(rng() % 6); ++c) w += static_cast<char>('a' + rng() % 26);
            terms.push_back(w);
        }
        std::vector<InterestCluster> liked{cluster_at({1, 0}, "c", terms)};
        auto s = generate_longterm(liked, {}, mock, templates);
        CHECK(faithfulness_check(s.liked_sentences[0].sentence, liked[0]));
    }
    auto c = cluster_at({1, 0}, "c", {"noir"});
    CHECK(faithfulness_check("Movies featuring NOIR   detectives appeal to you.", c));
    CHECK_FALSE(faithfulness_check("Reality TV is garbage", c));
}

TEST_CASE("recent summary facets") {
    MockSummaryProvider mock;
    auto templates = PromptTemplates::defaults();
    std::vector<MovieRecord> movies;
    std::mt19937_64 rng(8);
    std::vector<std::string> genres{"Horror", "Drama", "Comedy", "Action"};
    std::map<std::string, std::size_t> counts;
    for (int i = 0; i < 20; ++i) {
        MovieRecord m;
        m.movie_id = std::to_string(i);
        m.genres = {i < 9 ? "Horror" : genres[rng() % genres.size()]};
        ++counts[m.genres[0]];
        m.release_year = 1990 + static_cast<int>(rng() % 3);
        m.language = "English";
        movies.push_back(m);
    }
    auto table = facet_table(movies);
    std::vector<std::pair<std::size_t, std::string>> want;
    for (auto& [g, n] : counts) want.emplace_back(n, g);
    std::sort(want.begin(), want.end(), [](auto& a, auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    const auto& got = table[Facet::genre];
    REQUIRE(got.size() == std::min<std::size_t>(3, want.size()));
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].value == want[i].second);
        CHECK(got[i].count == want[i].first);
    }
    CHECK(got[0].value == "Horror");

    auto r = generate_recent(movies, mock, templates);
    CHECK(split_sentences(r.text).size() == 5);
    CHECK(r.prompt.find("Horror") != std::string::npos);

    auto one = generate_recent(std::vector{movies[0]}, mock, templates);
    CHECK(split_sentences(one.text).size() == 5);
    for (Facet f : kAllFacets) CHECK(one.facets[f].size() <= 1);
    CHECK_THROWS_AS(generate_recent(std::vector<MovieRecord>{}, mock, templates), Error);
}

TEST_CASE("regeneration trigger examples") {
    RegenerationPolicy policy;
    const auto later = t0 + std::chrono::hours{24};
    CHECK(should_regenerate(record_at(100), 110, policy, later, t0));
    CHECK_FALSE(should_regenerate(record_at(200), 209, policy, later, t0));
    CHECK(should_regenerate(record_at(40), 46, policy, later, t0));
    CHECK_FALSE(should_regenerate(record_at(100), 200, policy, t0 + std::chrono::hours{23}, t0));
    CHECK_FALSE(should_regenerate(record_at(0), 0, policy, later, t0));
    CHECK_THROWS_AS(should_regenerate(record_at(1), 5, policy, t0, later), Error);
}

TEST_CASE("regeneration trigger is monotone and matches the formula") {
    RegenerationPolicy policy;
    const auto later = t0 + std::chrono::hours{25};
    for (std::int64_t base = 0; base <= 120; ++base) {
        bool prev = false;
        for (std::int64_t delta = 0; delta <= 30; ++delta) {
            const bool fired = should_regenerate(record_at(base), base + delta, policy, later, t0);
            if (base > 0) CHECK(fired == oracle::trigger(base, delta));
            CHECK((!prev || fired));
            prev = fired;
        }
    }
}

TEST_CASE("templates and helpers") {
    std::vector<std::pair<std::string, std::string>> v{{"a", "1"}, {"b", "two"}};
    CHECK(render_template("x {{a}} y {{b}} z {{c}}", v) == "x 1 y two z {{c}}");
    CHECK(render_template("{{a", v) == "{{a");
    CHECK(first_sentence("  First one. Second one.") == "First one.");
    CHECK(first_sentence("no terminator") == "no terminator.");
    CHECK(stable_hash_hex("abc") == stable_hash_hex("abc"));
    CHECK(stable_hash_hex("abc") != stable_hash_hex("abd"));
    CHECK(stable_hash_hex("").size() == 16);

    testutil::TempDir dir("prompts");
    std::ofstream(dir / "recent.txt") << "custom {{facet_table}}";
    auto t = PromptTemplates::load(dir.path());
    CHECK(t.recent == "custom {{facet_table}}");
    CHECK(t.longterm == PromptTemplates::defaults().longterm);
}

TEST_CASE("shipped prompt files match the built-in templates") {
    auto t = PromptTemplates::load(SP_PROMPTS_DIR);
    auto d = PromptTemplates::defaults();
    CHECK(t.longterm == d.longterm);
    CHECK(t.recent == d.recent);
    CHECK(t.context == d.context);
}

TEST_CASE("full pipeline on the fixture is deterministic and faithful") {
    const auto dir = testutil::fixture_dir();
    auto catalog = load_catalog(dir / "movies.csv", dir / "tags.csv");
    auto ratings = keep_latest_per_movie(load_ratings(dir / "ratings.csv")).ratings;
    auto by_user = group_by_user(ratings);
    MockEmbeddingProvider emb(64, 42);
    MockSummaryProvider mock;
    auto templates = PromptTemplates::defaults();
    GenerationRequest req;
    req.user_id = "1";
    req.ratings = by_user.at("1");
    req.reference_date = *max_timestamp(ratings);
    req.generated_at = req.reference_date;
    auto a = generate_portrait(req, catalog, emb, mock, templates);
    auto b = generate_portrait(req, catalog, emb, mock, templates);
    CHECK(a.portrait == b.portrait);
    CHECK(a.portrait.version == 1);
    CHECK(a.liked_clusters.size() <= 5);
    CHECK(split_sentences(a.portrait.liked_summary).size() == a.liked_clusters.size());
    CHECK(a.record.ratings_count_at_generation == static_cast<std::int64_t>(req.ratings.size()));
    for (const auto& s : a.longterm.liked_sentences) {
        auto it = std::find_if(a.liked_clusters.begin(), a.liked_clusters.end(),
                               [&](const InterestCluster& c) { return c.id == s.cluster_id; });
        REQUIRE(it != a.liked_clusters.end());
        CHECK(faithfulness_check(s.sentence, *it));
    }
}
