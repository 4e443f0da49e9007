#include <map>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "oracles.hpp"
#include "selfportrait/edits.hpp"

using namespace selfportrait;

namespace {

const char* kReworded1 = "Movies starring Michael J. Fox, Michael Keaton, or Michael Moore are generally not favored.";
const char* kReworded2 = "Movies starring Michael Moore are generally not favored.";

// Best total similarity over all injective before->after assignments.
double best_assignment(const std::vector<std::vector<double>>& sim) {
    const std::size_t nb = sim.size(), na = sim.empty() ? 0 : sim[0].size();
    std::vector<std::size_t> idx(na);
    std::iota(idx.begin(), idx.end(), 0);
    double best = -1e9;
    do {
        double s = 0;
        for (std::size_t i = 0; i < std::min(nb, na); ++i) s += sim[i][idx[i]];
        best = std::max(best, s);
    } while (std::next_permutation(idx.begin(), idx.end()));
    return best;
}

}  // namespace

TEST_CASE("edit band examples under the mock") {
    MockEmbeddingProvider p(64, 42);
    const std::string caine = "Movies that feature Michael Caine often evoke a sense of dislike.";
    auto r = classify(caine, caine, p);
    CHECK(r.edit_class == EditClass::retained);
    CHECK(r.similarity == doctest::Approx(1.0));

    auto w = classify(kReworded1, kReworded2, p);
    CHECK(w.edit_class == EditClass::reworded);
    CHECK(w.similarity >= 0.6);
    CHECK(w.similarity < 0.95);

    auto pr = classify("Movies that showcase strong female characters, such as Sarah Michelle Gellar, are often viewed unfavorably",
                       "Reality TV is garbage", p);
    CHECK(pr.edit_class == EditClass::pruned);

    auto gone = classify(caine, "   ", p);
    CHECK(gone.edit_class == EditClass::pruned);
    CHECK(gone.similarity == 0.0);
    CHECK_THROWS_AS(classify("", "x", p), Error);
}

TEST_CASE("bands partition the similarity range") {
    CHECK(band_for(1.0) == EditClass::retained);
    CHECK(band_for(0.95) == EditClass::retained);
    CHECK(band_for(std::nextafter(0.95, 0.0)) == EditClass::reworded);
    CHECK(band_for(0.8) == EditClass::reworded);
    CHECK(band_for(0.60) == EditClass::reworded);
    CHECK(band_for(std::nextafter(0.60, 0.0)) == EditClass::pruned);
    CHECK(band_for(0.3) == EditClass::pruned);
    CHECK(band_for(-1.0) == EditClass::pruned);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 10000; ++i) {
        const double s = u(rng);
        const int hits = (s >= 0.95) + (s >= 0.60 && s < 0.95) + (s < 0.60);
        CHECK(hits == 1);
        const auto want = s >= 0.95 ? EditClass::retained : s >= 0.60 ? EditClass::reworded : EditClass::pruned;
        CHECK(band_for(s) == want);
    }
}

TEST_CASE("sentence splitting") {
    CHECK(split_sentences("One. Two! Three?") == std::vector<std::string>{"One.", "Two!", "Three?"});
    CHECK(split_sentences("Version 2.5 rocks. Next") == std::vector<std::string>{"Version 2.5 rocks.", "Next"});
    CHECK(split_sentences("   ").empty());
}

TEST_CASE("sentence classification examples") {
    MockEmbeddingProvider p(64, 42);
    const std::string text = "I like noir films. Space operas are fun. Heists keep me hooked.";
    auto same = classify_sentences(text, text, p);
    REQUIRE(same.size() == 3);
    for (const auto& s : same) CHECK(s.edit_class == EditClass::retained);

    auto dropped = classify_sentences(text, "I like noir films. Heists keep me hooked.", p);
    REQUIRE(dropped.size() == 3);
    CHECK(dropped[0].edit_class == EditClass::retained);
    CHECK(dropped[1].edit_class == EditClass::pruned);
    CHECK_FALSE(dropped[1].matched_after_sentence.has_value());
    CHECK(dropped[2].edit_class == EditClass::retained);

    auto shuffled = classify_sentences(text, "Heists keep me hooked. I like noir films. Space operas are fun.", p);
    for (const auto& s : shuffled) {
        CHECK(s.edit_class == EditClass::retained);
        CHECK(s.matched_after_sentence == s.before_sentence);
    }
    auto cleared = classify_sentences(text, "", p);
    for (const auto& s : cleared) CHECK(s.edit_class == EditClass::pruned);
}

TEST_CASE("greedy matching equals the optimal assignment on verbatim permutations") {
    MockEmbeddingProvider p(64, 3);
    std::mt19937_64 rng(12);
    std::vector<std::string> pool{"Noir films grip me.", "Space operas are fun.", "Heists keep me hooked.",
                                  "Musicals bore me.", "Westerns feel slow.", "Zombie movies are silly."};
    for (int trial = 0; trial < 50; ++trial) {
        std::shuffle(pool.begin(), pool.end(), rng);
        const std::size_t n = 2 + rng() % 4;
        std::vector<std::string> before(pool.begin(), pool.begin() + static_cast<long>(n));
        auto after = before;
        std::shuffle(after.begin(), after.end(), rng);
        auto join = [](const std::vector<std::string>& v) {
            std::string s;
            for (const auto& x : v) s += (s.empty() ? "" : " ") + x;
            return s;
        };
        auto got = classify_sentences(join(before), join(after), p);
        std::vector<std::vector<double>> sim(n, std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) sim[i][j] = cosine(p.embed_one(before[i]), p.embed_one(after[j]));
        double total = 0;
        for (const auto& s : got) total += s.similarity;
        CHECK(total == doctest::Approx(best_assignment(sim)).epsilon(1e-12));
        for (const auto& s : got) CHECK(s.edit_class == EditClass::retained);
    }
}

TEST_CASE("classify(t, t) is retained for random texts") {
    MockEmbeddingProvider p(64, 77);
    std::mt19937_64 rng(4);
    for (int i = 0; i < 500; ++i) {
        std::string t;
        for (int w = 0; w < 1 + static_cast<int>(rng() % 12); ++w) {
            t += ' ';
            for (int c = 0; c < 1 + static_cast<int>(rng() % 9); ++c) t += static_cast<char>('A' + rng() % 58);
        }
        CHECK(classify(t, t, p).edit_class == EditClass::retained);
    }
}

TEST_CASE("weekly series buckets by week") {
    const auto start = parse_timestamp("2024-04-01");
    std::vector<EditRecord> edits;
    std::map<std::tuple<int, Section, EditClass>, std::size_t> want;
    std::mt19937_64 rng(9);
    for (int i = 0; i < 10; ++i) {
        EditRecord e;
        const int day = static_cast<int>(rng() % 70);
        e.timestamp = start + std::chrono::days{day} + std::chrono::hours{rng() % 24};
        e.section = kAllSections[rng() % 3];
        e.summary_class = static_cast<EditClass>(rng() % 3);
        edits.push_back(e);
        const int week = day / 7 + 1;
        if (week <= 8) ++want[{week, e.section, e.summary_class}];
    }
    auto rows = weekly_edit_series(edits, start);
    std::map<std::tuple<int, Section, EditClass>, std::size_t> got;
    for (const auto& r : rows) got[{r.week_index, r.section, r.edit_class}] = r.count;
    CHECK(got == want);

    EditRecord e;
    e.timestamp = start + std::chrono::days{8};
    auto one = weekly_edit_series(std::vector{e}, start);
    REQUIRE(one.size() == 1);
    CHECK(one[0].week_index == 2);
    CHECK(weekly_edit_series({}, start).empty());
}

TEST_CASE("edit record json round trip") {
    MockEmbeddingProvider p(64, 42);
    auto rec = make_edit_record("7", Section::disliked, 3, kReworded1, kReworded2, parse_timestamp("2024-04-09"), p);
    CHECK(rec.summary_class == EditClass::reworded);
    CHECK_FALSE(rec.sentence_classes.empty());
    nlohmann::json j = rec;
    CHECK(j.get<EditRecord>() == rec);
}
