#include <fstream>
#include <functional>
#include <set>

#include <nlohmann/json.hpp>

#include "selfportrait/jsonl.hpp"
#include "selfportrait/service.hpp"
#include "selfportrait/store.hpp"
#include "doctest.h"
#include "harness.hpp"

using namespace selfportrait;
using nlohmann::json;

namespace {

const Timestamp kNow = parse_timestamp("2024-06-01");

struct Env {
    testutil::TempDir dir{"service"};
    MockEmbeddingProvider embedder{64, 42};
    testutil::SwitchableSummary summarizer;
    ManualClock clock{kNow};
    std::unique_ptr<PortraitService> service;

    Env() { reopen(); }
    void reopen() {
        service.reset();
        service = std::make_unique<PortraitService>(dir.path(), testutil::fixture_dataset(), embedder, summarizer, clock);
    }
};

MovieRecord movie(std::string id, std::vector<std::string> genres, int year) {
    MovieRecord m;
    m.movie_id = std::move(id);
    m.title = m.movie_id;
    m.genres = std::move(genres);
    m.release_year = year;
    return m;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("treemap counting and bucketing") {
    std::vector<MovieRecord> movies{movie("a", {"Comedy"}, 1994), movie("b", {"Comedy"}, 1999),
                                    movie("c", {"Comedy"}, 0), movie("d", {"Drama"}, 2001)};
    auto g = build_treemap(movies, TreemapCategory::genre, {});
    REQUIRE(g.cells.size() == 2);
    CHECK(g.cells[0].label == "Comedy");
    CHECK(g.cells[0].count == 3);
    CHECK(g.cells[0].children.size() == 3);
    CHECK(g.cells[1].label == "Drama");
    CHECK(g.cells[1].count == 1);

    auto y = build_treemap(movies, TreemapCategory::release_year, {});
    REQUIRE(y.cells.size() == 3);
    CHECK(y.cells[0].label == "1990s");
    CHECK(y.cells[0].count == 2);

    auto lang = build_treemap(movies, TreemapCategory::language, {});
    REQUIRE(lang.cells.size() == 1);
    CHECK(lang.cells[0].label == "Unknown");
    CHECK(lang.cells[0].count == 4);

    CHECK(code_of([] { parse_treemap_category("colour"); }) == ErrorCode::BadCategory);
    CHECK(parse_treemap_category("release_year") == TreemapCategory::release_year);
}

TEST_CASE("popularity quartiles over the catalog") {
    Catalog c;
    for (int i = 0; i < 8; ++i) {
        auto m = movie("m" + std::to_string(i), {"Drama"}, 2000);
        m.popularity = i;
        c.movies[m.movie_id] = m;
    }
    auto q = popularity_quartiles(c);
    CHECK(q.at("m0") == "Q1");
    CHECK(q.at("m1") == "Q1");
    CHECK(q.at("m4") == "Q3");
    CHECK(q.at("m7") == "Q4");
}

TEST_CASE("store replays logs and snapshots") {
    testutil::TempDir dir("store");
    Portrait p;
    p.user_id = "u";
    p.recent_summary = "r";
    p.liked_summary = "l";
    p.disliked_summary = "d";
    {
        Store s(dir.path());
        for (int v = 1; v <= 3; ++v) {
            p.version = v;
            s.append_portrait(p);
        }
        s.write_snapshot({{"u", p}}, 3);
        p.version = 4;
        p.liked_summary = "after snapshot";
        s.append_portrait(p);
        s.append_event(InteractionEvent{"u", EventKind::login, std::nullopt, std::nullopt, kNow});
    }
    Store again(dir.path());
    auto st = again.replay();
    REQUIRE(st.portraits.contains("u"));
    CHECK(st.portraits.at("u") == p);
    CHECK(st.events.size() == 1);
    CHECK(again.history("u").size() == 4);
    CHECK(is_gap_free_chain(again.history("u")));

    // Torn final portrait line is ignored.
    {
        std::ofstream out(dir / Store::kPortraits, std::ios::app);
        out << "{\"user_id\":\"u\",\"vers";
    }
    Store torn(dir.path());
    CHECK(torn.replay().portraits.at("u") == p);
}

TEST_CASE("service lifecycle") {
    Env env;
    auto& svc = *env.service;
    CHECK(code_of([&] { svc.portrait("nobody"); }) == ErrorCode::UnknownUser);
    CHECK(code_of([&] { svc.portrait("1"); }) == ErrorCode::NotYetGenerated);

    auto sweep = svc.sweep();
    CHECK(sweep.initial == 8);  // user 9 is below the rating minimum
    CHECK(sweep.scheduled == 0);
    CHECK(code_of([&] { svc.portrait("9"); }) == ErrorCode::NotYetGenerated);

    auto p = svc.portrait("1");
    CHECK(p->version == 1);
    CHECK(p->author == Author::ai);
    for (Section s : kAllSections) CHECK(p->section_author(s) == Author::ai);

    auto r = svc.edit_section("1", Section::liked, p->liked_summary, 1);
    CHECK(r.portrait.version == 2);
    CHECK(r.edit.summary_class == EditClass::retained);
    CHECK(r.portrait.section_author(Section::liked) == Author::user);
    CHECK(r.portrait.section_author(Section::recent) == Author::ai);

    CHECK(code_of([&] { svc.edit_section("1", Section::liked, "x", 1); }) == ErrorCode::StaleVersion);
    CHECK(code_of([&] { svc.edit_section("1", Section::recent, "  ", 2); }) == ErrorCode::EmptySection);
    auto cleared = svc.edit_section("1", Section::disliked, "", 2);
    CHECK(cleared.portrait.disliked_summary == kNoDislikesPlaceholder);
    CHECK(cleared.edit.summary_class == EditClass::pruned);

    // Not enough new ratings and no force: nothing happens.
    env.clock.advance(std::chrono::hours{48});
    CHECK_FALSE(svc.regenerate("1", false).has_value());

    auto forced = svc.regenerate("1", true);
    REQUIRE(forced.has_value());
    CHECK(forced->version == 4);
    CHECK(svc.last_generation("1")->trigger == "forced");

    // Outage: 502-class failure, portrait unchanged.
    env.summarizer.down = true;
    CHECK(code_of([&] { svc.regenerate("1", true); }) == ErrorCode::ProviderFailure);
    CHECK(svc.portrait("1")->version == 4);
    env.summarizer.down = false;

    // Ten new ratings plus a day make the sweep regenerate.
    std::set<MovieId> rated;
    for (const auto& r : testutil::fixture_dataset().ratings)
        if (r.user_id == "1") rated.insert(r.movie_id);
    std::size_t added = 0;
    for (const auto& [id, m] : svc.catalog().movies) {
        if (added == 10) break;
        if (rated.contains(id)) continue;
        svc.record_event(InteractionEvent{"1", EventKind::rating, id, 4.0, env.clock.now()});
        ++added;
    }
    REQUIRE(added == 10);
    env.clock.advance(std::chrono::hours{25});
    auto s2 = svc.sweep();
    CHECK(s2.failed == 0);
    CHECK(s2.scheduled >= 1);
    CHECK(svc.last_generation("1")->trigger == "scheduled");

    CHECK(code_of([&] {
              svc.record_event(InteractionEvent{"1", EventKind::rating, std::string("no-such-movie"), 4.0, env.clock.now()});
          }) == ErrorCode::InvalidArgument);

    const auto latest = *svc.portrait("1");
    const auto history = svc.history("1");
    CHECK(is_gap_free_chain(history));
    env.reopen();
    CHECK(*env.service->portrait("1") == latest);
    CHECK(env.service->edits().size() == 2);
}

TEST_CASE("regeneration feeds edited text back as context") {
    Env env;
    auto& svc = *env.service;
    svc.sweep();
    auto p = svc.portrait("2");
    svc.edit_section("2", Section::liked, "I mostly watch slow burning mysteries.", p->version);
    auto next = svc.regenerate("2", true);
    REQUIRE(next);
    const auto rec = svc.last_generation("2");
    REQUIRE(rec->user_context.has_value());
    CHECK(rec->user_context->find("slow burning mysteries") != std::string::npos);
    CHECK(next->section_author(Section::liked) == Author::merged);
}

TEST_CASE("http routes") {
    Env env;
    env.service->sweep();
    testutil::LiveServer server(*env.service);
    auto cli = server.client();

    auto health = cli.Get("/api/v1/health");
    REQUIRE(health);
    CHECK(health->status == 200);

    auto res = cli.Get("/api/v1/users/3/portrait");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto portrait = json::parse(res->body).get<Portrait>();
    CHECK(portrait.version == 1);
    CHECK(cli.Get("/api/v1/users/zzz/portrait")->status == 404);
    CHECK(cli.Get("/api/v1/users/9/portrait")->status == 409);

    json body{{"text", portrait.liked_summary}, {"base_version", 1}};
    res = cli.Put("/api/v1/users/3/portrait/liked", body.dump(), "application/json");
    CHECK(res->status == 200);
    auto put = json::parse(res->body);
    CHECK(put["portrait"]["version"] == 2);
    CHECK(put["edit"]["summary_class"] == "retained");
    CHECK(cli.Put("/api/v1/users/3/portrait/liked", body.dump(), "application/json")->status == 409);
    json empty{{"text", ""}, {"base_version", 2}};
    CHECK(cli.Put("/api/v1/users/3/portrait/recent", empty.dump(), "application/json")->status == 422);
    CHECK(cli.Put("/api/v1/users/3/portrait/liked", "not json", "application/json")->status == 400);

    CHECK(cli.Post("/api/v1/users/3/regenerate", "", "application/json")->status == 204);
    res = cli.Post("/api/v1/users/3/regenerate?force=true", "", "application/json");
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["version"] == 3);
    env.summarizer.down = true;
    CHECK(cli.Post("/api/v1/users/3/regenerate?force=true", "", "application/json")->status == 502);
    env.summarizer.down = false;
    CHECK(json::parse(cli.Get("/api/v1/users/3/portrait")->body)["version"] == 3);

    res = cli.Get("/api/v1/users/3/treemap?category=genre");
    CHECK(res->status == 200);
    auto tm = json::parse(res->body);
    CHECK(tm["category"] == "genre");
    CHECK_FALSE(tm["cells"].empty());
    CHECK(cli.Get("/api/v1/users/3/treemap?category=colour")->status == 400);

    json events = json::array({{{"user_id", "3"}, {"kind", "login"}, {"timestamp", "2024-06-01T10:00:00Z"}},
                               {{"user_id", "3"}, {"kind", "movie_view"}, {"movie_id", "5"}, {"timestamp", "2024-06-01T10:01:00Z"}}});
    res = cli.Post("/api/v1/events", events.dump(), "application/json");
    CHECK(res->status == 202);
    CHECK(json::parse(res->body)["accepted"] == 2);
    json bad{{"user_id", "3"}, {"kind", "rating"}, {"movie_id", "5"}, {"score", 3.3}, {"timestamp", "2024-06-01"}};
    CHECK(cli.Post("/api/v1/events", bad.dump(), "application/json")->status == 400);

    res = cli.Get("/api/v1/analysis/report?window=2024-06-01,2024-07-01&baseline=2024-05-01,2024-06-01");
    REQUIRE(res);
    CHECK(res->status == 409);
    CHECK(cli.Get("/api/v1/analysis/report")->status == 400);
}

TEST_CASE("bearer token") {
    Env env;
    testutil::LiveServer server(*env.service, "s3cret");
    auto cli = server.client();
    CHECK(cli.Get("/api/v1/users/1/portrait")->status == 401);
    httplib::Headers auth{{"Authorization", "Bearer s3cret"}};
    CHECK(cli.Get("/api/v1/users/1/portrait", auth)->status == 409);
    CHECK(cli.Get("/api/v1/health")->status == 200);
}

TEST_CASE("http status mapping") {
    CHECK(http_status(ErrorCode::UnknownUser) == 404);
    CHECK(http_status(ErrorCode::StaleVersion) == 409);
    CHECK(http_status(ErrorCode::InsufficientData) == 409);
    CHECK(http_status(ErrorCode::EmptySection) == 422);
    CHECK(http_status(ErrorCode::ProviderFailure) == 502);
    CHECK(http_status(ErrorCode::BadCategory) == 400);
}
