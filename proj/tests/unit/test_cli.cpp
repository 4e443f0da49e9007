#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "oracles.hpp"
#include "selfportrait/commands.hpp"
#include "selfportrait/jsonl.hpp"
#include "selfportrait/metrics.hpp"

using namespace selfportrait;
using nlohmann::json;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const std::filesystem::path& p) {
    const auto s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

Run ingest_fixture(const std::filesystem::path& out) {
    const auto f = testutil::fixture_dir();
    return cli({"ingest", "--movies", (f / "movies.csv").string(), "--tags", (f / "tags.csv").string(), "--ratings",
                (f / "ratings.csv").string(), "--out", out.string()});
}

void write_json(const std::filesystem::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

// Twelve users in three groups; collaborated users rate far more during the window
// when `effect` is set, everyone is identical otherwise.
void write_group_logs(const std::filesystem::path& dir, bool effect) {
    std::vector<json> events;
    std::ofstream groups(dir / "groups.csv");
    groups << "user_id,group\n";
    const char* names[] = {"reflected", "interacted", "collaborated"};
    for (int u = 0; u < 12; ++u) {
        const std::string id = "g" + std::to_string(u);
        const int g = u % 3;
        groups << id << "," << names[g] << "\n";
        auto add = [&](const std::string& day, int n, int hour) {
            for (int i = 0; i < n; ++i) {
                const auto t = parse_timestamp(day) + std::chrono::hours{hour} + std::chrono::minutes{i};
                events.push_back(InteractionEvent{id, EventKind::rating, std::to_string(1 + (i * 7 + u) % 60),
                                                  0.5 * (1 + (i + u) % 10), t});
                events.push_back(InteractionEvent{id, EventKind::movie_view, std::to_string(1 + (i * 3) % 60),
                                                  std::nullopt, t});
            }
        };
        const int jitter = effect ? u % 4 : 0;
        add("2024-01-10", 6 + jitter, 9);
        add("2024-02-10", 6 + jitter + (effect && g == 2 ? 20 : 0), 9);
    }
    jsonl::write_all(dir / "events.jsonl", events);
    jsonl::write_all(dir / "edits.jsonl", std::vector<json>{});
}

std::string field(const std::string& summary, const std::string& key) {
    const auto pos = summary.find(key + "=");
    REQUIRE(pos != std::string::npos);
    const auto start = pos + key.size() + 1;
    return summary.substr(start, summary.find_first_of(" \n", start) - start);
}

}  // namespace

TEST_CASE("ingest counts match the fixture") {
    testutil::TempDir dir("cli-ingest");
    auto r = ingest_fixture(dir.path());
    REQUIRE(r.code == 0);
    // Row counts straight from the CSVs, header excluded.
    const auto f = testutil::fixture_dir();
    CHECK(field(r.out, "movies") == std::to_string(line_count(f / "movies.csv") - 1));
    CHECK(field(r.out, "rating_rows") == std::to_string(line_count(f / "ratings.csv") - 1));
    CHECK(field(r.out, "duplicates_removed") == "6");
    CHECK(field(r.out, "ratings") == "274");
    CHECK(line_count(dir / "catalog.jsonl") == 60);
    CHECK(line_count(dir / "ratings.jsonl") == 274);
    CHECK(line_count(dir / "events.jsonl") == 280);
}

TEST_CASE("ingest and parse errors exit 2") {
    testutil::TempDir dir("cli-err");
    const auto f = testutil::fixture_dir();
    auto r = cli({"ingest", "--movies", (f / "movies.csv").string(), "--tags", (dir / "tags.csv").string(),
                  "--ratings", (f / "ratings.csv").string(), "--out", dir.path().string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("MissingFile") != std::string::npos);
    CHECK(cli({"ingest", "--bogus"}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
}

TEST_CASE("generate is deterministic and reports skips") {
    testutil::TempDir dir("cli-gen");
    REQUIRE(ingest_fixture(dir / "data").code == 0);
    auto a = cli({"generate", "--data", (dir / "data").string(), "--out", (dir / "a").string()});
    auto b = cli({"--jobs", "4", "generate", "--data", (dir / "data").string(), "--out", (dir / "b").string()});
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    CHECK(a.out == "generated=8 skipped=1 failed=0\n");
    CHECK(a.err.find("skipped 9") != std::string::npos);
    for (int u = 1; u <= 8; ++u) {
        const auto name = std::to_string(u) + ".json";
        CHECK(slurp(dir / "a" / "portraits" / name) == slurp(dir / "b" / "portraits" / name));
    }
    CHECK_FALSE(std::filesystem::exists(dir / "a" / "portraits" / "9.json"));
    CHECK(slurp(dir / "a" / "quartile_cutoffs.csv") == slurp(dir / "b" / "quartile_cutoffs.csv"));
    CHECK(line_count(dir / "a" / "quartile_cutoffs.csv") == 9);

    auto none = cli({"generate", "--data", (dir / "data").string(), "--out", (dir / "c").string(), "--users", ","});
    CHECK(none.code == 0);
    CHECK_FALSE(std::filesystem::exists(dir / "c"));

    auto low = cli({"generate", "--data", (dir / "data").string(), "--out", (dir / "d").string(), "--users", "9",
                    "--min-ratings", "5"});
    CHECK(low.code == 0);
    CHECK(std::filesystem::exists(dir / "d" / "portraits" / "9.json"));
}

TEST_CASE("simulate scenarios") {
    testutil::TempDir dir("cli-sim");
    auto run = [&](const std::string& name, const json& scenario) {
        write_json(dir / (name + ".json"), scenario);
        return cli({"simulate", "--scenario", (dir / (name + ".json")).string(), "--out", (dir / name).string()});
    };
    json ten{{"start", "2024-04-01"}, {"days", 3}, {"seed", 7},
             {"users", {{{"id", "u"}, {"base_ratings", 100}, {"days", {{{"day", 1}, {"ratings", 10}}}}}}}};
    auto r = run("ten", ten);
    REQUIRE(r.code == 0);
    CHECK(field(r.out, "initial_generations") == "1");
    CHECK(field(r.out, "regenerations") == "1");

    json nine = ten;
    nine["users"][0]["days"][0]["ratings"] = 9;
    r = run("nine", nine);
    REQUIRE(r.code == 0);
    CHECK(field(r.out, "regenerations") == "0");

    r = run("empty", json::object());
    REQUIRE(r.code == 0);
    CHECK(field(r.out, "events") == "0");
    CHECK(jsonl::read_all(dir / "empty" / "events.jsonl").empty());
    CHECK(jsonl::read_all(dir / "empty" / "edits.jsonl").empty());
    CHECK(jsonl::read_all(dir / "empty" / "portraits.jsonl").empty());

    r = run("bad", json{{"days", 2}, {"users", {{{"id", "u"}, {"colour", 1}}}}});
    CHECK(r.code == 2);
}

TEST_CASE("analyze stars an injected effect and nothing else") {
    testutil::TempDir dir("cli-analyze");
    REQUIRE(ingest_fixture(dir / "data").code == 0);
    for (bool effect : {true, false}) {
        const auto logs = dir / (effect ? "effect" : "flat");
        std::filesystem::create_directories(logs);
        write_group_logs(logs, effect);
        auto r = cli({"analyze", "--logs", logs.string(), "--data", (dir / "data").string(), "--window",
                      "2024-02-01,2024-03-01", "--baseline", "2024-01-01,2024-02-01", "--groups",
                      (logs / "groups.csv").string(), "--kind", "ancova"});
        REQUIRE(r.code == 0);
        std::istringstream lines(r.out);
        std::string line;
        std::getline(lines, line);
        CHECK(line == "metric,ANCOVA,Ref-Int,Ref-Col,Int-Col,eta_squared,effect");
        while (std::getline(lines, line)) {
            const std::string metric = line.substr(0, line.find(','));
            const std::string ancova = line.substr(line.find(',') + 1, line.find(',', line.find(',') + 1) - line.find(',') - 1);
            CAPTURE(line);
            if (effect && metric == "rating_count") CHECK(ancova.find('*') != std::string::npos);
            if (!effect) CHECK(line.find('*') == std::string::npos);
        }
        CHECK(std::filesystem::exists(logs / "analysis" / "metrics.csv"));
    }
}

TEST_CASE("analyze exit codes") {
    testutil::TempDir dir("cli-analyze-codes");
    REQUIRE(ingest_fixture(dir / "data").code == 0);
    write_group_logs(dir.path(), true);
    auto r = cli({"analyze", "--logs", dir.path().string(), "--data", (dir / "data").string(), "--window",
                  "2024-02-01,2024-03-01"});
    CHECK(r.code == 3);
    // No edits and no groups file: everyone is "reflected", a single group.
    r = cli({"analyze", "--logs", dir.path().string(), "--data", (dir / "data").string(), "--window",
             "2024-02-01,2024-03-01", "--baseline", "2024-01-01,2024-02-01"});
    CHECK(r.code == 3);
    r = cli({"analyze", "--logs", (dir / "nowhere").string(), "--window", "2024-02-01,2024-03-01", "--baseline",
             "2024-01-01,2024-02-01"});
    CHECK(r.code == 2);
}

TEST_CASE("exit code mapping") {
    CHECK(exit_code_for(ErrorCode::MalformedRow) == 2);
    CHECK(exit_code_for(ErrorCode::SchemaViolation) == 2);
    CHECK(exit_code_for(ErrorCode::InsufficientData) == 3);
    CHECK(exit_code_for(ErrorCode::DegenerateGroup) == 3);
    CHECK(exit_code_for(ErrorCode::ProviderFailure) == 1);
}
