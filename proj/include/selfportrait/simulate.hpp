#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "selfportrait/service.hpp"

namespace selfportrait {

struct Activity {
    std::size_t ratings = 0;
    std::size_t views = 0;
    std::size_t logins = 0;
};

struct ScriptedEdit {
    Section section = Section::liked;
    std::string mode = "replace";  // keep | trim | replace | clear
    std::string text;              // replace only
};

struct DayPlan {
    int day = 1;  // 1-based
    Activity activity;
    std::vector<ScriptedEdit> edits;
};

struct UserScenario {
    UserId id;
    std::size_t repeat = 1;  // > 1 clones the user as "<id>-1", "<id>-2", ...
    std::size_t base_ratings = 40;
    Activity baseline;  // per day before the start
    Activity daily;     // per simulated day
    std::vector<DayPlan> days;
};

struct Scenario {
    Timestamp start{};
    int days = 0;
    int baseline_days = 0;
    std::uint64_t seed = 1;
    std::size_t catalog_movies = 200;          // synthetic catalog size
    std::optional<std::filesystem::path> data_dir;  // use an ingested dataset instead
    std::vector<UserScenario> users;
};

// Throws SchemaViolation with the offending field.
Scenario parse_scenario(const nlohmann::json& j);
Scenario load_scenario(const std::filesystem::path& path);

// Deterministic synthetic catalog with genres, people, languages, years and tags.
Catalog synthetic_catalog(std::size_t movies, std::uint64_t seed);

struct SimulationSummary {
    std::size_t users = 0;
    std::size_t events = 0;
    std::size_t edits = 0;
    std::size_t initial_generations = 0;
    std::size_t regenerations = 0;  // policy-triggered after the start
    std::size_t failures = 0;
};

// Runs the scenario through a PortraitService on a virtual clock, one sweep per simulated
// day. `out_dir` receives catalog.jsonl and ratings.jsonl (the base history) plus the
// store logs, so it can be used directly as both data and store directory.
SimulationSummary run_simulation(const Scenario& scenario, const std::filesystem::path& out_dir,
                                 EmbeddingProvider& embedder, SummaryProvider& summarizer,
                                 ServiceOptions options = {});

}  // namespace selfportrait
