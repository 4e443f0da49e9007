#include "selfportrait/simulate.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

namespace selfportrait {

namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
    throw Error(ErrorCode::SchemaViolation, "scenario " + where + ": " + what);
}

template <class T>
T field(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        schema_error(where + "." + key, "wrong type");
    }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) schema_error(where, "must be an object");
    for (const auto& [key, value] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            schema_error(where, "unknown key '" + key + "'");
        }
    }
}

Activity parse_activity(const json& j, const std::string& where) {
    check_keys(j, {"ratings", "views", "logins"}, where);
    return {field<std::size_t>(j, "ratings", 0, where), field<std::size_t>(j, "views", 0, where),
            field<std::size_t>(j, "logins", 0, where)};
}

ScriptedEdit parse_edit(const json& j, const std::string& where) {
    check_keys(j, {"section", "mode", "text"}, where);
    ScriptedEdit e;
    try {
        e.section = parse_section(field<std::string>(j, "section", "liked", where));
    } catch (const Error& err) {
        schema_error(where + ".section", err.what());
    }
    e.mode = field<std::string>(j, "mode", j.contains("text") ? "replace" : "keep", where);
    e.text = field<std::string>(j, "text", "", where);
    if (e.mode != "keep" && e.mode != "trim" && e.mode != "replace" && e.mode != "clear") {
        schema_error(where + ".mode", "must be keep, trim, replace or clear");
    }
    if (e.mode == "replace" && normalize_text(e.text).empty()) schema_error(where + ".text", "required for replace");
    return e;
}

}  // namespace

Scenario parse_scenario(const json& j) {
    check_keys(j, {"start", "days", "baseline_days", "seed", "catalog_movies", "data_dir", "users"}, "");
    Scenario s;
    try {
        s.start = parse_timestamp(field<std::string>(j, "start", "2024-01-01", "start"));
    } catch (const Error& e) {
        schema_error("start", e.what());
    }
    s.days = field<int>(j, "days", 0, "days");
    s.baseline_days = field<int>(j, "baseline_days", 0, "baseline_days");
    s.seed = field<std::uint64_t>(j, "seed", 1, "seed");
    s.catalog_movies = field<std::size_t>(j, "catalog_movies", s.catalog_movies, "catalog_movies");
    if (j.contains("data_dir")) s.data_dir = field<std::string>(j, "data_dir", "", "data_dir");
    if (s.days < 0 || s.baseline_days < 0) schema_error("days", "must be non-negative");
    if (!s.data_dir && s.catalog_movies < 10) schema_error("catalog_movies", "need at least 10 movies");

    const auto users = j.value("users", json::array());
    if (!users.is_array()) schema_error("users", "must be an array");
    std::set<UserId> seen;
    for (std::size_t i = 0; i < users.size(); ++i) {
        const std::string where = "users[" + std::to_string(i) + "]";
        const auto& u = users[i];
        check_keys(u, {"id", "repeat", "base_ratings", "baseline", "daily", "days"}, where);
        UserScenario us;
        us.id = field<std::string>(u, "id", "", where);
        if (us.id.empty()) schema_error(where + ".id", "required");
        if (!seen.insert(us.id).second) schema_error(where + ".id", "duplicate id " + us.id);
        us.repeat = field<std::size_t>(u, "repeat", 1, where);
        us.base_ratings = field<std::size_t>(u, "base_ratings", us.base_ratings, where);
        if (u.contains("baseline")) us.baseline = parse_activity(u.at("baseline"), where + ".baseline");
        if (u.contains("daily")) us.daily = parse_activity(u.at("daily"), where + ".daily");
        for (std::size_t d = 0; d < u.value("days", json::array()).size(); ++d) {
            const std::string dw = where + ".days[" + std::to_string(d) + "]";
            const auto& dj = u.at("days")[d];
            check_keys(dj, {"day", "ratings", "views", "logins", "edits"}, dw);
            DayPlan plan;
            plan.day = field<int>(dj, "day", 1, dw);
            if (plan.day < 1 || plan.day > s.days) schema_error(dw + ".day", "outside 1.." + std::to_string(s.days));
            plan.activity = {field<std::size_t>(dj, "ratings", 0, dw), field<std::size_t>(dj, "views", 0, dw),
                             field<std::size_t>(dj, "logins", 0, dw)};
            const auto edits = dj.value("edits", json::array());
            for (std::size_t e = 0; e < edits.size(); ++e) {
                plan.edits.push_back(parse_edit(edits[e], dw + ".edits[" + std::to_string(e) + "]"));
            }
            us.days.push_back(std::move(plan));
        }
        s.users.push_back(std::move(us));
    }
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingFile, "cannot open scenario " + path.string());
    const auto j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::SchemaViolation, path.string() + ": invalid JSON");
    auto s = parse_scenario(j);
    if (s.data_dir && s.data_dir->is_relative()) s.data_dir = path.parent_path() / *s.data_dir;
    return s;
}

namespace {

constexpr const char* kGenres[] = {"Action", "Adventure", "Animation", "Comedy", "Crime", "Documentary",
                                   "Drama", "Fantasy", "Horror", "Romance", "Sci-Fi", "Thriller"};
constexpr const char* kLanguages[] = {"English", "French", "Japanese", "Korean", "Spanish"};
constexpr const char* kTagHeads[] = {"space", "time", "heist", "family", "war", "music", "detective",
                                     "zombie", "love", "robot", "school", "road"};
constexpr const char* kTagMods[] = {"travel", "drama", "comedy", "story", "adventure", "thriller",
                                    "mystery", "battle", "trip", "romance"};

// Uniform draw in [0, n) straight from the engine, so results do not depend on the
// standard library's distribution implementations.
std::size_t draw(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

}  // namespace

Catalog synthetic_catalog(std::size_t movies, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x5eed5eedULL);
    Catalog catalog;
    for (std::size_t i = 1; i <= movies; ++i) {
        MovieRecord m;
        char id[16];
        std::snprintf(id, sizeof id, "m%04zu", i);
        m.movie_id = id;
        m.release_year = 1960 + static_cast<int>(draw(rng, 64));
        m.title = "Movie " + std::to_string(i) + " (" + std::to_string(m.release_year) + ")";
        std::set<std::string> genres;
        const std::size_t genre_count = 1 + draw(rng, 3);
        while (genres.size() < genre_count) genres.insert(kGenres[draw(rng, std::size(kGenres))]);
        m.genres.assign(genres.begin(), genres.end());
        std::set<std::string> actors;
        while (actors.size() < 2) actors.insert("Actor " + std::to_string(1 + draw(rng, 40)));
        m.actors.assign(actors.begin(), actors.end());
        m.directors = {"Director " + std::to_string(1 + draw(rng, 15))};
        m.language = kLanguages[draw(rng, std::size(kLanguages))];

        TaggedMovie tags{m.movie_id, {}};
        std::set<std::string> names;
        const std::size_t tag_count = 3 + draw(rng, 4);
        while (names.size() < tag_count) {
            names.insert(std::string(kTagHeads[draw(rng, std::size(kTagHeads))]) + " " +
                         kTagMods[draw(rng, std::size(kTagMods))]);
        }
        for (const auto& n : names) tags.top_tags.push_back({n, 0.5 + 0.05 * static_cast<double>(draw(rng, 10))});
        std::sort(tags.top_tags.begin(), tags.top_tags.end(), [](const TagScore& a, const TagScore& b) {
            return a.relevance != b.relevance ? a.relevance > b.relevance : a.tag < b.tag;
        });
        catalog.tags.emplace(m.movie_id, std::move(tags));
        catalog.movies.emplace(m.movie_id, std::move(m));
    }
    return catalog;
}

namespace {

struct SimUser {
    UserId id;
    const UserScenario* profile = nullptr;
    std::set<MovieId> rated;
};

double draw_score(std::mt19937_64& rng) { return 0.5 * static_cast<double>(1 + draw(rng, 10)); }

MovieId pick_unrated(std::mt19937_64& rng, const std::vector<MovieId>& ids, SimUser& u) {
    if (u.rated.size() >= ids.size()) return ids[draw(rng, ids.size())];  // everything rated: re-rate
    for (;;) {
        const auto& id = ids[draw(rng, ids.size())];
        if (u.rated.insert(id).second) return id;
    }
}

void emit_activity(PortraitService& service, std::mt19937_64& rng, const std::vector<MovieId>& ids, SimUser& u,
                   const Activity& a, Timestamp day_start, SimulationSummary& summary) {
    using namespace std::chrono;
    for (std::size_t i = 0; i < a.logins; ++i) {
        service.record_event({u.id, EventKind::login, std::nullopt, std::nullopt,
                              day_start + hours(8) + hours(4) * static_cast<int>(i)});
        ++summary.events;
    }
    for (std::size_t i = 0; i < a.views; ++i) {
        service.record_event({u.id, EventKind::movie_view, ids[draw(rng, ids.size())], std::nullopt,
                              day_start + hours(8) + minutes(2) * static_cast<int>(i + 1)});
        ++summary.events;
    }
    for (std::size_t i = 0; i < a.ratings; ++i) {
        const auto movie = pick_unrated(rng, ids, u);
        service.record_event({u.id, EventKind::rating, movie, draw_score(rng),
                              day_start + hours(9) + minutes(1) * static_cast<int>(i)});
        ++summary.events;
    }
}

std::string edited_text(const ScriptedEdit& e, const std::string& current) {
    if (e.mode == "keep") return current;
    if (e.mode == "clear") return {};
    if (e.mode == "trim") return first_sentence(current);
    return e.text;
}

}  // namespace

SimulationSummary run_simulation(const Scenario& scenario, const std::filesystem::path& out_dir,
                                 EmbeddingProvider& embedder, SummaryProvider& summarizer, ServiceOptions options) {
    using namespace std::chrono;
    std::mt19937_64 rng(scenario.seed);

    // Start from empty logs so reruns of one scenario are identical.
    for (const char* name : {Store::kPortraits, Store::kEdits, Store::kEvents, Store::kGenerations, Store::kSnapshot}) {
        std::filesystem::remove(out_dir / name);
    }

    Dataset dataset;
    if (scenario.data_dir) {
        if (!std::filesystem::exists(*scenario.data_dir / "catalog.jsonl")) {
            throw Error(ErrorCode::MissingFile, "no catalog.jsonl in " + scenario.data_dir->string());
        }
        dataset.catalog = read_dataset(*scenario.data_dir).catalog;
    } else {
        dataset.catalog = synthetic_catalog(scenario.catalog_movies, scenario.seed);
    }
    std::vector<MovieId> ids;
    for (const auto& [id, m] : dataset.catalog.movies) ids.push_back(id);
    if (ids.empty() && !scenario.users.empty()) throw Error(ErrorCode::SchemaViolation, "scenario catalog is empty");

    std::vector<SimUser> users;
    for (const auto& profile : scenario.users) {
        for (std::size_t k = 1; k <= profile.repeat; ++k) {
            users.push_back({profile.repeat > 1 ? profile.id + "-" + std::to_string(k) : profile.id, &profile, {}});
        }
    }

    // Base history: spread over the two years before the baseline period.
    const Timestamp history_end = scenario.start - days(scenario.baseline_days);
    for (auto& u : users) {
        for (std::size_t i = 0; i < u.profile->base_ratings; ++i) {
            const auto when = history_end - seconds(1 + static_cast<std::int64_t>(draw(rng, 730 * 86400)));
            dataset.ratings.push_back({u.id, pick_unrated(rng, ids, u), draw_score(rng), when});
        }
    }
    dataset.ratings = keep_latest_per_movie(std::move(dataset.ratings)).ratings;
    assign_popularity(dataset.catalog, dataset.ratings);
    write_dataset(out_dir, dataset);

    SimulationSummary summary;
    summary.users = users.size();
    ManualClock clock(history_end);
    PortraitService service(out_dir, dataset, embedder, summarizer, clock, std::move(options));

    for (int d = 0; d < scenario.baseline_days; ++d) {
        const Timestamp day_start = history_end + days(d);
        clock.set(day_start);
        for (auto& u : users) emit_activity(service, rng, ids, u, u.profile->baseline, day_start, summary);
    }

    clock.set(scenario.start);
    const auto initial = service.sweep();
    summary.initial_generations = initial.initial;
    summary.failures += initial.failed;

    for (int d = 1; d <= scenario.days; ++d) {
        const Timestamp day_start = scenario.start + days(d - 1);
        for (auto& u : users) {
            clock.set(day_start);
            emit_activity(service, rng, ids, u, u.profile->daily, day_start, summary);
            for (const auto& plan : u.profile->days) {
                if (plan.day != d) continue;
                emit_activity(service, rng, ids, u, plan.activity, day_start, summary);
                for (const auto& e : plan.edits) {
                    clock.set(day_start + hours(20));
                    try {
                        const auto current = service.portrait(u.id);
                        const auto text = edited_text(e, current->text(e.section));
                        service.edit_section(u.id, e.section, text, current->version);
                        ++summary.edits;
                    } catch (const Error& err) {
                        if (err.code() != ErrorCode::NotYetGenerated && err.code() != ErrorCode::EmptySection) throw;
                        ++summary.failures;
                    }
                }
            }
        }
        clock.set(scenario.start + days(d));
        const auto swept = service.sweep();
        summary.initial_generations += swept.initial;
        summary.regenerations += swept.scheduled;
        summary.failures += swept.failed;
    }
    return summary;
}

}  // namespace selfportrait
