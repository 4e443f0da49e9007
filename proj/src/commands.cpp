#include "selfportrait/commands.hpp"

#include <atomic>
#include <condition_variable>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "selfportrait/analysis.hpp"
#include "selfportrait/jsonl.hpp"
#include "selfportrait/server.hpp"
#include "selfportrait/service.hpp"
#include "selfportrait/simulate.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

namespace selfportrait {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::MalformedRow:
        case ErrorCode::SchemaViolation:
        case ErrorCode::MissingFile:
        case ErrorCode::ScoreOffGrid:
        case ErrorCode::BadTimestamp:
        case ErrorCode::DanglingTagReference:
        case ErrorCode::InvalidArgument: return 2;
        case ErrorCode::InsufficientData:
        case ErrorCode::DegenerateGroup: return 3;
        default: return 1;
    }
}

std::vector<UserGeneration> generate_all(const Dataset& dataset, EmbeddingProvider& embedder,
                                         SummaryProvider& summarizer, const PromptTemplates& templates,
                                         const ClusterOptions& clustering, const GenerateOptions& options) {
    const auto by_user = group_by_user(dataset.ratings);
    std::vector<UserId> ids;
    if (options.users) {
        ids = *options.users;
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    } else {
        for (const auto& [id, rs] : by_user) ids.push_back(id);
    }
    const Timestamp reference = options.reference_date ? *options.reference_date
                                                       : max_timestamp(dataset.ratings).value_or(Timestamp{});

    std::vector<UserGeneration> out(ids.size());
    auto work = [&](std::size_t i) {
        auto& slot = out[i];
        slot.user_id = ids[i];
        auto it = by_user.find(ids[i]);
        const std::size_t n = it == by_user.end() ? 0 : keep_latest_per_movie(it->second).ratings.size();
        if (n < options.min_ratings) {
            slot.skipped = std::to_string(n) + " rated movies, minimum is " + std::to_string(options.min_ratings);
            return;
        }
        try {
            GenerationRequest request;
            request.user_id = ids[i];
            request.ratings = it->second;
            request.reference_date = reference;
            request.generated_at = reference;
            slot.result = generate_portrait(request, dataset.catalog, embedder, summarizer, templates, clustering);
        } catch (const Error& e) {
            slot.error = e.what();
        }
    };

    const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, ids.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < ids.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < ids.size(); i = next++) work(i);
            });
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
};

Config resolve_config(const Globals& g) {
    Config c = g.config_path.empty() ? Config{} : load_config(g.config_path);
    if (g.seed) c.seed = *g.seed;
    return c;
}

PromptTemplates templates_for(const Config& c) {
    return c.prompts_dir ? PromptTemplates::load(*c.prompts_dir) : PromptTemplates::defaults();
}

ServiceOptions service_options(const Config& c) {
    ServiceOptions o;
    o.policy = c.regeneration;
    o.templates = templates_for(c);
    o.clustering = c.clustering;
    o.metrics = c.metrics;
    o.min_ratings = c.min_ratings;
    o.snapshot_every = c.snapshot_every;
    return o;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Dataset require_dataset(const fs::path& dir) {
    if (!fs::exists(dir / "catalog.jsonl")) {
        throw Error(ErrorCode::MissingFile, (dir / "catalog.jsonl").string() + " (run ingest first)");
    }
    return read_dataset(dir);
}

std::vector<UserId> split_list(const std::string& text) {
    std::vector<UserId> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// --- ingest ---------------------------------------------------------------

struct IngestArgs {
    std::string movies, tags, ratings, out;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out) {
    auto catalog = load_catalog(a.movies, a.tags);
    auto raw = load_ratings(a.ratings);
    const std::size_t rows = raw.size();
    std::size_t unknown = 0;
    std::erase_if(raw, [&](const RatingEvent& r) {
        const bool missing = !catalog.find_movie(r.movie_id);
        unknown += missing;
        return missing;
    });
    std::vector<InteractionEvent> events;
    events.reserve(raw.size());
    for (const auto& r : raw) events.push_back(to_event(r));
    std::stable_sort(events.begin(), events.end(), [](const auto& x, const auto& y) { return x.timestamp < y.timestamp; });

    auto dedup = keep_latest_per_movie(std::move(raw));
    assign_popularity(catalog, dedup.ratings);
    std::size_t tag_count = 0;
    for (const auto& [id, t] : catalog.tags) tag_count += t.top_tags.size();
    const std::size_t users = group_by_user(dedup.ratings).size();

    Dataset dataset{std::move(catalog), std::move(dedup.ratings)};
    write_dataset(a.out, dataset);
    std::vector<nlohmann::json> lines(events.begin(), events.end());
    jsonl::write_all(fs::path(a.out) / "events.jsonl", lines);

    out << "movies=" << dataset.catalog.movies.size() << " tags=" << tag_count << " rating_rows=" << rows
        << " ratings=" << dataset.ratings.size() << " duplicates_removed=" << dedup.duplicates_removed
        << " unknown_movie_ratings=" << unknown << " users=" << users << "\n";
    return 0;
}

// --- generate -------------------------------------------------------------

struct GenerateArgs {
    std::string data, out, users = "all", provider, reference_date;
    std::optional<std::size_t> min_ratings;
};

int cmd_generate(const Globals& g, const GenerateArgs& a, std::ostream& out, std::ostream& err) {
    Config config = resolve_config(g);
    if (!a.provider.empty()) {
        if (a.provider != "mock" && a.provider != "http") throw Error(ErrorCode::InvalidArgument, "--provider must be mock or http");
        config.embedding.kind = config.summary.kind = a.provider;
    }
    const fs::path data = a.data.empty() ? config.data_dir : fs::path(a.data);
    const auto dataset = require_dataset(data);
    auto embedder = make_embedding_provider(config.embedding, config.seed);
    auto summarizer = make_summary_provider(config.summary);

    GenerateOptions options;
    options.min_ratings = a.min_ratings.value_or(config.min_ratings);
    options.jobs = g.jobs;
    if (a.users != "all") options.users = split_list(a.users);
    if (!a.reference_date.empty()) options.reference_date = parse_timestamp(a.reference_date);

    const auto results = generate_all(dataset, *embedder, *summarizer, templates_for(config), config.clustering, options);
    if (results.empty()) {
        out << "generated=0 skipped=0 failed=0\n";
        return 0;
    }
    const fs::path out_dir = a.out.empty() ? fs::path("portraits_out") : fs::path(a.out);
    std::vector<QuartileSets> quartiles;
    std::vector<nlohmann::json> generations;
    std::size_t generated = 0, skipped = 0, failed = 0;
    for (const auto& r : results) {
        if (!r.skipped.empty()) {
            ++skipped;
            err << "skipped " << r.user_id << ": " << r.skipped << "\n";
        } else if (!r.error.empty()) {
            ++failed;
            err << "failed " << r.user_id << ": " << r.error << "\n";
        } else {
            ++generated;
            write_text(out_dir / "portraits" / (r.user_id + ".json"), nlohmann::json(r.result->portrait).dump(2) + "\n");
            quartiles.push_back(r.result->quartiles);
            generations.emplace_back(r.result->record);
        }
    }
    write_text(out_dir / "quartile_cutoffs.csv", quartile_gap_csv(quartile_gap_report(quartiles)));
    jsonl::write_all(out_dir / "generations.jsonl", generations);
    out << "generated=" << generated << " skipped=" << skipped << " failed=" << failed << "\n";
    return 0;
}

// --- simulate -------------------------------------------------------------

struct SimulateArgs {
    std::string scenario, out;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a, std::ostream& out) {
    const Config config = resolve_config(g);
    auto scenario = load_scenario(a.scenario);
    if (g.seed) scenario.seed = *g.seed;
    auto embedder = make_embedding_provider(config.embedding, config.seed);
    auto summarizer = make_summary_provider(config.summary);
    const auto s = run_simulation(scenario, a.out, *embedder, *summarizer, service_options(config));
    out << "users=" << s.users << " events=" << s.events << " edits=" << s.edits
        << " initial_generations=" << s.initial_generations << " regenerations=" << s.regenerations
        << " failures=" << s.failures << "\n";
    return 0;
}

// --- analyze --------------------------------------------------------------

struct AnalyzeArgs {
    std::string logs, data, window, baseline, groups, kind = "both", out;
};

int cmd_analyze(const Globals& g, const AnalyzeArgs& a, std::ostream& out) {
    const Config config = resolve_config(g);
    if (a.baseline.empty()) throw Error(ErrorCode::InsufficientData, "no baseline window given (--baseline)");
    if (a.window.empty()) throw Error(ErrorCode::InvalidArgument, "--window is required");
    const fs::path logs = a.logs.empty() ? config.store_dir : fs::path(a.logs);
    if (!fs::exists(logs / Store::kEvents)) throw Error(ErrorCode::MissingFile, (logs / Store::kEvents).string());
    const fs::path data = !a.data.empty() ? fs::path(a.data) : fs::exists(logs / "catalog.jsonl") ? logs : config.data_dir;

    std::vector<InteractionEvent> events;
    for (const auto& j : jsonl::read_all(logs / Store::kEvents)) events.push_back(j.get<InteractionEvent>());
    std::vector<EditRecord> edits;
    for (const auto& j : jsonl::read_all(logs / Store::kEdits)) edits.push_back(j.get<EditRecord>());

    const auto dataset = require_dataset(data);
    auto embedder = make_embedding_provider(config.embedding, config.seed);
    const auto embeddings = movie_embeddings(dataset.catalog, *embedder);

    AnalysisInput input;
    input.events = events;
    input.edits = edits;
    input.window = parse_window(a.window);
    input.baseline = parse_window(a.baseline);
    input.embeddings = &embeddings;
    input.metrics_options = config.metrics;
    if (!a.groups.empty()) input.groups = load_groups_csv(a.groups);

    std::vector<ReportKind> kinds;
    if (a.kind == "both") {
        kinds = {ReportKind::ancova, ReportKind::anova};
    } else {
        kinds = {parse_report_kind(a.kind)};
    }
    const fs::path out_dir = a.out.empty() ? logs / "analysis" : fs::path(a.out);
    for (auto kind : kinds) {
        const auto report = run_analysis(input, kind);
        const auto csv = report_csv(report);
        write_text(out_dir / (std::string(to_string(kind)) + "_report.csv"), csv);
        if (kind == ReportKind::ancova) write_text(out_dir / "metrics.csv", metrics_csv(report.window_metrics));
        write_text(out_dir / "baseline_metrics.csv", metrics_csv(report.baseline_metrics));
        out << csv;
    }
    return 0;
}

// --- serve ----------------------------------------------------------------

struct ServeArgs {
    std::string data, store, host;
    int port = 0;
};

int cmd_serve(const Globals& g, const ServeArgs& a, std::ostream& out) {
    const Config config = resolve_config(g);
    const fs::path data = a.data.empty() ? config.data_dir : fs::path(a.data);
    const fs::path store = a.store.empty() ? config.store_dir : fs::path(a.store);
    auto dataset = require_dataset(data);
    // A fresh store starts from the ingested interaction history.
    if (!fs::exists(store / Store::kEvents) && fs::exists(data / "events.jsonl") && data != store) {
        fs::create_directories(store);
        fs::copy_file(data / "events.jsonl", store / Store::kEvents);
    }
    auto embedder = make_embedding_provider(config.embedding, config.seed);
    auto summarizer = make_summary_provider(config.summary);
    SystemClock clock;
    PortraitService service(store, std::move(dataset), *embedder, *summarizer, clock, service_options(config));

    std::string token;
    if (!config.token_env.empty()) {
        if (const char* t = std::getenv(config.token_env.c_str())) token = t;
    }
    httplib::Server server;
    register_routes(server, service, token);

    std::mutex m;
    std::condition_variable cv;
    bool stop = false;
    std::thread scheduler([&] {
        std::unique_lock lock(m);
        do {
            lock.unlock();
            const auto r = service.sweep();
            std::clog << "sweep: initial=" << r.initial << " scheduled=" << r.scheduled << " failed=" << r.failed << "\n";
            lock.lock();
        } while (!cv.wait_for(lock, config.regeneration.cadence, [&] { return stop; }));
    });

    const std::string host = a.host.empty() ? config.host : a.host;
    const int port = a.port > 0 ? a.port : config.port;
    out << "listening on " << host << ":" << port << std::endl;
    const bool ok = server.listen(host, port);
    {
        std::lock_guard lock(m);
        stop = true;
    }
    cv.notify_all();
    scheduler.join();
    service.snapshot();
    if (!ok) throw Error(ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Self-portrait interest profiles: ingest, generate, simulate, analyze, serve"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed for mock providers and simulation");
    app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);

    IngestArgs ingest;
    auto* ingest_cmd = app.add_subcommand("ingest", "Normalize MovieLens-style CSVs into a data directory");
    ingest_cmd->add_option("--movies", ingest.movies, "movies.csv")->required();
    ingest_cmd->add_option("--tags", ingest.tags, "tags.csv (movieId,tag,relevance)")->required();
    ingest_cmd->add_option("--ratings", ingest.ratings, "ratings.csv")->required();
    ingest_cmd->add_option("--out", ingest.out, "Output data directory")->required();

    GenerateArgs gen;
    auto* gen_cmd = app.add_subcommand("generate", "Generate portraits for qualified users");
    gen_cmd->add_option("--data", gen.data, "Data directory from ingest");
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_option("--users", gen.users, "'all' or a comma-separated list");
    gen_cmd->add_option("--provider", gen.provider, "mock or http (overrides config)");
    gen_cmd->add_option("--reference-date", gen.reference_date, "Defaults to the latest rating");
    gen_cmd->add_option("--min-ratings", gen.min_ratings, "Minimum rated movies");

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Run a scenario on a virtual clock");
    sim_cmd->add_option("--scenario", sim.scenario, "Scenario JSON")->required();
    sim_cmd->add_option("--out", sim.out, "Output directory (data and logs)")->required();

    AnalyzeArgs an;
    auto* an_cmd = app.add_subcommand("analyze", "Metrics and ANCOVA/ANOVA report from logs");
    an_cmd->add_option("--logs", an.logs, "Directory with events.jsonl and edits.jsonl");
    an_cmd->add_option("--data", an.data, "Data directory with catalog.jsonl");
    an_cmd->add_option("--window", an.window, "Experiment window start,end");
    an_cmd->add_option("--baseline", an.baseline, "Baseline window start,end");
    an_cmd->add_option("--groups", an.groups, "CSV user_id,group (default: from edit counts)");
    an_cmd->add_option("--kind", an.kind, "ancova, anova or both");
    an_cmd->add_option("--out", an.out, "Output directory for CSVs");

    ServeArgs sv;
    auto* sv_cmd = app.add_subcommand("serve", "HTTP API under /api/v1");
    sv_cmd->add_option("--data", sv.data, "Data directory");
    sv_cmd->add_option("--store", sv.store, "Store directory");
    sv_cmd->add_option("--host", sv.host, "Bind address");
    sv_cmd->add_option("--port", sv.port, "Port");

    std::vector<std::string> argv_storage{"selfportrait"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_storage) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*ingest_cmd) return cmd_ingest(ingest, out);
        if (*gen_cmd) return cmd_generate(g, gen, out, err);
        if (*sim_cmd) return cmd_simulate(g, sim, out);
        if (*an_cmd) return cmd_analyze(g, an, out);
        if (*sv_cmd) return cmd_serve(g, sv, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const nlohmann::json::exception& e) {
        err << "error: malformed JSON record: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace selfportrait
