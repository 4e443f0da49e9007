#include "selfportrait/service.hpp"

#include <algorithm>
#include <tuple>

#include <nlohmann/json.hpp>

namespace selfportrait {

Timestamp SystemClock::now() const {
    return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
}

std::string_view to_string(TreemapCategory c) {
    switch (c) {
        case TreemapCategory::genre: return "genre";
        case TreemapCategory::actor: return "actor";
        case TreemapCategory::director: return "director";
        case TreemapCategory::language: return "language";
        case TreemapCategory::popularity: return "popularity";
        case TreemapCategory::release_year: return "release_year";
    }
    return "genre";
}

TreemapCategory parse_treemap_category(std::string_view text) {
    for (auto c : {TreemapCategory::genre, TreemapCategory::actor, TreemapCategory::director,
                   TreemapCategory::language, TreemapCategory::popularity, TreemapCategory::release_year}) {
        if (to_string(c) == text) return c;
    }
    throw Error(ErrorCode::BadCategory, "unknown treemap category '" + std::string(text) + "'");
}

void to_json(nlohmann::json& j, const TreemapCell& c) {
    j = nlohmann::json{{"label", c.label}, {"count", c.count}};
    if (c.movie_id) j["movie_id"] = *c.movie_id;
    if (!c.children.empty()) j["children"] = c.children;
}

void to_json(nlohmann::json& j, const TreemapSlice& s) {
    j = nlohmann::json{{"category", to_string(s.category)}, {"cells", s.cells}};
}

std::map<MovieId, std::string> popularity_quartiles(const Catalog& catalog) {
    std::vector<double> sorted;
    sorted.reserve(catalog.movies.size());
    for (const auto& [id, m] : catalog.movies) sorted.push_back(m.popularity);
    std::sort(sorted.begin(), sorted.end());
    std::map<MovieId, std::string> out;
    const double n = static_cast<double>(sorted.size());
    for (const auto& [id, m] : catalog.movies) {
        const auto below = static_cast<double>(std::lower_bound(sorted.begin(), sorted.end(), m.popularity) - sorted.begin());
        const int q = std::min(3, static_cast<int>(4.0 * below / n));
        out.emplace(id, "Q" + std::to_string(q + 1));
    }
    return out;
}

namespace {

constexpr std::string_view kUnknown = "Unknown";

std::vector<std::string> facet_values(const MovieRecord& m, TreemapCategory category,
                                      const std::map<MovieId, std::string>& popularity_labels) {
    std::vector<std::string> values;
    switch (category) {
        case TreemapCategory::genre: values = m.genres; break;
        case TreemapCategory::actor: values = m.actors; break;
        case TreemapCategory::director: values = m.directors; break;
        case TreemapCategory::language:
            if (!m.language.empty()) values.push_back(m.language);
            break;
        case TreemapCategory::release_year:
            if (m.release_year > 0) values.push_back(std::to_string(m.release_year / 10 * 10) + "s");
            break;
        case TreemapCategory::popularity:
            if (auto it = popularity_labels.find(m.movie_id); it != popularity_labels.end()) values.push_back(it->second);
            break;
    }
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    std::erase_if(values, [](const std::string& v) { return v.empty(); });
    if (values.empty()) values.emplace_back(kUnknown);
    return values;
}

}  // namespace

TreemapSlice build_treemap(std::span<const MovieRecord> movies, TreemapCategory category,
                           const std::map<MovieId, std::string>& popularity_labels) {
    std::map<std::string, std::vector<const MovieRecord*>> buckets;
    for (const auto& m : movies) {
        for (auto& v : facet_values(m, category, popularity_labels)) buckets[std::move(v)].push_back(&m);
    }
    TreemapSlice slice;
    slice.category = category;
    for (auto& [label, members] : buckets) {
        std::sort(members.begin(), members.end(), [](const MovieRecord* a, const MovieRecord* b) {
            return std::tie(a->title, a->movie_id) < std::tie(b->title, b->movie_id);
        });
        TreemapCell cell{label, members.size(), std::nullopt, {}};
        for (const auto* m : members) cell.children.push_back({m->title, 1, m->movie_id, {}});
        slice.cells.push_back(std::move(cell));
    }
    std::stable_sort(slice.cells.begin(), slice.cells.end(),
                     [](const TreemapCell& a, const TreemapCell& b) { return a.count > b.count; });
    return slice;
}

struct PortraitService::UserState {
    UserId id;
    std::mutex write;
    std::shared_ptr<const Portrait> portrait;  // std::atomic_load / std::atomic_store only
    // Guarded by `write`.
    std::optional<GenerationRecord> last_generation;
    std::map<MovieId, RatingEvent> latest_ratings;
    std::vector<InteractionEvent> events;
    std::vector<EditRecord> edits;

    void add_rating(const RatingEvent& r) {
        auto [it, inserted] = latest_ratings.emplace(r.movie_id, r);
        if (!inserted && r.timestamp >= it->second.timestamp) it->second = r;
    }

    std::vector<RatingEvent> ratings() const {
        std::vector<RatingEvent> out;
        out.reserve(latest_ratings.size());
        for (const auto& [id, r] : latest_ratings) out.push_back(r);
        return out;
    }
};

PortraitService::PortraitService(std::filesystem::path store_dir, Dataset dataset, EmbeddingProvider& embedder,
                                 SummaryProvider& summarizer, const Clock& clock, ServiceOptions options)
    : store_(std::move(store_dir)),
      dataset_(std::move(dataset)),
      embedder_(embedder),
      summarizer_(summarizer),
      clock_(clock),
      options_(std::move(options)) {
    popularity_labels_ = popularity_quartiles(dataset_.catalog);
    for (const auto& r : dataset_.ratings) find_or_create(r.user_id).add_rating(r);

    auto state = store_.replay();
    for (auto& e : state.events) {
        auto& u = find_or_create(e.user_id);
        if (e.kind == EventKind::rating && e.movie_id && e.score) {
            u.add_rating({e.user_id, *e.movie_id, *e.score, e.timestamp});
        }
        u.events.push_back(std::move(e));
    }
    for (auto& e : state.edits) find_or_create(e.user_id).edits.push_back(std::move(e));
    for (auto& [id, p] : state.portraits) {
        std::atomic_store(&find_or_create(id).portrait, std::make_shared<const Portrait>(std::move(p)));
    }
    for (auto& [id, r] : state.generations) find_or_create(id).last_generation = std::move(r);
}

PortraitService::~PortraitService() = default;

PortraitService::UserState* PortraitService::find(const UserId& user) const {
    std::shared_lock lock(registry_mutex_);
    auto it = users_.find(user);
    return it == users_.end() ? nullptr : it->second.get();
}

PortraitService::UserState& PortraitService::find_or_create(const UserId& user) {
    if (auto* s = find(user)) return *s;
    std::unique_lock lock(registry_mutex_);
    auto& slot = users_[user];
    if (!slot) {
        slot = std::make_unique<UserState>();
        slot->id = user;
    }
    return *slot;
}

PortraitService::UserState& PortraitService::require(const UserId& user) const {
    auto* s = find(user);
    if (!s) throw Error(ErrorCode::UnknownUser, "unknown user " + user);
    return *s;
}

bool PortraitService::has_user(const UserId& user) const { return find(user) != nullptr; }

std::vector<UserId> PortraitService::users() const {
    std::shared_lock lock(registry_mutex_);
    std::vector<UserId> out;
    out.reserve(users_.size());
    for (const auto& [id, s] : users_) out.push_back(id);
    return out;
}

std::shared_ptr<const Portrait> PortraitService::portrait(const UserId& user) const {
    auto p = std::atomic_load(&require(user).portrait);
    if (!p) throw Error(ErrorCode::NotYetGenerated, "no portrait generated yet for " + user);
    return p;
}

std::optional<GenerationRecord> PortraitService::last_generation(const UserId& user) const {
    auto& s = require(user);
    std::lock_guard lock(s.write);
    return s.last_generation;
}

void PortraitService::publish(UserState& state, Portrait p) {
    {
        std::shared_lock lock(snapshot_mutex_);
        store_.append_portrait(p);
        std::atomic_store(&state.portrait, std::make_shared<const Portrait>(std::move(p)));
    }
    maybe_snapshot();
}

void PortraitService::maybe_snapshot() {
    if (options_.snapshot_every == 0) return;
    if (portraits_since_snapshot_.fetch_add(1) + 1 < options_.snapshot_every) return;
    std::unique_lock guard(snapshot_write_mutex_, std::try_to_lock);
    if (!guard.owns_lock()) return;
    portraits_since_snapshot_ = 0;
    guard.unlock();
    snapshot();
}

void PortraitService::snapshot() {
    std::lock_guard writer(snapshot_write_mutex_);
    std::map<UserId, Portrait> latest;
    std::size_t lines = 0;
    {
        std::unique_lock capture(snapshot_mutex_);
        lines = store_.portrait_lines();
        std::shared_lock registry(registry_mutex_);
        for (const auto& [id, s] : users_) {
            if (auto p = std::atomic_load(&s->portrait)) latest.emplace(id, *p);
        }
    }
    store_.write_snapshot(latest, lines);
}

PortraitService::EditResult PortraitService::edit_section(const UserId& user, Section section, std::string text,
                                                          std::int64_t base_version) {
    auto& s = require(user);
    std::lock_guard lock(s.write);
    auto current = std::atomic_load(&s.portrait);
    if (!current) throw Error(ErrorCode::NotYetGenerated, "no portrait generated yet for " + user);
    if (base_version != current->version) {
        throw Error(ErrorCode::StaleVersion, "base_version " + std::to_string(base_version) +
                                                 " but current version is " + std::to_string(current->version));
    }
    const bool empty = normalize_text(text).empty();
    if (empty && section != Section::disliked) {
        throw Error(ErrorCode::EmptySection, std::string(to_string(section)) + " section may not be empty");
    }

    auto edit = make_edit_record(user, section, base_version, current->text(section), text, clock_.now(), embedder_);
    Portrait next = *current;
    next.text(section) = empty ? std::string(kNoDislikesPlaceholder) : std::move(text);
    next.version = current->version + 1;
    next.set_section_author(section, Author::user);

    publish(s, next);
    store_.append_edit(edit);
    s.edits.push_back(edit);
    return {std::move(next), std::move(edit)};
}

Portrait PortraitService::generate_locked(UserState& state, const std::string& trigger) {
    const auto current = std::atomic_load(&state.portrait);
    UserContext context;
    for (Section sec : kAllSections) {
        for (auto it = state.edits.rbegin(); it != state.edits.rend(); ++it) {
            if (it->section != sec) continue;
            if (!normalize_text(it->after_text).empty()) {
                auto& slot = sec == Section::recent ? context.recent
                             : sec == Section::liked ? context.liked
                                                     : context.disliked;
                slot = it->after_text;
            }
            break;
        }
    }
    const auto ratings = state.ratings();
    const auto now = clock_.now();
    GenerationRequest request;
    request.user_id = state.id;
    request.ratings = ratings;
    request.reference_date = now;
    request.context = std::move(context);
    request.version = current ? current->version + 1 : 1;
    request.generated_at = now;
    request.trigger = trigger;

    auto result = generate_portrait(request, dataset_.catalog, embedder_, summarizer_, options_.templates,
                                    options_.clustering);
    publish(state, result.portrait);
    store_.append_generation(result.record);
    state.last_generation = result.record;
    return std::move(result.portrait);
}

std::optional<Portrait> PortraitService::regenerate(const UserId& user, bool force) {
    auto& s = require(user);
    std::lock_guard lock(s.write);
    const auto current = std::atomic_load(&s.portrait);
    if (!current) return generate_locked(s, "initial");
    if (!force) {
        if (!s.last_generation) return std::nullopt;
        const auto count = static_cast<std::int64_t>(s.latest_ratings.size());
        if (!should_regenerate(*s.last_generation, count, options_.policy, clock_.now(),
                               s.last_generation->generated_at)) {
            return std::nullopt;
        }
    }
    return generate_locked(s, force ? "forced" : "scheduled");
}

PortraitService::SweepResult PortraitService::sweep() {
    SweepResult result;
    for (const auto& id : users()) {
        auto& s = require(id);
        std::lock_guard lock(s.write);
        try {
            const auto count = static_cast<std::int64_t>(s.latest_ratings.size());
            if (!std::atomic_load(&s.portrait)) {
                if (s.latest_ratings.size() < options_.min_ratings) continue;
                generate_locked(s, "initial");
                ++result.initial;
            } else if (s.last_generation &&
                       should_regenerate(*s.last_generation, count, options_.policy, clock_.now(),
                                         s.last_generation->generated_at)) {
                generate_locked(s, "scheduled");
                ++result.scheduled;
            }
        } catch (const Error&) {
            ++result.failed;
        }
    }
    return result;
}

void PortraitService::record_event(const InteractionEvent& event) {
    validate_event(event);
    if (event.movie_id && !dataset_.catalog.find_movie(*event.movie_id)) {
        throw Error(ErrorCode::InvalidArgument, "unknown movie " + *event.movie_id);
    }
    auto& s = find_or_create(event.user_id);
    std::lock_guard lock(s.write);
    store_.append_event(event);
    if (event.kind == EventKind::rating) {
        s.add_rating({event.user_id, *event.movie_id, *event.score, event.timestamp});
    }
    s.events.push_back(event);
}

TreemapSlice PortraitService::treemap(const UserId& user, TreemapCategory category) const {
    auto& s = require(user);
    std::vector<MovieRecord> movies;
    {
        std::lock_guard lock(s.write);
        for (const auto& [id, r] : s.latest_ratings) {
            if (const auto* m = dataset_.catalog.find_movie(id)) movies.push_back(*m);
        }
    }
    return build_treemap(movies, category, popularity_labels_);
}

std::vector<EditRecord> PortraitService::edits() const {
    std::vector<EditRecord> out;
    for (const auto& id : users()) {
        auto& s = require(id);
        std::lock_guard lock(s.write);
        out.insert(out.end(), s.edits.begin(), s.edits.end());
    }
    return out;
}

std::vector<InteractionEvent> PortraitService::events() const {
    std::vector<InteractionEvent> out;
    for (const auto& id : users()) {
        auto& s = require(id);
        std::lock_guard lock(s.write);
        out.insert(out.end(), s.events.begin(), s.events.end());
    }
    return out;
}

AnalysisReport PortraitService::analysis(const Window& window, const Window& baseline, ReportKind kind,
                                         const std::optional<std::vector<stats::GroupAssignment>>& groups) const {
    std::call_once(embeddings_once_, [this] { movie_embeddings_ = movie_embeddings(dataset_.catalog, embedder_); });
    const auto all_events = events();
    const auto all_edits = edits();
    AnalysisInput input;
    input.events = all_events;
    input.edits = all_edits;
    input.window = window;
    input.baseline = baseline;
    input.embeddings = &movie_embeddings_;
    input.metrics_options = options_.metrics;
    input.groups = groups;
    return run_analysis(input, kind);
}

}  // namespace selfportrait
