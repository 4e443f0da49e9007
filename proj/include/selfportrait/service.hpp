#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "selfportrait/analysis.hpp"
#include "selfportrait/edits.hpp"
#include "selfportrait/ingest.hpp"
#include "selfportrait/metrics.hpp"
#include "selfportrait/store.hpp"
#include "selfportrait/summarize.hpp"

namespace selfportrait {

class Clock {
public:
    virtual ~Clock() = default;
    virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
public:
    Timestamp now() const override;
};

// Test and simulation clock; only moves when told to.
class ManualClock final : public Clock {
public:
    explicit ManualClock(Timestamp start) : seconds_(start.time_since_epoch().count()) {}
    Timestamp now() const override { return Timestamp{std::chrono::seconds{seconds_.load()}}; }
    void set(Timestamp t) { seconds_ = t.time_since_epoch().count(); }
    void advance(std::chrono::seconds d) { seconds_ += d.count(); }

private:
    std::atomic<std::int64_t> seconds_;
};

enum class TreemapCategory { genre, actor, director, language, popularity, release_year };
std::string_view to_string(TreemapCategory c);
TreemapCategory parse_treemap_category(std::string_view text);  // throws BadCategory

struct TreemapCell {
    std::string label;
    std::size_t count = 0;
    std::optional<MovieId> movie_id;  // set on leaf (movie) cells
    std::vector<TreemapCell> children;
    bool operator==(const TreemapCell&) const = default;
};

struct TreemapSlice {
    TreemapCategory category = TreemapCategory::genre;
    std::vector<TreemapCell> cells;  // count desc, then label
};

void to_json(nlohmann::json& j, const TreemapCell& c);
void to_json(nlohmann::json& j, const TreemapSlice& s);

// Per-movie popularity quartile label over the whole catalog: "Q1" least to "Q4" most popular.
std::map<MovieId, std::string> popularity_quartiles(const Catalog& catalog);

// Facet counts over the given movies; a movie lands in every cell its facet values name.
// Missing values go to "Unknown"; release years are bucketed by decade ("1990s").
TreemapSlice build_treemap(std::span<const MovieRecord> movies, TreemapCategory category,
                           const std::map<MovieId, std::string>& popularity_labels);

struct ServiceOptions {
    RegenerationPolicy policy;
    PromptTemplates templates = PromptTemplates::defaults();
    ClusterOptions clustering;
    MetricsOptions metrics;
    std::size_t min_ratings = 20;
    std::size_t snapshot_every = 200;  // 0 disables automatic snapshots
};

// Owns the store and all per-user state. Writes for one user are serialized by that
// user's mutex; portrait reads are lock-free loads of immutable snapshots.
class PortraitService {
public:
    PortraitService(std::filesystem::path store_dir, Dataset dataset, EmbeddingProvider& embedder,
                    SummaryProvider& summarizer, const Clock& clock, ServiceOptions options = {});
    ~PortraitService();

    bool has_user(const UserId& user) const;
    std::vector<UserId> users() const;

    // Throws UnknownUser or NotYetGenerated.
    std::shared_ptr<const Portrait> portrait(const UserId& user) const;

    struct EditResult {
        Portrait portrait;
        EditRecord edit;
    };
    // Throws UnknownUser, NotYetGenerated, StaleVersion or EmptySection.
    EditResult edit_section(const UserId& user, Section section, std::string text, std::int64_t base_version);

    // Runs the generation pipeline with the user's own section texts as context. Returns
    // nullopt when not forced and the regeneration policy says no. A user without a
    // portrait always gets an initial one. Throws UnknownUser, ProviderFailure (state
    // unchanged) or the pipeline's data errors.
    std::optional<Portrait> regenerate(const UserId& user, bool force);

    // Daily pass: initial portraits for eligible users, policy-driven regeneration for the
    // rest. Per-user failures are counted and skipped.
    struct SweepResult {
        std::size_t initial = 0;
        std::size_t scheduled = 0;
        std::size_t failed = 0;
    };
    SweepResult sweep();

    // Validates and appends; rating events also update the user's rating history.
    void record_event(const InteractionEvent& event);

    TreemapSlice treemap(const UserId& user, TreemapCategory category) const;

    // Same computation as the offline analyze command over the stored logs.
    AnalysisReport analysis(const Window& window, const Window& baseline, ReportKind kind,
                            const std::optional<std::vector<stats::GroupAssignment>>& groups = std::nullopt) const;

    std::vector<EditRecord> edits() const;
    std::vector<InteractionEvent> events() const;
    std::vector<Portrait> history(const UserId& user) const { return store_.history(user); }
    std::optional<GenerationRecord> last_generation(const UserId& user) const;

    void snapshot();
    const Clock& clock() const noexcept { return clock_; }
    const Catalog& catalog() const noexcept { return dataset_.catalog; }

private:
    struct UserState;
    UserState* find(const UserId& user) const;
    UserState& find_or_create(const UserId& user);
    UserState& require(const UserId& user) const;
    void publish(UserState& state, Portrait p);
    Portrait generate_locked(UserState& state, const std::string& trigger);
    void maybe_snapshot();

    Store store_;
    Dataset dataset_;
    EmbeddingProvider& embedder_;
    SummaryProvider& summarizer_;
    const Clock& clock_;
    ServiceOptions options_;
    mutable std::once_flag embeddings_once_;
    mutable EmbeddingIndex movie_embeddings_;  // built on first analysis
    std::map<MovieId, std::string> popularity_labels_;

    mutable std::shared_mutex registry_mutex_;  // exclusive only when a new user appears
    std::map<UserId, std::unique_ptr<UserState>> users_;

    std::shared_mutex snapshot_mutex_;  // writers shared; snapshot capture exclusive
    std::mutex snapshot_write_mutex_;
    std::atomic<std::size_t> portraits_since_snapshot_{0};
};

}  // namespace selfportrait
