#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "selfportrait/edits.hpp"
#include "selfportrait/metrics.hpp"
#include "selfportrait/stats.hpp"

namespace selfportrait {

enum class ReportKind { ancova, anova };
std::string_view to_string(ReportKind k);
ReportKind parse_report_kind(std::string_view text);

// Group per user from the number of edits inside `window`.
std::vector<stats::GroupAssignment> groups_from_edits(std::span<const UserId> users,
                                                      std::span<const EditRecord> edits,
                                                      const Window& window);

// user_id,group
std::vector<stats::GroupAssignment> load_groups_csv(const std::filesystem::path& path);

struct AnalysisInput {
    std::span<const InteractionEvent> events;
    std::span<const EditRecord> edits;
    Window window;    // experiment
    Window baseline;  // pre-experiment
    const EmbeddingIndex* embeddings = nullptr;
    MetricsOptions metrics_options;
    // Explicit assignment; when absent groups come from edit counts in `window`.
    std::optional<std::vector<stats::GroupAssignment>> groups;
};

struct ReportRow {
    std::string metric;
    std::optional<double> f_statistic;
    std::optional<double> p_value;
    // reflected-interacted, reflected-collaborated, interacted-collaborated
    std::array<std::optional<double>, 3> pairwise_p;
    std::optional<double> eta_squared;  // ANCOVA only
    std::optional<stats::EffectBand> effect_band;
    std::size_t n = 0;
    bool slopes_warning = false;
    bool operator==(const ReportRow&) const = default;
};

struct AnalysisReport {
    ReportKind kind = ReportKind::ancova;
    std::array<std::size_t, 3> group_sizes{};  // indexed like stats::kAllGroups
    std::vector<ReportRow> rows;               // kMetricNames order
    std::vector<UserMetrics> window_metrics;
    std::vector<UserMetrics> baseline_metrics;
};

// ANCOVA: each experiment-window metric against its baseline value as covariate.
// ANOVA: the baseline metrics alone (pre-experiment balance check).
// Throws InsufficientData when a window holds no events or fewer than two groups have
// two or more members. Per-metric degeneracy leaves that row's values empty.
AnalysisReport run_analysis(const AnalysisInput& input, ReportKind kind);

// "metric,ANCOVA,Ref-Int,Ref-Col,Int-Col,eta_squared,effect" or
// "metric,ANOVA,Ref-Int,Ref-Col,Int-Col"; p-values "%.4f" with stars, NA when absent.
std::string report_csv(const AnalysisReport& report);
nlohmann::json report_json(const AnalysisReport& report);

// Formats "0.0123**"-style cells.
std::string format_p(std::optional<double> p);

}  // namespace selfportrait
