#include "selfportrait/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "selfportrait/csv.hpp"

namespace selfportrait {

std::string_view to_string(ReportKind k) { return k == ReportKind::ancova ? "ancova" : "anova"; }

ReportKind parse_report_kind(std::string_view text) {
    if (text == "ancova") return ReportKind::ancova;
    if (text == "anova") return ReportKind::anova;
    throw Error(ErrorCode::InvalidArgument, "report kind must be ancova or anova");
}

std::vector<stats::GroupAssignment> groups_from_edits(std::span<const UserId> users,
                                                      std::span<const EditRecord> edits,
                                                      const Window& window) {
    std::map<UserId, std::size_t> counts;
    for (const auto& e : edits) {
        if (window.contains(e.timestamp)) ++counts[e.user_id];
    }
    std::vector<stats::GroupAssignment> out;
    out.reserve(users.size());
    for (const auto& u : users) {
        auto it = counts.find(u);
        out.push_back({u, stats::group_for_edit_count(it == counts.end() ? 0 : it->second)});
    }
    return out;
}

std::vector<stats::GroupAssignment> load_groups_csv(const std::filesystem::path& path) {
    const auto rows = csv::read_file(path);
    std::vector<stats::GroupAssignment> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (i == 0 && !r.fields.empty() && r.fields[0] == "user_id") continue;
        if (r.fields.size() < 2) {
            throw Error(ErrorCode::MalformedRow, path.string() + ":" + std::to_string(r.line) +
                                                     ": expected user_id,group");
        }
        try {
            out.push_back({r.fields[0], stats::parse_group(r.fields[1])});
        } catch (const Error& e) {
            throw Error(ErrorCode::MalformedRow,
                        path.string() + ":" + std::to_string(r.line) + ": " + e.what());
        }
    }
    return out;
}

namespace {

constexpr std::array<std::pair<stats::Group, stats::Group>, 3> kPairs{{
    {stats::Group::reflected, stats::Group::interacted},
    {stats::Group::reflected, stats::Group::collaborated},
    {stats::Group::interacted, stats::Group::collaborated},
}};

std::size_t group_index(stats::Group g) { return static_cast<std::size_t>(g); }

std::array<std::optional<double>, 3> pairwise_columns(std::span<const stats::PairwiseComparison> pairs) {
    std::array<std::optional<double>, 3> out;
    for (const auto& c : pairs) {
        for (std::size_t k = 0; k < kPairs.size(); ++k) {
            const auto [a, b] = kPairs[k];
            if ((c.a == a && c.b == b) || (c.a == b && c.b == a)) out[k] = c.p_adjusted;
        }
    }
    return out;
}

bool any_in(std::span<const InteractionEvent> events, const Window& w) {
    return std::any_of(events.begin(), events.end(), [&](const auto& e) { return w.contains(e.timestamp); });
}

// Users whose group has fewer than two members in this sample are left out.
template <class Row>
std::vector<Row> drop_small_groups(std::vector<Row> rows) {
    std::array<std::size_t, 3> sizes{};
    for (const auto& r : rows) ++sizes[group_index(r.group)];
    std::erase_if(rows, [&](const Row& r) { return sizes[group_index(r.group)] < 2; });
    return rows;
}

std::size_t distinct_groups(const auto& rows) {
    std::set<stats::Group> gs;
    for (const auto& r : rows) gs.insert(r.group);
    return gs.size();
}

}  // namespace

AnalysisReport run_analysis(const AnalysisInput& input, ReportKind kind) {
    if (!any_in(input.events, input.baseline)) {
        throw Error(ErrorCode::InsufficientData, "baseline window contains no events");
    }
    if (kind == ReportKind::ancova && !any_in(input.events, input.window)) {
        throw Error(ErrorCode::InsufficientData, "experiment window contains no events");
    }

    std::vector<stats::GroupAssignment> groups;
    if (input.groups) {
        groups = *input.groups;
    } else {
        std::set<UserId> users;
        for (const auto& e : input.events) {
            if (input.window.contains(e.timestamp) || input.baseline.contains(e.timestamp)) users.insert(e.user_id);
        }
        for (const auto& e : input.edits) {
            if (input.window.contains(e.timestamp)) users.insert(e.user_id);
        }
        const std::vector<UserId> ids(users.begin(), users.end());
        groups = groups_from_edits(ids, input.edits, input.window);
    }
    std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.user_id < b.user_id; });
    groups.erase(std::unique(groups.begin(), groups.end(),
                             [](const auto& a, const auto& b) { return a.user_id == b.user_id; }),
                 groups.end());

    AnalysisReport report;
    report.kind = kind;
    for (const auto& g : groups) ++report.group_sizes[group_index(g.group)];
    if (distinct_groups(drop_small_groups(groups)) < 2) {
        throw Error(ErrorCode::InsufficientData, "fewer than two groups with two or more users");
    }

    std::vector<UserId> ids;
    for (const auto& g : groups) ids.push_back(g.user_id);
    report.baseline_metrics =
        compute_all_metrics(input.events, input.baseline, input.embeddings, input.metrics_options, &ids);
    if (kind == ReportKind::ancova) {
        report.window_metrics =
            compute_all_metrics(input.events, input.window, input.embeddings, input.metrics_options, &ids);
    }

    // compute_all_metrics returns rows sorted by user id, matching `groups`.
    struct Sample {
        stats::Group group;
        double y;
        double x;
    };
    for (auto name : kMetricNames) {
        ReportRow row;
        row.metric = std::string(name);
        std::vector<Sample> samples;
        for (std::size_t i = 0; i < groups.size(); ++i) {
            const auto base = metric_value(report.baseline_metrics[i], name);
            if (!base) continue;
            if (kind == ReportKind::anova) {
                samples.push_back({groups[i].group, *base, 0.0});
            } else if (const auto y = metric_value(report.window_metrics[i], name)) {
                samples.push_back({groups[i].group, *y, *base});
            }
        }
        samples = drop_small_groups(std::move(samples));
        row.n = samples.size();
        if (distinct_groups(samples) >= 2) {
            std::vector<double> ys, xs;
            std::vector<stats::Group> gs;
            for (const auto& s : samples) {
                ys.push_back(s.y);
                xs.push_back(s.x);
                gs.push_back(s.group);
            }
            try {
                if (kind == ReportKind::ancova) {
                    const auto r = stats::ancova(ys, xs, gs, row.metric);
                    row.f_statistic = r.f_statistic;
                    row.p_value = r.p_value;
                    row.eta_squared = r.eta_squared;
                    row.effect_band = r.effect_band;
                    row.pairwise_p = pairwise_columns(r.pairwise);
                    row.slopes_warning = r.slopes_warning;
                } else {
                    const auto r = stats::anova_oneway(ys, gs);
                    row.f_statistic = r.f_statistic;
                    row.p_value = r.p_value;
                    row.pairwise_p = pairwise_columns(r.pairwise);
                }
            } catch (const Error& e) {
                if (e.code() != ErrorCode::RankDeficient && e.code() != ErrorCode::DegenerateGroup) throw;
            }
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string format_p(std::optional<double> p) {
    if (!p) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *p);
    return std::string(buf) + std::string(stats::significance_stars(*p));
}

namespace {

std::string format_fixed(std::optional<double> v) {
    if (!v) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return buf;
}

nlohmann::json optional_json(std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

std::string report_csv(const AnalysisReport& report) {
    const bool ancova = report.kind == ReportKind::ancova;
    std::string out = ancova ? "metric,ANCOVA,Ref-Int,Ref-Col,Int-Col,eta_squared,effect\n"
                             : "metric,ANOVA,Ref-Int,Ref-Col,Int-Col\n";
    for (const auto& r : report.rows) {
        out += csv::escape(r.metric) + "," + format_p(r.p_value);
        for (const auto& p : r.pairwise_p) out += "," + format_p(p);
        if (ancova) {
            out += "," + format_fixed(r.eta_squared) + "," +
                   (r.effect_band ? std::string(stats::to_string(*r.effect_band)) : std::string("NA"));
        }
        out += '\n';
    }
    return out;
}

nlohmann::json report_json(const AnalysisReport& report) {
    nlohmann::json sizes = nlohmann::json::object();
    for (auto g : stats::kAllGroups) sizes[std::string(stats::to_string(g))] = report.group_sizes[group_index(g)];
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        nlohmann::json row{{"metric", r.metric},
                           {"n", r.n},
                           {"f_statistic", optional_json(r.f_statistic)},
                           {"p_value", optional_json(r.p_value)},
                           {"p_formatted", format_p(r.p_value)},
                           {"ref_int", optional_json(r.pairwise_p[0])},
                           {"ref_col", optional_json(r.pairwise_p[1])},
                           {"int_col", optional_json(r.pairwise_p[2])}};
        if (report.kind == ReportKind::ancova) {
            row["eta_squared"] = optional_json(r.eta_squared);
            row["effect"] = r.effect_band ? nlohmann::json(stats::to_string(*r.effect_band)) : nlohmann::json();
            row["slopes_warning"] = r.slopes_warning;
        }
        rows.push_back(std::move(row));
    }
    return {{"kind", to_string(report.kind)}, {"group_sizes", std::move(sizes)}, {"rows", std::move(rows)}};
}

}  // namespace selfportrait
