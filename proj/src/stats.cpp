#include "selfportrait/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace selfportrait::stats {

std::string_view to_string(Group g) {
    switch (g) {
        case Group::reflected: return "reflected";
        case Group::interacted: return "interacted";
        case Group::collaborated: return "collaborated";
    }
    return "reflected";
}

Group parse_group(std::string_view text) {
    for (Group g : kAllGroups) {
        if (to_string(g) == text) return g;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown group '" + std::string(text) + "'");
}

Group group_for_edit_count(std::size_t edits) noexcept {
    if (edits == 0) return Group::reflected;
    if (edits == 1) return Group::interacted;
    return Group::collaborated;
}

std::string_view to_string(EffectBand b) {
    switch (b) {
        case EffectBand::negligible: return "negligible";
        case EffectBand::small: return "small";
        case EffectBand::medium: return "medium";
        case EffectBand::large: return "large";
    }
    return "negligible";
}

EffectBand effect_band(double eta_squared) noexcept {
    if (eta_squared >= 0.14) return EffectBand::large;
    if (eta_squared >= 0.06) return EffectBand::medium;
    if (eta_squared >= 0.01) return EffectBand::small;
    return EffectBand::negligible;
}

std::string_view significance_stars(double p) noexcept {
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "";
}

OlsFit fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response) {
    if (design.rows() != response.size()) {
        throw Error(ErrorCode::DimensionMismatch, "design has " + std::to_string(design.rows()) +
                                                      " rows, response has " +
                                                      std::to_string(response.size()));
    }
    if (design.rows() <= design.cols()) {
        throw Error(ErrorCode::RankDeficient, "need more observations than parameters");
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < design.cols()) {
        throw Error(ErrorCode::RankDeficient, "design matrix rank " + std::to_string(qr.rank()) +
                                                  " < " + std::to_string(design.cols()));
    }
    OlsFit fit;
    fit.coefficients = qr.solve(response);
    fit.residual_sum_squares = (response - design * fit.coefficients).squaredNorm();
    fit.df_residual = static_cast<int>(design.rows() - design.cols());
    return fit;
}

namespace {

double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) throw Error(ErrorCode::InvalidArgument, "beta parameters must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double f_survival(double f, double d1, double d2) {
    if (std::isnan(f)) return std::numeric_limits<double>::quiet_NaN();
    if (f <= 0.0) return 1.0;
    if (std::isinf(f)) return 0.0;
    return std::clamp(incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)), 0.0, 1.0);
}

namespace {

// 7-point Gauss / 15-point Kronrod pair.
constexpr double kXgk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                            0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                            0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                            0.207784955007898467600689403773245, 0.0};
constexpr double kWgk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                            0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                            0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                            0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kWg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                           0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
double gauss_kronrod(const F& f, double a, double b, double tol, int depth) {
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double fc = f(center);
    double kronrod = fc * kWgk[7];
    double gauss = fc * kWg[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = half * kXgk[j];
        const double sum = f(center - dx) + f(center + dx);
        kronrod += kWgk[j] * sum;
        if (j % 2 == 1) gauss += kWg[j / 2] * sum;
    }
    kronrod *= half;
    gauss *= half;
    if (std::fabs(kronrod - gauss) <= tol || depth >= 40) return kronrod;
    return gauss_kronrod(f, a, center, tol / 2.0, depth + 1) +
           gauss_kronrod(f, center, b, tol / 2.0, depth + 1);
}

template <class F>
double integrate(const F& f, double a, double b, double tol) {
    return gauss_kronrod(f, a, b, tol, 0);
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

// Fixed composite 15-point rule over |z| <= 8.5, where the normal density factor of the
// range integrand is above 1e-16. Everything that does not depend on w is tabulated.
struct RangeNodes {
    static constexpr int kPanels = 12;
    static constexpr int kPerPanel = 15;
    std::array<double, kPanels * kPerPanel> z, weight, upper_erfc, upper_erfc_neg;

    RangeNodes() {
        constexpr double lo = -8.5, hi = 8.5;
        constexpr double half = 0.5 * (hi - lo) / kPanels;
        std::size_t n = 0;
        auto add = [&](double x, double w) {
            z[n] = x;
            weight[n] = w * half * normal_pdf(x);
            upper_erfc[n] = std::erfc(x * kInvSqrt2);
            upper_erfc_neg[n] = std::erfc(-x * kInvSqrt2);
            ++n;
        };
        for (int p = 0; p < kPanels; ++p) {
            const double center = lo + (2 * p + 1) * half;
            add(center, kWgk[7]);
            for (int j = 0; j < 7; ++j) {
                add(center - half * kXgk[j], kWgk[j]);
                add(center + half * kXgk[j], kWgk[j]);
            }
        }
    }
};

// P(range of k standard normals <= w).
double normal_range_cdf(double w, int k) {
    if (w <= 0.0) return 0.0;
    static const RangeNodes nodes;
    double total = 0.0;
    for (std::size_t i = 0; i < nodes.z.size(); ++i) {
        // P(z - w < Z <= z) from the tail that avoids cancellation.
        const double lo = nodes.z[i] - w, hi = nodes.z[i];
        double inner;
        if (lo >= 0.0) {
            inner = 0.5 * (std::erfc(lo * kInvSqrt2) - nodes.upper_erfc[i]);
        } else if (hi <= 0.0) {
            inner = 0.5 * (nodes.upper_erfc_neg[i] - std::erfc(-lo * kInvSqrt2));
        } else {
            inner = 1.0 - 0.5 * std::erfc(-lo * kInvSqrt2) - 0.5 * nodes.upper_erfc[i];
        }
        double power = 1.0;
        for (int j = 1; j < k; ++j) power *= inner;
        total += nodes.weight[i] * power;
    }
    return std::clamp(k * total, 0.0, 1.0);
}

}  // namespace

double studentized_range_cdf(double q, int k, double df) {
    if (k < 2) throw Error(ErrorCode::InvalidArgument, "studentized range needs k >= 2");
    if (std::isnan(q)) return std::numeric_limits<double>::quiet_NaN();
    if (q <= 0.0) return 0.0;
    if (std::isinf(q)) return 1.0;
    if (!(df > 0.0) || std::isinf(df) || df > 1e6) return normal_range_cdf(q, k);

    // S = sqrt(chi2_df / df) has density c * s^(df-1) * exp(-df s^2 / 2).
    const double log_c = 0.5 * df * std::log(df) - std::lgamma(0.5 * df) - (0.5 * df - 1.0) * std::log(2.0);
    auto integrand = [&](double s) {
        if (s <= 0.0) return 0.0;
        const double log_density = log_c + (df - 1.0) * std::log(s) - 0.5 * df * s * s;
        return std::exp(log_density) * normal_range_cdf(q * s, k);
    };
    const double sigma = 1.0 / std::sqrt(2.0 * df);
    const double lo = std::max(0.0, 1.0 - 14.0 * sigma);
    const double hi = 1.0 + 14.0 * sigma;
    const double value = integrate(integrand, lo, 1.0, 1e-8) + integrate(integrand, 1.0, hi, 1e-8);
    return std::clamp(value, 0.0, 1.0);
}

std::vector<PairwiseComparison> tukey_hsd(std::span<const GroupSummary> groups, double mse, int df_error) {
    if (groups.size() < 2) throw Error(ErrorCode::DegenerateGroup, "Tukey HSD needs at least two groups");
    if (!(mse > 0.0)) throw Error(ErrorCode::NonPositiveMSE, "mean squared error must be positive");
    const int k = static_cast<int>(groups.size());
    std::vector<PairwiseComparison> out;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        for (std::size_t j = i + 1; j < groups.size(); ++j) {
            const auto& a = groups[i];
            const auto& b = groups[j];
            PairwiseComparison c;
            c.a = a.group;
            c.b = b.group;
            c.mean_difference = b.mean - a.mean;
            const double se = std::sqrt(mse / 2.0 * (1.0 / static_cast<double>(a.n) + 1.0 / static_cast<double>(b.n)));
            c.q = std::fabs(c.mean_difference) / se;
            c.p_adjusted = std::clamp(1.0 - studentized_range_cdf(c.q, k, df_error), 0.0, 1.0);
            out.push_back(c);
        }
    }
    return out;
}

namespace {

struct GroupLayout {
    std::vector<Group> present;  // kAllGroups order
    std::vector<std::size_t> sizes;
};

GroupLayout layout_of(std::span<const Group> groups) {
    GroupLayout layout;
    for (Group g : kAllGroups) {
        const auto n = static_cast<std::size_t>(std::count(groups.begin(), groups.end(), g));
        if (n == 0) continue;
        if (n < 2) {
            throw Error(ErrorCode::DegenerateGroup,
                        "group " + std::string(to_string(g)) + " has fewer than two members");
        }
        layout.present.push_back(g);
        layout.sizes.push_back(n);
    }
    if (layout.present.size() < 2) {
        throw Error(ErrorCode::DegenerateGroup, "need at least two non-empty groups");
    }
    return layout;
}

std::size_t position_of(const GroupLayout& layout, Group g) {
    return static_cast<std::size_t>(std::find(layout.present.begin(), layout.present.end(), g) -
                                    layout.present.begin());
}

// Pairwise comparisons when the error variance is exactly zero: identical means are
// indistinguishable (p = 1); any difference is certain (p = 0).
std::vector<PairwiseComparison> exact_pairwise(std::span<const GroupSummary> groups) {
    std::vector<PairwiseComparison> out;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        for (std::size_t j = i + 1; j < groups.size(); ++j) {
            PairwiseComparison c;
            c.a = groups[i].group;
            c.b = groups[j].group;
            c.mean_difference = groups[j].mean - groups[i].mean;
            const bool same = std::fabs(c.mean_difference) <= 1e-12 * (1.0 + std::fabs(groups[i].mean));
            c.q = same ? 0.0 : std::numeric_limits<double>::infinity();
            c.p_adjusted = same ? 1.0 : 0.0;
            out.push_back(c);
        }
    }
    return out;
}

std::pair<double, double> f_and_p(double ss_effect, double df_effect, double rss, double df_error) {
    if (rss <= 0.0) {
        return ss_effect <= 0.0 ? std::pair{0.0, 1.0}
                                : std::pair{std::numeric_limits<double>::infinity(), 0.0};
    }
    const double f = (ss_effect / df_effect) / (rss / df_error);
    return {f, f_survival(f, df_effect, df_error)};
}

}  // namespace

AncovaResult ancova(std::span<const double> outcome, std::span<const double> covariate,
                    std::span<const Group> groups, std::string metric) {
    const std::size_t n = outcome.size();
    if (covariate.size() != n || groups.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "outcome, covariate and groups differ in length");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(covariate[i]) || !std::isfinite(outcome[i])) {
            throw Error(ErrorCode::InvalidArgument, "non-finite outcome or covariate");
        }
    }
    const auto layout = layout_of(groups);
    const std::size_t g = layout.present.size();

    AncovaResult result;
    result.metric = std::move(metric);

    double mean_x = 0.0;
    for (double x : covariate) mean_x += x;
    mean_x /= static_cast<double>(n);
    double max_dev = 0.0;
    for (double x : covariate) max_dev = std::max(max_dev, std::fabs(x - mean_x));
    result.covariate_dropped = max_dev <= 1e-12 * std::max(1.0, std::fabs(mean_x));
    const int cov_cols = result.covariate_dropped ? 0 : 1;

    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    const auto full_cols = static_cast<Eigen::Index>(1 + cov_cols + (g - 1));
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), full_cols);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        y(r) = outcome[i];
        full(r, 0) = 1.0;
        if (cov_cols) full(r, 1) = covariate[i] - mean_x;
        const std::size_t pos = position_of(layout, groups[i]);
        if (pos > 0) full(r, static_cast<Eigen::Index>(cov_cols + pos)) = 1.0;
    }
    const Eigen::MatrixXd reduced = full.leftCols(1 + cov_cols);

    const auto fit_full = fit_ols(full, y);
    const auto fit_reduced = fit_ols(reduced, y);
    if (fit_full.df_residual <= 0) throw Error(ErrorCode::DegenerateGroup, "no residual degrees of freedom");

    // Sums of squares at rounding level of the data are exact zeros (identical groups, perfect fits).
    const double tiny = 1e-24 * y.squaredNorm();
    const double rss_full = fit_full.residual_sum_squares <= tiny ? 0.0 : fit_full.residual_sum_squares;
    const double rss_reduced = fit_reduced.residual_sum_squares <= tiny ? 0.0 : fit_reduced.residual_sum_squares;
    double ss_effect = std::max(0.0, rss_reduced - rss_full);
    if (ss_effect <= 1e-12 * rss_reduced + tiny) ss_effect = 0.0;
    result.df_effect = static_cast<int>(g - 1);
    result.df_error = fit_full.df_residual;
    std::tie(result.f_statistic, result.p_value) = f_and_p(ss_effect, result.df_effect, rss_full, result.df_error);
    result.eta_squared = rss_reduced > 0.0 ? std::clamp(ss_effect / rss_reduced, 0.0, 1.0) : 0.0;
    result.effect_band = effect_band(result.eta_squared);
    result.covariate_slope = cov_cols ? fit_full.coefficients(1) : 0.0;

    for (std::size_t k = 0; k < g; ++k) {
        double mean = fit_full.coefficients(0);
        if (k > 0) mean += fit_full.coefficients(static_cast<Eigen::Index>(cov_cols + k));
        result.adjusted_means.push_back({layout.present[k], layout.sizes[k], mean});
    }
    const double mse = rss_full / result.df_error;
    result.pairwise = mse > 0.0 ? tukey_hsd(result.adjusted_means, mse, result.df_error)
                                : exact_pairwise(result.adjusted_means);

    if (cov_cols) {
        // Homogeneity of regression slopes: add group x covariate interaction terms.
        Eigen::MatrixXd interaction(full.rows(), full.cols() + static_cast<Eigen::Index>(g - 1));
        interaction.leftCols(full.cols()) = full;
        for (std::size_t k = 1; k < g; ++k) {
            interaction.col(full.cols() + static_cast<Eigen::Index>(k - 1)) =
                full.col(static_cast<Eigen::Index>(cov_cols + k)).cwiseProduct(full.col(1));
        }
        try {
            const auto fit_int = fit_ols(interaction, y);
            const double ss = std::max(0.0, fit_full.residual_sum_squares - fit_int.residual_sum_squares);
            const auto [f, p] = f_and_p(ss, static_cast<double>(g - 1), fit_int.residual_sum_squares,
                                        fit_int.df_residual);
            result.slopes_homogeneity_p = p;
            result.slopes_warning = p < 0.05;
        } catch (const Error&) {
            // Interaction model not estimable (e.g. constant covariate within a group).
        }
    }
    return result;
}

AnovaResult anova_oneway(std::span<const double> outcome, std::span<const Group> groups) {
    if (outcome.size() != groups.size()) {
        throw Error(ErrorCode::DimensionMismatch, "outcome and groups differ in length");
    }
    const auto layout = layout_of(groups);
    const std::size_t g = layout.present.size();
    const std::size_t n = outcome.size();

    std::vector<double> sums(g, 0.0);
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sums[position_of(layout, groups[i])] += outcome[i];
        grand += outcome[i];
    }
    grand /= static_cast<double>(n);

    AnovaResult result;
    for (std::size_t k = 0; k < g; ++k) {
        result.means.push_back({layout.present[k], layout.sizes[k], sums[k] / static_cast<double>(layout.sizes[k])});
    }
    double ss_between = 0.0, ss_within = 0.0, ss_raw = 0.0;
    for (const auto& m : result.means) ss_between += static_cast<double>(m.n) * (m.mean - grand) * (m.mean - grand);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = outcome[i] - result.means[position_of(layout, groups[i])].mean;
        ss_within += d * d;
        ss_raw += outcome[i] * outcome[i];
    }
    const double tiny = 1e-24 * ss_raw;
    if (ss_within <= tiny) ss_within = 0.0;
    if (ss_between <= tiny) ss_between = 0.0;
    result.df_between = static_cast<int>(g - 1);
    result.df_within = static_cast<int>(n - g);
    if (result.df_within <= 0) throw Error(ErrorCode::DegenerateGroup, "no within-group degrees of freedom");
    std::tie(result.f_statistic, result.p_value) = f_and_p(ss_between, result.df_between, ss_within, result.df_within);
    const double mse = ss_within / result.df_within;
    result.pairwise = mse > 0.0 ? tukey_hsd(result.means, mse, result.df_within) : exact_pairwise(result.means);
    return result;
}

}  // namespace selfportrait::stats
