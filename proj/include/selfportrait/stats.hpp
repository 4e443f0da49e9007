#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "selfportrait/core.hpp"

namespace selfportrait::stats {

enum class Group { reflected, interacted, collaborated };
inline constexpr std::array<Group, 3> kAllGroups{Group::reflected, Group::interacted,
                                                 Group::collaborated};
std::string_view to_string(Group g);
Group parse_group(std::string_view text);

// 0 edits -> reflected, 1 -> interacted, 2+ -> collaborated.
Group group_for_edit_count(std::size_t edits) noexcept;

struct GroupAssignment {
    UserId user_id;
    Group group = Group::reflected;
};

enum class EffectBand { negligible, small, medium, large };
std::string_view to_string(EffectBand b);

// Partial eta-squared bands: [0.01, 0.06) small, [0.06, 0.14) medium, >= 0.14 large.
EffectBand effect_band(double eta_squared) noexcept;

// "*" p < 0.05, "**" p < 0.01, "***" p < 0.001.
std::string_view significance_stars(double p) noexcept;

struct OlsFit {
    Eigen::VectorXd coefficients;
    double residual_sum_squares = 0.0;
    int df_residual = 0;
};

// Column-pivoting Householder QR. Throws DimensionMismatch or RankDeficient (also when N <= P).
OlsFit fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response);

// Regularized incomplete beta I_x(a, b) via continued fraction.
double incomplete_beta(double a, double b, double x);

// Upper tail P(F > f) of the F(d1, d2) distribution.
double f_survival(double f, double d1, double d2);

// CDF of the studentized range for k groups and df error degrees of freedom
// (df <= 0 or infinite means the normal limit). Adaptive Gauss-Kronrod quadrature.
double studentized_range_cdf(double q, int k, double df);

struct PairwiseComparison {
    Group a = Group::reflected;
    Group b = Group::reflected;
    double mean_difference = 0.0;  // mean_b - mean_a
    double q = 0.0;
    double p_adjusted = 1.0;
};

struct GroupSummary {
    Group group = Group::reflected;
    std::size_t n = 0;
    double mean = 0.0;
};

// Tukey-Kramer: q = |m_a - m_b| / sqrt(mse/2 * (1/n_a + 1/n_b)), p = 1 - CDF_q(q; k, df).
// Throws NonPositiveMSE.
std::vector<PairwiseComparison> tukey_hsd(std::span<const GroupSummary> groups, double mse,
                                          int df_error);

struct AncovaResult {
    std::string metric;
    double f_statistic = 0.0;
    double p_value = 1.0;
    int df_effect = 0;
    int df_error = 0;
    double eta_squared = 0.0;  // partial
    EffectBand effect_band = EffectBand::negligible;
    double covariate_slope = 0.0;
    bool covariate_dropped = false;  // zero-variance covariate
    std::vector<GroupSummary> adjusted_means;  // evaluated at the grand covariate mean
    std::vector<PairwiseComparison> pairwise;
    std::optional<double> slopes_homogeneity_p;
    bool slopes_warning = false;  // interaction test significant at 0.05
};

// y ~ 1 + covariate + group dummies (reference = first present group) against
// y ~ 1 + covariate. Throws DegenerateGroup or RankDeficient.
AncovaResult ancova(std::span<const double> outcome, std::span<const double> covariate,
                    std::span<const Group> groups, std::string metric = {});

struct AnovaResult {
    double f_statistic = 0.0;
    double p_value = 1.0;
    int df_between = 0;
    int df_within = 0;
    std::vector<GroupSummary> means;
    std::vector<PairwiseComparison> pairwise;
};

// Throws DegenerateGroup.
AnovaResult anova_oneway(std::span<const double> outcome, std::span<const Group> groups);

}  // namespace selfportrait::stats
