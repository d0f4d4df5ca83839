#pragma once
// Inter-rater reliability suite over 1..5 Likert ratings: percentage
// agreement, quadratic-weighted kappa, Gwet's AC1, Spearman's rho, and
// Krippendorff's alpha, plus the 3-way category collapse the agreement
// metrics default to.

#include <cstddef>
#include <string>
#include <vector>

namespace epistwin {

enum class Category { Negative, Neutral, Positive };

const char* category_name(Category category);

// 1..2 -> Negative, 3 -> Neutral, 4..5 -> Positive.
Category normalize_category(int score);

// Whether an agreement metric compares raw 1..5 scores or the 3-way
// category collapse.
enum class MetricLevel { Raw, Category };

const char* metric_level_name(MetricLevel level);
MetricLevel parse_metric_level(const std::string& name);

// Complete items x judges score matrix. Rows are items, columns follow the
// judge name order.
struct RatingTable {
    std::vector<std::string> judges;
    std::vector<std::vector<int>> scores;

    std::size_t items() const { return scores.size(); }
    std::vector<int> column(std::size_t judge) const;
};

// Rejects empty, ragged, or out-of-range tables.
void validate_rating_table(const RatingTable& table);

// Whitespace-separated matrix file: a header row of judge names, then one
// row of scores per item.
RatingTable load_rating_table(const std::string& path);

// Fraction of items where both raters give the identical label.
double percentage_agreement(const std::vector<int>& a, const std::vector<int>& b,
                            MetricLevel level);

// Quadratic-weighted Cohen's kappa with w_ij = 1 - (i-j)^2/(K-1)^2 over the
// full ordinal index range for the level (K = 5 raw, 3 category). When
// chance agreement is total (both raters constant on one label) the value is
// 1.0 under perfect agreement and an error otherwise.
double cohen_kappa_qw(const std::vector<int>& a, const std::vector<int>& b,
                      MetricLevel level);

// Gwet's first-order agreement coefficient, unweighted:
// (p_a - p_e)/(1 - p_e) with p_e = (1/(K-1)) sum_k pi_k (1 - pi_k).
double gwet_ac1(const std::vector<int>& a, const std::vector<int>& b,
                MetricLevel level);

// Rank correlation on raw scores with average ranks for ties. A constant
// input has no defined rank order and raises ZeroVariance.
double spearman_rho(const std::vector<int>& a, const std::vector<int>& b);

struct AlphaResult {
    double value = 0.0;
    // a table with one repeated value everywhere has no expected
    // disagreement; the value is pinned to 1.0 and flagged
    bool degenerate = false;
};

// Krippendorff's alpha across all judges at once, coincidence-matrix form
// with the ordinal difference function on raw 1..5 scores.
AlphaResult krippendorff_alpha(const RatingTable& table);

}  // namespace epistwin
