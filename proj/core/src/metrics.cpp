#include "epistwin/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "epistwin/errors.hpp"
#include "epistwin/util.hpp"

namespace epistwin {

namespace {

int require_score(int score) {
    if (score < 1 || score > 5)
        raise(ErrorKind::ScoreOutOfRange,
              "score " + std::to_string(score) + " is outside 1..5");
    return score;
}

// Ordinal index of a score at the requested level, plus the level's
// category count.
std::size_t level_index(int score, MetricLevel level) {
    require_score(score);
    if (level == MetricLevel::Raw) return static_cast<std::size_t>(score - 1);
    return static_cast<std::size_t>(normalize_category(score));
}

std::size_t level_size(MetricLevel level) {
    return level == MetricLevel::Raw ? 5 : 3;
}

void require_paired(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size())
        raise(ErrorKind::LengthMismatch,
              "rating vectors differ in length: " + std::to_string(a.size()) +
                  " vs " + std::to_string(b.size()));
    if (a.empty()) raise(ErrorKind::EmptyInput, "rating vectors are empty");
}

std::vector<double> marginals(const std::vector<int>& v, MetricLevel level) {
    std::vector<double> p(level_size(level), 0.0);
    for (int score : v) p[level_index(score, level)] += 1.0;
    for (double& x : p) x /= static_cast<double>(v.size());
    return p;
}

// Average ranks, 1-based, ties sharing the mean of their positions.
std::vector<double> average_ranks(const std::vector<int>& v) {
    std::vector<std::size_t> order(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> ranks(v.size(), 0.0);
    std::size_t at = 0;
    while (at < order.size()) {
        std::size_t end = at;
        while (end < order.size() && v[order[end]] == v[order[at]]) ++end;
        double rank = (static_cast<double>(at + 1) + static_cast<double>(end)) / 2.0;
        for (std::size_t i = at; i < end; ++i) ranks[order[i]] = rank;
        at = end;
    }
    return ranks;
}

}  // namespace

const char* category_name(Category category) {
    switch (category) {
        case Category::Negative: return "negative";
        case Category::Neutral: return "neutral";
        case Category::Positive: return "positive";
    }
    return "?";
}

Category normalize_category(int score) {
    require_score(score);
    if (score <= 2) return Category::Negative;
    if (score == 3) return Category::Neutral;
    return Category::Positive;
}

const char* metric_level_name(MetricLevel level) {
    return level == MetricLevel::Raw ? "raw" : "category";
}

MetricLevel parse_metric_level(const std::string& name) {
    if (name == "raw") return MetricLevel::Raw;
    if (name == "category") return MetricLevel::Category;
    raise(ErrorKind::Usage, "unknown metric level '" + name + "'");
}

std::vector<int> RatingTable::column(std::size_t judge) const {
    std::vector<int> out;
    out.reserve(scores.size());
    for (const std::vector<int>& row : scores) out.push_back(row.at(judge));
    return out;
}

void validate_rating_table(const RatingTable& table) {
    if (table.judges.empty())
        raise(ErrorKind::EmptyInput, "rating table has no judges");
    if (table.scores.empty())
        raise(ErrorKind::EmptyInput, "rating table has no items");
    for (std::size_t i = 0; i < table.scores.size(); ++i) {
        if (table.scores[i].size() != table.judges.size())
            raise(ErrorKind::LengthMismatch,
                  "row " + std::to_string(i) + " has " +
                      std::to_string(table.scores[i].size()) + " scores for " +
                      std::to_string(table.judges.size()) + " judges");
        for (int score : table.scores[i]) require_score(score);
    }
}

RatingTable load_rating_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open ratings file '" + path + "'");
    RatingTable table;
    std::string line;
    if (!std::getline(in, line))
        raise(ErrorKind::EmptyInput, "ratings file '" + path + "' is empty");
    {
        std::istringstream header(line);
        std::string name;
        while (header >> name) table.judges.push_back(name);
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::istringstream cells(line);
        std::vector<int> row;
        std::string cell;
        while (cells >> cell) {
            try {
                row.push_back(std::stoi(cell));
            } catch (const std::exception&) {
                raise(ErrorKind::MalformedRecord,
                      path + ":" + std::to_string(lineno) + ": bad score '" +
                          cell + "'");
            }
        }
        table.scores.push_back(std::move(row));
    }
    validate_rating_table(table);
    return table;
}

double percentage_agreement(const std::vector<int>& a, const std::vector<int>& b,
                            MetricLevel level) {
    require_paired(a, b);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (level_index(a[i], level) == level_index(b[i], level)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(a.size());
}

double cohen_kappa_qw(const std::vector<int>& a, const std::vector<int>& b,
                      MetricLevel level) {
    require_paired(a, b);
    const std::size_t k = level_size(level);
    const double span = static_cast<double>((k - 1) * (k - 1));
    auto weight = [&](std::size_t i, std::size_t j) {
        double d = static_cast<double>(i) - static_cast<double>(j);
        return 1.0 - d * d / span;
    };

    double observed = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        observed += weight(level_index(a[i], level), level_index(b[i], level));
    observed /= static_cast<double>(a.size());

    std::vector<double> pa = marginals(a, level);
    std::vector<double> pb = marginals(b, level);
    double expected = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) expected += pa[i] * pb[j] * weight(i, j);

    if (expected >= 1.0) {
        if (observed >= 1.0) return 1.0;
        raise(ErrorKind::DegenerateMarginals,
              "chance agreement is total but observed agreement is not");
    }
    return (observed - expected) / (1.0 - expected);
}

double gwet_ac1(const std::vector<int>& a, const std::vector<int>& b,
                MetricLevel level) {
    require_paired(a, b);
    const std::size_t k = level_size(level);
    double agreement = percentage_agreement(a, b, level);

    std::vector<double> pa = marginals(a, level);
    std::vector<double> pb = marginals(b, level);
    double expected = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        double pi = (pa[c] + pb[c]) / 2.0;
        expected += pi * (1.0 - pi);
    }
    expected /= static_cast<double>(k - 1);
    return (agreement - expected) / (1.0 - expected);
}

double spearman_rho(const std::vector<int>& a, const std::vector<int>& b) {
    require_paired(a, b);
    if (a.size() < 2)
        raise(ErrorKind::EmptyInput, "rank correlation needs at least 2 items");
    for (int score : a) require_score(score);
    for (int score : b) require_score(score);
    if (std::all_of(a.begin(), a.end(), [&](int x) { return x == a[0]; }) ||
        std::all_of(b.begin(), b.end(), [&](int x) { return x == b[0]; }))
        raise(ErrorKind::ZeroVariance, "a constant rating vector has no rank order");

    std::vector<double> ra = average_ranks(a);
    std::vector<double> rb = average_ranks(b);
    double mean = (static_cast<double>(a.size()) + 1.0) / 2.0;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double dx = ra[i] - mean;
        double dy = rb[i] - mean;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    return cov / std::sqrt(va * vb);
}

AlphaResult krippendorff_alpha(const RatingTable& table) {
    validate_rating_table(table);
    if (table.judges.size() < 2)
        raise(ErrorKind::Usage, "alpha needs at least 2 judges");
    if (table.items() < 2) raise(ErrorKind::Usage, "alpha needs at least 2 items");

    // coincidence matrix over raw scores; each ordered pair of distinct
    // judge slots in one item contributes 1/(m-1)
    std::array<std::array<double, 5>, 5> coincidence{};
    const double m = static_cast<double>(table.judges.size());
    for (const std::vector<int>& row : table.scores) {
        for (std::size_t p = 0; p < row.size(); ++p) {
            for (std::size_t q = 0; q < row.size(); ++q) {
                if (p == q) continue;
                std::size_t c = static_cast<std::size_t>(row[p] - 1);
                std::size_t k = static_cast<std::size_t>(row[q] - 1);
                coincidence[c][k] += 1.0 / (m - 1.0);
            }
        }
    }

    std::array<double, 5> margin{};
    double total = 0.0;
    for (std::size_t c = 0; c < 5; ++c)
        for (std::size_t k = 0; k < 5; ++k) {
            margin[c] += coincidence[c][k];
            total += coincidence[c][k];
        }

    // ordinal difference: squared gap between cumulative marginal masses
    auto ordinal_sq = [&](std::size_t c, std::size_t k) {
        if (c > k) std::swap(c, k);
        double between = 0.0;
        for (std::size_t g = c; g <= k; ++g) between += margin[g];
        double d = between - (margin[c] + margin[k]) / 2.0;
        return d * d;
    };

    double observed = 0.0, expected = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
        for (std::size_t k = 0; k < 5; ++k) {
            if (c == k) continue;
            double d = ordinal_sq(c, k);
            observed += coincidence[c][k] * d;
            expected += margin[c] * margin[k] * d;
        }
    }
    observed /= total;
    expected /= total * (total - 1.0);

    AlphaResult result;
    if (expected == 0.0) {
        result.value = 1.0;
        result.degenerate = true;
        return result;
    }
    result.value = 1.0 - observed / expected;
    return result;
}

}  // namespace epistwin
