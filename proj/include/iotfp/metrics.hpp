#pragma once

// Distances between frequency vectors and Pearson's chi-squared test of
// independence between inter-arrival time and packet size.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <vector>

#include "iotfp/chi2_table.hpp"
#include "iotfp/core.hpp"
#include "iotfp/error.hpp"

namespace iotfp {

// Any ordered associative container of key -> arithmetic weight.
template <typename M>
concept SparseVector = requires(const M& m) {
    { m.begin()->first < m.begin()->first } -> std::convertible_to<bool>;
    { static_cast<double>(m.begin()->second) };
};

namespace detail {

// Visits the union of keys of two sorted maps; missing entries read as 0.
template <SparseVector A, SparseVector B, typename F>
void for_each_union(const A& a, const B& b, F&& f) {
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() || ib != b.end()) {
        if (ib == b.end() || (ia != a.end() && static_cast<std::int64_t>(ia->first) < static_cast<std::int64_t>(ib->first))) {
            f(static_cast<double>(ia->second), 0.0);
            ++ia;
        } else if (ia == a.end() || static_cast<std::int64_t>(ib->first) < static_cast<std::int64_t>(ia->first)) {
            f(0.0, static_cast<double>(ib->second));
            ++ib;
        } else {
            f(static_cast<double>(ia->second), static_cast<double>(ib->second));
            ++ia;
            ++ib;
        }
    }
}

template <SparseVector M>
double sum_of(const M& m) {
    double s = 0.0;
    for (const auto& [_, v] : m) {
        require(static_cast<double>(v) >= 0.0, ErrorCode::InvalidArgument, "negative frequency");
        s += static_cast<double>(v);
    }
    return s;
}

inline double cosine_from_parts(double dot, double nu, double nv) {
    require(nu > 0.0 && nv > 0.0, ErrorCode::UndefinedDistance, "cosine distance of a zero vector");
    const double c = dot / (std::sqrt(nu) * std::sqrt(nv));
    return std::clamp(1.0 - c, 0.0, 1.0);
}

inline double xlog2_ratio(double p, double q) { return p > 0.0 ? p * std::log2(p / q) : 0.0; }

} // namespace detail

template <SparseVector A, SparseVector B>
double cosine_distance(const A& u, const B& v) {
    double dot = 0.0, nu = 0.0, nv = 0.0;
    detail::for_each_union(u, v, [&](double a, double b) {
        require(a >= 0.0 && b >= 0.0, ErrorCode::InvalidArgument, "negative frequency");
        dot += a * b;
        nu += a * a;
        nv += b * b;
    });
    return detail::cosine_from_parts(dot, nu, nv);
}

inline double cosine_distance(const SizeHistogram& u, const SizeHistogram& v) {
    return cosine_distance(u.counts(), v.counts());
}

// Dense variant over a shared index.
inline double cosine_distance(std::span<const double> u, std::span<const double> v) {
    require(u.size() == v.size(), ErrorCode::InvalidArgument, "dense vectors differ in length");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    return detail::cosine_from_parts(dot, nu, nv);
}

// KL(p || q) in bits. Both inputs must already sum to 1.
template <SparseVector A, SparseVector B>
double kl_divergence(const A& p, const B& q) {
    const double sp = detail::sum_of(p), sq = detail::sum_of(q);
    require(std::abs(sp - 1.0) < 1e-6 && std::abs(sq - 1.0) < 1e-6, ErrorCode::InvalidArgument,
            "KL divergence expects normalized inputs");
    double kl = 0.0;
    detail::for_each_union(p, q, [&](double a, double b) {
        if (a > 0.0 && b <= 0.0) fail(ErrorCode::UndefinedDivergence, "q(x) = 0 where p(x) > 0");
        kl += detail::xlog2_ratio(a, b);
    });
    return std::max(kl, 0.0);
}

// Jensen-Shannon distance, base 2, so the result lies in [0, 1].
template <SparseVector A, SparseVector B>
double jsd(const A& u, const B& v) {
    const double su = detail::sum_of(u), sv = detail::sum_of(v);
    require(su > 0.0 && sv > 0.0, ErrorCode::UndefinedDistance, "Jensen-Shannon distance of a zero vector");
    double div = 0.0;
    detail::for_each_union(u, v, [&](double a, double b) {
        const double p = a / su, q = b / sv, m = 0.5 * (p + q);
        div += 0.5 * detail::xlog2_ratio(p, m) + 0.5 * detail::xlog2_ratio(q, m);
    });
    return std::clamp(std::sqrt(std::max(div, 0.0)), 0.0, 1.0);
}

inline double jsd(const SizeHistogram& u, const SizeHistogram& v) { return jsd(u.counts(), v.counts()); }

// ---------------------------------------------------------------------------
// Chi-squared test of independence

using ContingencyTable = std::vector<std::vector<double>>;

struct ChiSquaredResult {
    double statistic = 0.0;
    int degrees_of_freedom = 0;
    double critical_value_95 = 0.0;
    bool reject_independence = false;
    double final_time_bin_width = 0.0;
    std::uint32_t final_size_bin_width = 0;
    double pct_expected_ge_5 = 0.0;
    double min_expected = 0.0;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

struct ExpectedStats {
    double pct_ge_5 = 0.0;
    double min_expected = 0.0;
};

namespace detail {

// Drops all-zero rows and columns; they carry no expected mass.
inline ContingencyTable compact(const ContingencyTable& t) {
    if (t.empty()) return {};
    const std::size_t cols = t.front().size();
    std::vector<bool> keep_col(cols, false);
    ContingencyTable rows;
    for (const auto& r : t) {
        require(r.size() == cols, ErrorCode::InvalidArgument, "ragged contingency table");
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            s += r[j];
            if (r[j] > 0.0) keep_col[j] = true;
        }
        if (s > 0.0) rows.push_back(r);
    }
    ContingencyTable out;
    for (const auto& r : rows) {
        std::vector<double> row;
        for (std::size_t j = 0; j < cols; ++j)
            if (keep_col[j]) row.push_back(r[j]);
        out.push_back(std::move(row));
    }
    return out;
}

struct Marginals {
    std::vector<double> row, col;
    double total = 0.0;
};

inline Marginals marginals(const ContingencyTable& t) {
    Marginals m;
    m.row.assign(t.size(), 0.0);
    m.col.assign(t.empty() ? 0 : t.front().size(), 0.0);
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = 0; j < t[i].size(); ++j) {
            m.row[i] += t[i][j];
            m.col[j] += t[i][j];
            m.total += t[i][j];
        }
    return m;
}

} // namespace detail

inline ExpectedStats expected_stats(const ContingencyTable& raw) {
    const auto t = detail::compact(raw);
    const auto m = detail::marginals(t);
    ExpectedStats s{0.0, 0.0};
    if (m.total <= 0.0) return s;
    std::size_t cells = 0, ge5 = 0;
    double lo = INFINITY;
    for (double r : m.row)
        for (double c : m.col) {
            const double e = r * c / m.total;
            ++cells;
            if (e >= 5.0) ++ge5;
            lo = std::min(lo, e);
        }
    s.pct_ge_5 = 100.0 * static_cast<double>(ge5) / static_cast<double>(cells);
    s.min_expected = lo;
    return s;
}

// Pearson statistic on a fixed table; all-zero rows/columns are ignored.
inline ChiSquaredResult pearson_chi_squared(const ContingencyTable& raw) {
    const auto t = detail::compact(raw);
    require(t.size() >= 2 && t.front().size() >= 2, ErrorCode::IndependenceUntestable,
            "contingency table collapsed to a single row or column");
    const auto m = detail::marginals(t);
    ChiSquaredResult r;
    r.rows = t.size();
    r.cols = t.front().size();
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = 0; j < t[i].size(); ++j) {
            const double e = m.row[i] * m.col[j] / m.total;
            const double d = t[i][j] - e;
            r.statistic += d * d / e;
        }
    r.degrees_of_freedom = static_cast<int>((r.rows - 1) * (r.cols - 1));
    r.critical_value_95 = chi_squared_critical_95(r.degrees_of_freedom);
    r.reject_independence = r.statistic > r.critical_value_95;
    const auto es = expected_stats(t);
    r.pct_expected_ge_5 = es.pct_ge_5;
    r.min_expected = es.min_expected;
    return r;
}

inline ContingencyTable to_table(const JointHistogram& j) {
    std::map<int, std::size_t> ri, ci;
    for (const auto& [cell, _] : j.bins) {
        ri.emplace(cell.first, 0);
        ci.emplace(cell.second, 0);
    }
    std::size_t k = 0;
    for (auto& [_, idx] : ri) idx = k++;
    k = 0;
    for (auto& [_, idx] : ci) idx = k++;
    ContingencyTable t(ri.size(), std::vector<double>(ci.size(), 0.0));
    for (const auto& [cell, v] : j.bins) t[ri[cell.first]][ci[cell.second]] = static_cast<double>(v);
    return t;
}

// Starts from 5 s x 50 B cells and widens both axes by the same step until at
// least 80% of expected counts reach 5 and none falls below 1.
inline ChiSquaredResult chi_squared_independence(const Trace& trace, double time_step = 5.0,
                                                 std::uint32_t size_step = 50) {
    require(trace.size() >= 2, ErrorCode::EmptyFeature, "chi-squared test needs at least 2 packets");
    for (int it = 1;; ++it) {
        const double tw = time_step * it;
        const std::uint32_t sw = size_step * static_cast<std::uint32_t>(it);
        const auto table = detail::compact(to_table(joint_histogram(trace, tw, sw)));
        require(table.size() >= 2 && table.front().size() >= 2, ErrorCode::IndependenceUntestable,
                "table degenerated before the expected-count conditions were met");
        const auto es = expected_stats(table);
        if (es.pct_ge_5 >= 80.0 && es.min_expected >= 1.0) {
            auto r = pearson_chi_squared(table);
            r.final_time_bin_width = tw;
            r.final_size_bin_width = sw;
            return r;
        }
    }
}

} // namespace iotfp
