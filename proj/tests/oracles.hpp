#pragma once

// Independent reference computations used to cross-check the library.
// Written from the definitions, sharing no code with src/.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "finest/judge.hpp"
#include "finest/rng.hpp"

namespace oracle {

/// Flag vector over sentences, one pass per record.
inline double error_sentence_ratio(const std::vector<finest::ErrorRecord>& records, int n) {
    std::vector<bool> flagged(static_cast<std::size_t>(n), false);
    for (const auto& r : records) {
        for (int i = 1; i <= n; ++i) {
            bool hit = r.span.all;
            for (int idx : r.span.indices) hit = hit || idx == i;
            if (hit) flagged[static_cast<std::size_t>(i - 1)] = true;
        }
    }
    return static_cast<double>(std::count(flagged.begin(), flagged.end(), true)) / n;
}

/// Random error records over n sentences: empty lists, overlaps, duplicate
/// indices and occasional All spans.
inline std::vector<finest::ErrorRecord> random_records(finest::Rng& rng, int n) {
    std::vector<finest::ErrorRecord> recs;
    const int count = static_cast<int>(rng.below(6));
    for (int k = 0; k < count; ++k) {
        finest::ErrorRecord r;
        r.error_type = "repetition";
        if (rng.below(10) == 0) {
            r.span = finest::Span::everything();
        } else {
            std::vector<int> idx;
            const int m = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
            for (int j = 0; j < m; ++j) idx.push_back(1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
            r.span = finest::Span::of(idx);
        }
        recs.push_back(r);
    }
    return recs;
}

/// Nominal alpha by enumerating every ordered pair of values within each
/// unit: alpha = 1 - (n - 1) * sum_u D_u / sum_{c != k} n_c n_k, where D_u
/// counts disagreeing ordered pairs in unit u weighted by 1 / (m_u - 1).
inline double krippendorff_alpha(const std::vector<std::vector<std::optional<std::string>>>& ratings) {
    std::size_t items = 0;
    for (const auto& row : ratings) items = std::max(items, row.size());
    double observed = 0.0;
    std::map<std::string, double> totals;
    double n = 0.0;
    for (std::size_t u = 0; u < items; ++u) {
        std::vector<std::string> vals;
        for (const auto& row : ratings) {
            if (u < row.size() && row[u]) vals.push_back(*row[u]);
        }
        if (vals.size() < 2) continue;
        const double m = static_cast<double>(vals.size());
        double disagree = 0.0;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            for (std::size_t j = 0; j < vals.size(); ++j) {
                if (i != j && vals[i] != vals[j]) disagree += 1.0;
            }
        }
        observed += disagree / (m - 1.0);
        for (const auto& v : vals) totals[v] += 1.0;
        n += m;
    }
    double expected = 0.0;
    for (const auto& [a, na] : totals) {
        for (const auto& [b, nb] : totals) {
            if (a != b) expected += na * nb;
        }
    }
    return 1.0 - (n - 1.0) * observed / expected;
}

inline double pct(double original, double improved) { return (improved - original) / original * 100.0; }

}  // namespace oracle
