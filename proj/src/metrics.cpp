#include "finest/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace finest {

int flagged_sentence_count(const std::vector<ErrorRecord>& records, int n_sentences) {
    if (n_sentences < 1) throw Error(Errc::invalid_argument, "n_sentences must be at least 1");
    std::set<int> flagged;
    for (const auto& r : records) {
        if (r.span.all) return n_sentences;
        for (int i : r.span.indices) {
            if (i >= 1 && i <= n_sentences) flagged.insert(i);
        }
    }
    return static_cast<int>(flagged.size());
}

double error_sentence_ratio(const std::vector<ErrorRecord>& records, int n_sentences) {
    return static_cast<double>(flagged_sentence_count(records, n_sentences)) / n_sentences;
}

std::optional<double> overall_ratio(const Evaluation& eval) {
    if (eval.scheme != Scheme::error_based) throw Error(Errc::invalid_argument, "overall_ratio needs an error-based evaluation");
    double sum = 0;
    int n = 0;
    for (const auto& c : eval.categories) {
        if (!c.ok()) continue;
        sum += error_sentence_ratio(c.records, eval.n_sentences);
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

std::optional<double> overall_score(const Evaluation& eval) {
    if (eval.scheme != Scheme::score_based) throw Error(Errc::invalid_argument, "overall_score needs a score-based evaluation");
    double sum = 0;
    int n = 0;
    for (const auto& c : eval.categories) {
        if (!c.ok() || !c.score) continue;
        sum += c.score->score;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

json AggregateMetrics::to_json() const {
    json j = json::object();
    for (Category c : kCategories) {
        const auto& m = at(c);
        j[std::string(to_string(c))] = {
            {"error_sentence_ratio", m.error_sentence_ratio ? json(*m.error_sentence_ratio) : json(nullptr)},
            {"score", m.score ? json(*m.score) : json(nullptr)},
            {"ratio_count", m.ratio_count},
            {"score_count", m.score_count},
            {"ratio_failed", m.ratio_failed},
            {"score_failed", m.score_failed}};
    }
    return j;
}

AggregateMetrics aggregate(const std::vector<Evaluation>& evals, AggregateOptions options) {
    if (evals.empty()) throw Error(Errc::empty_input, "aggregate needs at least one evaluation");
    AggregateMetrics out;
    for (std::size_t ci = 0; ci < kCategories.size(); ++ci) {
        CategoryMetrics& m = out.categories[ci];
        double ratio_sum = 0;
        long long flagged = 0;
        long long sentences = 0;
        double score_sum = 0;
        for (const auto& e : evals) {
            const CategoryResult& c = e.categories[ci];
            if (e.scheme == Scheme::error_based) {
                if (!c.ok()) {
                    ++m.ratio_failed;
                    continue;
                }
                const int f = flagged_sentence_count(c.records, e.n_sentences);
                ratio_sum += static_cast<double>(f) / e.n_sentences;
                flagged += f;
                sentences += e.n_sentences;
                ++m.ratio_count;
            } else {
                if (!c.ok() || !c.score) {
                    ++m.score_failed;
                    continue;
                }
                score_sum += c.score->score;
                ++m.score_count;
            }
        }
        if (m.ratio_count > 0) {
            m.error_sentence_ratio = options.pooled ? static_cast<double>(flagged) / static_cast<double>(sentences)
                                                    : ratio_sum / static_cast<double>(m.ratio_count);
        }
        if (m.score_count > 0) m.score = score_sum / static_cast<double>(m.score_count);
    }
    return out;
}

std::map<std::string, double> error_type_ratio(const std::vector<Evaluation>& evals, const Taxonomy& taxonomy) {
    std::map<std::string, std::size_t> hits;
    std::array<std::size_t, 3> denominators{};
    bool any = false;
    for (const auto& e : evals) {
        if (e.scheme != Scheme::error_based) continue;
        any = true;
        for (std::size_t ci = 0; ci < kCategories.size(); ++ci) {
            const CategoryResult& c = e.categories[ci];
            if (!c.ok()) continue;
            ++denominators[ci];
            std::set<std::string> present;
            for (const auto& r : c.records) present.insert(r.error_type);
            for (const auto& id : present) ++hits[id];
        }
    }
    if (!any) throw Error(Errc::empty_input, "error_type_ratio needs error-based evaluations");
    std::map<std::string, double> out;
    for (const auto& t : taxonomy.error_types) {
        const std::size_t denom = denominators[static_cast<std::size_t>(t.category)];
        const std::size_t h = hits.count(t.id) ? hits.at(t.id) : 0;
        out[t.id] = denom == 0 ? 0.0 : 100.0 * static_cast<double>(h) / static_cast<double>(denom);
    }
    return out;
}

double relative_change(double original, double improved) {
    if (original == 0.0) throw Error(Errc::zero_baseline, "relative change from a zero baseline is undefined");
    return (improved - original) / original * 100.0;
}

std::string metric_name(std::size_t metric) {
    const Category c = kCategories.at(metric % 3);
    return fmt::format("{}_{}", to_string(c), metric < 3 ? "ratio" : "score");
}

bool metric_minimized(std::size_t metric) noexcept { return metric < 3; }

MetricValues metric_values(const AggregateMetrics& m) {
    MetricValues v;
    for (std::size_t ci = 0; ci < 3; ++ci) {
        v[ci] = m.categories[ci].error_sentence_ratio;
        v[ci + 3] = m.categories[ci].score;
    }
    return v;
}

std::map<std::string, int> win_counts(const std::vector<MethodRow>& rows) {
    std::map<std::string, int> wins;
    for (const auto& r : rows) wins[r.method] = 0;
    for (std::size_t k = 0; k < kMetricCount; ++k) {
        std::optional<double> best;
        for (const auto& r : rows) {
            if (!r.values[k]) continue;
            const double v = *r.values[k];
            if (!best || (metric_minimized(k) ? v < *best : v > *best)) best = v;
        }
        if (!best) continue;
        for (const auto& r : rows) {
            if (r.values[k] && std::fabs(*r.values[k] - *best) <= kTieEpsilon) ++wins[r.method];
        }
    }
    return wins;
}

MethodComparison MethodComparison::build(std::vector<MethodRow> rows, const std::string& baseline) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const MethodRow& r) { return r.method == baseline; });
    if (it == rows.end()) throw Error(Errc::invalid_argument, "baseline '" + baseline + "' is not a row");
    std::rotate(rows.begin(), it, it + 1);

    MethodComparison cmp;
    cmp.baseline = baseline;
    cmp.rows = std::move(rows);
    const MethodRow& base = cmp.rows.front();
    std::vector<MethodRow> contenders(cmp.rows.begin() + 1, cmp.rows.end());
    for (const auto& r : contenders) {
        MetricValues change;
        for (std::size_t k = 0; k < kMetricCount; ++k) {
            if (base.values[k] && r.values[k] && *base.values[k] != 0.0) {
                change[k] = relative_change(*base.values[k], *r.values[k]);
            }
        }
        cmp.relative_changes[r.method] = change;
    }
    cmp.wins = win_counts(contenders);
    return cmp;
}

const MethodRow& MethodComparison::row(const std::string& method) const {
    for (const auto& r : rows) {
        if (r.method == method) return r;
    }
    throw Error(Errc::invalid_argument, "no row for method '" + method + "'");
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::vector<json> MethodComparison::to_jsonl() const {
    std::vector<json> out;
    for (const auto& r : rows) {
        json row = {{"method", r.method}, {"baseline", r.method == baseline}};
        json values = json::object();
        json changes = json::object();
        for (std::size_t k = 0; k < kMetricCount; ++k) {
            values[metric_name(k)] = optional_number(r.values[k]);
            if (r.method != baseline) changes[metric_name(k)] = optional_number(relative_changes.at(r.method)[k]);
        }
        row["metrics"] = values;
        if (r.method != baseline) {
            row["relative_change_percent"] = changes;
            row["wins"] = wins.at(r.method);
        }
        if (auto c = coverage.find(r.method); c != coverage.end()) row["coverage"] = c->second.to_json();
        out.push_back(std::move(row));
    }
    return out;
}

std::string MethodComparison::to_text() const {
    std::size_t name_width = 8;
    for (const auto& r : rows) name_width = std::max(name_width, r.method.size() + 2);
    constexpr int kCol = 24;

    std::ostringstream out;
    out << fmt::format("{:<{}}", "method", name_width);
    for (std::size_t k = 0; k < kMetricCount; ++k) out << fmt::format("{:>{}}", metric_name(k), kCol);
    out << fmt::format("{:>6}\n", "wins");
    for (const auto& r : rows) {
        out << fmt::format("{:<{}}", r.method, name_width);
        for (std::size_t k = 0; k < kMetricCount; ++k) {
            std::string cell = r.values[k] ? fmt::format("{:.2f}", *r.values[k]) : "n/a";
            if (r.method != baseline) {
                const auto& ch = relative_changes.at(r.method)[k];
                cell += ch ? fmt::format(" ({:+.2f}%)", *ch) : " (n/a)";
            }
            out << fmt::format("{:>{}}", cell, kCol);
        }
        out << fmt::format("{:>6}\n", r.method == baseline ? std::string("-") : std::to_string(wins.at(r.method)));
    }
    return out.str();
}

}  // namespace finest
