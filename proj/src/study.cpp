#include "finest/study.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "finest/rng.hpp"
#include "finest/text.hpp"

namespace finest {

std::string_view to_string(Bucket b) noexcept {
    switch (b) {
        case Bucket::good: return "good";
        case Bucket::ngnb: return "ngnb";
        case Bucket::bad: return "bad";
    }
    return "ngnb";
}

Bucket parse_bucket(std::string_view text) {
    const std::string t = to_lower_ascii(trim(text));
    for (Bucket b : kBuckets) {
        if (t == to_string(b)) return b;
    }
    throw Error(Errc::invalid_argument, "unknown bucket '" + std::string(text) + "'");
}

BucketMode parse_bucket_mode(std::string_view text) {
    const std::string t = to_lower_ascii(trim(text));
    if (t == "and" || t == "both") return BucketMode::both;
    if (t == "or" || t == "either") return BucketMode::either;
    throw Error(Errc::invalid_argument, "bucket mode must be 'and' or 'or', got '" + std::string(text) + "'");
}

BucketThresholds BucketThresholds::defaults() {
    return {(0.73 + 0.55 + 0.38) / 3.0, (5.28 + 4.87 + 4.97) / 3.0};
}

BucketThresholds BucketThresholds::from_population(const std::vector<std::pair<double, double>>& ratio_score) {
    if (ratio_score.empty()) throw Error(Errc::empty_input, "cannot derive thresholds from an empty population");
    double r = 0;
    double s = 0;
    for (const auto& [ratio, score] : ratio_score) {
        r += ratio;
        s += score;
    }
    const auto n = static_cast<double>(ratio_score.size());
    return {r / n, s / n};
}

Bucket bucket(double overall_ratio, double overall_score, const BucketThresholds& t, BucketMode mode) {
    const bool high_ratio = overall_ratio > t.avg_ratio;
    const bool low_ratio = overall_ratio < t.avg_ratio;
    const bool high_score = overall_score > t.avg_score;
    const bool low_score = overall_score < t.avg_score;
    if (mode == BucketMode::both) {
        if (high_ratio && low_score) return Bucket::bad;
        if (low_ratio && high_score) return Bucket::good;
        return Bucket::ngnb;
    }
    if (high_ratio || low_score) return Bucket::bad;
    if (low_ratio || high_score) return Bucket::good;
    return Bucket::ngnb;
}

json BucketedResponse::to_json() const {
    return {{"response_id", response_id},     {"question_id", question_id},
            {"model_id", model_id},           {"stance", to_string(stance)},
            {"overall_ratio", overall_ratio}, {"overall_score", overall_score},
            {"bucket", to_string(bucket)}};
}

BucketedResponse BucketedResponse::from_json(const json& j) {
    try {
        BucketedResponse b;
        b.response_id = j.at("response_id").get<std::string>();
        b.question_id = j.value("question_id", "");
        b.model_id = j.value("model_id", "");
        b.stance = parse_stance(j.at("stance").get<std::string>());
        b.overall_ratio = j.at("overall_ratio").get<double>();
        b.overall_score = j.at("overall_score").get<double>();
        b.bucket = parse_bucket(j.at("bucket").get<std::string>());
        return b;
    } catch (const json::exception& ex) {
        throw Error(Errc::invalid_field, std::string("malformed bucket record: ") + ex.what());
    }
}

std::vector<std::size_t> apportion(std::size_t n, const std::vector<int>& weights) {
    const long long total = std::accumulate(weights.begin(), weights.end(), 0LL);
    if (weights.empty() || total <= 0 || std::any_of(weights.begin(), weights.end(), [](int w) { return w < 0; })) {
        throw Error(Errc::invalid_argument, "apportion needs non-negative weights with a positive sum");
    }
    std::vector<std::size_t> out(weights.size());
    std::vector<std::pair<long long, std::size_t>> remainders;  // (remainder numerator, index)
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const long long num = static_cast<long long>(n) * weights[i];
        out[i] = static_cast<std::size_t>(num / total);
        assigned += out[i];
        remainders.emplace_back(num % total, i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++out[remainders[k % remainders.size()].second];
    return out;
}

namespace {

/// Seeded draw of `k` items from `cell`, independent of the cell's input
/// order.
std::vector<BucketedResponse> draw(std::vector<BucketedResponse> cell, std::size_t k, std::uint64_t seed,
                                   const std::string& label) {
    std::sort(cell.begin(), cell.end(),
              [](const BucketedResponse& x, const BucketedResponse& y) { return x.response_id < y.response_id; });
    Rng rng(mix_seed(seed, label));
    rng.shuffle(cell);
    cell.resize(k);
    return cell;
}

}  // namespace

std::vector<BucketedResponse> stratified_sample(const std::vector<BucketedResponse>& population,
                                                std::size_t n_per_bucket, const StanceRatio& ratio,
                                                std::uint64_t seed) {
    const auto quotas = apportion(n_per_bucket, std::vector<int>(ratio.begin(), ratio.end()));
    std::vector<BucketedResponse> out;
    out.reserve(n_per_bucket * kBuckets.size());
    for (Bucket b : kBuckets) {
        for (std::size_t si = 0; si < kStances.size(); ++si) {
            const Stance s = kStances[si];
            std::vector<BucketedResponse> cell;
            for (const auto& r : population) {
                if (r.bucket == b && r.stance == s) cell.push_back(r);
            }
            if (cell.size() < quotas[si]) {
                throw Error(Errc::insufficient_population,
                            fmt::format("bucket {} stance {} needs {}, has {}", to_string(b), to_string(s), quotas[si],
                                        cell.size()));
            }
            auto picked = draw(std::move(cell), quotas[si], seed,
                               fmt::format("stratified/{}/{}", to_string(b), to_string(s)));
            out.insert(out.end(), picked.begin(), picked.end());
        }
    }
    return out;
}

std::vector<BucketedResponse> sample_per_bucket(const std::vector<BucketedResponse>& population,
                                                std::size_t per_bucket, std::uint64_t seed) {
    std::vector<BucketedResponse> out;
    for (Bucket b : kBuckets) {
        std::vector<BucketedResponse> cell;
        for (const auto& r : population) {
            if (r.bucket == b) cell.push_back(r);
        }
        if (cell.size() < per_bucket) {
            throw Error(Errc::insufficient_population,
                        fmt::format("bucket {} needs {}, has {}", to_string(b), per_bucket, cell.size()));
        }
        auto picked = draw(std::move(cell), per_bucket, seed, fmt::format("validation/{}", to_string(b)));
        out.insert(out.end(), picked.begin(), picked.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tasks

std::string_view to_string(Aspect a) noexcept {
    switch (a) {
        case Aspect::content: return "content";
        case Aspect::logic: return "logic";
        case Aspect::appropriateness: return "appropriateness";
        case Aspect::overall: return "overall";
    }
    return "overall";
}

std::string_view to_string(Side s) noexcept { return s == Side::a ? "side_a" : "side_b"; }

Side parse_side(std::string_view text) {
    const std::string t = to_lower_ascii(trim(text));
    if (t == "a" || t == "side_a") return Side::a;
    if (t == "b" || t == "side_b") return Side::b;
    throw Error(Errc::invalid_field, "side must be 'a' or 'b', got '" + std::string(text) + "'");
}

json AnnotationTask::to_json() const {
    json aspects = json::array();
    for (Aspect a : kAspects) aspects.push_back(std::string(to_string(a)));
    return {{"task_id", task_id}, {"question", question}, {"side_a", side_a}, {"side_b", side_b}, {"aspects", aspects}};
}

AnnotationTask AnnotationTask::from_json(const json& j) {
    try {
        return {j.at("task_id").get<std::string>(), j.at("question").get<std::string>(),
                j.at("side_a").get<std::string>(), j.at("side_b").get<std::string>()};
    } catch (const json::exception& ex) {
        throw Error(Errc::invalid_field, std::string("malformed task: ") + ex.what());
    }
}

json LedgerEntry::to_json() const {
    json j = {{"task_id", task_id},
              {"hidden_key", hidden_key},
              {"improved_side", to_string(improved_side)},
              {"source_response_id", source_response_id},
              {"improved_response_id", improved_response_id}};
    j["bucket"] = bucket ? json(std::string(to_string(*bucket))) : json(nullptr);
    return j;
}

LedgerEntry LedgerEntry::from_json(const json& j) {
    try {
        LedgerEntry e;
        e.task_id = j.at("task_id").get<std::string>();
        e.hidden_key = j.at("hidden_key").get<std::string>();
        e.improved_side = parse_side(j.at("improved_side").get<std::string>());
        e.source_response_id = j.value("source_response_id", "");
        e.improved_response_id = j.value("improved_response_id", "");
        if (j.contains("bucket") && j["bucket"].is_string()) e.bucket = parse_bucket(j["bucket"].get<std::string>());
        return e;
    } catch (const json::exception& ex) {
        throw Error(Errc::invalid_field, std::string("malformed ledger entry: ") + ex.what());
    }
}

TaskSet make_pairwise_tasks(const std::vector<PairInput>& pairs, std::uint64_t seed) {
    if (pairs.empty()) throw Error(Errc::empty_input, "no pairs to turn into tasks");
    TaskSet set;
    Rng sides(mix_seed(seed, "pairwise/sides"));
    Rng keys(mix_seed(seed, "pairwise/keys"));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const PairInput& p = pairs[i];
        const Side improved = sides.coin() ? Side::a : Side::b;
        AnnotationTask task;
        task.task_id = fmt::format("task-{:04d}", i + 1);
        task.question = p.question;
        task.side_a = improved == Side::a ? p.improved_text : p.original_text;
        task.side_b = improved == Side::a ? p.original_text : p.improved_text;

        LedgerEntry entry;
        entry.task_id = task.task_id;
        entry.hidden_key = fmt::format("{:016x}{:016x}", keys.next(), keys.next());
        entry.improved_side = improved;
        entry.source_response_id = p.source_response_id;
        entry.improved_response_id = p.improved_response_id;
        entry.bucket = p.bucket;

        set.tasks.push_back(std::move(task));
        set.ledger.push_back(std::move(entry));
    }
    return set;
}

// ---------------------------------------------------------------------------
// Votes

json Vote::to_json() const {
    json choices_json = json::object();
    for (Aspect a : kAspects) choices_json[std::string(to_string(a))] = std::string(to_string(at(a)));
    return {{"annotator_id", annotator_id}, {"task_id", task_id}, {"choices", choices_json}};
}

Vote Vote::from_json(const json& j) {
    if (!j.is_object()) throw Error(Errc::invalid_field, "vote must be a JSON object");
    Vote v;
    for (const char* key : {"annotator_id", "task_id"}) {
        if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
            throw Error(Errc::missing_field, std::string("vote lacks \"") + key + "\"");
        }
    }
    v.annotator_id = j["annotator_id"].get<std::string>();
    v.task_id = j["task_id"].get<std::string>();
    if (!j.contains("choices") || !j["choices"].is_object()) throw Error(Errc::missing_field, "vote lacks \"choices\"");
    for (Aspect a : kAspects) {
        const std::string key(to_string(a));
        if (!j["choices"].contains(key)) throw Error(Errc::missing_field, "vote lacks a choice for " + key);
        const json& c = j["choices"][key];
        if (!c.is_string()) throw Error(Errc::invalid_field, "choice for " + key + " must be a string");
        v.choices[static_cast<std::size_t>(a)] = parse_side(c.get<std::string>());
    }
    return v;
}

std::string_view to_string(Verdict v) noexcept {
    switch (v) {
        case Verdict::original: return "original";
        case Verdict::improved: return "improved";
        case Verdict::tie: return "tie";
    }
    return "tie";
}

Verdict unblind(Side choice, const LedgerEntry& entry) {
    return choice == entry.improved_side ? Verdict::improved : Verdict::original;
}

Verdict majority_vote(const std::vector<Verdict>& verdicts) {
    if (verdicts.empty()) throw Error(Errc::empty_input, "majority vote needs at least one vote");
    const auto improved = std::count(verdicts.begin(), verdicts.end(), Verdict::improved);
    const auto original = std::count(verdicts.begin(), verdicts.end(), Verdict::original);
    if (improved > original) return Verdict::improved;
    if (original > improved) return Verdict::original;
    return Verdict::tie;
}

Verdict majority_vote(const std::vector<Vote>& votes, Aspect aspect, const LedgerEntry& entry) {
    std::vector<Verdict> verdicts;
    for (const auto& v : votes) {
        if (v.task_id == entry.task_id) verdicts.push_back(unblind(v.at(aspect), entry));
    }
    return majority_vote(verdicts);
}

double win_rate_percent(std::size_t improved, std::size_t total) {
    if (total == 0) throw Error(Errc::empty_input, "win rate over zero tasks");
    return 100.0 * static_cast<double>(improved) / static_cast<double>(total);
}

std::array<double, 4> win_rates(const std::vector<std::array<Verdict, 4>>& verdicts) {
    if (verdicts.empty()) throw Error(Errc::empty_input, "win rates need at least one resolved task");
    std::array<double, 4> out{};
    for (std::size_t a = 0; a < kAspects.size(); ++a) {
        std::size_t improved = 0;
        for (const auto& v : verdicts) improved += v[a] == Verdict::improved ? 1 : 0;
        out[a] = win_rate_percent(improved, verdicts.size());
    }
    return out;
}

double krippendorff_alpha(const std::vector<std::vector<std::optional<std::string>>>& ratings) {
    std::size_t items = 0;
    for (const auto& row : ratings) items = std::max(items, row.size());

    std::map<std::string, std::size_t> label_index;
    std::vector<std::vector<std::size_t>> units;  // label indices per pairable item
    for (std::size_t i = 0; i < items; ++i) {
        std::vector<std::size_t> values;
        for (const auto& row : ratings) {
            if (i < row.size() && row[i]) {
                auto [it, inserted] = label_index.emplace(*row[i], label_index.size());
                values.push_back(it->second);
            }
        }
        if (values.size() >= 2) units.push_back(std::move(values));
    }

    const std::size_t k = label_index.size();
    std::vector<std::vector<double>> coincidence(k, std::vector<double>(k, 0.0));
    for (const auto& values : units) {
        const double weight = 1.0 / static_cast<double>(values.size() - 1);
        for (std::size_t x = 0; x < values.size(); ++x) {
            for (std::size_t y = 0; y < values.size(); ++y) {
                if (x != y) coincidence[values[x]][values[y]] += weight;
            }
        }
    }
    std::vector<double> marginals(k, 0.0);
    double n = 0;
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t d = 0; d < k; ++d) marginals[c] += coincidence[c][d];
        n += marginals[c];
    }
    if (n < 2) throw Error(Errc::invalid_argument, "alpha needs at least two pairable ratings");

    double observed = 0;
    double expected = 0;
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t d = 0; d < k; ++d) {
            if (c == d) continue;
            observed += coincidence[c][d];
            expected += marginals[c] * marginals[d];
        }
    }
    if (expected == 0.0) throw Error(Errc::degenerate_data, "all ratings carry one label; alpha is undefined");
    return 1.0 - (n - 1.0) * observed / expected;
}

double triage_acceptability(const TriageCounts& counts) {
    const std::size_t total = counts.appropriate + counts.excessive + counts.insufficient;
    if (total == 0) throw Error(Errc::empty_input, "triage needs at least one labelled feedback");
    return 100.0 * static_cast<double>(counts.appropriate + counts.excessive) / static_cast<double>(total);
}

double triage_average(const std::vector<TriageCounts>& per_scheme) {
    if (per_scheme.empty()) throw Error(Errc::empty_input, "triage average over no schemes");
    double sum = 0;
    for (const auto& c : per_scheme) sum += triage_acceptability(c);
    return sum / static_cast<double>(per_scheme.size());
}

// ---------------------------------------------------------------------------
// VoteStore

VoteStore::VoteStore(std::filesystem::path file) : file_(std::move(file)) {
    if (!std::filesystem::exists(file_)) return;
    for (const auto& row : read_jsonl(file_)) {
        Vote v = Vote::from_json(row);
        auto key = std::make_pair(v.annotator_id, v.task_id);
        if (votes_.emplace(key, v).second) order_.push_back(key);
    }
}

VoteOutcome VoteStore::submit(const Vote& vote) {
    std::lock_guard lock(mutex_);
    auto key = std::make_pair(vote.annotator_id, vote.task_id);
    auto it = votes_.find(key);
    if (it != votes_.end()) {
        if (it->second == vote) return VoteOutcome::unchanged;
        throw Error(Errc::vote_conflict,
                    fmt::format("{} already voted differently on {}", vote.annotator_id, vote.task_id));
    }
    if (!file_.empty()) {
        if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
        std::ofstream out(file_, std::ios::binary | std::ios::app);
        if (!out) throw Error(Errc::io_error, "cannot append to " + file_.string());
        out << vote.to_json().dump() << '\n';
    }
    votes_.emplace(key, vote);
    order_.push_back(key);
    return VoteOutcome::recorded;
}

std::vector<Vote> VoteStore::votes() const {
    std::lock_guard lock(mutex_);
    std::vector<Vote> out;
    for (const auto& key : order_) out.push_back(votes_.at(key));
    return out;
}

std::vector<Vote> VoteStore::votes_for(const std::string& task_id) const {
    std::lock_guard lock(mutex_);
    std::vector<Vote> out;
    for (const auto& key : order_) {
        if (key.second == task_id) out.push_back(votes_.at(key));
    }
    return out;
}

bool VoteStore::has_voted(const std::string& annotator_id, const std::string& task_id) const {
    std::lock_guard lock(mutex_);
    return votes_.count({annotator_id, task_id}) != 0;
}

std::size_t VoteStore::count_for(const std::string& task_id) const {
    std::lock_guard lock(mutex_);
    return static_cast<std::size_t>(
        std::count_if(order_.begin(), order_.end(), [&](const auto& key) { return key.second == task_id; }));
}

std::size_t VoteStore::size() const {
    std::lock_guard lock(mutex_);
    return votes_.size();
}

// ---------------------------------------------------------------------------
// Report

json StudyReport::to_json(bool include_verdicts) const {
    json rates = json::object();
    json alphas = json::object();
    for (Aspect a : kAspects) {
        const auto i = static_cast<std::size_t>(a);
        rates[std::string(to_string(a))] = win_rates[i];
        alphas[std::string(to_string(a))] = alpha[i] ? json(*alpha[i]) : json("undefined, unanimous");
    }
    alphas["pooled"] = alpha_pooled ? json(*alpha_pooled) : json("undefined, unanimous");
    json out = {{"tasks", tasks}, {"votes", votes}, {"win_rates", rates}, {"alpha", alphas}};
    if (!include_verdicts) return out;
    json v = json::object();
    for (const auto& [task, verdict] : verdicts) {
        json row = json::object();
        for (Aspect a : kAspects) row[std::string(to_string(a))] = std::string(to_string(verdict[static_cast<std::size_t>(a)]));
        v[task] = row;
    }
    out["verdicts"] = v;
    return out;
}

std::string StudyReport::to_text() const {
    std::ostringstream out;
    out << fmt::format("tasks {}  votes {}\n", tasks, votes);
    out << fmt::format("{:<18}{:>12}{:>24}\n", "aspect", "win rate", "alpha");
    auto alpha_text = [](const std::optional<double>& a) {
        return a ? fmt::format("{:.3f}", *a) : std::string("undefined, unanimous");
    };
    for (Aspect a : kAspects) {
        const auto i = static_cast<std::size_t>(a);
        out << fmt::format("{:<18}{:>11.1f}%{:>24}\n", to_string(a), win_rates[i], alpha_text(alpha[i]));
    }
    out << fmt::format("{:<18}{:>12}{:>24}\n", "pooled", "", alpha_text(alpha_pooled));
    return out.str();
}

StudyReport study_report(const std::vector<LedgerEntry>& ledger, const std::vector<Vote>& votes) {
    if (ledger.empty()) throw Error(Errc::empty_input, "no tasks in the ledger");
    StudyReport report;
    report.tasks = ledger.size();

    std::map<std::string, const LedgerEntry*> by_task;
    for (const auto& e : ledger) by_task[e.task_id] = &e;
    std::vector<std::string> annotators;
    for (const auto& v : votes) {
        if (!by_task.count(v.task_id)) continue;
        ++report.votes;
        if (std::find(annotators.begin(), annotators.end(), v.annotator_id) == annotators.end()) {
            annotators.push_back(v.annotator_id);
        }
    }

    std::vector<std::array<Verdict, 4>> resolved;
    for (const auto& e : ledger) {
        std::array<Verdict, 4> verdict{};
        bool any = false;
        for (Aspect a : kAspects) {
            std::vector<Verdict> vs;
            for (const auto& v : votes) {
                if (v.task_id == e.task_id) vs.push_back(unblind(v.at(a), e));
            }
            if (vs.empty()) break;
            any = true;
            verdict[static_cast<std::size_t>(a)] = majority_vote(vs);
        }
        if (!any) continue;
        report.verdicts[e.task_id] = verdict;
        resolved.push_back(verdict);
    }
    if (resolved.empty()) throw Error(Errc::empty_input, "no task has any vote yet");
    report.win_rates = win_rates(resolved);

    // annotator x item matrices of unblinded labels.
    auto matrix_for = [&](const std::vector<Aspect>& aspects) {
        std::vector<std::vector<std::optional<std::string>>> m(
            annotators.size(), std::vector<std::optional<std::string>>(ledger.size() * aspects.size()));
        for (const auto& v : votes) {
            auto it = by_task.find(v.task_id);
            if (it == by_task.end()) continue;
            const auto row = static_cast<std::size_t>(
                std::find(annotators.begin(), annotators.end(), v.annotator_id) - annotators.begin());
            const auto task_index = static_cast<std::size_t>(it->second - ledger.data());
            for (std::size_t k = 0; k < aspects.size(); ++k) {
                m[row][task_index * aspects.size() + k] = std::string(to_string(unblind(v.at(aspects[k]), *it->second)));
            }
        }
        return m;
    };
    auto safe_alpha = [](const std::vector<std::vector<std::optional<std::string>>>& m) -> std::optional<double> {
        try {
            return krippendorff_alpha(m);
        } catch (const Error&) {
            return std::nullopt;
        }
    };
    for (Aspect a : kAspects) report.alpha[static_cast<std::size_t>(a)] = safe_alpha(matrix_for({a}));
    report.alpha_pooled = safe_alpha(matrix_for({kAspects.begin(), kAspects.end()}));
    return report;
}

}  // namespace finest
