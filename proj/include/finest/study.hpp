#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "finest/corpus.hpp"
#include "finest/json_util.hpp"

namespace finest {

// ---------------------------------------------------------------------------
// Quality buckets

enum class Bucket { good, ngnb, bad };
inline constexpr std::array<Bucket, 3> kBuckets = {Bucket::good, Bucket::ngnb, Bucket::bad};
std::string_view to_string(Bucket b) noexcept;
Bucket parse_bucket(std::string_view text);

/// `both`: bad needs a high ratio and a low score, good the reverse.
/// `either`: one signal suffices, bad taking precedence over good.
enum class BucketMode { both, either };
BucketMode parse_bucket_mode(std::string_view text);  // "and" | "or"

struct BucketThresholds {
    double avg_ratio = 0.0;
    double avg_score = 0.0;

    /// Means of the published per-category averages (ratio 0.73/0.55/0.38,
    /// score 5.28/4.87/4.97).
    static BucketThresholds defaults();
    /// Population means. Throws Error(empty_input).
    static BucketThresholds from_population(const std::vector<std::pair<double, double>>& ratio_score);
};

Bucket bucket(double overall_ratio, double overall_score, const BucketThresholds& t,
              BucketMode mode = BucketMode::both);

struct BucketedResponse {
    std::string response_id;
    std::string question_id;
    std::string model_id;
    Stance stance = Stance::default_stance;
    double overall_ratio = 0.0;
    double overall_score = 0.0;
    Bucket bucket = Bucket::ngnb;

    json to_json() const;
    static BucketedResponse from_json(const json& j);
};

/// Stance weights, agree:disagree:default.
using StanceRatio = std::array<int, 3>;
inline constexpr StanceRatio kDefaultStanceRatio = {1, 1, 2};

/// Splits `n` proportionally to `weights`, handing leftover units to the
/// largest fractional remainders (earlier entries win ties).
std::vector<std::size_t> apportion(std::size_t n, const std::vector<int>& weights);

/// Draws `n_per_bucket` responses from each bucket with stance counts in
/// `ratio`. Output is grouped by bucket then stance; deterministic for a
/// seed regardless of input order. Throws Error(insufficient_population).
std::vector<BucketedResponse> stratified_sample(const std::vector<BucketedResponse>& population,
                                                std::size_t n_per_bucket, const StanceRatio& ratio,
                                                std::uint64_t seed);

/// Draws `per_bucket` responses from each bucket regardless of stance.
std::vector<BucketedResponse> sample_per_bucket(const std::vector<BucketedResponse>& population,
                                                std::size_t per_bucket, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Blinded pairwise tasks

enum class Aspect { content, logic, appropriateness, overall };
inline constexpr std::array<Aspect, 4> kAspects = {Aspect::content, Aspect::logic, Aspect::appropriateness,
                                                   Aspect::overall};
std::string_view to_string(Aspect a) noexcept;

enum class Side { a, b };
/// "side_a" / "side_b"; parse_side also accepts "a" / "b".
std::string_view to_string(Side s) noexcept;
Side parse_side(std::string_view text);

struct PairInput {
    std::string source_response_id;
    std::string improved_response_id;
    std::string question;
    std::string original_text;
    std::string improved_text;
    std::optional<Bucket> bucket;
};

/// What an annotator sees. Carries nothing that reveals which side is which.
struct AnnotationTask {
    std::string task_id;
    std::string question;
    std::string side_a;
    std::string side_b;

    json to_json() const;  // task_id, question, side_a, side_b, aspects
    static AnnotationTask from_json(const json& j);
};

/// Server-side record of a task's provenance.
struct LedgerEntry {
    std::string task_id;
    std::string hidden_key;  // opaque token, never sent to annotators
    Side improved_side = Side::a;
    std::string source_response_id;
    std::string improved_response_id;
    std::optional<Bucket> bucket;

    json to_json() const;
    static LedgerEntry from_json(const json& j);
};

struct TaskSet {
    std::vector<AnnotationTask> tasks;
    std::vector<LedgerEntry> ledger;
};

/// One task per pair, improved side chosen by a seeded coin flip.
TaskSet make_pairwise_tasks(const std::vector<PairInput>& pairs, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Votes and verdicts

struct Vote {
    std::string annotator_id;
    std::string task_id;
    std::array<Side, 4> choices{};  // indexed by Aspect

    Side at(Aspect a) const { return choices[static_cast<std::size_t>(a)]; }
    json to_json() const;
    /// Throws Error(missing_field / invalid_field) unless all four aspects
    /// carry a side.
    static Vote from_json(const json& j);

    friend bool operator==(const Vote&, const Vote&) = default;
};

enum class Verdict { original, improved, tie };
std::string_view to_string(Verdict v) noexcept;

/// Unblinds one vote's choice for `aspect`.
Verdict unblind(Side choice, const LedgerEntry& entry);

/// Side with strictly more votes; equal counts tie. Throws
/// Error(empty_input) without votes.
Verdict majority_vote(const std::vector<Verdict>& verdicts);
Verdict majority_vote(const std::vector<Vote>& votes, Aspect aspect, const LedgerEntry& entry);

/// Percent of tasks whose verdict is `improved`, per aspect; ties stay in
/// the denominator. Throws Error(empty_input).
std::array<double, 4> win_rates(const std::vector<std::array<Verdict, 4>>& verdicts);

/// improved / total * 100. Throws Error(empty_input) when total is 0.
double win_rate_percent(std::size_t improved, std::size_t total);

/// Nominal Krippendorff's alpha. `ratings[annotator][item]` holds a label or
/// nullopt for a missing cell; items with fewer than two labels are not
/// pairable and drop out. Throws Error(degenerate_data) when expected
/// disagreement is zero (a single label overall) and
/// Error(invalid_argument) with fewer than two pairable values.
double krippendorff_alpha(const std::vector<std::vector<std::optional<std::string>>>& ratings);

// ---------------------------------------------------------------------------
// Feedback triage

struct TriageCounts {
    std::size_t appropriate = 0;
    std::size_t excessive = 0;
    std::size_t insufficient = 0;
};

/// (appropriate + excessive) / total * 100. Throws Error(empty_input).
double triage_acceptability(const TriageCounts& counts);
/// Unweighted mean of the per-scheme acceptability percents.
double triage_average(const std::vector<TriageCounts>& per_scheme);

// ---------------------------------------------------------------------------
// Vote storage and reporting

enum class VoteOutcome { recorded, unchanged };

/// Thread-safe vote ledger keyed by (annotator, task). Resubmitting an
/// identical vote is a no-op; a different vote for the same key throws
/// Error(vote_conflict). Persists one vote per line when given a file.
class VoteStore {
public:
    VoteStore() = default;
    explicit VoteStore(std::filesystem::path file);

    VoteOutcome submit(const Vote& vote);
    std::vector<Vote> votes() const;
    std::vector<Vote> votes_for(const std::string& task_id) const;
    bool has_voted(const std::string& annotator_id, const std::string& task_id) const;
    std::size_t count_for(const std::string& task_id) const;
    std::size_t size() const;

private:
    std::filesystem::path file_;
    mutable std::mutex mutex_;
    std::map<std::pair<std::string, std::string>, Vote> votes_;
    std::vector<std::pair<std::string, std::string>> order_;
};

struct StudyReport {
    std::size_t tasks = 0;
    std::size_t votes = 0;
    std::array<double, 4> win_rates{};
    std::array<std::optional<double>, 4> alpha{};  // nullopt: undefined, unanimous
    std::optional<double> alpha_pooled;
    std::map<std::string, std::array<Verdict, 4>> verdicts;

    /// Per-task verdicts unblind the tasks, so they are opt-in.
    json to_json(bool include_verdicts = true) const;
    std::string to_text() const;
};

/// Majority verdicts, win rates and alpha (per aspect and pooled over all
/// aspects) from the votes on `ledger`'s tasks. Alpha uses the unblinded
/// labels original/improved.
StudyReport study_report(const std::vector<LedgerEntry>& ledger, const std::vector<Vote>& votes);

}  // namespace finest
