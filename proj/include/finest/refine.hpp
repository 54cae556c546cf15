#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "finest/assets.hpp"
#include "finest/corpus.hpp"
#include "finest/gateway.hpp"
#include "finest/judge.hpp"
#include "finest/metrics.hpp"
#include "finest/taxonomy.hpp"

namespace finest {

enum class StrategyId { self, taxo_only, finest_error, finest_score };
inline constexpr std::array<StrategyId, 4> kStrategies = {StrategyId::self, StrategyId::taxo_only,
                                                          StrategyId::finest_error, StrategyId::finest_score};

/// "self", "taxo_only", "finest_error", "finest_score".
std::string_view to_string(StrategyId s) noexcept;
/// Accepts the ids above plus the short forms "taxo", "error", "score".
StrategyId parse_strategy(std::string_view text);
/// Row label in comparison tables: "Improved_Self", "Improved_FINEST-Score", ...
std::string method_label(StrategyId s);

struct Strategy {
    StrategyId id = StrategyId::self;
    bool include_taxonomy = false;
    std::vector<Scheme> feedback_schemes;  // empty: no feedback

    bool needs(Scheme s) const noexcept;
};

/// Which prompt parts each strategy gets. The default follows the main
/// method description: both feedback strategies also include the taxonomy.
/// `appendix_table` selects the alternative matrix in which the error
/// strategy omits the taxonomy and receives both feedback kinds.
struct StrategyMatrix {
    bool appendix_table = false;
    Strategy get(StrategyId id) const;
};

struct ImprovedResponse {
    std::string id;
    std::string source_response_id;
    std::string question_id;
    StrategyId strategy = StrategyId::self;
    std::string text;
    Provenance provenance = Provenance::live;
    int round = 1;
    std::vector<Evaluation> evaluation_after;  // error-based then score-based

    json to_json() const;
    static ImprovedResponse from_json(const json& j);
};

struct RefineConfig {
    std::string model_id;
    StrategyMatrix matrix;
    DecodingTable decoding;
    /// Improvement rounds; later rounds feed the previous round's
    /// re-evaluation back in.
    int rounds = 1;
};

/// Error records grouped by category as "Sentence(s) {span}: {type} - {why}".
std::string render_error_feedback(const Evaluation& eval, const Taxonomy& taxonomy = taxonomy_registry());
/// One block per category with its score and justification.
std::string render_score_feedback(const Evaluation& eval);

class Refiner {
public:
    Refiner(Gateway& gateway, AssetStore assets, RefineConfig config, const Taxonomy& taxonomy = taxonomy_registry());

    Strategy strategy(StrategyId id) const { return config_.matrix.get(id); }

    /// Throws Error with feedback_not_allowed, feedback_scheme_mismatch or
    /// missing_feedback when `feedback` does not fit the strategy.
    ChatRequest build_improvement_prompt(const Question& question, const Response& response, StrategyId strategy,
                                         const std::vector<const Evaluation*>& feedback) const;

    /// One gateway call; the completion is kept verbatim.
    ImprovedResponse improve(const Question& question, const Response& response, StrategyId strategy,
                             const std::vector<const Evaluation*>& feedback) const;

    const RefineConfig& config() const noexcept { return config_; }
    /// Concurrency bound shared with the gateway.
    int workers() const noexcept { return gateway_.config().max_in_flight; }

private:
    Gateway& gateway_;
    AssetStore assets_;
    RefineConfig config_;
    const Taxonomy& taxonomy_;
};

/// A test-set response with its pre-improvement evaluations.
struct ComparisonItem {
    Question question;
    Response response;
    Evaluation error_eval;
    Evaluation score_eval;
};

struct ComparisonFailure {
    std::string response_id;
    StrategyId strategy = StrategyId::self;
    std::string reason;
};

struct ComparisonResult {
    MethodComparison comparison;
    std::vector<ImprovedResponse> improved;  // strategy-major, item order
    std::vector<ComparisonFailure> failures;
};

/// Improves every item with every strategy, re-evaluates the improved texts
/// under both schemes with `judge`, and tabulates against the Original row.
/// Inputs are never modified.
ComparisonResult run_comparison(const std::vector<ComparisonItem>& items, const std::vector<StrategyId>& strategies,
                                const Refiner& refiner, const Judge& judge, AggregateOptions options = {});

}  // namespace finest
