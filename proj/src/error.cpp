#include "finest/error.hpp"

namespace finest {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::invalid_argument: return "InvalidArgument";
        case Errc::io_error: return "IoError";
        case Errc::config_error: return "ConfigError";
        case Errc::unknown_label: return "UnknownLabel";
        case Errc::missing_template: return "MissingTemplate";
        case Errc::missing_variable: return "MissingVariable";
        case Errc::backend_unavailable: return "BackendUnavailable";
        case Errc::rate_limited: return "RateLimited";
        case Errc::empty_completion: return "EmptyCompletion";
        case Errc::transform_parse_failure: return "TransformParseFailure";
        case Errc::filter_parse_failure: return "FilterParseFailure";
        case Errc::duplicate_response: return "DuplicateResponse";
        case Errc::no_json_found: return "NoJsonFound";
        case Errc::index_out_of_range: return "IndexOutOfRange";
        case Errc::score_out_of_range: return "ScoreOutOfRange";
        case Errc::missing_field: return "MissingField";
        case Errc::invalid_field: return "InvalidField";
        case Errc::missing_core_question: return "MissingCoreQuestion";
        case Errc::category_evaluation_failed: return "CategoryEvaluationFailed";
        case Errc::empty_input: return "EmptyInput";
        case Errc::zero_baseline: return "ZeroBaseline";
        case Errc::feedback_scheme_mismatch: return "FeedbackSchemeMismatch";
        case Errc::missing_feedback: return "MissingFeedback";
        case Errc::feedback_not_allowed: return "FeedbackNotAllowed";
        case Errc::insufficient_population: return "InsufficientPopulation";
        case Errc::degenerate_data: return "DegenerateData";
        case Errc::vote_conflict: return "VoteConflict";
        case Errc::unknown_task: return "UnknownTask";
    }
    return "Unknown";
}

}  // namespace finest
