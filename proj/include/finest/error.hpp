#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace finest {

/// Typed failure codes shared by every module. Callers branch on `code()`,
/// the message carries the human-readable context.
enum class Errc {
    invalid_argument,
    io_error,
    config_error,
    // taxonomy / assets
    unknown_label,
    missing_template,
    missing_variable,
    // gateway
    backend_unavailable,
    rate_limited,
    empty_completion,
    // corpus
    transform_parse_failure,
    filter_parse_failure,
    duplicate_response,
    // judge
    no_json_found,
    index_out_of_range,
    score_out_of_range,
    missing_field,
    invalid_field,
    missing_core_question,
    category_evaluation_failed,
    // metrics
    empty_input,
    zero_baseline,
    // refine
    feedback_scheme_mismatch,
    missing_feedback,
    feedback_not_allowed,
    // study
    insufficient_population,
    degenerate_data,
    vote_conflict,
    unknown_task,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace finest
