#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "finest/gateway.hpp"

namespace finest {

/// Knobs for the synthetic responder. Rates are per sentence.
struct MockWorldOptions {
    double flaw_rate_stance = 0.5;   // agree / disagree responses
    double flaw_rate_default = 0.3;  // bare-question responses
    /// Chance that a first-attempt judge output is unparseable, exercising
    /// the retry path.
    double judge_noise = 0.03;
    /// Chance that a judge output is wrapped in prose and a code fence.
    double judge_wrapping = 0.25;
};

/// A deterministic stand-in for every model role (generation, judging,
/// improvement, corpus helpers). Responses are built from a fixed sentence
/// pool in which some sentences carry known flaws; the judge role flags
/// exactly those, and the improvement role repairs flaws more often the
/// more guidance its prompt carries (taxonomy, error feedback, score
/// feedback). All randomness comes from the seed handed in by MockBackend.
MockBackend::Responder make_mock_responder(MockWorldOptions options = {});

/// The flaw a pool sentence carries, as (category id, error type id).
std::optional<std::pair<std::string, std::string>> mock_flaw_of(std::string_view sentence);

/// "[i] text" lines of the last query block in a prompt.
std::vector<std::string> numbered_lines(std::string_view prompt);

}  // namespace finest
