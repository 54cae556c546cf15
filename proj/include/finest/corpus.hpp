#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "finest/assets.hpp"
#include "finest/gateway.hpp"
#include "finest/json_util.hpp"

namespace finest {

enum class Source { square_train, square_valid, kold, ibm };
inline constexpr std::array<Source, 4> kSources = {Source::square_train, Source::square_valid, Source::kold,
                                                   Source::ibm};
std::string_view to_string(Source s) noexcept;
Source parse_source(std::string_view text);

enum class Stance { agree, disagree, default_stance };
inline constexpr std::array<Stance, 3> kStances = {Stance::agree, Stance::disagree, Stance::default_stance};
std::string_view to_string(Stance s) noexcept;
Stance parse_stance(std::string_view text);

struct FilterVerdict {
    bool controversial = false;
    std::set<std::string> unsatisfied_category;  // subset of {"1","2"}
    std::string reasoning;
};

struct CriteriaVerdict {
    std::array<bool, 6> criteria{};  // C1..C6
    std::string reasoning;
    bool pass() const noexcept;
};

struct FilterTrace {
    std::optional<FilterVerdict> controversy;
    std::optional<CriteriaVerdict> criteria;
    std::string dropped_reason;  // empty while retained
};

struct Question {
    std::string id;
    std::string text;
    Source source = Source::square_train;
    json origin = json::object();  // raw source fields, never mutated
    FilterTrace filter_trace;

    /// Both filter verdicts recorded and positive.
    bool in_final_corpus() const noexcept;
};

struct Response {
    std::string id;
    std::string question_id;
    std::string model_id;
    Stance stance = Stance::default_stance;
    std::string text;
    int sentence_count = 0;
};

json to_json(const Question& q);
Question question_from_json(const json& j);
json to_json(const Response& r);
Response response_from_json(const json& j);

/// One item from a user-supplied dataset file. `fields` uses canonical
/// names: title/comment (kold), argument (ibm), question (square).
struct SourceRecord {
    std::string id;
    Source source = Source::square_train;
    std::map<std::string, std::string> fields;
};

/// Schema mapping for one source file.
struct SourceSpec {
    Source source = Source::square_train;
    std::filesystem::path path;
    std::string format = "jsonl";  // jsonl | csv | tsv
    std::string id_field;          // empty: 1-based row number
    std::map<std::string, std::string> field_map;  // canonical -> column name

    static SourceSpec from_json(const json& j, const std::filesystem::path& base_dir = {});
};

/// RFC 4180 style rows (quoted fields, doubled quotes, embedded newlines).
std::vector<std::vector<std::string>> parse_delimited(std::string_view text, char delimiter);

std::vector<SourceRecord> load_source(const SourceSpec& spec);

// Structured-output parsers; each throws its typed parse failure.
std::string parse_transform_output(std::string_view raw);
FilterVerdict parse_filter_verdict(std::string_view raw);
CriteriaVerdict parse_criteria_verdict(std::string_view raw);

/// Appends '?' unless the text already ends with a question mark.
std::string normalize_question_text(std::string_view text);

struct CorpusOptions {
    std::string transform_model;
    std::string filter_model;
    int parse_retries = 2;
    int workers = 4;
    DecodingTable decoding;
};

struct CorpusBuildResult {
    std::vector<Question> questions;  // final corpus, input order
    std::vector<Question> dropped;    // with filter_trace.dropped_reason
};

class CorpusBuilder {
public:
    CorpusBuilder(Gateway& gateway, AssetStore assets, CorpusOptions options);

    /// Square records pass through without a gateway call.
    /// Throws Error(transform_parse_failure).
    Question transform_to_question(const SourceRecord& record, int sample_index = 0) const;
    /// Throws Error(filter_parse_failure).
    FilterVerdict filter_controversial(const Question& q, int sample_index = 0) const;
    CriteriaVerdict filter_criteria(const Question& q, int sample_index = 0) const;

    /// Transformation and both filters with retry-then-drop; exact-text
    /// duplicates are dropped.
    CorpusBuildResult build(const std::vector<SourceRecord>& records) const;

private:
    Gateway& gateway_;
    AssetStore assets_;
    CorpusOptions options_;
};

struct MissingResponse {
    std::string question_id;
    std::string model_id;
    Stance stance = Stance::default_stance;
    std::string reason;
};

struct ResponseBatch {
    std::vector<Response> responses;
    std::vector<MissingResponse> missing;
};

/// Builds the generation request: default sends the bare question, agree /
/// disagree wrap it in the stance instruction asset.
ChatRequest build_response_request(const Question& q, const std::string& model_id, Stance stance,
                                   const AssetStore& assets, const DecodingTable& decoding = DecodingTable{});

/// |model_ids| x |stances| responses; duplicated models or stances throw
/// Error(duplicate_response). Backend failures are recorded as missing.
ResponseBatch generate_responses(Gateway& gateway, const AssetStore& assets, const Question& q,
                                 const std::vector<std::string>& model_ids, const std::vector<Stance>& stances,
                                 const DecodingTable& decoding = DecodingTable{});

std::string response_id(const std::string& question_id, const std::string& model_id, Stance stance);

struct CorpusStats {
    std::map<Source, std::size_t> questions_per_source;
    std::map<Source, std::size_t> responses_per_source;
    std::size_t questions = 0;
    std::size_t responses = 0;
    std::size_t per_question = 0;
    std::size_t expected_responses = 0;
    std::size_t deficit = 0;
    bool product_check = false;

    std::string to_text() const;
    json to_json() const;
};

/// Counts and the product check responses == questions x per_question.
/// `per_question` defaults to the number of distinct (model, stance) pairs
/// observed.
CorpusStats corpus_stats(const std::vector<Question>& questions, const std::vector<Response>& responses,
                         std::optional<std::size_t> per_question = std::nullopt);

}  // namespace finest
