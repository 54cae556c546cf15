#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "finest/assets.hpp"
#include "finest/corpus.hpp"
#include "finest/gateway.hpp"
#include "finest/json_util.hpp"
#include "finest/taxonomy.hpp"
#include "finest/text.hpp"

namespace finest {

/// Sentences a record points at: every sentence, or a sorted set of 1-based
/// indices. Never both.
struct Span {
    bool all = false;
    std::vector<int> indices;

    static Span everything() { return Span{true, {}}; }
    static Span of(std::vector<int> indices);  // sorts and dedupes

    bool covers(int index) const noexcept;
    json to_json() const;  // "all" or [i, ...]

    friend bool operator==(const Span&, const Span&) = default;
};

struct ErrorRecord {
    Span span;
    std::string error_type;  // canonical ErrorType id
    std::string explanation;

    friend bool operator==(const ErrorRecord&, const ErrorRecord&) = default;
};

struct ScoreRecord {
    int score = 0;
    std::string feedback;

    friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

struct CoreQuestion {
    std::string core;
    std::vector<std::string> keywords;
    bool degraded = false;

    json to_json() const;
    static CoreQuestion from_json(const json& j);
};

/// Parses a judge's error-based answer into records for `category`.
/// Throws Error with no_json_found, missing_field, invalid_field,
/// index_out_of_range or unknown_label; never returns partial output.
std::vector<ErrorRecord> parse_error_eval(std::string_view raw, int n_sentences, Category category,
                                          const Taxonomy& taxonomy = taxonomy_registry(),
                                          ParseMode mode = ParseMode::lenient);

/// Judge-format text of `records` ("sentence_num", "error_category",
/// "explanation"), which parse_error_eval maps back to the same records.
std::string serialize_error_records(const std::vector<ErrorRecord>& records,
                                    const Taxonomy& taxonomy = taxonomy_registry());

/// Throws Error with no_json_found, missing_field, invalid_field or
/// score_out_of_range.
ScoreRecord parse_score_eval(std::string_view raw, ParseMode mode = ParseMode::lenient);
std::string serialize_score_record(const ScoreRecord& record);

/// Throws Error with no_json_found or missing_field.
CoreQuestion parse_core_question(std::string_view raw);

enum class CategoryStatus { ok, failed };

struct CategoryResult {
    Category category = Category::content;
    CategoryStatus status = CategoryStatus::failed;
    std::vector<ErrorRecord> records;  // error-based
    std::optional<ScoreRecord> score;  // score-based
    std::string error;                 // why the category failed
    int attempts = 0;
    std::vector<std::string> raw;      // every judge output, in attempt order

    bool ok() const noexcept { return status == CategoryStatus::ok; }
};

struct Evaluation {
    std::string response_id;
    std::string question_id;
    Scheme scheme = Scheme::error_based;
    std::string judge_model_id;
    int n_sentences = 0;
    std::array<CategoryResult, 3> categories;  // content, logic, appropriateness

    const CategoryResult& at(Category c) const { return categories[static_cast<std::size_t>(c)]; }
    CategoryResult& at(Category c) { return categories[static_cast<std::size_t>(c)]; }
    bool complete() const noexcept;

    json to_json() const;
    static Evaluation from_json(const json& j);
};

struct JudgeConfig {
    std::string model_id;
    /// Model used for core-question extraction; empty means model_id.
    std::string extract_model_id;
    int retries = 2;
    ParseMode mode = ParseMode::lenient;
    DecodingTable decoding;
};

class Judge {
public:
    Judge(Gateway& gateway, AssetStore assets, JudgeConfig config, const Taxonomy& taxonomy = taxonomy_registry());

    /// Rubric, few-shot exemplars and the sentence-numbered query.
    /// Throws Error(missing_template) or Error(missing_core_question).
    ChatRequest build_eval_prompt(const Question& question, const Response& response,
                                  const SentenceIndexedText& sentences, Category category, Scheme scheme,
                                  const CoreQuestion* core) const;

    /// Falls back to the full question with `degraded` set when extraction
    /// fails.
    CoreQuestion extract_core_question(const Question& question) const;

    /// Segments once, evaluates the three categories concurrently, retries
    /// each category on parse errors and marks it failed once the budget is
    /// spent.
    Evaluation evaluate_response(const Question& question, const Response& response, Scheme scheme,
                                 const CoreQuestion* core = nullptr) const;

    const JudgeConfig& config() const noexcept { return config_; }
    const AssetStore& assets() const noexcept { return assets_; }
    const Taxonomy& taxonomy() const noexcept { return taxonomy_; }

private:
    std::string fewshot_block(Category category, Scheme scheme) const;
    CategoryResult evaluate_category(const Question& question, const Response& response,
                                     const SentenceIndexedText& sentences, Category category, Scheme scheme,
                                     const CoreQuestion* core) const;

    Gateway& gateway_;
    AssetStore assets_;
    JudgeConfig config_;
    const Taxonomy& taxonomy_;
};

/// Renders the query frame shared by exemplars and the live query.
std::string render_eval_query(const AssetStore& assets, std::string_view question, const SentenceIndexedText& body,
                              const CoreQuestion* core);

}  // namespace finest
