#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "finest/assets.hpp"
#include "finest/json_util.hpp"

namespace finest {

enum class Category { content, logic, appropriateness };
inline constexpr std::array<Category, 3> kCategories = {Category::content, Category::logic,
                                                        Category::appropriateness};

enum class Scheme { error_based, score_based };
inline constexpr std::array<Scheme, 2> kSchemes = {Scheme::error_based, Scheme::score_based};

std::string_view to_string(Category c) noexcept;
std::string_view to_string(Scheme s) noexcept;
/// "Content" / "Logic" / "Appropriateness".
std::string_view display_name(Category c) noexcept;
Category parse_category(std::string_view text);
Scheme parse_scheme(std::string_view text);

struct ErrorType {
    std::string id;            // canonical, violation-phrased: non_inclusive_opinion
    Category category = Category::content;
    std::string name;          // display name: "Non-inclusive (opinion)"
    std::string definition;    // rubric question
    std::string prompt_label;  // label the judge prompt uses: "inclusive-opinion"
    bool is_catch_all = false;

    friend bool operator==(const ErrorType&, const ErrorType&) = default;
};

struct ScoreBand {
    int low = 1;
    int high = 1;
    std::string label;

    friend bool operator==(const ScoreBand&, const ScoreBand&) = default;
};

class Taxonomy {
public:
    std::string version;
    std::vector<ErrorType> error_types;
    /// "<category>.<scheme>" -> rubric asset path relative to the asset root.
    std::map<std::string, std::string> rubrics;
    std::vector<ScoreBand> score_bands;

    /// Error types of one category in registry order; catch-all excluded
    /// unless requested.
    std::vector<const ErrorType*> lookup(Category c, bool include_catch_all = false) const;
    const ErrorType* catch_all(Category c) const noexcept;

    /// Throws Error(unknown_label).
    const ErrorType& by_id(std::string_view id) const;

    /// Maps a judge label (prompt label, canonical id or display name, any
    /// case and separator style) to its error type within `category`.
    /// "other" resolves to the catch-all where one exists.
    /// Throws Error(unknown_label) when nothing matches.
    const ErrorType& canonicalize_label(std::string_view raw_label, Category category) const;

    std::string rubric_path(Category c, Scheme s) const;

    /// The rubric asset for (category, scheme), byte-identical to the file.
    std::string render_rubric(Category c, Scheme s, const AssetStore& assets) const;

    /// Plain-text listing of categories, error types and definitions used as
    /// the taxonomy description in improvement prompts.
    std::string describe() const;

    ordered_json to_json() const;
    static Taxonomy from_json(const json& j);
    /// Canonical file form: two-space indented JSON plus trailing newline.
    std::string serialize() const;
    static Taxonomy parse(std::string_view text);

    friend bool operator==(const Taxonomy&, const Taxonomy&) = default;
};

/// The built-in taxonomy: 3 categories, 10 error types plus the Content
/// catch-all.
const Taxonomy& taxonomy_registry();

}  // namespace finest
