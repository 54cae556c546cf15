#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <string_view>

#include "finest/error.hpp"
#include "finest/json_util.hpp"

namespace test_support {

inline std::filesystem::path fixtures_dir() { return FINEST_TEST_FIXTURES; }

inline finest::json load_fixture(const std::string& name) {
    return finest::json::parse(finest::read_text_file(fixtures_dir() / name));
}

inline finest::Errc errc_named(std::string_view name) {
    using finest::Errc;
    static const std::map<std::string, Errc, std::less<>> table = {
        {"no_json_found", Errc::no_json_found},       {"index_out_of_range", Errc::index_out_of_range},
        {"score_out_of_range", Errc::score_out_of_range}, {"missing_field", Errc::missing_field},
        {"invalid_field", Errc::invalid_field},       {"unknown_label", Errc::unknown_label},
    };
    return table.at(std::string(name));
}

/// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("finest-" + tag + "-" + std::to_string(rd()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace test_support

/// Requires `expr` to throw finest::Error carrying `code`.
#define REQUIRE_ERRC(expr, expected_code)                                   \
    do {                                                           \
        bool threw_ = false;                                       \
        try {                                                      \
            (void)(expr);                                          \
        } catch (const finest::Error& e_) {                        \
            threw_ = true;                                         \
            INFO(e_.what());                                       \
            REQUIRE(e_.code() == (expected_code));                        \
        }                                                          \
        REQUIRE(threw_);                                           \
    } while (false)
