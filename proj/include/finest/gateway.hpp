#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "finest/error.hpp"
#include "finest/json_util.hpp"

namespace finest {

enum class Role { system, user, assistant };
enum class Purpose { generate, evaluate, improve, transform, filter, extract };
inline constexpr std::array<Purpose, 6> kPurposes = {Purpose::generate, Purpose::evaluate, Purpose::improve,
                                                     Purpose::transform, Purpose::filter, Purpose::extract};

std::string_view to_string(Role r) noexcept;
std::string_view to_string(Purpose p) noexcept;
Purpose parse_purpose(std::string_view text);

struct Message {
    Role role = Role::user;
    std::string text;
};

struct Decoding {
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 1024;

    friend bool operator==(const Decoding&, const Decoding&) = default;
};

/// Per-purpose decoding parameters. Defaults: greedy for generation and the
/// corpus helpers, temperature 1.0 / top_p 0.9 for evaluation and
/// improvement; 2048 max tokens for evaluation, 1024 otherwise.
class DecodingTable {
public:
    DecodingTable();
    const Decoding& at(Purpose p) const { return table_.at(p); }
    void set(Purpose p, Decoding d) { table_[p] = d; }
    json to_json() const;
    /// Overrides only the purposes/fields present in `j`.
    void apply_overrides(const json& j);

private:
    std::map<Purpose, Decoding> table_;
};

struct ChatRequest {
    std::string model_id;
    std::vector<Message> messages;
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 1024;
    Purpose purpose = Purpose::generate;
    /// 0 for the first draw; retries use 1, 2, ... so each is a fresh sample
    /// with its own cache entry.
    int sample_index = 0;
    /// Routing metadata for scripted mocks and logs (question_id, category,
    /// scheme, ...). Not part of the fingerprint.
    std::map<std::string, std::string> tags;

    static ChatRequest make(std::string model_id, Purpose purpose, std::vector<Message> messages,
                            const DecodingTable& decoding = DecodingTable{});

    std::string tag(const std::string& key) const {
        auto it = tags.find(key);
        return it == tags.end() ? std::string{} : it->second;
    }
    /// Concatenated text of all user messages.
    std::string user_text() const;
};

enum class Provenance { live, cache, mock };
std::string_view to_string(Provenance p) noexcept;

struct ChatResponse {
    std::string text;
    Provenance provenance = Provenance::live;
    std::string request_fingerprint;
    std::int64_t latency_ms = 0;
    int attempt = 1;
};

/// SHA-256 over model id, messages (trailing whitespace stripped per line),
/// temperature, top_p, max_tokens, and sample_index when non-zero.
std::string fingerprint(const ChatRequest& req);

/// Failure raised by a backend; `retryable` tells the gateway whether
/// backing off and trying again can help.
class BackendError : public Error {
public:
    BackendError(Errc code, const std::string& message, bool retryable)
        : Error(code, message), retryable_(retryable) {}
    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const ChatRequest& req) = 0;
    virtual Provenance provenance() const noexcept { return Provenance::live; }
};

/// Deterministic offline backend. Scripted fixtures are looked up by
/// (purpose, question_id, category, scheme) from the request tags with "*"
/// as wildcard; a fixture may hold several outputs, picked by sample_index
/// (the last one repeats). Unscripted requests go to the responder, which
/// receives a seed mixed from the configured seed and the fingerprint.
class MockBackend : public Backend {
public:
    using Responder = std::function<std::string(const ChatRequest&, std::uint64_t seed)>;

    explicit MockBackend(std::uint64_t seed = 0, Responder responder = {});

    void add_fixture(std::string_view purpose, std::string_view question_id, std::string_view category,
                     std::string_view scheme, std::vector<std::string> outputs);
    /// Array of {purpose, question_id, category, scheme, output | outputs}.
    void load_fixtures(const json& fixtures);
    void set_latency(std::chrono::milliseconds latency) { latency_ = latency; }

    std::string complete(const ChatRequest& req) override;
    Provenance provenance() const noexcept override { return Provenance::mock; }
    std::uint64_t seed() const noexcept { return seed_; }

private:
    const std::vector<std::string>* find_fixture(const ChatRequest& req) const;

    std::uint64_t seed_;
    Responder responder_;
    std::map<std::string, std::vector<std::string>> fixtures_;
    std::chrono::milliseconds latency_{0};
};

struct HttpBackendConfig {
    std::string name;
    std::string base_url;  // e.g. https://api.openai.com/v1
    std::string model_id;
    std::string api_key_env;
    int timeout_seconds = 120;
};

/// OpenAI-compatible chat completions endpoint.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    std::string complete(const ChatRequest& req) override;

private:
    HttpBackendConfig config_;
};

/// Append-only fingerprint -> text store persisted as one JSON record per
/// line. The first text recorded for a fingerprint wins.
class ResponseCache {
public:
    ResponseCache() = default;
    explicit ResponseCache(const std::filesystem::path& dir) { open(dir); }

    /// Loads (or creates) `dir`/cache.jsonl and persists new records there.
    void open(const std::filesystem::path& dir);

    std::optional<std::string> lookup(const std::string& fp) const;
    /// Returns the text now stored for `fp`.
    std::string record(const std::string& fp, const std::string& model_id, const std::string& text);
    std::size_t size() const;
    bool persistent() const noexcept { return !file_.empty(); }

private:
    std::filesystem::path file_;
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, std::string> entries_;
};

enum class CachePolicy { use, bypass, record_only };

struct GatewayConfig {
    int max_in_flight = 4;
    int max_retries = 3;
    int backoff_base_ms = 500;
    int backoff_max_ms = 8000;
    std::optional<std::filesystem::path> cache_dir;
};

struct GatewayCounters {
    std::uint64_t backend_calls = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t retries = 0;
    std::uint64_t failures = 0;
    int peak_in_flight = 0;
};

/// Routes requests to backends by model id, consults the cache, bounds the
/// number of concurrent backend calls and retries transient failures with
/// exponential backoff. Safe to share between threads.
class Gateway {
public:
    explicit Gateway(GatewayConfig config = {});

    void register_backend(const std::string& model_id, std::shared_ptr<Backend> backend);
    bool has_backend(const std::string& model_id) const;

    ChatResponse complete(const ChatRequest& req, CachePolicy policy = CachePolicy::use);

    GatewayCounters counters() const;
    const GatewayConfig& config() const noexcept { return config_; }
    const ResponseCache& cache() const noexcept { return cache_; }

private:
    std::string call_with_retry(Backend& backend, const ChatRequest& req, int& attempt);

    GatewayConfig config_;
    ResponseCache cache_;
    std::map<std::string, std::shared_ptr<Backend>> backends_;
    mutable std::mutex backends_mutex_;
    std::counting_semaphore<1024> slots_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> peak_in_flight_{0};
    std::atomic<std::uint64_t> backend_calls_{0};
    std::atomic<std::uint64_t> cache_hits_{0};
    std::atomic<std::uint64_t> retries_{0};
    std::atomic<std::uint64_t> failures_{0};
};

}  // namespace finest
