#include "finest/gateway.hpp"

#include <algorithm>
#include <fstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "finest/rng.hpp"
#include "finest/text.hpp"

namespace finest {

std::string_view to_string(Role r) noexcept {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

std::string_view to_string(Purpose p) noexcept {
    switch (p) {
        case Purpose::generate: return "generate";
        case Purpose::evaluate: return "evaluate";
        case Purpose::improve: return "improve";
        case Purpose::transform: return "transform";
        case Purpose::filter: return "filter";
        case Purpose::extract: return "extract";
    }
    return "generate";
}

Purpose parse_purpose(std::string_view text) {
    for (Purpose p : kPurposes) {
        if (text == to_string(p)) return p;
    }
    throw Error(Errc::invalid_argument, "unknown purpose '" + std::string(text) + "'");
}

std::string_view to_string(Provenance p) noexcept {
    switch (p) {
        case Provenance::live: return "live";
        case Provenance::cache: return "cache";
        case Provenance::mock: return "mock";
    }
    return "live";
}

DecodingTable::DecodingTable() {
    table_[Purpose::generate] = {0.0, 1.0, 1024};
    table_[Purpose::evaluate] = {1.0, 0.9, 2048};
    table_[Purpose::improve] = {1.0, 0.9, 1024};
    table_[Purpose::transform] = {0.0, 1.0, 1024};
    table_[Purpose::filter] = {0.0, 1.0, 1024};
    table_[Purpose::extract] = {0.0, 1.0, 1024};
}

json DecodingTable::to_json() const {
    json j = json::object();
    for (const auto& [p, d] : table_) {
        j[std::string(to_string(p))] = {{"temperature", d.temperature}, {"top_p", d.top_p}, {"max_tokens", d.max_tokens}};
    }
    return j;
}

void DecodingTable::apply_overrides(const json& j) {
    if (!j.is_object()) return;
    for (const auto& [key, value] : j.items()) {
        const Purpose p = parse_purpose(key);
        Decoding d = table_.at(p);
        d.temperature = value.value("temperature", d.temperature);
        d.top_p = value.value("top_p", d.top_p);
        d.max_tokens = value.value("max_tokens", d.max_tokens);
        if (d.temperature < 0 || d.top_p <= 0 || d.top_p > 1 || d.max_tokens <= 0) {
            throw Error(Errc::config_error, "decoding override for '" + key + "' out of range");
        }
        table_[p] = d;
    }
}

ChatRequest ChatRequest::make(std::string model_id, Purpose purpose, std::vector<Message> messages,
                              const DecodingTable& decoding) {
    ChatRequest req;
    req.model_id = std::move(model_id);
    req.purpose = purpose;
    req.messages = std::move(messages);
    const Decoding& d = decoding.at(purpose);
    req.temperature = d.temperature;
    req.top_p = d.top_p;
    req.max_tokens = d.max_tokens;
    return req;
}

std::string ChatRequest::user_text() const {
    std::string out;
    for (const auto& m : messages) {
        if (m.role != Role::user) continue;
        if (!out.empty()) out.push_back('\n');
        out += m.text;
    }
    return out;
}

std::string fingerprint(const ChatRequest& req) {
    json msgs = json::array();
    for (const auto& m : req.messages) {
        msgs.push_back(json::array({std::string(to_string(m.role)), strip_trailing_whitespace_per_line(m.text)}));
    }
    json canonical = json::array({req.model_id, msgs, req.temperature, req.top_p, req.max_tokens});
    if (req.sample_index > 0) canonical.push_back(req.sample_index);
    return sha256_hex(canonical.dump());
}

// ---------------------------------------------------------------------------
// MockBackend

namespace {

std::string fixture_key(std::string_view purpose, std::string_view qid, std::string_view category,
                        std::string_view scheme) {
    std::string key;
    key.append(purpose).append("|").append(qid).append("|").append(category).append("|").append(scheme);
    return key;
}

}  // namespace

MockBackend::MockBackend(std::uint64_t seed, Responder responder) : seed_(seed), responder_(std::move(responder)) {}

void MockBackend::add_fixture(std::string_view purpose, std::string_view question_id, std::string_view category,
                              std::string_view scheme, std::vector<std::string> outputs) {
    if (outputs.empty()) throw Error(Errc::invalid_argument, "mock fixture needs at least one output");
    fixtures_[fixture_key(purpose, question_id, category, scheme)] = std::move(outputs);
}

void MockBackend::load_fixtures(const json& fixtures) {
    if (!fixtures.is_array()) throw Error(Errc::config_error, "mock fixtures must be a JSON array");
    for (const auto& f : fixtures) {
        std::vector<std::string> outputs;
        if (f.contains("outputs")) {
            outputs = f.at("outputs").get<std::vector<std::string>>();
        } else if (f.contains("output")) {
            outputs.push_back(f.at("output").get<std::string>());
        }
        add_fixture(f.value("purpose", "*"), f.value("question_id", "*"), f.value("category", "*"),
                    f.value("scheme", "*"), std::move(outputs));
    }
}

const std::vector<std::string>* MockBackend::find_fixture(const ChatRequest& req) const {
    if (fixtures_.empty()) return nullptr;
    const std::string purpose(to_string(req.purpose));
    const std::string qid = req.tag("question_id");
    const std::string cat = req.tag("category");
    const std::string scheme = req.tag("scheme");
    // Most specific first: exact, then progressively wildcarded from the right.
    const std::string candidates[] = {
        fixture_key(purpose, qid, cat, scheme), fixture_key(purpose, qid, cat, "*"),
        fixture_key(purpose, qid, "*", scheme), fixture_key(purpose, qid, "*", "*"),
        fixture_key(purpose, "*", cat, scheme), fixture_key(purpose, "*", cat, "*"),
        fixture_key(purpose, "*", "*", scheme), fixture_key(purpose, "*", "*", "*"),
    };
    for (const auto& key : candidates) {
        auto it = fixtures_.find(key);
        if (it != fixtures_.end()) return &it->second;
    }
    return nullptr;
}

std::string MockBackend::complete(const ChatRequest& req) {
    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
    if (const auto* outputs = find_fixture(req)) {
        const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(std::max(req.sample_index, 0)),
                                                    outputs->size() - 1);
        return (*outputs)[i];
    }
    const std::uint64_t seed = mix_seed(seed_, fingerprint(req));
    if (responder_) return responder_(req, seed);
    return "mock response " + std::to_string(seed % 100000);
}

// ---------------------------------------------------------------------------
// ResponseCache

void ResponseCache::open(const std::filesystem::path& dir) {
    std::unique_lock lock(mutex_);
    std::filesystem::create_directories(dir);
    file_ = dir / "cache.jsonl";
    if (!std::filesystem::exists(file_)) return;
    std::ifstream in(file_, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json row = json::parse(line, nullptr, false);
        // A torn final line from an interrupted run is skipped, not fatal.
        if (row.is_discarded() || !row.contains("fingerprint") || !row.contains("text")) continue;
        entries_.emplace(row["fingerprint"].get<std::string>(), row["text"].get<std::string>());
    }
}

std::optional<std::string> ResponseCache::lookup(const std::string& fp) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(fp);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::string ResponseCache::record(const std::string& fp, const std::string& model_id, const std::string& text) {
    std::unique_lock lock(mutex_);
    auto [it, inserted] = entries_.emplace(fp, text);
    if (!inserted) return it->second;
    if (!file_.empty()) {
        std::ofstream out(file_, std::ios::binary | std::ios::app);
        if (!out) throw Error(Errc::io_error, "cannot append to " + file_.string());
        out << json{{"fingerprint", fp}, {"model_id", model_id}, {"text", text}}.dump() << '\n';
        out.flush();
    }
    return text;
}

std::size_t ResponseCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(GatewayConfig config)
    : config_(std::move(config)),
      slots_(std::clamp(config_.max_in_flight, 1, 1024)) {
    if (config_.cache_dir) cache_.open(*config_.cache_dir);
}

void Gateway::register_backend(const std::string& model_id, std::shared_ptr<Backend> backend) {
    std::lock_guard lock(backends_mutex_);
    backends_[model_id] = std::move(backend);
}

bool Gateway::has_backend(const std::string& model_id) const {
    std::lock_guard lock(backends_mutex_);
    return backends_.count(model_id) != 0;
}

std::string Gateway::call_with_retry(Backend& backend, const ChatRequest& req, int& attempt) {
    for (attempt = 1;; ++attempt) {
        slots_.acquire();
        const int now = ++in_flight_;
        int peak = peak_in_flight_.load();
        while (now > peak && !peak_in_flight_.compare_exchange_weak(peak, now)) {
        }
        ++backend_calls_;
        try {
            std::string text = backend.complete(req);
            --in_flight_;
            slots_.release();
            return text;
        } catch (const BackendError& ex) {
            --in_flight_;
            slots_.release();
            if (!ex.retryable() || attempt > config_.max_retries) {
                ++failures_;
                throw;
            }
            ++retries_;
            const long long delay = std::min<long long>(
                static_cast<long long>(config_.backoff_base_ms) << std::min(attempt - 1, 20), config_.backoff_max_ms);
            spdlog::warn("{} attempt {} failed ({}); retrying in {} ms", req.model_id, attempt, ex.what(), delay);
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        } catch (...) {
            --in_flight_;
            slots_.release();
            ++failures_;
            throw;
        }
    }
}

ChatResponse Gateway::complete(const ChatRequest& req, CachePolicy policy) {
    ChatResponse resp;
    resp.request_fingerprint = fingerprint(req);

    if (policy == CachePolicy::use) {
        if (auto hit = cache_.lookup(resp.request_fingerprint)) {
            ++cache_hits_;
            resp.text = std::move(*hit);
            resp.provenance = Provenance::cache;
            resp.attempt = 0;
            return resp;
        }
    }

    std::shared_ptr<Backend> backend;
    {
        std::lock_guard lock(backends_mutex_);
        auto it = backends_.find(req.model_id);
        if (it != backends_.end()) backend = it->second;
    }
    if (!backend) throw Error(Errc::backend_unavailable, "no backend configured for model '" + req.model_id + "'");

    const auto start = std::chrono::steady_clock::now();
    std::string text = call_with_retry(*backend, req, resp.attempt);
    resp.latency_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    if (trim(text).empty()) {
        ++failures_;
        throw Error(Errc::empty_completion, "backend for '" + req.model_id + "' returned no text");
    }
    if (policy != CachePolicy::bypass) text = cache_.record(resp.request_fingerprint, req.model_id, text);
    resp.text = std::move(text);
    resp.provenance = backend->provenance();
    return resp;
}

GatewayCounters Gateway::counters() const {
    GatewayCounters c;
    c.backend_calls = backend_calls_.load();
    c.cache_hits = cache_hits_.load();
    c.retries = retries_.load();
    c.failures = failures_.load();
    c.peak_in_flight = peak_in_flight_.load();
    return c;
}

}  // namespace finest
