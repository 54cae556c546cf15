#include "finest/run.hpp"

#include <chrono>
#include <ctime>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "finest/mock_world.hpp"
#include "finest/text.hpp"

namespace finest {

namespace {

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
    return (p.is_relative() && !base.empty()) ? base / p : p;
}

json source_to_json(const SourceSpec& s) {
    json fields = json::object();
    for (const auto& [k, v] : s.field_map) fields[k] = v;
    return {{"source", to_string(s.source)},
            {"path", s.path.string()},
            {"format", s.format},
            {"id_field", s.id_field},
            {"fields", fields}};
}

std::string now_iso8601() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

template <typename T, typename F>
std::vector<T> parse_list(const json& j, F parse) {
    std::vector<T> out;
    for (const auto& item : j) out.push_back(parse(item.get<std::string>()));
    return out;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw Error(Errc::config_error, "run config must be a JSON object");
    RunConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        for (const auto& b : j.value("backends", json::array())) {
            BackendSpec spec;
            spec.name = b.at("name").get<std::string>();
            spec.base_url = b.value("base_url", "");
            spec.kind = b.value("kind", spec.base_url.empty() ? "mock" : "http");
            if (spec.kind != "mock" && spec.kind != "http") {
                throw Error(Errc::config_error, "backend '" + spec.name + "' has unknown kind '" + spec.kind + "'");
            }
            spec.model_id = b.value("model_id", spec.name);
            spec.api_key_env = b.value("api_key_env", "");
            spec.timeout_seconds = b.value("timeout_seconds", spec.timeout_seconds);
            if (spec.kind == "http" && spec.base_url.empty()) {
                throw Error(Errc::config_error, "backend '" + spec.name + "' needs a base_url");
            }
            c.backends.push_back(std::move(spec));
        }
        if (j.contains("generation_models")) c.generation_models = j.at("generation_models").get<std::vector<std::string>>();
        if (j.contains("stances")) c.stances = parse_list<Stance>(j.at("stances"), parse_stance);
        c.judge_model = j.value("judge_model", c.judge_model);
        c.extract_model = j.value("extract_model", c.extract_model);
        c.improve_model = j.value("improve_model", c.improve_model);
        c.transform_model = j.value("transform_model", c.transform_model);
        c.filter_model = j.value("filter_model", c.filter_model);
        for (const auto& s : j.value("sources", json::array())) c.sources.push_back(SourceSpec::from_json(s, base_dir));
        if (j.contains("decoding")) c.decoding.apply_overrides(j.at("decoding"));
        if (j.contains("gateway")) {
            const json& g = j.at("gateway");
            c.gateway.max_in_flight = g.value("max_in_flight", c.gateway.max_in_flight);
            c.gateway.max_retries = g.value("max_retries", c.gateway.max_retries);
            c.gateway.backoff_base_ms = g.value("backoff_base_ms", c.gateway.backoff_base_ms);
            c.gateway.backoff_max_ms = g.value("backoff_max_ms", c.gateway.backoff_max_ms);
        }
        if (j.contains("cache_dir")) c.gateway.cache_dir = resolve(j.at("cache_dir").get<std::string>(), base_dir);
        if (j.contains("assets_dir")) c.assets_dir = resolve(j.at("assets_dir").get<std::string>(), base_dir);
        if (j.contains("fixtures")) c.fixtures = resolve(j.at("fixtures").get<std::string>(), base_dir);
        if (j.contains("judge")) {
            const json& jj = j.at("judge");
            c.judge_retries = jj.value("retries", c.judge_retries);
            c.parse_mode = jj.value("strict", false) ? ParseMode::strict : ParseMode::lenient;
        }
        c.corpus_retries = j.value("corpus_retries", c.corpus_retries);
        if (j.contains("refine")) {
            const json& r = j.at("refine");
            if (r.contains("strategies")) c.strategies = parse_list<StrategyId>(r.at("strategies"), parse_strategy);
            c.matrix.appendix_table = r.value("appendix_table", false);
            c.rounds = r.value("rounds", c.rounds);
        }
        if (j.contains("metrics")) c.pooled = j.at("metrics").value("pooled", false);
        if (j.contains("study")) {
            const json& s = j.at("study");
            c.study.n_per_bucket = s.value("n_per_bucket", c.study.n_per_bucket);
            if (s.contains("stance_ratio")) c.study.stance_ratio = s.at("stance_ratio").get<StanceRatio>();
            if (s.contains("bucket_mode")) c.study.bucket_mode = parse_bucket_mode(s.at("bucket_mode").get<std::string>());
            c.study.population_thresholds = s.value("thresholds", "default") == "population";
            c.study.panel_size = s.value("panel_size", c.study.panel_size);
            if (s.contains("task_strategy")) c.study.task_strategy = parse_strategy(s.at("task_strategy").get<std::string>());
        }
    } catch (const json::exception& ex) {
        throw Error(Errc::config_error, std::string("malformed run config: ") + ex.what());
    } catch (const Error& ex) {
        if (ex.code() == Errc::config_error) throw;
        throw Error(Errc::config_error, std::string("invalid run config: ") + ex.what());
    }
    if (c.gateway.max_in_flight < 1) throw Error(Errc::config_error, "gateway.max_in_flight must be at least 1");
    if (c.rounds < 1) throw Error(Errc::config_error, "refine.rounds must be at least 1");
    if (c.study.panel_size < 1) throw Error(Errc::config_error, "study.panel_size must be at least 1");
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
    json j = json::parse(read_text_file(file), nullptr, false);
    if (j.is_discarded()) throw Error(Errc::config_error, file.string() + " is not valid JSON");
    return from_json(j, std::filesystem::absolute(file).parent_path());
}

json RunConfig::to_json() const {
    json backends_j = json::array();
    for (const auto& b : backends) {
        backends_j.push_back({{"name", b.name},
                              {"kind", b.kind},
                              {"base_url", b.base_url},
                              {"model_id", b.model_id},
                              {"api_key_env", b.api_key_env},
                              {"timeout_seconds", b.timeout_seconds}});
    }
    json stances_j = json::array();
    for (Stance s : stances) stances_j.push_back(to_string(s));
    json sources_j = json::array();
    for (const auto& s : sources) sources_j.push_back(source_to_json(s));
    json strategies_j = json::array();
    for (StrategyId s : strategies) strategies_j.push_back(to_string(s));
    json j = {
        {"seed", seed},
        {"backends", backends_j},
        {"generation_models", generation_models},
        {"stances", stances_j},
        {"judge_model", judge_model},
        {"extract_model", extract_model},
        {"improve_model", improve_model},
        {"transform_model", transform_model},
        {"filter_model", filter_model},
        {"sources", sources_j},
        {"decoding", decoding.to_json()},
        {"gateway",
         {{"max_in_flight", gateway.max_in_flight},
          {"max_retries", gateway.max_retries},
          {"backoff_base_ms", gateway.backoff_base_ms},
          {"backoff_max_ms", gateway.backoff_max_ms}}},
        {"judge", {{"retries", judge_retries}, {"strict", parse_mode == ParseMode::strict}}},
        {"corpus_retries", corpus_retries},
        {"refine", {{"strategies", strategies_j}, {"appendix_table", matrix.appendix_table}, {"rounds", rounds}}},
        {"metrics", {{"pooled", pooled}}},
        {"study",
         {{"n_per_bucket", study.n_per_bucket},
          {"stance_ratio", study.stance_ratio},
          {"bucket_mode", study.bucket_mode == BucketMode::both ? "and" : "or"},
          {"thresholds", study.population_thresholds ? "population" : "default"},
          {"panel_size", study.panel_size},
          {"task_strategy", to_string(study.task_strategy)}}},
    };
    // Paths that only locate things stay out of the hash-relevant core
    // except where they change outputs (assets, fixtures).
    if (gateway.cache_dir) j["cache_dir"] = gateway.cache_dir->string();
    if (assets_dir) j["assets_dir"] = assets_dir->string();
    if (fixtures) j["fixtures"] = fixtures->string();
    return j;
}

std::string RunConfig::hash() const {
    json j = to_json();
    j.erase("cache_dir");
    return sha256_hex(j.dump());
}

const std::vector<std::string>& required_assets() {
    static const std::vector<std::string> kAssets = [] {
        std::vector<std::string> a;
        for (const char* c : {"content", "logic", "appropriateness"}) {
            for (const char* s : {"error_based", "score_based"}) {
                a.push_back(fmt::format("rubrics/{}_{}.txt", c, s));
                a.push_back(fmt::format("fewshots/{}_{}.json", c, s));
            }
        }
        for (const char* p : {"transform_kold", "transform_ibm", "filter_controversy", "filter_criteria", "stance_agree",
                              "stance_disagree", "extract_core", "evaluation_query", "improve_base", "improve_taxonomy",
                              "improve_feedback_error", "improve_feedback_score"}) {
            a.push_back(fmt::format("prompts/{}.txt", p));
        }
        return a;
    }();
    return kAssets;
}

RunContext::RunContext(RunConfig config, std::filesystem::path dir)
    : config_(std::move(config)),
      dir_(std::filesystem::absolute(dir)),
      assets_(config_.assets_dir ? AssetStore(*config_.assets_dir) : AssetStore::shipped()) {
    for (const auto& a : required_assets()) {
        if (!assets_.exists(a)) throw Error(Errc::config_error, "required asset " + assets_.path(a).string() + " is missing");
    }
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error(Errc::io_error, "cannot create run directory " + dir_.string() + ": " + ec.message());

    // Reruns of a stage replay from the cache instead of re-billing.
    if (!config_.gateway.cache_dir) config_.gateway.cache_dir = dir_ / "cache";
    gateway_ = std::make_unique<Gateway>(config_.gateway);
    auto mock = std::make_shared<MockBackend>(config_.seed, make_mock_responder());
    if (config_.fixtures) {
        json fx = json::parse(read_text_file(*config_.fixtures), nullptr, false);
        if (fx.is_discarded()) throw Error(Errc::config_error, config_.fixtures->string() + " is not valid JSON");
        mock->load_fixtures(fx);
    }
    for (const auto& b : config_.backends) {
        if (b.kind == "http") {
            gateway_->register_backend(
                b.name, std::make_shared<HttpBackend>(
                            HttpBackendConfig{b.name, b.base_url, b.model_id, b.api_key_env, b.timeout_seconds}));
        } else {
            gateway_->register_backend(b.name, mock);
        }
    }
    std::vector<std::string> used = config_.generation_models;
    for (const auto* m : {&config_.judge_model, &config_.extract_model, &config_.improve_model,
                          &config_.transform_model, &config_.filter_model}) {
        if (!m->empty()) used.push_back(*m);
    }
    for (const auto& m : used) {
        if (!gateway_->has_backend(m)) gateway_->register_backend(m, mock);
    }

    // Keep the stage history of an existing run directory so stages can be
    // replayed one at a time.
    const auto manifest_file = file("manifest.json");
    if (std::filesystem::exists(manifest_file)) {
        json old = json::parse(read_text_file(manifest_file), nullptr, false);
        if (!old.is_discarded() && old.contains("stages")) manifest_["stages"] = old["stages"];
        if (!old.is_discarded() && old.value("config_hash", "") != config_.hash()) {
            spdlog::warn("run directory {} was produced with a different config", dir_.string());
        }
    }
    if (!manifest_.contains("stages")) manifest_["stages"] = json::object();
    manifest_["config"] = config_.to_json();
    manifest_["config_hash"] = config_.hash();
    manifest_["seed"] = config_.seed;
    manifest_["decoding"] = config_.decoding.to_json();
    json hashes = json::object();
    for (const auto& a : required_assets()) hashes[a] = assets_.hash(a);
    manifest_["assets"] = {{"root", assets_.root().string()}, {"sha256", hashes}};
    write_manifest();
}

void RunContext::begin_stage(const std::string& stage) {
    manifest_["stages"][stage] = {{"status", "running"}, {"started_at", now_iso8601()}};
    stage_start_[stage] = gateway_->counters();
    write_manifest();
}

void RunContext::complete_stage(const std::string& stage, const json& summary) {
    json& s = manifest_["stages"][stage];
    s["status"] = "complete";
    s["finished_at"] = now_iso8601();
    s["summary"] = summary;
    const GatewayCounters c = gateway_->counters();
    const GatewayCounters start = stage_start_[stage];
    s["gateway"] = {{"backend_calls", c.backend_calls - start.backend_calls},
                    {"cache_hits", c.cache_hits - start.cache_hits},
                    {"retries", c.retries - start.retries},
                    {"failures", c.failures - start.failures},
                    {"peak_in_flight", c.peak_in_flight}};
    write_manifest();
}

void RunContext::fail_stage(const std::string& stage, const std::string& error) {
    json& s = manifest_["stages"][stage];
    s["status"] = "failed";
    s["finished_at"] = now_iso8601();
    s["error"] = error;
    write_manifest();
}

json RunContext::manifest() const { return manifest_; }

void RunContext::write_manifest() const { write_text_file(file("manifest.json"), manifest_.dump(2) + "\n"); }

}  // namespace finest
