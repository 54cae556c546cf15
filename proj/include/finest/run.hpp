#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "finest/assets.hpp"
#include "finest/corpus.hpp"
#include "finest/gateway.hpp"
#include "finest/json_util.hpp"
#include "finest/refine.hpp"
#include "finest/study.hpp"

namespace finest {

/// One configured model endpoint. `name` is the id pipelines refer to;
/// `model_id` is what the remote API calls it.
struct BackendSpec {
    std::string name;
    std::string kind = "mock";  // mock | http
    std::string base_url;
    std::string model_id;
    std::string api_key_env;
    int timeout_seconds = 120;
};

struct StudyConfig {
    std::size_t n_per_bucket = 50;
    StanceRatio stance_ratio = kDefaultStanceRatio;
    BucketMode bucket_mode = BucketMode::both;
    /// Thresholds from the evaluated population instead of the published
    /// averages.
    bool population_thresholds = false;
    int panel_size = 3;
    /// Improved responses shown to annotators come from this strategy.
    StrategyId task_strategy = StrategyId::finest_score;
};

/// Everything a run needs besides its input files. Unlisted model names get
/// the offline mock backend.
struct RunConfig {
    std::uint64_t seed = 42;
    std::vector<BackendSpec> backends;
    std::vector<std::string> generation_models = {"mock-gen-a", "mock-gen-b", "mock-gen-c"};
    std::vector<Stance> stances = {Stance::agree, Stance::disagree, Stance::default_stance};
    std::string judge_model = "mock-judge";
    std::string extract_model;  // empty: judge_model
    std::string improve_model = "mock-refiner";
    std::string transform_model = "mock-helper";
    std::string filter_model = "mock-helper";
    std::vector<SourceSpec> sources;
    DecodingTable decoding;
    GatewayConfig gateway;
    std::optional<std::filesystem::path> assets_dir;
    std::optional<std::filesystem::path> fixtures;  // scripted mock outputs
    int judge_retries = 2;
    ParseMode parse_mode = ParseMode::lenient;
    int corpus_retries = 2;
    std::vector<StrategyId> strategies = {StrategyId::self, StrategyId::taxo_only, StrategyId::finest_error,
                                          StrategyId::finest_score};
    StrategyMatrix matrix;
    int rounds = 1;
    bool pooled = false;
    StudyConfig study;

    /// Relative paths resolve against `base_dir`. Throws Error(config_error).
    static RunConfig from_json(const json& j, const std::filesystem::path& base_dir = {});
    static RunConfig load(const std::filesystem::path& file);
    json to_json() const;
    /// SHA-256 of the canonical JSON form.
    std::string hash() const;
};

/// Assets every run needs; checked when a RunContext opens.
const std::vector<std::string>& required_assets();

/// A run directory plus the live objects stages share. The manifest
/// (manifest.json) records the config, its hash, seeds, asset hashes,
/// decoding parameters and per-stage completion with the gateway traffic
/// the stage caused.
class RunContext {
public:
    /// Creates `dir` if needed and validates assets. Throws
    /// Error(config_error) when a required asset is missing.
    RunContext(RunConfig config, std::filesystem::path dir);

    const RunConfig& config() const noexcept { return config_; }
    const std::filesystem::path& dir() const noexcept { return dir_; }
    std::filesystem::path file(const std::string& name) const { return dir_ / name; }
    Gateway& gateway() noexcept { return *gateway_; }
    const AssetStore& assets() const noexcept { return assets_; }

    void begin_stage(const std::string& stage);
    void complete_stage(const std::string& stage, const json& summary);
    void fail_stage(const std::string& stage, const std::string& error);
    json manifest() const;

private:
    void write_manifest() const;

    RunConfig config_;
    std::filesystem::path dir_;
    AssetStore assets_;
    std::unique_ptr<Gateway> gateway_;
    json manifest_;
    std::map<std::string, GatewayCounters> stage_start_;
};

}  // namespace finest
