#pragma once

#include "reprompt/deferral.hpp"
#include "reprompt/evalkit.hpp"
#include "reprompt/policy.hpp"
#include "reprompt/propagator.hpp"
#include "reprompt/synthgen.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace reprompt::cli {

inline constexpr std::string_view kToolVersion = "1.0.0";

struct ExperimentConfig
{
    ClipConfig clip;
    PromptDynamics dynamics;
    CostSpec cost;
    TrainConfig train;
    /// |J|, frame 0 included.
    int sampled_frames = 10;
    int train_clips = 200;
    int eval_clips = 50;
    std::uint64_t seed = 42;
    std::vector<PromptKind> prompt_kinds{PromptKind::mask, PromptKind::box, PromptKind::point};
    std::vector<double> lambdas{0.01, 0.06, 0.08, 10.0};
    int curve_window = 20;

    void validate() const;
    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Parses a config; every key must be known.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies "a.b.c=value". The value is read as JSON when it parses, as a
/// string otherwise; the path must name an existing key.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// FNV-1a 64 of the bytes, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::string file_hash(const std::filesystem::path& path);
/// Hash of the canonical (sorted-key, compact) JSON dump.
std::string config_hash(const ExperimentConfig& c);

/// Seeds derived from the experiment seed.
std::uint64_t train_data_seed(const ExperimentConfig& c);
std::uint64_t eval_data_seed(const ExperimentConfig& c);
std::uint64_t propagation_seed(const ExperimentConfig& c);
std::uint64_t strategy_seed(const ExperimentConfig& c);

std::vector<int> experiment_frames(const ExperimentConfig& c);

/// Precomputed evaluation inputs for one dataset split and prompt kind.
struct CaseSet
{
    std::string split;
    PromptKind kind = PromptKind::mask;
    std::vector<int> frames;
    std::string key;
    std::vector<ClipCase> cases;
};

/// Cache key over (dataset bytes, dynamics, sampled frames, kind, seed).
std::string case_key(const std::string& dataset_hash, const ExperimentConfig& c, PromptKind kind);

void write_cases(const std::filesystem::path& path, const CaseSet& set, const nlohmann::json& provenance);
CaseSet read_cases(const std::filesystem::path& path);
nlohmann::json read_cases_header(const std::filesystem::path& path);

/// Prints the JSON header of any container this tool writes.
nlohmann::json read_any_header(const std::filesystem::path& path);

struct Options
{
    std::filesystem::path out = "out";
    int threads = 1;
};

/// Commands. Each returns normally or throws reprompt::Error.
void cmd_gen(const ExperimentConfig& c, const Options& o);
void cmd_cost(const ExperimentConfig& c, const Options& o);
void cmd_train(const ExperimentConfig& c, const Options& o);
void cmd_eval(const ExperimentConfig& c, const Options& o, const std::vector<StrategyKind>& strategies);
void cmd_sweep(const ExperimentConfig& c, const Options& o);
void cmd_curves(const ExperimentConfig& c, const Options& o);
void cmd_trace(const ExperimentConfig& c, const Options& o, const std::string& split,
               const std::string& clip_id, PromptKind kind, const std::vector<int>& prompt_frames);

} // namespace reprompt::cli
