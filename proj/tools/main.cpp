#include "experiment.hpp"

#include "reprompt/error.hpp"
#include "reprompt/strategies.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

using namespace reprompt;
using namespace reprompt::cli;

namespace {

ExperimentConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides)
{
    nlohmann::json j = ExperimentConfig{};
    if (!path.empty()) {
        j = load_config(path);
    }
    for (const std::string& s : overrides) apply_override(j, s);
    if (const char* env = std::getenv("REPROMPT_SEED"); env != nullptr && *env != '\0') {
        try {
            std::size_t used = 0;
            j["seed"] = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument(env);
        } catch (const std::exception&) {
            throw Error(std::string("REPROMPT_SEED is not an unsigned integer: ") + env);
        }
    }
    return parse_config(j);
}

std::string one_line(std::string s)
{
    for (char& c : s) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Learned re-prompting for simulated video segmentation"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    Options opts;
    app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "Override a config value, e.g. --set cost.lambda_corr=0.06");
    app.add_option("--out", opts.out, "Output directory")->capture_default_str();
    app.add_option("--threads", opts.threads, "Worker threads")->check(CLI::Range(1, 1024))->capture_default_str();

    auto* gen = app.add_subcommand("gen", "Generate train and eval datasets");
    auto* cost = app.add_subcommand("cost", "Precompute and cache cost tables");
    auto* train = app.add_subcommand("train", "Train the deferral policy and quality regressor");

    auto* eval = app.add_subcommand("eval", "Evaluate re-prompting strategies");
    std::vector<std::string> strategy_names;
    eval->add_option("--strategy", strategy_names, "Strategy to evaluate (repeatable; default all)");

    auto* sweep = app.add_subcommand("sweep", "Retrain and evaluate across lambda_corr values");
    auto* curves = app.add_subcommand("curves", "Per-frame error curves after a single prompt");

    auto* inspect = app.add_subcommand("inspect", "Print the header of a dataset, cache or checkpoint");
    std::string inspect_path;
    inspect->add_option("file", inspect_path)->required();
    inspect->alias("manifest");

    auto* policy = app.add_subcommand("policy", "Policy checkpoint utilities");
    policy->require_subcommand(1);
    auto* policy_inspect = policy->add_subcommand("inspect", "Print a checkpoint header");
    std::string policy_path;
    policy_inspect->add_option("file", policy_path)->required();

    auto* trace = app.add_subcommand("trace", "Expected and measured dice for one clip");
    std::string trace_split = "eval", trace_clip, trace_kind = "mask";
    std::vector<int> trace_frames;
    trace->add_option("--split", trace_split)->check(CLI::IsMember({"train", "eval"}))->capture_default_str();
    trace->add_option("--clip", trace_clip, "Clip id")->required();
    trace->add_option("--kind", trace_kind)->check(CLI::IsMember({"mask", "box", "point"}))->capture_default_str();
    trace->add_option("--prompt", trace_frames, "Prompted frame (repeatable; default 0)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (inspect->parsed() || policy_inspect->parsed()) {
            const std::string& path = inspect->parsed() ? inspect_path : policy_path;
            std::cout << read_any_header(path).dump(2) << '\n';
            return 0;
        }
        const ExperimentConfig c = resolve_config(config_path, overrides);
        if (gen->parsed()) cmd_gen(c, opts);
        else if (cost->parsed()) cmd_cost(c, opts);
        else if (train->parsed()) cmd_train(c, opts);
        else if (eval->parsed()) {
            std::vector<StrategyKind> strategies;
            for (const std::string& s : strategy_names) strategies.push_back(parse_strategy(s));
            if (strategies.empty()) strategies.assign(kAllStrategies.begin(), kAllStrategies.end());
            cmd_eval(c, opts, strategies);
        } else if (sweep->parsed()) cmd_sweep(c, opts);
        else if (curves->parsed()) cmd_curves(c, opts);
        else if (trace->parsed()) {
            cmd_trace(c, opts, trace_split, trace_clip, parse_prompt_kind(trace_kind), trace_frames);
        }
    } catch (const MissingArtifact& e) {
        std::cerr << "error: missing-artifact: " << one_line(e.what()) << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << one_line(e.what()) << '\n';
        return 1;
    }
    return 0;
}
