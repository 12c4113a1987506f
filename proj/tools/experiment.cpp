#include "experiment.hpp"

#include "reprompt/binary_io.hpp"
#include "reprompt/error.hpp"
#include "reprompt/random.hpp"
#include "reprompt/strategies.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

namespace reprompt::cli {

namespace fs = std::filesystem;

namespace {

constexpr char kCasesMagic[5] = "RPCC";
constexpr std::uint32_t kCasesVersion = 1;

std::string tool_string()
{
    return "reprompt " + std::string(kToolVersion);
}

nlohmann::json provenance_json(const ExperimentConfig& c)
{
    return {{"tool", tool_string()}, {"config_hash", config_hash(c)}};
}

Provenance csv_provenance(const ExperimentConfig& c, std::vector<std::pair<std::string, std::string>> extra = {})
{
    Provenance p;
    p.entries = {{"tool", tool_string()}, {"config_hash", config_hash(c)}, {"seed", std::to_string(c.seed)}};
    for (auto& e : extra) p.entries.push_back(std::move(e));
    return p;
}

std::ofstream open_output(const fs::path& path)
{
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

void announce(const fs::path& path)
{
    std::cout << "wrote " << path.string() << '\n';
}

fs::path dataset_path(const Options& o, const std::string& split)
{
    return o.out / (split + ".rpds");
}

Dataset load_dataset(const Options& o, const std::string& split)
{
    const fs::path path = dataset_path(o, split);
    if (!fs::exists(path)) throw MissingArtifact(path.string(), "reprompt gen");
    return read_dataset(path);
}

fs::path cases_path(const Options& o, const std::string& split, PromptKind kind, const std::string& key)
{
    return o.out / "cache" / ("cases-" + split + "-" + std::string(to_string(kind)) + "-" + key + ".rpcc");
}

std::string cases_key_for(const ExperimentConfig& c, const Options& o, const std::string& split, PromptKind kind)
{
    const fs::path data = dataset_path(o, split);
    if (!fs::exists(data)) throw MissingArtifact(data.string(), "reprompt gen");
    return case_key(file_hash(data), c, kind);
}

CaseSet build_and_cache(const ExperimentConfig& c, const Options& o, const std::string& split, PromptKind kind,
                        const std::string& key, const Dataset& ds)
{
    CaseSet set;
    set.split = split;
    set.kind = kind;
    set.frames = experiment_frames(c);
    set.key = key;
    set.cases = build_cases(ds.clips, kind, set.frames, c.cost, c.dynamics, propagation_seed(c), o.threads);
    const fs::path path = cases_path(o, split, kind, key);
    write_cases(path, set, provenance_json(c));
    announce(path);
    return set;
}

// Cached cases for (split, kind), computed and stored on a cache miss.
CaseSet load_cases(const ExperimentConfig& c, const Options& o, const std::string& split, PromptKind kind)
{
    const std::string key = cases_key_for(c, o, split, kind);
    const fs::path path = cases_path(o, split, kind, key);
    if (fs::exists(path)) return read_cases(path);
    return build_and_cache(c, o, split, kind, key, load_dataset(o, split));
}

fs::path checkpoint_path(const Options& o, const std::string& what, PromptKind kind)
{
    return o.out / (what + "-" + std::string(to_string(kind)) + ".rpck");
}

Checkpoint load_checkpoint(const Options& o, const std::string& what, PromptKind kind)
{
    const fs::path path = checkpoint_path(o, what, kind);
    if (!fs::exists(path)) throw MissingArtifact(path.string(), "reprompt train");
    return read_checkpoint(path);
}

void require_known_keys(const nlohmann::json& given, const nlohmann::json& reference, const std::string& prefix)
{
    if (!given.is_object()) return;
    for (const auto& [key, value] : given.items()) {
        if (!reference.contains(key)) throw Error("unknown config key: " + prefix + key);
        if (reference.at(key).is_object()) require_known_keys(value, reference.at(key), prefix + key + ".");
    }
}

void write_f64(std::ostream& out, double v)
{
    detail::put_le<double>(out, v);
}

} // namespace

void ExperimentConfig::validate() const
{
    clip.validate();
    dynamics.validate();
    cost.validate();
    train.validate();
    if (sampled_frames < 2 || sampled_frames > clip.frame_count) {
        throw Error("config: sampled_frames must lie in [2, frame_count]");
    }
    if (train_clips < 1 || eval_clips < 1) throw Error("config: clip counts must be positive");
    if (prompt_kinds.empty()) throw Error("config: prompt_kinds is empty");
    for (std::size_t i = 1; i < lambdas.size(); ++i) {
        if (!(lambdas[i] > lambdas[i - 1])) throw Error("config: lambdas must be strictly increasing");
    }
    for (double l : lambdas) {
        if (!(l >= 0.0)) throw Error("config: lambdas must be nonnegative");
    }
    if (curve_window < 1) throw Error("config: curve_window must be >= 1");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c)
{
    std::vector<std::string> kinds;
    for (PromptKind k : c.prompt_kinds) kinds.emplace_back(to_string(k));
    j = {{"clip", c.clip},
         {"dynamics", c.dynamics},
         {"cost", c.cost},
         {"train", c.train},
         {"sampled_frames", c.sampled_frames},
         {"train_clips", c.train_clips},
         {"eval_clips", c.eval_clips},
         {"seed", c.seed},
         {"prompt_kinds", kinds},
         {"lambdas", c.lambdas},
         {"curve_window", c.curve_window}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c)
{
    c = ExperimentConfig{};
    if (j.contains("clip")) j.at("clip").get_to(c.clip);
    if (j.contains("dynamics")) j.at("dynamics").get_to(c.dynamics);
    if (j.contains("cost")) j.at("cost").get_to(c.cost);
    if (j.contains("train")) j.at("train").get_to(c.train);
    c.sampled_frames = j.value("sampled_frames", c.sampled_frames);
    c.train_clips = j.value("train_clips", c.train_clips);
    c.eval_clips = j.value("eval_clips", c.eval_clips);
    c.seed = j.value("seed", c.seed);
    if (j.contains("prompt_kinds")) {
        c.prompt_kinds.clear();
        for (const auto& k : j.at("prompt_kinds")) c.prompt_kinds.push_back(parse_prompt_kind(k.get<std::string>()));
    }
    c.lambdas = j.value("lambdas", c.lambdas);
    c.curve_window = j.value("curve_window", c.curve_window);
}

ExperimentConfig parse_config(const nlohmann::json& j)
{
    if (!j.is_object()) throw Error("config: top level must be an object");
    require_known_keys(j, nlohmann::json(ExperimentConfig{}), "");
    ExperimentConfig c;
    try {
        c = j.get<ExperimentConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path.string());
    try {
        return parse_config(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("config " + path.string() + ": " + e.what());
    }
}

void apply_override(nlohmann::json& config, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw Error("override must look like path=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);

    nlohmann::json* node = &config;
    std::stringstream parts(path);
    std::string part;
    std::vector<std::string> keys;
    while (std::getline(parts, part, '.')) keys.push_back(part);
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (!node->is_object() || !node->contains(keys[i])) throw Error("unknown config key: " + path);
        node = &(*node)[keys[i]];
    }
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    *node = std::move(value);
}

std::string fnv1a_hex(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_hash(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a_hex(bytes);
}

std::string config_hash(const ExperimentConfig& c)
{
    return fnv1a_hex(nlohmann::json(c).dump());
}

std::uint64_t train_data_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 1); }
std::uint64_t eval_data_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 2); }
std::uint64_t propagation_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 3); }
std::uint64_t strategy_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 4); }

std::vector<int> experiment_frames(const ExperimentConfig& c)
{
    return sample_frames(c.clip.frame_count, c.sampled_frames);
}

std::string case_key(const std::string& dataset_hash, const ExperimentConfig& c, PromptKind kind)
{
    const nlohmann::json key = {{"dataset", dataset_hash},
                                {"dynamics", c.dynamics},
                                {"frames", experiment_frames(c)},
                                {"kind", to_string(kind)},
                                {"seed", propagation_seed(c)}};
    return fnv1a_hex(key.dump());
}

void write_cases(const fs::path& path, const CaseSet& set, const nlohmann::json& provenance)
{
    nlohmann::json clips = nlohmann::json::array();
    for (const ClipCase& c : set.cases) {
        clips.push_back({{"id", c.clip_id}, {"seed", c.clip_seed}, {"last_frame", c.last_frame}});
    }
    const nlohmann::json header = {{"format", "reprompt-cases"},
                                   {"version", kCasesVersion},
                                   {"split", set.split},
                                   {"kind", to_string(set.kind)},
                                   {"frames", set.frames},
                                   {"candidates", candidate_frames(set.frames)},
                                   {"key", set.key},
                                   {"clip_count", set.cases.size()},
                                   {"clips", clips},
                                   {"record", "per clip f64: ell_0, ell_0k[K], features[|J|*6], sampled_dice[|J|], initial_dice[T+1]"},
                                   {"provenance", provenance}};
    std::ofstream out = open_output(path);
    detail::put_header(out, kCasesMagic, kCasesVersion, header.dump());
    for (const ClipCase& c : set.cases) {
        write_f64(out, c.table.ell_0);
        for (Eigen::Index i = 0; i < c.table.ell_0k.size(); ++i) write_f64(out, c.table.ell_0k(i));
        const Eigen::VectorXd f = c.features.flat();
        for (Eigen::Index i = 0; i < f.size(); ++i) write_f64(out, f(i));
        for (Eigen::Index i = 0; i < c.sampled_dice.size(); ++i) write_f64(out, c.sampled_dice(i));
        for (double d : c.initial_dice) write_f64(out, d);
    }
    if (!out) throw Error("write failed: " + path.string());
}

nlohmann::json read_cases_header(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return nlohmann::json::parse(detail::get_header(in, kCasesMagic, kCasesVersion));
}

CaseSet read_cases(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    const auto header = nlohmann::json::parse(detail::get_header(in, kCasesMagic, kCasesVersion));
    CaseSet set;
    set.split = header.at("split").get<std::string>();
    set.kind = parse_prompt_kind(header.at("kind").get<std::string>());
    set.frames = header.at("frames").get<std::vector<int>>();
    set.key = header.at("key").get<std::string>();
    const std::vector<int> candidates = candidate_frames(set.frames);
    const auto k = static_cast<Eigen::Index>(candidates.size());
    const auto nj = static_cast<Eigen::Index>(set.frames.size());
    for (const auto& entry : header.at("clips")) {
        ClipCase c;
        c.clip_id = entry.at("id").get<std::string>();
        c.clip_seed = entry.at("seed").get<std::uint64_t>();
        c.last_frame = entry.at("last_frame").get<int>();
        const double ell_0 = detail::get_le<double>(in);
        Eigen::VectorXd ell_0k(k);
        for (Eigen::Index i = 0; i < k; ++i) ell_0k(i) = detail::get_le<double>(in);
        c.table = make_cost_table(candidates, ell_0, std::move(ell_0k), CostSpec{});
        c.features.frames = set.frames;
        c.features.values.resize(nj, kFeaturesPerFrame);
        for (Eigen::Index r = 0; r < nj; ++r) {
            for (Eigen::Index col = 0; col < kFeaturesPerFrame; ++col) c.features.values(r, col) = detail::get_le<double>(in);
        }
        c.sampled_dice.resize(nj);
        for (Eigen::Index i = 0; i < nj; ++i) c.sampled_dice(i) = detail::get_le<double>(in);
        c.initial_dice.resize(static_cast<std::size_t>(c.last_frame + 1));
        for (double& d : c.initial_dice) d = detail::get_le<double>(in);
        set.cases.push_back(std::move(c));
    }
    return set;
}

nlohmann::json read_any_header(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    const std::string m(magic, 4);
    if (m == "RPDS") return read_dataset_header(path);
    if (m == "RPCK") return read_checkpoint_header(path);
    if (m == "RPCC") return read_cases_header(path);
    throw Error("unrecognized file format: " + path.string());
}

void cmd_gen(const ExperimentConfig& c, const Options& o)
{
    c.validate();
    fs::create_directories(o.out);
    const struct
    {
        const char* split;
        int count;
        std::uint64_t seed;
    } splits[] = {{"train", c.train_clips, train_data_seed(c)}, {"eval", c.eval_clips, eval_data_seed(c)}};
    for (const auto& s : splits) {
        Dataset ds;
        ds.config = c.clip;
        ds.master_seed = s.seed;
        ds.clips = generate_dataset(c.clip, s.count, s.seed);
        ds.provenance = provenance_json(c);
        ds.provenance["split"] = s.split;
        const fs::path path = dataset_path(o, s.split);
        write_dataset(path, ds);
        announce(path);
    }
}

void cmd_cost(const ExperimentConfig& c, const Options& o)
{
    c.validate();
    for (const std::string split : {"train", "eval"}) {
        std::optional<Dataset> ds;
        for (PromptKind kind : c.prompt_kinds) {
            const std::string key = cases_key_for(c, o, split, kind);
            const fs::path path = cases_path(o, split, kind, key);
            CaseSet set;
            if (fs::exists(path)) {
                set = read_cases(path);
                std::cout << "cached " << path.string() << '\n';
            } else {
                if (!ds) ds = load_dataset(o, split);
                set = build_and_cache(c, o, split, kind, key, *ds);
            }
            const fs::path csv = o.out / ("costs-" + split + "-" + std::string(to_string(kind)) + ".csv");
            std::ofstream out = open_output(csv);
            write_provenance(out, csv_provenance(c, {{"lambda_base", format_double(c.cost.lambda_base)},
                                                      {"lambda_corr", format_double(c.cost.lambda_corr)},
                                                      {"ell", "mean over all frames of 1 - dice"}}));
            out << "clip_id,candidate_frame,ell_0,ell_0k,c_prop,c_corr\n";
            for (const ClipCase& cc : set.cases) write_cost_csv(out, cc.clip_id, reprice(cc.table, c.cost));
            announce(csv);
        }
    }
}

void cmd_train(const ExperimentConfig& c, const Options& o)
{
    c.validate();
    for (PromptKind kind : c.prompt_kinds) {
        const CaseSet set = load_cases(c, o, "train", kind);
        const TrainResult policy = train(training_samples(set.cases, c.cost), c.train);
        const QualityTrainResult quality = train_quality_regressor(quality_samples(set.cases), c.train);
        nlohmann::json extra = provenance_json(c);
        extra["prompt_kind"] = to_string(kind);
        extra["lambda_corr"] = c.cost.lambda_corr;
        extra["cases_key"] = set.key;

        const fs::path pp = checkpoint_path(o, "policy", kind);
        fs::create_directories(o.out);
        write_checkpoint(pp, to_checkpoint(policy.model, extra));
        announce(pp);
        const fs::path qp = checkpoint_path(o, "quality", kind);
        write_checkpoint(qp, to_checkpoint(quality.model, extra));
        announce(qp);

        const fs::path csv = o.out / ("train-loss-" + std::string(to_string(kind)) + ".csv");
        std::ofstream out = open_output(csv);
        write_provenance(out, csv_provenance(c, {{"policy_loss", "mean MAE surrogate over the training set"},
                                                  {"quality_loss", "mean squared error of sampled-frame dice"}}));
        out << "epoch,policy_loss,quality_loss\n";
        for (std::size_t e = 0; e < policy.loss_curve.size(); ++e) {
            out << e + 1 << ',' << format_double(policy.loss_curve[e]) << ','
                << format_double(quality.loss_curve[e]) << '\n';
        }
        announce(csv);
        std::printf("%s: surrogate %.6f -> %.6f over %zu epochs\n", std::string(to_string(kind)).c_str(),
                    policy.loss_curve.front(), policy.loss_curve.back(), policy.loss_curve.size());
    }
}

void cmd_eval(const ExperimentConfig& c, const Options& o, const std::vector<StrategyKind>& strategies)
{
    c.validate();
    for (PromptKind kind : c.prompt_kinds) {
        const CaseSet set = load_cases(c, o, "eval", kind);
        std::vector<EvalReport> reports;
        for (StrategyKind sk : strategies) {
            Strategy s = Strategy::make(sk);
            if (sk == StrategyKind::l2rp) s.policy = policy_from_checkpoint(load_checkpoint(o, "policy", kind));
            if (sk == StrategyKind::evavos) s.quality = quality_from_checkpoint(load_checkpoint(o, "quality", kind));
            reports.push_back(evaluate(set.cases, s, kind, c.cost, strategy_seed(c)));
        }
        const std::string k(to_string(kind));
        const Provenance prov = csv_provenance(c, {{"final_dice", "mean dice over all frames, prompted frames included"},
                                                    {"prompt_kind", k}});
        const fs::path csv = o.out / ("report-" + k + ".csv");
        {
            std::ofstream out = open_output(csv);
            write_report_csv(out, reports, prov);
        }
        announce(csv);

        const EvalReport* random = nullptr;
        for (const EvalReport& r : reports) {
            if (r.strategy == "random") random = &r;
        }
        const fs::path summary = o.out / ("summary-" + k + ".csv");
        {
            std::ofstream out = open_output(summary);
            write_provenance(out, prov);
            out << "strategy,prompt_kind,lambda_corr,mean_dice,std_dice,deferral_rate,mean_deferral_loss,"
                   "wilcoxon_p_vs_random\n";
            for (const EvalReport& r : reports) {
                std::string p = "";
                if (random != nullptr && &r != random) {
                    p = format_double(wilcoxon_signed_rank(r.final_dice, random->final_dice).p_value);
                }
                out << r.strategy << ',' << k << ',' << format_double(r.lambda_corr) << ','
                    << format_double(r.mean_dice) << ',' << format_double(r.std_dice) << ','
                    << format_double(r.deferral_rate) << ',' << format_double(r.mean_deferral_loss) << ',' << p
                    << '\n';
                std::printf("%-5s %-8s dice %.4f +- %.4f  defer %.2f  loss %.4f%s%s\n", k.c_str(),
                            r.strategy.c_str(), r.mean_dice, r.std_dice, r.deferral_rate, r.mean_deferral_loss,
                            p.empty() ? "" : "  p_vs_random ", p.c_str());
            }
        }
        announce(summary);

        std::vector<SvgSeries> series;
        for (const EvalReport& r : reports) {
            SvgSeries s{r.strategy, {}, r.final_dice, {}};
            std::sort(s.y.begin(), s.y.end());
            for (std::size_t i = 0; i < s.y.size(); ++i) s.x.push_back(static_cast<double>(i));
            series.push_back(std::move(s));
        }
        const fs::path svg = o.out / ("report-" + k + ".svg");
        {
            std::ofstream out = open_output(svg);
            write_line_chart_svg(out, "Final dice per clip (" + k + " prompts, sorted)", "clip rank", "mean dice",
                                 series);
        }
        announce(svg);
    }
}

void cmd_sweep(const ExperimentConfig& c, const Options& o)
{
    c.validate();
    if (c.lambdas.empty()) throw Error("config: lambdas is empty");
    for (PromptKind kind : c.prompt_kinds) {
        const CaseSet train_set = load_cases(c, o, "train", kind);
        const CaseSet eval_set = load_cases(c, o, "eval", kind);
        const auto rows = lambda_sweep(train_set.cases, eval_set.cases, c.lambdas, kind, c.cost, c.train,
                                       strategy_seed(c));
        const std::string k(to_string(kind));
        const fs::path csv = o.out / ("sweep-" + k + ".csv");
        {
            std::ofstream out = open_output(csv);
            write_sweep_csv(out, rows, csv_provenance(c, {{"strategy", "l2rp retrained per lambda_corr"},
                                                          {"prompt_kind", k}}));
        }
        announce(csv);
        SvgSeries dice{"mean dice", {}, {}, {}}, rate{"deferral rate", {}, {}, {}};
        for (const SweepRow& r : rows) {
            dice.x.push_back(r.lambda_corr);
            dice.y.push_back(r.mean_dice);
            rate.x.push_back(r.lambda_corr);
            rate.y.push_back(r.deferral_rate);
            std::printf("%-5s lambda %-6g dice %.4f  defer %.2f\n", k.c_str(), r.lambda_corr, r.mean_dice,
                        r.deferral_rate);
        }
        const fs::path svg = o.out / ("sweep-" + k + ".svg");
        {
            std::ofstream out = open_output(svg);
            const SvgSeries both[] = {dice, rate};
            write_line_chart_svg(out, "Correction cost sweep (" + k + " prompts)", "lambda_corr", "value", both);
        }
        announce(svg);
    }
}

void cmd_curves(const ExperimentConfig& c, const Options& o)
{
    c.validate();
    const Dataset ds = load_dataset(o, "eval");
    std::vector<std::pair<PromptKind, ErrorCurve>> curves;
    for (PromptKind kind : c.prompt_kinds) {
        curves.emplace_back(kind, error_curve(ds.clips, kind, c.dynamics, propagation_seed(c), c.curve_window, o.threads));
    }
    const fs::path csv = o.out / "curves.csv";
    {
        std::ofstream out = open_output(csv);
        write_curve_csv(out, curves, csv_provenance(c, {{"window", std::to_string(c.curve_window)},
                                                        {"ci", "1.96 * std / sqrt(n_clips), normal approximation"},
                                                        {"clips", std::to_string(ds.clips.size())}}));
    }
    announce(csv);
    std::vector<SvgSeries> series;
    for (const auto& [kind, curve] : curves) {
        SvgSeries s{std::string(to_string(kind)), {}, curve.smoothed, moving_average(curve.ci_half_width, c.curve_window)};
        for (std::size_t t = 0; t < curve.raw.size(); ++t) s.x.push_back(static_cast<double>(t));
        series.push_back(std::move(s));
    }
    const fs::path svg = o.out / "curves.svg";
    {
        std::ofstream out = open_output(svg);
        write_line_chart_svg(out, "Dice loss after a single prompt on frame 0", "frame", "mean dice loss", series);
    }
    announce(svg);
}

void cmd_trace(const ExperimentConfig& c, const Options& o, const std::string& split,
               const std::string& clip_id, PromptKind kind, const std::vector<int>& prompt_frames)
{
    c.validate();
    const Dataset ds = load_dataset(o, split);
    const auto it = std::find_if(ds.clips.begin(), ds.clips.end(), [&](const Clip& clip) { return clip.id == clip_id; });
    if (it == ds.clips.end()) throw Error("no clip " + clip_id + " in " + split + " split");
    const std::vector<int> frames = prompt_frames.empty() ? std::vector<int>{0} : prompt_frames;
    const PropagationResult r = propagate(*it, frames, kind, c.dynamics, propagation_seed(c));
    const std::vector<double> measured = measured_dice(*it, r);
    const fs::path csv = o.out / ("trace-" + clip_id + "-" + std::string(to_string(kind)) + ".csv");
    std::ofstream out = open_output(csv);
    std::string prompts;
    for (int f : frames) prompts += (prompts.empty() ? "" : " ") + std::to_string(f);
    write_provenance(out, csv_provenance(c, {{"split", split}, {"prompt_frames", prompts}}));
    out << "clip_id,frame,expected,measured,anchor\n";
    for (std::size_t t = 0; t < measured.size(); ++t) {
        out << clip_id << ',' << t << ',' << format_double(r.expected_dice_trace[t]) << ','
            << format_double(measured[t]) << ',' << r.anchor_index[t] << '\n';
    }
    announce(csv);
}

} // namespace reprompt::cli
