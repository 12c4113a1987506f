#include "reprompt/strategies.hpp"

#include "reprompt/error.hpp"
#include "reprompt/random.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace reprompt {

namespace {

constexpr std::uint64_t kRandomStream = 0x72616e64ull;  // "rand"
constexpr std::uint64_t kQualityStream = 0x7175616cull; // "qual"

} // namespace

std::string_view to_string(StrategyKind kind)
{
    switch (kind) {
    case StrategyKind::initial: return "initial";
    case StrategyKind::midpoint: return "midpoint";
    case StrategyKind::random: return "random";
    case StrategyKind::evavos: return "evavos";
    case StrategyKind::l2rp: return "l2rp";
    case StrategyKind::oracle: return "oracle";
    }
    return "unknown";
}

StrategyKind parse_strategy(std::string_view name)
{
    for (StrategyKind k : kAllStrategies) {
        if (to_string(k) == name) return k;
    }
    throw Error("unknown strategy: " + std::string(name));
}

Eigen::VectorXd QualityModel::predict(const FrameFeatures& features) const
{
    if (features.frames != frames) {
        throw DimensionMismatch("quality model: features were sampled on different frames");
    }
    return net.forward(normalizer.apply(features.flat()));
}

QualityTrainResult train_quality_regressor(std::span<const QualitySample> samples,
                                           const TrainConfig& cfg)
{
    cfg.validate();
    if (samples.empty()) throw Error("train_quality_regressor: dataset is empty");
    const auto& frames = samples.front().features.frames;
    const Eigen::Index outputs = static_cast<Eigen::Index>(frames.size());
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(samples.size()), samples.front().features.values.size());
    Eigen::MatrixXd targets(outputs, static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const QualitySample& s = samples[i];
        if (s.features.frames != frames || s.dice.size() != outputs) {
            throw DimensionMismatch("train_quality_regressor: samples use different frame sets");
        }
        if ((s.dice.array() < 0.0).any() || (s.dice.array() > 1.0).any()) {
            throw Error("train_quality_regressor: targets must lie in [0, 1]");
        }
        rows.row(static_cast<Eigen::Index>(i)) = s.features.flat().transpose();
        targets.col(static_cast<Eigen::Index>(i)) = s.dice;
    }

    QualityTrainResult out;
    QualityModel& model = out.model;
    model.frames = frames;
    model.config = cfg;
    model.normalizer = Normalizer::fit(rows);
    const Eigen::MatrixXd inputs = model.normalizer.apply_rows(rows).transpose();
    std::vector<int> sizes{static_cast<int>(inputs.rows())};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(static_cast<int>(outputs));
    model.net = Mlp(sizes, derive_seed(cfg.seed, kQualityStream));
    // Start from the per-frame training mean; the hidden layers then only
    // have to explain deviations from it.
    model.net.layers().back().weight.setZero();
    model.net.layers().back().bias = targets.rowwise().mean();

    const BatchObjective objective = [&](const Eigen::MatrixXd& pred, std::span<const int> idx,
                                         Eigen::MatrixXd& grad) {
        const double inv = 1.0 / static_cast<double>(idx.size() * static_cast<std::size_t>(outputs));
        grad.resize(pred.rows(), pred.cols());
        double loss = 0.0;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const auto col = static_cast<Eigen::Index>(j);
            const Eigen::VectorXd r = pred.col(col) - targets.col(idx[j]);
            loss += r.squaredNorm();
            grad.col(col) = 2.0 * inv * r;
        }
        return loss * inv;
    };
    out.loss_curve = fit(model.net, inputs, objective, cfg);
    // The mean start can already sit at the optimum; ignore rises below 0.01 RMS Dice.
    if (out.loss_curve.back() > out.loss_curve.front() + 1e-4) {
        throw Error("train_quality_regressor: final-epoch loss exceeds first-epoch loss");
    }
    return out;
}

Checkpoint to_checkpoint(const QualityModel& model, nlohmann::json extra)
{
    return {"quality", model.frames, candidate_frames(model.frames), model.normalizer, model.net,
            model.config, std::move(extra)};
}

QualityModel quality_from_checkpoint(const Checkpoint& ck)
{
    if (ck.kind != "quality") {
        throw Error("checkpoint holds a " + ck.kind + " model, expected quality");
    }
    return {ck.frames, ck.normalizer, ck.net, ck.config};
}

int midpoint_choice(int last_frame, std::span<const int> candidates)
{
    if (candidates.empty()) throw Error("midpoint: no candidates");
    const int mid = last_frame / 2;
    int best = candidates.front();
    for (int c : candidates) {
        if (std::abs(c - mid) < std::abs(best - mid) ||
            (std::abs(c - mid) == std::abs(best - mid) && c < best)) {
            best = c;
        }
    }
    return best;
}

int oracle_choice(const CostTable& table)
{
    int choice = 0;
    double best = table.c_prop;
    for (Eigen::Index i = 0; i < table.size(); ++i) {
        if (table.c_corr(i) < best) {
            best = table.c_corr(i);
            choice = table.candidates[static_cast<std::size_t>(i)];
        }
    }
    return choice;
}

int select(const Strategy& strategy, const SelectionInput& in, std::uint64_t seed)
{
    if (strategy.kind != StrategyKind::initial && strategy.kind != StrategyKind::oracle &&
        in.candidates.empty()) {
        throw Error("select: no candidate frames");
    }
    auto features = [&](const std::vector<int>& frames) -> const FrameFeatures& {
        if (in.features == nullptr) throw Error("select: strategy needs frame features");
        if (in.features->frames != frames) {
            throw Error("select: features were sampled on different frames than the model");
        }
        return *in.features;
    };

    switch (strategy.kind) {
    case StrategyKind::initial: return 0;
    case StrategyKind::midpoint: return midpoint_choice(in.last_frame, in.candidates);
    case StrategyKind::random: {
        Rng rng(derive_seed(seed, in.clip_seed, kRandomStream));
        return in.candidates[rng.below(in.candidates.size())];
    }
    case StrategyKind::evavos: {
        if (!strategy.quality) throw Error("evavos strategy needs a trained quality regressor");
        const QualityModel& q = *strategy.quality;
        const Eigen::VectorXd predicted = q.predict(features(q.frames));
        int best = -1;
        double lowest = 0.0;
        for (std::size_t i = 0; i < q.frames.size(); ++i) {
            const int f = q.frames[i];
            if (std::find(in.candidates.begin(), in.candidates.end(), f) == in.candidates.end()) continue;
            const double v = predicted(static_cast<Eigen::Index>(i));
            if (best < 0 || v < lowest) {
                best = f;
                lowest = v;
            }
        }
        if (best < 0) throw Error("evavos: no candidate among the regressor's frames");
        return best;
    }
    case StrategyKind::l2rp: {
        if (!strategy.policy) throw Error("l2rp strategy needs a trained policy");
        const PolicyModel& p = *strategy.policy;
        if (!std::equal(p.candidates.begin(), p.candidates.end(), in.candidates.begin(), in.candidates.end())) {
            throw Error("l2rp: policy was trained on a different candidate set");
        }
        return p.decide(features(p.frames));
    }
    case StrategyKind::oracle:
        if (in.table == nullptr) throw Error("oracle strategy needs the true cost table");
        return oracle_choice(*in.table);
    }
    throw Error("select: unknown strategy");
}

int select(const Strategy& strategy, const Clip& clip, const PropagationResult& initial,
           std::span<const int> candidates, std::uint64_t seed, const CostTable* table)
{
    std::optional<FrameFeatures> features;
    if (strategy.kind == StrategyKind::evavos && strategy.quality) {
        features = extract_features(clip, initial, strategy.quality->frames);
    } else if (strategy.kind == StrategyKind::l2rp && strategy.policy) {
        features = extract_features(clip, initial, strategy.policy->frames);
    }
    const SelectionInput in{clip.seed, clip.last_frame(), candidates,
                            features ? &*features : nullptr, table};
    return select(strategy, in, seed);
}

} // namespace reprompt
