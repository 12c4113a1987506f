#pragma once

#include "reprompt/deferral.hpp"
#include "reprompt/policy.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace reprompt {

enum class StrategyKind { initial, midpoint, random, evavos, l2rp, oracle };

inline constexpr std::array<StrategyKind, 6> kAllStrategies{
    StrategyKind::initial, StrategyKind::midpoint, StrategyKind::random,
    StrategyKind::evavos,  StrategyKind::l2rp,     StrategyKind::oracle};

std::string_view to_string(StrategyKind kind);
StrategyKind parse_strategy(std::string_view name);

/// Per-frame quality regressor: sampled-frame features in, predicted Dice of
/// every sampled frame out.
struct QualityModel
{
    std::vector<int> frames;
    Normalizer normalizer;
    Mlp net;
    TrainConfig config;

    Eigen::VectorXd predict(const FrameFeatures& features) const;
};

struct QualitySample
{
    FrameFeatures features;
    /// True Dice at each sampled frame.
    Eigen::VectorXd dice;
};

struct QualityTrainResult
{
    QualityModel model;
    std::vector<double> loss_curve;
};

/// Squared-error regression with the policy's network skeleton and optimizer.
QualityTrainResult train_quality_regressor(std::span<const QualitySample> samples,
                                           const TrainConfig& cfg);

Checkpoint to_checkpoint(const QualityModel& model, nlohmann::json extra = nlohmann::json::object());
QualityModel quality_from_checkpoint(const Checkpoint& ck);

struct Strategy
{
    StrategyKind kind = StrategyKind::initial;
    std::optional<QualityModel> quality; // evavos
    std::optional<PolicyModel> policy;   // l2rp

    static Strategy make(StrategyKind kind) { return Strategy{kind, std::nullopt, std::nullopt}; }
};

/// Everything a strategy may look at for one clip.
struct SelectionInput
{
    std::uint64_t clip_seed = 0;
    int last_frame = 0;
    std::span<const int> candidates;
    /// Features of the initial propagation, sampled on the model's frames.
    /// Required by evavos and l2rp.
    const FrameFeatures* features = nullptr;
    /// Ground-truth costs; only the oracle reads them.
    const CostTable* table = nullptr;
};

/// Candidate nearest floor(T / 2), earlier one on a tie.
int midpoint_choice(int last_frame, std::span<const int> candidates);

/// Argmin of the deferral loss over {0} and the candidates; 0 wins ties, then
/// the earlier frame.
int oracle_choice(const CostTable& table);

/// 0 for no deferral, otherwise the frame to correct.
int select(const Strategy& strategy, const SelectionInput& in, std::uint64_t seed);

/// Same, extracting features from the initial propagation as needed.
int select(const Strategy& strategy, const Clip& clip, const PropagationResult& initial,
           std::span<const int> candidates, std::uint64_t seed, const CostTable* table = nullptr);

} // namespace reprompt
